#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "hsifsl/nn/layers.hpp"
#include "helpers.hpp"

using namespace hsifsl;
using nn::ParamRegistry;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-3;  // relative error against central differences

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng,
                             double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_normal(0.0, scale);
    return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Given loss() (runs the layer's forward pass) and grads() (runs backward,
/// returning dL/dx), verifies every input and parameter coordinate against
/// central finite differences.
void check_all(Tensor<double>& x, ParamRegistry<double>& reg,
               const std::function<double()>& loss,
               const std::function<Tensor<double>()>& grads) {
    reg.zero_grad();
    loss();
    const Tensor<double> dx = grads();
    std::vector<Tensor<double>> dp;
    for (auto& [name, p] : reg.params) dp.push_back(p->grad);

    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + kStep;
        const double lp = loss();
        x[i] = keep - kStep;
        const double lm = loss();
        x[i] = keep;
        const double fd = (lp - lm) / (2 * kStep);
        CHECK(test_util::rel_error(dx[i], fd) < kTol);
    }
    std::size_t pi = 0;
    for (auto& [name, p] : reg.params) {
        CAPTURE(name);
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + kStep;
            const double lp = loss();
            p->value[i] = keep - kStep;
            const double lm = loss();
            p->value[i] = keep;
            const double fd = (lp - lm) / (2 * kStep);
            CHECK(test_util::rel_error(dp[pi][i], fd) < kTol);
        }
        ++pi;
    }
}

}  // namespace

TEST_CASE("linear gradients match finite differences") {
    Rng rng(1);
    nn::Linear<double> lin(4, 3);
    lin.init(rng);
    ParamRegistry<double> reg;
    lin.register_params("lin", reg);
    Tensor<double> x = random_tensor({5, 4}, rng);
    const Tensor<double> w = random_tensor({5, 3}, rng);

    auto loss = [&] { return dot(lin.forward(x), w); };
    auto grads = [&] {
        reg.zero_grad();
        loss();
        return lin.backward(w);
    };
    check_all(x, reg, loss, grads);
}

TEST_CASE("conv3d gradients match finite differences (padded and unpadded)") {
    Rng rng(2);
    for (const std::size_t pad : {std::size_t(1), std::size_t(0)}) {
        CAPTURE(pad);
        const std::size_t in = pad == 1 ? 3 : 4;
        nn::Conv3d<double> conv(2, 2, 3, pad);
        conv.init(rng);
        ParamRegistry<double> reg;
        conv.register_params("conv", reg);
        Tensor<double> x = random_tensor({2, 2, in, in, in}, rng);
        const std::size_t o = conv.out_extent(in);
        const Tensor<double> w = random_tensor({2, 2, o, o, o}, rng);

        auto loss = [&] { return dot(conv.forward(x), w); };
        auto grads = [&] {
            reg.zero_grad();
            loss();
            return conv.backward(w);
        };
        check_all(x, reg, loss, grads);
    }
}

TEST_CASE("batch norm gradients match finite differences in both layouts") {
    Rng rng(3);
    SUBCASE("channels_last") {
        nn::BatchNorm<double> bn(3, nn::BnLayout::channels_last);
        ParamRegistry<double> reg;
        bn.register_params("bn", reg);
        Tensor<double> x = random_tensor({6, 3}, rng);
        const Tensor<double> w = random_tensor({6, 3}, rng);
        auto loss = [&] { return dot(bn.forward(x, 1, true), w); };
        auto grads = [&] {
            reg.zero_grad();
            loss();
            return bn.backward(w);
        };
        check_all(x, reg, loss, grads);
    }
    SUBCASE("channels_middle") {
        nn::BatchNorm<double> bn(2, nn::BnLayout::channels_middle);
        ParamRegistry<double> reg;
        bn.register_params("bn", reg);
        Tensor<double> x = random_tensor({3, 2, 4}, rng);
        const Tensor<double> w = random_tensor({3, 2, 4}, rng);
        auto loss = [&] { return dot(bn.forward(x, 4, true), w); };
        auto grads = [&] {
            reg.zero_grad();
            loss();
            return bn.backward(w);
        };
        check_all(x, reg, loss, grads);
    }
}

TEST_CASE("batch norm evaluation mode uses the running statistics") {
    Rng rng(4);
    nn::BatchNorm<double> bn(2, nn::BnLayout::channels_last);
    ParamRegistry<double> reg;
    bn.register_params("bn", reg);
    Tensor<double> x = random_tensor({8, 2}, rng, 2.0);
    for (int i = 0; i < 50; ++i) bn.forward(x, 1, true);  // converge stats

    Tensor<double> single({1, 2});
    single[0] = 0.3;
    single[1] = -0.7;
    const Tensor<double> y1 = bn.forward(single, 1, false);
    const Tensor<double> y2 = bn.forward(single, 1, false);
    CHECK(y1[0] == y2[0]);  // eval mode is batch-independent
    CHECK(y1[1] == y2[1]);
    // the converged running stats normalize x itself roughly to N(0,1)
    const Tensor<double> yx = bn.forward(x, 1, false);
    double mean = 0;
    for (std::size_t i = 0; i < 8; ++i) mean += yx[i * 2];
    CHECK(std::abs(mean / 8) < 0.05);
}

TEST_CASE("max pool gradients route to the argmax only") {
    Rng rng(5);
    nn::MaxPool3d<double> pool(4, 2, 2);
    // distinct values with gaps far above the finite-difference step
    Tensor<double> x({1, 2, 5, 4, 3});
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i = 0; i < x.size(); ++i)
        x[order[i]] = static_cast<double>(i) * 0.1;

    const Tensor<double> y = pool.forward(x);
    CHECK(y.shape() == std::vector<std::size_t>{1, 2, 2, 2, 2});
    const Tensor<double> w = random_tensor({1, 2, 2, 2, 2}, rng);
    const Tensor<double> dx = pool.backward(w);

    ParamRegistry<double> reg;  // no params; reuse the input-only check
    auto loss = [&] { return dot(pool.forward(x), w); };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + kStep;
        const double lp = loss();
        x[i] = keep - kStep;
        const double lm = loss();
        x[i] = keep;
        CHECK(test_util::rel_error(dx[i], (lp - lm) / (2 * kStep)) < kTol);
    }
}

TEST_CASE("ceiling-mode pooling pads partial windows") {
    nn::MaxPool3d<double> pool(4, 2, 2);
    Tensor<double> x({1, 1, 7, 3, 3});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    const Tensor<double> y = pool.forward(x);
    CHECK(y.shape() == std::vector<std::size_t>{1, 1, 2, 2, 2});
    CHECK(y[y.size() - 1] == x[x.size() - 1]);  // last cell covers the tail
}

TEST_CASE("layer norm gradients match finite differences") {
    Rng rng(6);
    nn::LayerNorm<double> ln(6);
    ParamRegistry<double> reg;
    ln.register_params("ln", reg);
    Tensor<double> x = random_tensor({4, 6}, rng);
    const Tensor<double> w = random_tensor({4, 6}, rng);
    auto loss = [&] { return dot(ln.forward(x), w); };
    auto grads = [&] {
        reg.zero_grad();
        loss();
        return ln.backward(w);
    };
    check_all(x, reg, loss, grads);
}

TEST_CASE("relu masks the backward pass") {
    nn::ReLU<double> relu;
    Tensor<double> x({4});
    x[0] = -1;
    x[1] = 2;
    x[2] = 0;
    x[3] = 3;
    const Tensor<double> y = relu.forward(x);
    CHECK(y[0] == 0);
    CHECK(y[1] == 2);
    CHECK(y[2] == 0);
    Tensor<double> dy({4});
    dy.fill(1.0);
    const Tensor<double> dx = relu.backward(dy);
    CHECK(dx[0] == 0);
    CHECK(dx[1] == 1);
    CHECK(dx[2] == 0);
    CHECK(dx[3] == 1);
}

TEST_CASE("dropout keeps the expectation and passes through in eval mode") {
    Rng rng(7);
    nn::Dropout<double> drop(0.5);
    Tensor<double> x({10000});
    x.fill(1.0);

    const Tensor<double> eval = drop.forward(x, false, rng);
    for (std::size_t i = 0; i < 16; ++i) CHECK(eval[i] == 1.0);

    const Tensor<double> train = drop.forward(x, true, rng);
    double mean = 0;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        mean += train[i];
        if (train[i] == 0) ++zeros;
        else CHECK(train[i] == doctest::Approx(2.0));  // inverted scaling
    }
    mean /= static_cast<double>(train.size());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
    CHECK(zeros > 4500);
    CHECK(zeros < 5500);

    // backward reuses the exact mask
    Tensor<double> dy({10000});
    dy.fill(1.0);
    const Tensor<double> dx = drop.backward(dy);
    for (std::size_t i = 0; i < dx.size(); ++i)
        CHECK(dx[i] == (train[i] == 0 ? 0.0 : 2.0));
}
