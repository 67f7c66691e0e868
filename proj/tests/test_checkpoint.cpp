#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "hsifsl/checkpoint.hpp"
#include "hsifsl/nn/network.hpp"
#include "helpers.hpp"

using namespace hsifsl;
namespace fs = std::filesystem;

namespace {

nn::NetworkConfig tiny_config() {
    nn::NetworkConfig cfg;
    cfg.source_bands = 6;
    cfg.target_bands = 4;
    cfg.mapped_bands = 33;
    cfg.patch_size = 9;
    cfg.attention_heads = 4;
    cfg.attention_layers = 1;
    cfg.disc_hidden = 16;
    cfg.ways = 2;
    return cfg;
}

}  // namespace

TEST_CASE("rng state serializes and resumes the exact stream") {
    Rng a(123);
    for (int i = 0; i < 7; ++i) a.next_normal();  // leaves a Box-Muller spare
    const std::string s = a.serialize();
    Rng b = Rng::deserialize(s);
    CHECK(a == b);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_normal() == b.next_normal());
        CHECK(a.next_below(17) == b.next_below(17));
    }
}

TEST_CASE("checkpoints round-trip parameters, buffers, moments, step and rng") {
    const auto dir = test_util::fresh_dir("ckpt");
    const nn::NetworkConfig cfg = tiny_config();

    nn::ModelState<float> model(cfg);
    Rng init(5);
    model.init(init);
    auto reg = model.registry();

    // give the optimizer some non-trivial state
    nn::Adam<float> optim(1e-3);
    Rng grad_rng(6);
    for (int step = 0; step < 3; ++step) {
        for (auto& [name, p] : reg.params)
            for (std::size_t i = 0; i < p->size(); ++i)
                p->grad[i] = static_cast<float>(grad_rng.next_normal(0.0, 0.1));
        optim.step(reg);
    }
    Rng stream(7);
    stream.next_u64();

    const nlohmann::json frozen = {{"note", "frozen"}};
    checkpoint::save(dir / "step-3", reg, optim, 3, stream, frozen);

    nn::ModelState<float> other(cfg);
    Rng other_init(99);  // different start: loading must overwrite everything
    other.init(other_init);
    auto reg2 = other.registry();
    nn::Adam<float> optim2(1e-3);
    const auto meta = checkpoint::load(dir / "step-3", reg2, &optim2);

    CHECK(meta.step == 3);
    CHECK(meta.rng == stream);
    CHECK(meta.config.at("note") == "frozen");
    CHECK(optim2.step_count() == optim.step_count());

    REQUIRE(reg.params.size() == reg2.params.size());
    for (std::size_t p = 0; p < reg.params.size(); ++p) {
        CHECK(reg.params[p].first == reg2.params[p].first);
        const auto& a = reg.params[p].second->value;
        const auto& b = reg2.params[p].second->value;
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a[i] == b[i]);  // float32 archive: bit exact
    }
    for (std::size_t p = 0; p < reg.buffers.size(); ++p) {
        const auto& a = *reg.buffers[p].second;
        const auto& b = *reg2.buffers[p].second;
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    for (auto& [name, m] : optim.first_moments()) {
        const auto& m2 = optim2.first_moments().at(name);
        for (std::size_t i = 0; i < m.size(); ++i) CHECK(m[i] == m2[i]);
    }
    for (auto& [name, v] : optim.second_moments()) {
        const auto& v2 = optim2.second_moments().at(name);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == v2[i]);
    }
    fs::remove_all(dir);
}

TEST_CASE("loading rejects missing archives and mismatched models") {
    const auto dir = test_util::fresh_dir("ckpt-bad");
    nn::ModelState<float> model(tiny_config());
    Rng init(1);
    model.init(init);
    auto reg = model.registry();
    nn::Adam<float> optim;

    CHECK_THROWS_AS(checkpoint::load(dir / "absent", reg, &optim),
                    std::runtime_error);

    checkpoint::save(dir / "ok", reg, optim, 0, Rng(0), {});
    nn::NetworkConfig bigger = tiny_config();
    bigger.disc_hidden = 32;  // extra tensors the archive does not have
    nn::ModelState<float> wrong(bigger);
    auto wrong_reg = wrong.registry();
    CHECK_THROWS_AS(checkpoint::load(dir / "ok", wrong_reg, &optim),
                    std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("adam matches a hand-computed first step") {
    // one parameter, g = 0.5: m_hat = g, v_hat = g^2, delta = lr * g/|g| ~ lr
    nn::Param<float> p;
    p.resize({1});
    p.value[0] = 1.0f;
    p.grad[0] = 0.5f;
    nn::ParamRegistry<float> reg;
    reg.add("w", p);
    nn::Adam<float> optim(0.01);
    optim.step(reg);
    const double expect = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
    CHECK(p.value[0] == doctest::Approx(expect).epsilon(1e-6));
    CHECK(optim.step_count() == 1);
}
