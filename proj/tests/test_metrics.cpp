#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsifsl/metrics.hpp"
#include "hsifsl/rng.hpp"

using namespace hsifsl;

namespace {

// Independent definitional oracle.
void metrics_oracle(const ConfusionMatrix& cm, double& oa, double& aa,
                    double& kappa) {
    const std::size_t c = cm.classes;
    double total = 0, trace = 0;
    std::vector<double> row(c, 0), col(c, 0);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double v = static_cast<double>(cm.at(i, j));
            total += v;
            row[i] += v;
            col[j] += v;
            if (i == j) trace += v;
        }
    oa = trace / total;
    double sum = 0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < c; ++i)
        if (row[i] > 0) {
            sum += cm.at(i, i) / row[i];
            ++present;
        }
    aa = sum / present;
    double pe = 0;
    for (std::size_t i = 0; i < c; ++i) pe += row[i] * col[i];
    pe /= total * total;
    kappa = (oa - pe) / (1.0 - pe);
}

}  // namespace

TEST_CASE("the [[4,1],[2,3]] matrix yields OA 0.7, AA 0.7, kappa 0.4") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 4;
    cm.at(0, 1) = 1;
    cm.at(1, 0) = 2;
    cm.at(1, 1) = 3;
    const MetricsEntry m = compute_metrics(cm);
    CHECK(m.oa == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(m.aa == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(m.kappa == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(m.per_class[0] == doctest::Approx(0.8));
    CHECK(m.per_class[1] == doctest::Approx(0.6));
    CHECK(m.total == 10);
}

TEST_CASE("diagonal matrices score perfectly; uniform matrices score chance") {
    ConfusionMatrix diag(3);
    diag.at(0, 0) = 5;
    diag.at(1, 1) = 2;
    diag.at(2, 2) = 9;
    const MetricsEntry p = compute_metrics(diag);
    CHECK(p.oa == doctest::Approx(1.0));
    CHECK(p.aa == doctest::Approx(1.0));
    CHECK(p.kappa == doctest::Approx(1.0));

    ConfusionMatrix uniform(2);
    uniform.at(0, 0) = uniform.at(0, 1) = uniform.at(1, 0) = uniform.at(1, 1) = 1;
    const MetricsEntry u = compute_metrics(uniform);
    CHECK(u.oa == doctest::Approx(0.5));
    CHECK(u.kappa == doctest::Approx(0.0));
}

TEST_CASE("metrics match the definitional oracle on 100 random matrices") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 2 + rng.next_below(6);
        ConfusionMatrix cm(c);
        // keep the diagonal positive so no row/column degenerates
        for (std::size_t i = 0; i < c; ++i) {
            cm.at(i, i) = 1 + rng.next_below(20);
            for (std::size_t j = 0; j < c; ++j)
                if (j != i) cm.at(i, j) = rng.next_below(10);
        }
        double oa, aa, kappa;
        metrics_oracle(cm, oa, aa, kappa);
        const MetricsEntry m = compute_metrics(cm);
        CHECK(std::abs(m.oa - oa) < 1e-9);
        CHECK(std::abs(m.aa - aa) < 1e-9);
        CHECK(std::abs(m.kappa - kappa) < 1e-9);
    }
}

TEST_CASE("AA skips classes with zero true samples") {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 8;
    cm.at(0, 1) = 2;
    cm.at(2, 2) = 5;  // class 1 never occurs
    const MetricsEntry m = compute_metrics(cm);
    CHECK(m.aa == doctest::Approx((0.8 + 1.0) / 2.0));
    CHECK(std::isnan(m.per_class[1]));
}

TEST_CASE("empty matrices are rejected and merging requires equal shapes") {
    ConfusionMatrix empty(2);
    CHECK_THROWS_AS(compute_metrics(empty), std::invalid_argument);
    ConfusionMatrix a(2), b(3);
    CHECK_THROWS_AS(a.merge(b), std::invalid_argument);

    ConfusionMatrix c(2), d(2);
    c.at(0, 0) = 1;
    d.at(0, 0) = 2;
    d.at(1, 1) = 3;
    c.merge(d);
    CHECK(c.at(0, 0) == 3);
    CHECK(c.at(1, 1) == 3);
}

TEST_CASE("seed aggregation uses mean and sample standard deviation") {
    MetricsEntry a, b;
    a.oa = 0.6;
    a.aa = 0.5;
    a.kappa = 0.4;
    b.oa = 0.8;
    b.aa = 0.7;
    b.kappa = 0.6;
    const MetricsReport rep = aggregate_metrics({a, b});
    CHECK(rep.mean_oa == doctest::Approx(0.7));
    CHECK(rep.std_oa == doctest::Approx(0.1414).epsilon(1e-3));
    CHECK(rep.mean_kappa == doctest::Approx(0.5));

    const MetricsReport one = aggregate_metrics({a});
    CHECK(one.std_oa == 0.0);  // single seed: zero by convention
    CHECK(one.mean_oa == doctest::Approx(0.6));

    CHECK_THROWS_AS(aggregate_metrics({}), std::invalid_argument);
}

TEST_CASE("metrics JSON carries all documented keys") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 3;
    cm.at(1, 1) = 1;
    MetricsEntry m = compute_metrics(cm);
    m.seed = 17;
    const nlohmann::json j = metrics_to_json(m, cm);
    CHECK(j.at("oa") == doctest::Approx(1.0));
    CHECK(j.at("seed") == 17);
    CHECK(j.at("per_class").size() == 2);
    CHECK(j.at("confusion")[0][0] == 3);

    const MetricsReport rep = aggregate_metrics({m});
    const nlohmann::json agg = report_to_json(rep);
    CHECK(agg.contains("mean"));
    CHECK(agg.contains("std"));
    CHECK(agg.at("seeds").size() == 1);
}
