#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "hsifsl/sampling.hpp"
#include "helpers.hpp"

using namespace hsifsl;

namespace {

// Independent reflect-101 oracle used to cross-check patch extraction.
std::size_t reflect_oracle(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    long m = i % period;
    if (m < 0) m += period;
    if (m >= n) m = period - m;
    return static_cast<std::size_t>(m);
}

HsiScene grid_scene(std::size_t h, std::size_t w, std::size_t b) {
    HsiScene s;
    s.height = h;
    s.width = w;
    s.bands = b;
    s.class_names = {"a"};
    s.cube.resize({h, w, b});
    s.labels.resize({h, w});
    for (std::size_t i = 0; i < s.cube.size(); ++i)
        s.cube[i] = static_cast<float>(i) * 0.5f + 1.0f;
    return s;
}

}  // namespace

TEST_CASE("patch extraction matches a naive reflected-copy oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 1 + rng.next_below(8);
        const std::size_t w = 1 + rng.next_below(8);
        const std::size_t b = 1 + rng.next_below(4);
        const HsiScene scene = grid_scene(h, w, b);
        const std::size_t patch = 2 * rng.next_below(5) + 1;  // 1,3,5,7,9
        const std::size_t row = rng.next_below(h);
        const std::size_t col = rng.next_below(w);

        const Tensor<float> p = extract_patch<float>(scene, row, col, patch);
        REQUIRE(p.shape() == std::vector<std::size_t>{patch, patch, b});
        const long half = static_cast<long>(patch / 2);
        for (std::size_t pr = 0; pr < patch; ++pr)
            for (std::size_t pc = 0; pc < patch; ++pc) {
                const std::size_t sr = reflect_oracle(
                    static_cast<long>(row) + static_cast<long>(pr) - half,
                    static_cast<long>(h));
                const std::size_t sc = reflect_oracle(
                    static_cast<long>(col) + static_cast<long>(pc) - half,
                    static_cast<long>(w));
                for (std::size_t k = 0; k < b; ++k)
                    REQUIRE(p[(pr * patch + pc) * b + k] ==
                            scene.cube_at(sr, sc, k));
            }
    }
}

TEST_CASE("corner patch mirrors without repeating the border sample") {
    const HsiScene scene = grid_scene(4, 4, 1);
    const Tensor<float> p = extract_patch<float>(scene, 0, 0, 3);
    // rows read (1, 0, 1) and columns (1, 0, 1) around the corner
    CHECK(p[0 * 3 + 0] == scene.cube_at(1, 1, 0));
    CHECK(p[0 * 3 + 1] == scene.cube_at(1, 0, 0));
    CHECK(p[1 * 3 + 0] == scene.cube_at(0, 1, 0));
    CHECK(p[1 * 3 + 1] == scene.cube_at(0, 0, 0));
    CHECK(p[2 * 3 + 2] == scene.cube_at(1, 1, 0));
}

TEST_CASE("episode sizes follow ways * (shots + queries)") {
    test_util::SyntheticOptions opt;
    opt.height = 64;
    opt.width = 64;
    opt.bands = 4;
    opt.classes = 16;
    opt.labeled_per_class = 30;
    const HsiScene scene = test_util::make_synthetic_scene(opt, "big");
    const auto index = labeled_pixel_index(scene);

    SamplerConfig cfg;
    cfg.patch_size = 5;
    cfg.train_shots = 1;
    cfg.train_queries_per_class = 19;
    Rng rng(3);
    const Episode<float> ep =
        sample_episode<float>(index, scene, DomainRole::source, 16, cfg, rng);
    CHECK(ep.support.count() == 16);
    CHECK(ep.query.count() == 304);
    CHECK(ep.class_id_map.size() == 16);
    CHECK(ep.support.domain == DomainRole::source);

    // support and query pixels are disjoint within the episode
    std::set<PixelCoord> support(ep.support.coords.begin(), ep.support.coords.end());
    for (const auto& c : ep.query.coords) CHECK(support.count(c) == 0);

    // a class without enough pixels cannot be chosen
    SamplerConfig hungry = cfg;
    hungry.train_queries_per_class = 64;
    Rng rng2(3);
    CHECK_THROWS_AS(
        sample_episode<float>(index, scene, DomainRole::source, 16, hungry, rng2),
        std::runtime_error);
}

TEST_CASE("episode sampling is deterministic under the seed") {
    test_util::SyntheticOptions opt;
    opt.classes = 4;
    opt.labeled_per_class = 40;
    const HsiScene scene = test_util::make_synthetic_scene(opt, "det");
    const auto index = labeled_pixel_index(scene);
    SamplerConfig cfg;
    cfg.train_queries_per_class = 5;

    Rng a(42), b(42), c(43);
    const auto e1 = sample_episode<float>(index, scene, DomainRole::target, 4, cfg, a);
    const auto e2 = sample_episode<float>(index, scene, DomainRole::target, 4, cfg, b);
    const auto e3 = sample_episode<float>(index, scene, DomainRole::target, 4, cfg, c);
    CHECK(e1.support.coords == e2.support.coords);
    CHECK(e1.query.coords == e2.query.coords);
    CHECK(e1.query.coords != e3.query.coords);
}

TEST_CASE("target pool draws 5 per class and augments to 200 per class") {
    test_util::SyntheticOptions opt;
    opt.classes = 3;
    opt.labeled_per_class = 25;
    const HsiScene scene = test_util::make_synthetic_scene(opt, "pool");
    const auto index = labeled_pixel_index(scene);

    SamplerConfig cfg;
    cfg.patch_size = 5;
    Rng rng(11);
    const LabeledPool<float> pool = draw_target_labeled_pool<float>(scene, index, cfg, rng);
    CHECK(pool.batch.count() == 15);
    CHECK(pool.class_ids == std::vector<int>{1, 2, 3});

    const PatchBatch<float> aug = augment_target_pool(pool.batch, cfg, rng);
    REQUIRE(aug.count() == 600);
    std::map<int, std::size_t> counts;
    for (int lab : aug.labels) ++counts[lab];
    for (int lab = 0; lab < 3; ++lab) CHECK(counts[lab] == 200);

    // first cycle repeats the originals exactly
    const std::size_t stride = 5 * 5 * scene.bands;
    for (std::size_t local = 0; local < 3; ++local)
        for (std::size_t j = 0; j < 5; ++j) {
            const float* orig = pool.batch.patch(local * 5 + j);
            const float* copy = aug.patches.data() + (local * 200 + j) * stride;
            for (std::size_t k = 0; k < stride; ++k) REQUIRE(copy[k] == orig[k]);
        }

    // later cycles are noisy copies; the noise has mean ~0 and sd ~sigma
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    for (std::size_t local = 0; local < 3; ++local)
        for (std::size_t j = 5; j < 200; ++j) {
            const float* base = pool.batch.patch(local * 5 + j % 5);
            const float* noisy = aug.patches.data() + (local * 200 + j) * stride;
            for (std::size_t k = 0; k < stride; ++k) {
                const double d = noisy[k] - base[k];
                sum += d;
                sum2 += d * d;
                ++n;
            }
        }
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    CHECK(std::abs(mean) < 3.0 * cfg.noise_sigma / std::sqrt(double(n)));
    CHECK(sd == doctest::Approx(cfg.noise_sigma).epsilon(0.05));
}

TEST_CASE("pool episodes keep support and query rows disjoint") {
    test_util::SyntheticOptions opt;
    opt.classes = 3;
    opt.labeled_per_class = 20;
    const HsiScene scene = test_util::make_synthetic_scene(opt, "poolep");
    const auto index = labeled_pixel_index(scene);
    SamplerConfig cfg;
    cfg.patch_size = 5;
    cfg.train_queries_per_class = 7;
    Rng rng(5);
    const LabeledPool<float> pool = draw_target_labeled_pool<float>(scene, index, cfg, rng);
    const PatchBatch<float> aug = augment_target_pool(pool.batch, cfg, rng);

    const Episode<float> ep =
        sample_episode_from_pool(aug, pool.class_ids, 3, cfg, rng);
    CHECK(ep.support.count() == 3);
    CHECK(ep.query.count() == 21);
    CHECK(ep.support.domain == DomainRole::target);
    CHECK(ep.class_id_map == std::vector<int>{1, 2, 3});
}

TEST_CASE("domain batches carry scene labels shifted to local ids") {
    test_util::SyntheticOptions opt;
    opt.classes = 2;
    opt.labeled_per_class = 10;
    const HsiScene scene = test_util::make_synthetic_scene(opt, "batch");
    Rng rng(9);
    const PatchBatch<float> batch =
        sample_domain_batch<float>(scene, DomainRole::target, 40, 3, rng);
    REQUIRE(batch.count() == 40);
    CHECK(batch.domain == DomainRole::target);
    for (std::size_t i = 0; i < batch.count(); ++i) {
        const int truth = scene.label_at(batch.coords[i].first, batch.coords[i].second);
        CHECK(batch.labels[i] == (truth > 0 ? truth - 1 : -1));
    }

    const auto index = labeled_pixel_index(scene);
    const PatchBatch<float> labeled = sample_labeled_domain_batch<float>(
        scene, DomainRole::source, index, 25, 3, rng);
    REQUIRE(labeled.count() == 25);
    for (std::size_t i = 0; i < labeled.count(); ++i) {
        CHECK(labeled.labels[i] >= 0);
        CHECK(labeled.labels[i] ==
              scene.label_at(labeled.coords[i].first, labeled.coords[i].second) - 1);
    }
}

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    cfg.patch_size = 4;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.patch_size = 9;
    cfg.noise_sigma = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.noise_sigma = 0.01;
    cfg.augmented_per_class = 3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.augmented_per_class = 200;
    CHECK_NOTHROW(cfg.validate());
}
