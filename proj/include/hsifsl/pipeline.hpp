#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsifsl/classmap.hpp"
#include "hsifsl/config.hpp"
#include "hsifsl/evaluator.hpp"
#include "hsifsl/metrics.hpp"
#include "hsifsl/trainer.hpp"

namespace hsifsl {

/// Both scenes loaded, validated and per-band normalized.
struct ScenePair {
    HsiScene source;
    HsiScene target;
};

inline ScenePair load_scene_pair(const RunConfig& cfg) {
    ScenePair pair;
    pair.source = normalize_scene(load_scene(cfg.source.path));
    pair.target = normalize_scene(load_scene(cfg.target.path));
    return pair;
}

/// Fills in the band counts and, when ways is 0, the episode width
/// min(source classes, target classes).
inline nn::NetworkConfig resolve_network_config(const RunConfig& cfg,
                                                const ScenePair& scenes) {
    nn::NetworkConfig net = cfg.network;
    net.source_bands = scenes.source.bands;
    net.target_bands = scenes.target.bands;
    if (net.ways == 0)
        net.ways = std::min(scenes.source.class_count(), scenes.target.class_count());
    if (net.ways < 2) throw std::runtime_error("pipeline: need at least 2 classes");
    return net;
}

/// The target's labeled pool is drawn from a seed-derived stream that is
/// independent of the training stream, so evaluation can re-derive the exact
/// same support set from the frozen config alone.
inline Rng pool_rng(std::uint64_t seed) {
    return Rng(seed ^ 0xc2b2ae3d27d4eb4fULL).split();
}

template <typename T = float>
struct RunArtifacts {
    std::unique_ptr<nn::ModelState<T>> model;
    LabeledPool<T> support;  // real (un-augmented) target patches
    std::filesystem::path run_dir;
};

/// Trains one seeded run end to end and leaves the frozen config, training
/// log and checkpoints in run_dir.
template <typename T = float>
RunArtifacts<T> train_run(const RunConfig& cfg, const ScenePair& scenes,
                          const std::filesystem::path& run_dir) {
    RunArtifacts<T> art;
    art.run_dir = run_dir;
    std::filesystem::create_directories(run_dir);

    const nn::NetworkConfig net = resolve_network_config(cfg, scenes);
    RunConfig frozen = cfg;
    frozen.network = net;
    const nlohmann::json frozen_json = run_config_to_json(frozen);
    {
        std::ofstream out(run_dir / "config.json");
        out << frozen_json.dump(2) << "\n";
        if (!out) throw std::runtime_error("pipeline: cannot write config.json");
    }

    art.model = std::make_unique<nn::ModelState<T>>(net);
    Rng init_rng = Rng(cfg.train.seed).split();
    art.model->init(init_rng);

    Rng prng = pool_rng(cfg.train.seed);
    const auto target_index = labeled_pixel_index(scenes.target);
    art.support = draw_target_labeled_pool<T>(scenes.target, target_index,
                                              cfg.train.sampler, prng);
    LabeledPool<T> augmented;
    augmented.class_ids = art.support.class_ids;
    augmented.batch = augment_target_pool(art.support.batch, cfg.train.sampler, prng);

    Trainer<T> trainer(*art.model, cfg.train);
    trainer.train(scenes.source, scenes.target, augmented, run_dir, frozen_json);
    return art;
}

/// Restores a model (and the support pool it was trained with) from a
/// checkpoint directory. The frozen config inside the archive wins; the
/// scenes are reloaded from the paths it records unless `scenes` is given.
template <typename T = float>
RunArtifacts<T> restore_run(const std::filesystem::path& checkpoint_dir,
                            RunConfig& cfg_out, const ScenePair* scenes = nullptr) {
    // peek at the archive's frozen config first to size the model
    nlohmann::json index = load_config_file(checkpoint_dir / "index.json");
    cfg_out = parse_run_config(index.at("config"));

    ScenePair local;
    if (!scenes) {
        local = load_scene_pair(cfg_out);
        scenes = &local;
    }
    const nn::NetworkConfig net = resolve_network_config(cfg_out, *scenes);

    RunArtifacts<T> art;
    art.model = std::make_unique<nn::ModelState<T>>(net);
    nn::ParamRegistry<T> reg = art.model->registry();
    checkpoint::load(checkpoint_dir, reg, static_cast<nn::Adam<T>*>(nullptr));

    Rng prng = pool_rng(cfg_out.train.seed);
    const auto target_index = labeled_pixel_index(scenes->target);
    art.support = draw_target_labeled_pool<T>(scenes->target, target_index,
                                              cfg_out.train.sampler, prng);
    return art;
}

/// Resolves the `latest` marker inside a run directory's checkpoints folder.
inline std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir) {
    const auto marker = run_dir / "checkpoints" / "latest";
    std::ifstream in(marker);
    std::string name;
    if (!(in >> name))
        throw std::runtime_error("pipeline: no checkpoint marker at " + marker.string());
    return run_dir / "checkpoints" / name;
}

template <typename T = float>
MetricsEntry evaluate_run(nn::ModelState<T>& model, const HsiScene& target,
                          const LabeledPool<T>& support, const RunConfig& cfg,
                          SceneClassification<T>* classification_out = nullptr) {
    SceneClassification<T> cls = classify_scene(model, target, support, cfg.eval);
    MetricsEntry entry = compute_metrics(cls.confusion);
    entry.seed = cfg.train.seed;
    if (classification_out) *classification_out = std::move(cls);
    return entry;
}

/// Full train + evaluate once per seed; aggregates mean and sample std.
template <typename T = float>
MetricsReport multi_seed_evaluate(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& out_dir) {
    if (seeds.empty()) throw std::invalid_argument("multi_seed_evaluate: no seeds");
    ScenePair scenes = load_scene_pair(cfg);
    std::vector<MetricsEntry> entries;
    for (const std::uint64_t seed : seeds) {
        RunConfig seeded = cfg;
        seeded.train.seed = seed;
        const auto run_dir = out_dir / ("seed-" + std::to_string(seed));
        RunArtifacts<T> art = train_run<T>(seeded, scenes, run_dir);
        SceneClassification<T> cls;
        MetricsEntry entry =
            evaluate_run(*art.model, scenes.target, art.support, seeded, &cls);
        std::ofstream out(run_dir / "metrics.json");
        out << metrics_to_json(entry, cls.confusion).dump(2) << "\n";
        entries.push_back(entry);
    }
    MetricsReport rep = aggregate_metrics(std::move(entries));
    std::ofstream out(out_dir / "metrics.aggregate.json");
    out << report_to_json(rep).dump(2) << "\n";
    return rep;
}

}  // namespace hsifsl
