#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsifsl/evaluator.hpp"
#include "hsifsl/nn/network.hpp"
#include "hsifsl/scene.hpp"
#include "hsifsl/trainer.hpp"

namespace hsifsl {

/// Everything a reproducible run needs, loaded from one JSON document.
struct RunConfig {
    SceneManifest source;
    SceneManifest target;
    nn::NetworkConfig network;
    TrainConfig train;       // holds sampler + objective
    EvalOptions eval;
    std::filesystem::path out_dir = "runs/default";

    void validate() const {
        if (source.path.empty() || target.path.empty())
            throw std::invalid_argument("config: scene paths are required");
        train.validate();
        if (network.patch_size != train.sampler.patch_size)
            throw std::invalid_argument(
                "config: network.patch_size must equal sampler.patch_size");
    }
};

namespace detail {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    const auto& scenes = j.at("scenes");
    cfg.source.role = DomainRole::source;
    cfg.source.path = scenes.at("source").at("path").get<std::string>();
    detail::get_if(scenes.at("source"), "scene_id", cfg.source.scene_id);
    cfg.target.role = DomainRole::target;
    cfg.target.path = scenes.at("target").at("path").get<std::string>();
    detail::get_if(scenes.at("target"), "scene_id", cfg.target.scene_id);

    if (j.contains("network")) {
        const auto& n = j.at("network");
        detail::get_if(n, "mapped_bands", cfg.network.mapped_bands);
        detail::get_if(n, "patch_size", cfg.network.patch_size);
        detail::get_if(n, "attention_layers", cfg.network.attention_layers);
        detail::get_if(n, "attention_heads", cfg.network.attention_heads);
        detail::get_if(n, "disc_hidden", cfg.network.disc_hidden);
        detail::get_if(n, "disc_dropout", cfg.network.disc_dropout);
        detail::get_if(n, "grl_coeff", cfg.network.grl_coeff);
        detail::get_if(n, "conditional_discriminator",
                       cfg.network.conditional_discriminator);
        detail::get_if(n, "ways", cfg.network.ways);
    }
    if (j.contains("sampler")) {
        const auto& s = j.at("sampler");
        auto& sc = cfg.train.sampler;
        detail::get_if(s, "patch_size", sc.patch_size);
        detail::get_if(s, "train_shots", sc.train_shots);
        detail::get_if(s, "train_queries_per_class", sc.train_queries_per_class);
        detail::get_if(s, "target_labels_per_class", sc.target_labels_per_class);
        detail::get_if(s, "augmented_per_class", sc.augmented_per_class);
        detail::get_if(s, "noise_sigma", sc.noise_sigma);
        detail::get_if(s, "domain_batch_size", sc.domain_batch_size);
        if (!j.contains("network") || !j.at("network").contains("patch_size"))
            cfg.network.patch_size = sc.patch_size;
    }
    if (j.contains("objective")) {
        const auto& o = j.at("objective");
        auto& oc = cfg.train.objective;
        detail::get_if(o, "tau", oc.tau);
        detail::get_if(o, "lambda1", oc.lambda1);
        detail::get_if(o, "lambda2", oc.lambda2);
        detail::get_if(o, "lambda3", oc.lambda3);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::get_if(t, "episodes", cfg.train.episodes);
        detail::get_if(t, "learning_rate", cfg.train.learning_rate);
        detail::get_if(t, "seed", cfg.train.seed);
        detail::get_if(t, "checkpoint_every", cfg.train.checkpoint_every);
        detail::get_if(t, "device_hint", cfg.train.device_hint);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::get_if(e, "query_batch_size", cfg.eval.query_batch_size);
        detail::get_if(e, "nearest_support", cfg.eval.nearest_support);
    }
    cfg.eval.patch_size = cfg.train.sampler.patch_size;
    if (j.contains("out_dir"))
        cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.validate();
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    return {
        {"scenes",
         {{"source", {{"path", cfg.source.path.string()},
                      {"scene_id", cfg.source.scene_id}}},
          {"target", {{"path", cfg.target.path.string()},
                      {"scene_id", cfg.target.scene_id}}}}},
        {"network",
         {{"mapped_bands", cfg.network.mapped_bands},
          {"patch_size", cfg.network.patch_size},
          {"attention_layers", cfg.network.attention_layers},
          {"attention_heads", cfg.network.attention_heads},
          {"disc_hidden", cfg.network.disc_hidden},
          {"disc_dropout", cfg.network.disc_dropout},
          {"grl_coeff", cfg.network.grl_coeff},
          {"conditional_discriminator", cfg.network.conditional_discriminator},
          {"ways", cfg.network.ways}}},
        {"sampler",
         {{"patch_size", cfg.train.sampler.patch_size},
          {"train_shots", cfg.train.sampler.train_shots},
          {"train_queries_per_class", cfg.train.sampler.train_queries_per_class},
          {"target_labels_per_class", cfg.train.sampler.target_labels_per_class},
          {"augmented_per_class", cfg.train.sampler.augmented_per_class},
          {"noise_sigma", cfg.train.sampler.noise_sigma},
          {"domain_batch_size", cfg.train.sampler.domain_batch_size}}},
        {"objective",
         {{"tau", cfg.train.objective.tau},
          {"lambda1", cfg.train.objective.lambda1},
          {"lambda2", cfg.train.objective.lambda2},
          {"lambda3", cfg.train.objective.lambda3}}},
        {"train",
         {{"episodes", cfg.train.episodes},
          {"learning_rate", cfg.train.learning_rate},
          {"seed", cfg.train.seed},
          {"checkpoint_every", cfg.train.checkpoint_every},
          {"device_hint", cfg.train.device_hint}}},
        {"eval",
         {{"query_batch_size", cfg.eval.query_batch_size},
          {"nearest_support", cfg.eval.nearest_support}}},
        {"out_dir", cfg.out_dir.string()},
    };
}

/// Applies one `dotted.path=value` override in place. The value is parsed as
/// JSON when possible and kept as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like key.path=value: " +
                                    assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty())
            throw std::invalid_argument("override has an empty path segment: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

inline nlohmann::json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config: bad JSON in " + path.string() + ": " +
                                 e.what());
    }
    return j;
}

}  // namespace hsifsl
