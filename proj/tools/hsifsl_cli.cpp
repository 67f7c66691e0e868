// Command-line entry points: convert raw dumps into scene directories, run
// seeded training, evaluate checkpoints, and export class maps / embeddings.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsifsl/classmap.hpp"
#include "hsifsl/config.hpp"
#include "hsifsl/evaluator.hpp"
#include "hsifsl/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
    std::int64_t episodes = -1;
    std::string out;
};

hsifsl::RunConfig load_run_config(const CommonOpts& opts) {
    json doc = hsifsl::load_config_file(opts.config_path);
    for (const auto& ov : opts.overrides) hsifsl::apply_override(doc, ov);
    if (opts.seed >= 0) doc["train"]["seed"] = static_cast<std::uint64_t>(opts.seed);
    if (opts.episodes >= 0)
        doc["train"]["episodes"] = static_cast<std::size_t>(opts.episodes);
    if (!opts.out.empty()) doc["out_dir"] = opts.out;
    return hsifsl::parse_run_config(doc);
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required = true) {
    cmd->add_option("--config", opts.config_path, "Run configuration JSON")
        ->required(config_required);
    cmd->add_option("--set", opts.overrides,
                    "Override a config key, e.g. --set objective.tau=0.1");
    cmd->add_option("--seed", opts.seed, "Override train.seed");
    cmd->add_option("--episodes", opts.episodes, "Override train.episodes");
    cmd->add_option("--out", opts.out, "Override the output directory");
}

int cmd_convert(const std::string& cube_path, const std::string& labels_path,
                const std::string& shape_path, const std::string& out_dir) {
    const json shape = hsifsl::load_config_file(shape_path);
    hsifsl::HsiScene scene;
    scene.height = shape.at("height").get<std::size_t>();
    scene.width = shape.at("width").get<std::size_t>();
    scene.bands = shape.at("bands").get<std::size_t>();
    scene.class_names = shape.at("class_names").get<std::vector<std::string>>();
    scene.scene_id = shape.value("scene_id", fs::path(out_dir).filename().string());

    auto read_raw = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw std::runtime_error("convert: cannot open " + p);
        return std::vector<char>((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
    };
    const auto cube_bytes = read_raw(cube_path);
    const std::size_t want_cube = scene.height * scene.width * scene.bands * 4;
    if (cube_bytes.size() != want_cube)
        throw std::runtime_error("convert: cube has " +
                                 std::to_string(cube_bytes.size()) + " bytes, want " +
                                 std::to_string(want_cube));
    scene.cube.resize({scene.height, scene.width, scene.bands});
    std::memcpy(scene.cube.data(), cube_bytes.data(), want_cube);

    const auto label_bytes = read_raw(labels_path);
    const std::size_t want_labels = scene.height * scene.width * 2;
    if (label_bytes.size() != want_labels)
        throw std::runtime_error("convert: labels have " +
                                 std::to_string(label_bytes.size()) +
                                 " bytes, want " + std::to_string(want_labels));
    scene.labels.resize({scene.height, scene.width});
    std::memcpy(scene.labels.data(), label_bytes.data(), want_labels);

    hsifsl::save_scene(scene, out_dir);
    std::cout << out_dir << "\n";
    return 0;
}

hsifsl::RunArtifacts<float> restore_for(const std::string& checkpoint,
                                        hsifsl::RunConfig& cfg,
                                        hsifsl::ScenePair& scenes) {
    json index = hsifsl::load_config_file(fs::path(checkpoint) / "index.json");
    cfg = hsifsl::parse_run_config(index.at("config"));
    scenes = hsifsl::load_scene_pair(cfg);
    hsifsl::RunConfig ignored;
    return hsifsl::restore_run<float>(checkpoint, ignored, &scenes);
}

void emit_map(hsifsl::nn::ModelState<float>& model, const hsifsl::ScenePair& scenes,
              const hsifsl::LabeledPool<float>& support, const hsifsl::RunConfig& cfg,
              const fs::path& png_path) {
    hsifsl::SceneClassification<float> cls =
        hsifsl::classify_scene(model, scenes.target, support, cfg.eval);
    const auto palette = hsifsl::default_palette(scenes.target.class_count() + 1);
    hsifsl::write_class_map(png_path, cls.predictions, palette);
    std::cout << png_path.string() << "\n";
}

void emit_embeddings(hsifsl::nn::ModelState<float>& model,
                     const hsifsl::ScenePair& scenes, const hsifsl::RunConfig& cfg,
                     std::size_t limit, const fs::path& csv_path) {
    hsifsl::Rng rng = hsifsl::Rng(cfg.train.seed ^ 0x7fb5d329728ea185ULL).split();
    hsifsl::nn::FeatureBatch<float> all;
    std::size_t n_source = 0;
    for (const hsifsl::HsiScene* scene : {&scenes.source, &scenes.target}) {
        const hsifsl::DomainRole role = scene == &scenes.source
                                            ? hsifsl::DomainRole::source
                                            : hsifsl::DomainRole::target;
        const auto index = hsifsl::labeled_pixel_index(*scene);
        std::vector<std::pair<hsifsl::PixelCoord, int>> labeled;
        for (const auto& [class_id, pixels] : index)
            for (const auto& px : pixels) labeled.emplace_back(px, class_id);
        rng.shuffle(labeled.begin(), labeled.end());
        const std::size_t n = std::min(limit, labeled.size());
        std::vector<hsifsl::PixelCoord> coords;
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) {
            coords.push_back(labeled[i].first);
            labels.push_back(labeled[i].second);
        }
        hsifsl::PatchBatch<float> batch = hsifsl::extract_patch_batch<float>(
            *scene, coords, cfg.train.sampler.patch_size, role);
        batch.labels = labels;
        hsifsl::nn::FeatureBatch<float> feats =
            hsifsl::nn::extract_features(model, batch, false);
        if (role == hsifsl::DomainRole::source) n_source = feats.count();
        if (all.count() == 0) {
            all = std::move(feats);
        } else {
            const std::size_t f = all.width();
            hsifsl::Tensor<float> merged({all.count() + feats.count(), f});
            std::copy(all.features.data(), all.features.data() + all.features.size(),
                      merged.data());
            std::copy(feats.features.data(),
                      feats.features.data() + feats.features.size(),
                      merged.data() + all.features.size());
            all.features = std::move(merged);
            all.labels.insert(all.labels.end(), feats.labels.begin(),
                              feats.labels.end());
        }
    }
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw std::runtime_error("embeddings: cannot write " + csv_path.string());
    const std::size_t f = all.width();
    for (std::size_t k = 0; k < f; ++k) out << "f" << k << ",";
    out << "label,domain\n";
    out.precision(9);
    const std::size_t total = all.count();
    for (std::size_t i = 0; i < total; ++i) {
        const float* row = all.features.data() + i * f;
        for (std::size_t k = 0; k < f; ++k) out << row[k] << ",";
        out << all.labels[i] << "," << (i < n_source ? "source" : "target") << "\n";
    }
    std::cout << csv_path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-domain few-shot hyperspectral classification"};
    app.require_subcommand(1);

    // convert
    std::string cube_path, labels_path, shape_path, convert_out;
    auto* convert = app.add_subcommand(
        "convert", "Convert raw cube + labels + shape JSON into a scene directory");
    convert->add_option("--cube", cube_path, "Raw float32 cube (band fastest)")
        ->required();
    convert->add_option("--labels", labels_path, "Raw uint16 labels")->required();
    convert->add_option("--shape", shape_path, "Shape JSON")->required();
    convert->add_option("--out", convert_out, "Output scene directory")->required();

    // train
    CommonOpts train_opts;
    auto* train = app.add_subcommand("train", "Train one seeded run");
    add_common(train, train_opts);

    // evaluate
    CommonOpts eval_opts;
    std::string eval_checkpoint;
    std::int64_t eval_seeds = 0;
    bool flag_map = false, flag_embed = false;
    auto* evaluate = app.add_subcommand(
        "evaluate", "Evaluate a checkpoint, or train+evaluate over seeds");
    add_common(evaluate, eval_opts, /*config_required=*/false);
    evaluate->add_option("--checkpoint", eval_checkpoint,
                         "Checkpoint directory to evaluate");
    evaluate->add_option("--seeds", eval_seeds,
                         "Train + evaluate this many consecutive seeds");
    evaluate->add_flag("--emit-map", flag_map, "Also write the class map PNG");
    evaluate->add_flag("--emit-embeddings", flag_embed,
                       "Also write the feature CSV");

    // map
    std::string map_checkpoint, map_out;
    auto* mapcmd = app.add_subcommand("map", "Render the class map of a checkpoint");
    mapcmd->add_option("--checkpoint", map_checkpoint, "Checkpoint directory")
        ->required();
    mapcmd->add_option("--out", map_out, "Output PNG path")->required();

    // embed
    std::string embed_checkpoint, embed_out;
    std::size_t embed_limit = 2000;
    auto* embed = app.add_subcommand("embed", "Export feature embeddings as CSV");
    embed->add_option("--checkpoint", embed_checkpoint, "Checkpoint directory")
        ->required();
    embed->add_option("--out", embed_out, "Output CSV path")->required();
    embed->add_option("--limit", embed_limit, "Max labeled pixels per scene");

    CLI11_PARSE(app, argc, argv);

    try {
        if (convert->parsed())
            return cmd_convert(cube_path, labels_path, shape_path, convert_out);

        if (train->parsed()) {
            const hsifsl::RunConfig cfg = load_run_config(train_opts);
            const hsifsl::ScenePair scenes = hsifsl::load_scene_pair(cfg);
            hsifsl::train_run<float>(cfg, scenes, cfg.out_dir);
            std::cout << cfg.out_dir.string() << "\n";
            return 0;
        }

        if (evaluate->parsed()) {
            if (!eval_checkpoint.empty()) {
                hsifsl::RunConfig cfg;
                hsifsl::ScenePair scenes;
                auto art = restore_for(eval_checkpoint, cfg, scenes);
                if (!eval_opts.out.empty()) cfg.out_dir = eval_opts.out;
                std::filesystem::create_directories(cfg.out_dir);
                hsifsl::SceneClassification<float> cls;
                const hsifsl::MetricsEntry entry = hsifsl::evaluate_run(
                    *art.model, scenes.target, art.support, cfg, &cls);
                const auto metrics_path = cfg.out_dir / "metrics.json";
                std::ofstream out(metrics_path);
                out << hsifsl::metrics_to_json(entry, cls.confusion).dump(2) << "\n";
                if (flag_map) {
                    const auto palette =
                        hsifsl::default_palette(scenes.target.class_count() + 1);
                    hsifsl::write_class_map(cfg.out_dir / "map.png", cls.predictions,
                                            palette);
                }
                if (flag_embed)
                    emit_embeddings(*art.model, scenes, cfg, embed_limit,
                                    cfg.out_dir / "embeddings.csv");
                std::cout << metrics_path.string() << "\n";
                return 0;
            }
            if (eval_opts.config_path.empty())
                throw std::runtime_error(
                    "evaluate: pass --checkpoint or --config (with optional --seeds)");
            const hsifsl::RunConfig cfg = load_run_config(eval_opts);
            std::vector<std::uint64_t> seeds;
            const std::size_t n = eval_seeds > 0 ? static_cast<std::size_t>(eval_seeds) : 1;
            for (std::size_t i = 0; i < n; ++i) seeds.push_back(cfg.train.seed + i);
            const hsifsl::MetricsReport rep =
                hsifsl::multi_seed_evaluate<float>(cfg, seeds, cfg.out_dir);
            if (flag_map || flag_embed) {
                const std::uint64_t last = seeds.back();
                hsifsl::RunConfig seeded = cfg;
                seeded.train.seed = last;
                const auto run_dir =
                    cfg.out_dir / ("seed-" + std::to_string(last));
                hsifsl::RunConfig restored;
                auto art = hsifsl::restore_run<float>(
                    hsifsl::latest_checkpoint(run_dir), restored);
                hsifsl::ScenePair scenes = hsifsl::load_scene_pair(seeded);
                if (flag_map)
                    emit_map(*art.model, scenes, art.support, seeded,
                             cfg.out_dir / "map.png");
                if (flag_embed)
                    emit_embeddings(*art.model, scenes, seeded, embed_limit,
                                    cfg.out_dir / "embeddings.csv");
            }
            std::cout << (cfg.out_dir / "metrics.aggregate.json").string() << "\n";
            return 0;
        }

        if (mapcmd->parsed()) {
            hsifsl::RunConfig cfg;
            hsifsl::ScenePair scenes;
            auto art = restore_for(map_checkpoint, cfg, scenes);
            emit_map(*art.model, scenes, art.support, cfg, map_out);
            return 0;
        }

        if (embed->parsed()) {
            hsifsl::RunConfig cfg;
            hsifsl::ScenePair scenes;
            auto art = restore_for(embed_checkpoint, cfg, scenes);
            emit_embeddings(*art.model, scenes, cfg, embed_limit, embed_out);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
