#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsifsl/tensor.hpp"

namespace hsifsl {

enum class DomainRole { source, target };

inline const char* domain_name(DomainRole d) {
    return d == DomainRole::source ? "source" : "target";
}

/// A hyperspectral cube with per-pixel class labels.
/// Labels: 0 = unlabeled background, 1..C = classes.
struct HsiScene {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    Tensor<float> cube;            // H x W x B, band fastest
    Tensor<std::uint16_t> labels;  // H x W
    std::vector<std::string> class_names;
    std::string scene_id;

    std::size_t class_count() const { return class_names.size(); }

    float cube_at(std::size_t r, std::size_t c, std::size_t b) const {
        return cube[(r * width + c) * bands + b];
    }
    std::uint16_t label_at(std::size_t r, std::size_t c) const {
        return labels[r * width + c];
    }
};

struct SceneManifest {
    DomainRole role = DomainRole::source;
    std::filesystem::path path;
    std::string scene_id;
};

namespace detail {

inline std::vector<char> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("scene: missing file " + p.string());
    in.seekg(0, std::ios::end);
    const auto n = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<char> buf(n);
    if (n) in.read(buf.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("scene: short read on " + p.string());
    return buf;
}

inline void write_file(const std::filesystem::path& p, const void* data, std::size_t n) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("scene: cannot open " + p.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("scene: short write on " + p.string());
}

// All on-disk payloads are little-endian; assert the host matches once.
inline void require_little_endian() {
    const std::uint16_t probe = 1;
    if (*reinterpret_cast<const std::uint8_t*>(&probe) != 1)
        throw std::runtime_error("scene: big-endian hosts are not supported");
}

}  // namespace detail

inline void validate_scene(const HsiScene& s) {
    if (s.height == 0 || s.width == 0 || s.bands == 0)
        throw std::runtime_error("scene: empty dimensions");
    if (s.cube.size() != s.height * s.width * s.bands)
        throw std::runtime_error("scene: cube size mismatch");
    if (s.labels.size() != s.height * s.width)
        throw std::runtime_error("scene: labels size mismatch");
    if (!s.cube.all_finite())
        throw std::runtime_error("scene: NaN or Inf in cube");
    const auto c = s.class_names.size();
    for (std::size_t i = 0; i < s.labels.size(); ++i)
        if (s.labels[i] > c)
            throw std::runtime_error("scene: label out of range (" +
                                     std::to_string(s.labels[i]) + " > C=" +
                                     std::to_string(c) + ")");
}

/// Loads a scene directory: meta.json + cube.bin (float32 LE, band fastest)
/// + labels.bin (uint16 LE, row-major).
inline HsiScene load_scene(const std::filesystem::path& dir) {
    detail::require_little_endian();

    const auto meta_path = dir / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw std::runtime_error("scene: missing file " + meta_path.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("scene: bad meta.json: " + std::string(e.what()));
    }

    HsiScene s;
    s.height = meta.at("height").get<std::size_t>();
    s.width = meta.at("width").get<std::size_t>();
    s.bands = meta.at("bands").get<std::size_t>();
    s.class_names = meta.at("class_names").get<std::vector<std::string>>();
    s.scene_id = meta.at("scene_id").get<std::string>();

    const auto cube_bytes = detail::read_file(dir / "cube.bin");
    const std::size_t want_cube = s.height * s.width * s.bands * sizeof(float);
    if (cube_bytes.size() != want_cube)
        throw std::runtime_error("scene: payload size mismatch in cube.bin (have " +
                                 std::to_string(cube_bytes.size()) + ", want " +
                                 std::to_string(want_cube) + ")");
    s.cube.resize({s.height, s.width, s.bands});
    std::memcpy(s.cube.data(), cube_bytes.data(), want_cube);

    const auto label_bytes = detail::read_file(dir / "labels.bin");
    const std::size_t want_labels = s.height * s.width * sizeof(std::uint16_t);
    if (label_bytes.size() != want_labels)
        throw std::runtime_error("scene: payload size mismatch in labels.bin (have " +
                                 std::to_string(label_bytes.size()) + ", want " +
                                 std::to_string(want_labels) + ")");
    s.labels.resize({s.height, s.width});
    std::memcpy(s.labels.data(), label_bytes.data(), want_labels);

    validate_scene(s);
    return s;
}

inline void save_scene(const HsiScene& s, const std::filesystem::path& dir) {
    detail::require_little_endian();
    validate_scene(s);
    std::filesystem::create_directories(dir);

    nlohmann::json meta = {
        {"height", s.height},
        {"width", s.width},
        {"bands", s.bands},
        {"class_names", s.class_names},
        {"scene_id", s.scene_id},
    };
    std::ofstream meta_out(dir / "meta.json");
    meta_out << meta.dump(2) << "\n";
    if (!meta_out) throw std::runtime_error("scene: cannot write meta.json");

    detail::write_file(dir / "cube.bin", s.cube.data(), s.cube.size() * sizeof(float));
    detail::write_file(dir / "labels.bin", s.labels.data(),
                       s.labels.size() * sizeof(std::uint16_t));
}

/// Per-band min-max scaling to [0,1]; constant bands map to 0 everywhere.
inline HsiScene normalize_scene(const HsiScene& scene) {
    HsiScene out = scene;
    const std::size_t pixels = scene.height * scene.width;
    for (std::size_t b = 0; b < scene.bands; ++b) {
        float lo = scene.cube[b];
        float hi = scene.cube[b];
        for (std::size_t p = 1; p < pixels; ++p) {
            const float v = scene.cube[p * scene.bands + b];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const float range = hi - lo;
        for (std::size_t p = 0; p < pixels; ++p) {
            float& v = out.cube[p * scene.bands + b];
            v = (range > 0.0f) ? (v - lo) / range : 0.0f;
        }
    }
    return out;
}

using PixelCoord = std::pair<std::size_t, std::size_t>;  // (row, col)

/// Labeled pixel coordinates grouped by class id (1..C), row-major order.
/// Background (0) is excluded.
inline std::map<int, std::vector<PixelCoord>> labeled_pixel_index(const HsiScene& s) {
    std::map<int, std::vector<PixelCoord>> index;
    for (std::size_t r = 0; r < s.height; ++r)
        for (std::size_t c = 0; c < s.width; ++c) {
            const int lab = s.label_at(r, c);
            if (lab > 0) index[lab].emplace_back(r, c);
        }
    return index;
}

}  // namespace hsifsl
