#pragma once

// Shared fixtures for the test suite: synthetic scene generation, temp
// directories, and finite-difference utilities.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "hsifsl/rng.hpp"
#include "hsifsl/scene.hpp"
#include "hsifsl/tensor.hpp"

namespace test_util {

inline std::filesystem::path fresh_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("hsifsl-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct SyntheticOptions {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t bands = 20;
    std::size_t classes = 3;
    std::size_t labeled_per_class = 60;  // rest stays background
    double noise_sigma = 0.02;
    double band_shift = 0.0;   // shifts the Gaussian signature centers
    double scale = 1.0;        // affine distortion of the whole cube
    double offset = 0.0;
    std::uint64_t seed = 1;
};

/// Scene with `classes` horizontal stripes, each carrying a Gaussian spectral
/// signature plus pixel noise. A band shift plus affine distortion turns the
/// same generator into a shifted target domain.
inline hsifsl::HsiScene make_synthetic_scene(const SyntheticOptions& opt,
                                             const std::string& scene_id) {
    hsifsl::Rng rng(opt.seed);
    hsifsl::HsiScene s;
    s.height = opt.height;
    s.width = opt.width;
    s.bands = opt.bands;
    s.scene_id = scene_id;
    for (std::size_t c = 0; c < opt.classes; ++c)
        s.class_names.push_back("class" + std::to_string(c + 1));
    s.cube.resize({s.height, s.width, s.bands});
    s.labels.resize({s.height, s.width});

    const double stripe = static_cast<double>(opt.height) / opt.classes;
    for (std::size_t r = 0; r < s.height; ++r) {
        const auto cls = std::min<std::size_t>(
            opt.classes - 1, static_cast<std::size_t>(r / stripe));
        const double center =
            (static_cast<double>(cls) + 0.5) * opt.bands / opt.classes +
            opt.band_shift;
        const double width = opt.bands / (2.5 * opt.classes);
        for (std::size_t c = 0; c < s.width; ++c) {
            for (std::size_t b = 0; b < s.bands; ++b) {
                const double d = (static_cast<double>(b) - center) / width;
                double v = 0.2 + 0.7 * std::exp(-0.5 * d * d);
                v += rng.next_normal(0.0, opt.noise_sigma);
                v = opt.scale * v + opt.offset;
                s.cube[(r * s.width + c) * s.bands + b] = static_cast<float>(v);
            }
        }
    }

    // label a fixed number of pixels per class, spread over each stripe
    std::vector<std::vector<hsifsl::PixelCoord>> by_class(opt.classes);
    for (std::size_t r = 0; r < s.height; ++r) {
        const auto cls = std::min<std::size_t>(
            opt.classes - 1, static_cast<std::size_t>(r / stripe));
        for (std::size_t c = 0; c < s.width; ++c) by_class[cls].push_back({r, c});
    }
    for (std::size_t cls = 0; cls < opt.classes; ++cls) {
        auto& pixels = by_class[cls];
        rng.shuffle(pixels.begin(), pixels.end());
        const std::size_t n = std::min(opt.labeled_per_class, pixels.size());
        for (std::size_t i = 0; i < n; ++i)
            s.labels[pixels[i].first * s.width + pixels[i].second] =
                static_cast<std::uint16_t>(cls + 1);
    }
    return s;
}

/// Central finite difference of a scalar function at x[i].
inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace test_util
