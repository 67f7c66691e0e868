#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsifsl/rng.hpp"
#include "hsifsl/scene.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl {

/// A set of fixed-size spectral patches with labels and a domain tag.
/// Labels are local class ids (0..C-1) or -1 when unknown.
template <typename T>
struct PatchBatch {
    Tensor<T> patches;  // N x P x P x B, band fastest
    std::vector<int> labels;
    DomainRole domain = DomainRole::source;
    std::vector<PixelCoord> coords;

    std::size_t count() const { return labels.size(); }
    std::size_t patch_size() const { return patches.rank() == 4 ? patches.dim(1) : 0; }
    std::size_t bands() const { return patches.rank() == 4 ? patches.dim(3) : 0; }

    const T* patch(std::size_t i) const {
        return patches.data() + i * patch_size() * patch_size() * bands();
    }
    T* patch(std::size_t i) {
        return patches.data() + i * patch_size() * patch_size() * bands();
    }
};

/// A C-way K-shot task.
template <typename T>
struct Episode {
    std::size_t ways = 0;
    std::size_t shots = 0;
    std::size_t queries_per_class = 0;
    PatchBatch<T> support;
    PatchBatch<T> query;
    std::vector<int> class_id_map;  // local class index -> scene class id
};

struct SamplerConfig {
    std::size_t patch_size = 9;
    std::size_t train_ways = 0;  // 0 = derive from the scenes
    std::size_t train_shots = 1;
    std::size_t train_queries_per_class = 19;
    std::size_t target_labels_per_class = 5;
    std::size_t augmented_per_class = 200;
    double noise_sigma = 0.01;
    std::size_t domain_batch_size = 0;  // 0 = episode patch count
    std::uint64_t seed = 0;

    void validate() const {
        if (patch_size == 0 || patch_size % 2 == 0)
            throw std::invalid_argument("sampler: patch_size must be odd and positive");
        if (train_shots == 0 || train_queries_per_class == 0)
            throw std::invalid_argument("sampler: shots and queries must be positive");
        if (augmented_per_class < target_labels_per_class)
            throw std::invalid_argument(
                "sampler: augmented_per_class must be >= target_labels_per_class");
        if (noise_sigma < 0)
            throw std::invalid_argument("sampler: noise_sigma must be non-negative");
    }
};

namespace detail {

/// Reflects an index into [0, n) across the edges without repeating the
/// border sample (…, 2, 1, 0, 1, 2, …).
inline std::size_t reflect_index(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return static_cast<std::size_t>(i);
}

}  // namespace detail

/// P x P x B window centered at (row, col); out-of-bounds positions are
/// filled by mirror reflection across the scene edge.
template <typename T = float>
Tensor<T> extract_patch(const HsiScene& scene, std::size_t row, std::size_t col,
                        std::size_t patch_size) {
    if (row >= scene.height || col >= scene.width)
        throw std::out_of_range("extract_patch: center outside scene");
    const long half = static_cast<long>(patch_size / 2);
    Tensor<T> out({patch_size, patch_size, scene.bands});
    T* dst = out.data();
    for (long dr = -half; dr <= half; ++dr) {
        const std::size_t r = detail::reflect_index(static_cast<long>(row) + dr,
                                                    static_cast<long>(scene.height));
        for (long dc = -half; dc <= half; ++dc) {
            const std::size_t c = detail::reflect_index(static_cast<long>(col) + dc,
                                                        static_cast<long>(scene.width));
            const float* src = scene.cube.data() + (r * scene.width + c) * scene.bands;
            for (std::size_t b = 0; b < scene.bands; ++b) *dst++ = static_cast<T>(src[b]);
        }
    }
    return out;
}

template <typename T = float>
PatchBatch<T> extract_patch_batch(const HsiScene& scene,
                                  const std::vector<PixelCoord>& coords,
                                  std::size_t patch_size, DomainRole domain) {
    PatchBatch<T> batch;
    batch.domain = domain;
    batch.coords = coords;
    batch.labels.assign(coords.size(), -1);
    batch.patches.resize({coords.size(), patch_size, patch_size, scene.bands});
    const std::size_t stride = patch_size * patch_size * scene.bands;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const Tensor<T> p = extract_patch<T>(scene, coords[i].first, coords[i].second,
                                             patch_size);
        std::copy(p.data(), p.data() + stride, batch.patches.data() + i * stride);
    }
    return batch;
}

/// The target's few labeled patches plus their class-id mapping.
template <typename T>
struct LabeledPool {
    PatchBatch<T> batch;            // labels are local ids 0..C-1
    std::vector<int> class_ids;     // local id -> scene class id
};

/// Draws target_labels_per_class labeled pixels per class and cuts patches.
template <typename T = float>
LabeledPool<T> draw_target_labeled_pool(const HsiScene& scene,
                                        const std::map<int, std::vector<PixelCoord>>& index,
                                        const SamplerConfig& cfg, Rng& rng) {
    LabeledPool<T> pool;
    pool.batch.domain = DomainRole::target;
    std::vector<PixelCoord> coords;
    for (const auto& [class_id, pixels] : index) {
        if (pixels.size() < cfg.target_labels_per_class)
            throw std::runtime_error("target pool: class " + std::to_string(class_id) +
                                     " has fewer than " +
                                     std::to_string(cfg.target_labels_per_class) +
                                     " labeled pixels");
        std::vector<PixelCoord> shuffled = pixels;
        rng.shuffle(shuffled.begin(), shuffled.end());
        const int local = static_cast<int>(pool.class_ids.size());
        pool.class_ids.push_back(class_id);
        for (std::size_t i = 0; i < cfg.target_labels_per_class; ++i) {
            coords.push_back(shuffled[i]);
            pool.batch.labels.push_back(local);
        }
    }
    PatchBatch<T> patches = extract_patch_batch<T>(scene, coords, cfg.patch_size,
                                                   DomainRole::target);
    pool.batch.patches = std::move(patches.patches);
    pool.batch.coords = std::move(patches.coords);
    return pool;
}

/// Expands a pool of target_labels_per_class patches per class to
/// augmented_per_class per class: the originals plus copies perturbed by
/// additive zero-mean Gaussian noise with stddev noise_sigma per element.
template <typename T>
PatchBatch<T> augment_target_pool(const PatchBatch<T>& pool, const SamplerConfig& cfg,
                                  Rng& rng) {
    // group original indices by label
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.count(); ++i) by_class[pool.labels[i]].push_back(i);
    for (const auto& [lab, idx] : by_class)
        if (idx.empty())
            throw std::runtime_error("augment: empty class in pool");
    if (by_class.empty()) throw std::runtime_error("augment: empty pool");

    const std::size_t stride = pool.patch_size() * pool.patch_size() * pool.bands();
    PatchBatch<T> out;
    out.domain = pool.domain;
    out.patches.resize({by_class.size() * cfg.augmented_per_class, pool.patch_size(),
                        pool.patch_size(), pool.bands()});
    std::size_t row = 0;
    for (const auto& [lab, idx] : by_class) {
        for (std::size_t j = 0; j < cfg.augmented_per_class; ++j, ++row) {
            const std::size_t base = idx[j % idx.size()];
            const T* src = pool.patch(base);
            T* dst = out.patches.data() + row * stride;
            std::copy(src, src + stride, dst);
            if (j >= idx.size() && cfg.noise_sigma > 0) {
                for (std::size_t k = 0; k < stride; ++k)
                    dst[k] += static_cast<T>(rng.next_normal(0.0, cfg.noise_sigma));
            }
            out.labels.push_back(lab);
            out.coords.push_back(pool.coords[base]);
        }
    }
    return out;
}

/// Samples a C-way K-shot episode from a scene's labeled pixel index.
/// Classes with fewer than shots + queries_per_class pixels are excluded.
template <typename T = float>
Episode<T> sample_episode(const std::map<int, std::vector<PixelCoord>>& index_by_class,
                          const HsiScene& scene, DomainRole role, std::size_t ways,
                          const SamplerConfig& cfg, Rng& rng) {
    const std::size_t need = cfg.train_shots + cfg.train_queries_per_class;
    std::vector<int> eligible;
    for (const auto& [class_id, pixels] : index_by_class)
        if (pixels.size() >= need) eligible.push_back(class_id);
    if (eligible.size() < ways)
        throw std::runtime_error("episode: only " + std::to_string(eligible.size()) +
                                 " classes have >= " + std::to_string(need) +
                                 " labeled pixels, need " + std::to_string(ways));

    rng.shuffle(eligible.begin(), eligible.end());
    std::vector<int> chosen(eligible.begin(), eligible.begin() + ways);
    std::sort(chosen.begin(), chosen.end());

    Episode<T> ep;
    ep.ways = ways;
    ep.shots = cfg.train_shots;
    ep.queries_per_class = cfg.train_queries_per_class;
    ep.class_id_map = chosen;

    std::vector<PixelCoord> support_coords, query_coords;
    std::vector<int> support_labels, query_labels;
    for (std::size_t local = 0; local < chosen.size(); ++local) {
        std::vector<PixelCoord> pixels = index_by_class.at(chosen[local]);
        rng.shuffle(pixels.begin(), pixels.end());
        for (std::size_t i = 0; i < cfg.train_shots; ++i) {
            support_coords.push_back(pixels[i]);
            support_labels.push_back(static_cast<int>(local));
        }
        for (std::size_t i = 0; i < cfg.train_queries_per_class; ++i) {
            query_coords.push_back(pixels[cfg.train_shots + i]);
            query_labels.push_back(static_cast<int>(local));
        }
    }

    ep.support = extract_patch_batch<T>(scene, support_coords, cfg.patch_size, role);
    ep.support.labels = std::move(support_labels);
    ep.query = extract_patch_batch<T>(scene, query_coords, cfg.patch_size, role);
    ep.query.labels = std::move(query_labels);
    return ep;
}

/// Samples a C-way K-shot episode from a pre-cut (augmented) pool. Sample
/// identity, not pixel coordinates, defines disjointness here: augmented
/// copies of one pixel count as distinct samples.
template <typename T>
Episode<T> sample_episode_from_pool(const PatchBatch<T>& pool,
                                    const std::vector<int>& pool_class_ids,
                                    std::size_t ways, const SamplerConfig& cfg,
                                    Rng& rng) {
    const std::size_t need = cfg.train_shots + cfg.train_queries_per_class;
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.count(); ++i) by_class[pool.labels[i]].push_back(i);

    std::vector<int> eligible;
    for (const auto& [lab, idx] : by_class)
        if (idx.size() >= need) eligible.push_back(lab);
    if (eligible.size() < ways)
        throw std::runtime_error("episode: pool has too few eligible classes");

    rng.shuffle(eligible.begin(), eligible.end());
    std::vector<int> chosen(eligible.begin(), eligible.begin() + ways);
    std::sort(chosen.begin(), chosen.end());

    Episode<T> ep;
    ep.ways = ways;
    ep.shots = cfg.train_shots;
    ep.queries_per_class = cfg.train_queries_per_class;
    for (int local_lab : chosen) ep.class_id_map.push_back(pool_class_ids[local_lab]);

    const std::size_t stride = pool.patch_size() * pool.patch_size() * pool.bands();
    auto cut = [&](const std::vector<std::size_t>& rows, PatchBatch<T>& dst) {
        dst.domain = pool.domain;
        dst.patches.resize({rows.size(), pool.patch_size(), pool.patch_size(),
                            pool.bands()});
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::copy(pool.patch(rows[i]), pool.patch(rows[i]) + stride, dst.patch(i));
            dst.coords.push_back(pool.coords[rows[i]]);
        }
    };

    std::vector<std::size_t> support_rows, query_rows;
    for (std::size_t local = 0; local < chosen.size(); ++local) {
        std::vector<std::size_t> idx = by_class.at(chosen[local]);
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t i = 0; i < cfg.train_shots; ++i) {
            support_rows.push_back(idx[i]);
            ep.support.labels.push_back(static_cast<int>(local));
        }
        for (std::size_t i = 0; i < cfg.train_queries_per_class; ++i) {
            query_rows.push_back(idx[cfg.train_shots + i]);
            ep.query.labels.push_back(static_cast<int>(local));
        }
    }
    cut(support_rows, ep.support);
    cut(query_rows, ep.query);
    return ep;
}

/// `size` patches at uniformly random pixel positions (labels filled with the
/// 0-based class when the pixel is labeled, -1 otherwise).
template <typename T = float>
PatchBatch<T> sample_domain_batch(const HsiScene& scene, DomainRole role,
                                  std::size_t size, std::size_t patch_size, Rng& rng) {
    if (size == 0) throw std::invalid_argument("domain batch: size must be positive");
    if (scene.height * scene.width == 0)
        throw std::runtime_error("domain batch: empty scene");
    std::vector<PixelCoord> coords;
    coords.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t r = rng.next_below(scene.height);
        const std::size_t c = rng.next_below(scene.width);
        coords.emplace_back(r, c);
    }
    PatchBatch<T> batch = extract_patch_batch<T>(scene, coords, patch_size, role);
    for (std::size_t i = 0; i < size; ++i) {
        const int lab = scene.label_at(coords[i].first, coords[i].second);
        batch.labels[i] = lab > 0 ? lab - 1 : -1;
    }
    return batch;
}

/// `size` patches at uniformly random *labeled* pixel positions.
template <typename T = float>
PatchBatch<T> sample_labeled_domain_batch(
    const HsiScene& scene, DomainRole role,
    const std::map<int, std::vector<PixelCoord>>& index_by_class, std::size_t size,
    std::size_t patch_size, Rng& rng) {
    if (size == 0) throw std::invalid_argument("domain batch: size must be positive");
    std::vector<std::pair<PixelCoord, int>> labeled;
    for (const auto& [class_id, pixels] : index_by_class)
        for (const auto& px : pixels) labeled.emplace_back(px, class_id);
    if (labeled.empty()) throw std::runtime_error("domain batch: no labeled pixels");

    std::vector<PixelCoord> coords;
    std::vector<int> labels;
    for (std::size_t i = 0; i < size; ++i) {
        const auto& [px, class_id] = labeled[rng.next_below(labeled.size())];
        coords.push_back(px);
        labels.push_back(class_id - 1);
    }
    PatchBatch<T> batch = extract_patch_batch<T>(scene, coords, patch_size, role);
    batch.labels = std::move(labels);
    return batch;
}

}  // namespace hsifsl
