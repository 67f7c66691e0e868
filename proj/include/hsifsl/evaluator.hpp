#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsifsl/metrics.hpp"
#include "hsifsl/nn/network.hpp"
#include "hsifsl/objectives.hpp"
#include "hsifsl/sampling.hpp"
#include "hsifsl/scene.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl {

struct EvalOptions {
    std::size_t query_batch_size = 256;
    std::size_t patch_size = 9;
    bool nearest_support = false;  // nearest single support instead of prototype
};

template <typename T>
struct SceneClassification {
    Tensor<std::uint16_t> predictions;  // H x W scene class ids; 0 = unlabeled
    ConfusionMatrix confusion;          // local class order of the support pool
    std::vector<int> class_ids;         // local class index -> scene class id
    std::size_t support_pixels = 0;     // excluded from the confusion matrix
    std::size_t query_pixels = 0;
};

namespace detail {

/// Nearest prototype under squared Euclidean distance; ties resolve to the
/// lower class index.
template <typename T>
std::size_t nearest_prototype(const T* q, const Tensor<T>& protos) {
    const std::size_t c = protos.dim(0), f = protos.dim(1);
    std::size_t best = 0;
    T best_d2 = std::numeric_limits<T>::infinity();
    for (std::size_t h = 0; h < c; ++h) {
        const T* p = protos.data() + h * f;
        T d2 = T(0);
        for (std::size_t k = 0; k < f; ++k) {
            const T d = q[k] - p[k];
            d2 += d * d;
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = h;
        }
    }
    return best;
}

}  // namespace detail

/// Classifies every labeled pixel of a (normalized) scene. The support pool's
/// patches define the prototypes; queries are all labeled pixels that are not
/// support pixels, processed through the target mapper, the extractor in
/// evaluation mode, and cross-attention against the support features. Support
/// pixels keep their true label in the map and are excluded from the
/// confusion matrix. Unlabeled pixels map to class 0.
template <typename T>
SceneClassification<T> classify_scene(nn::ModelState<T>& model, const HsiScene& scene,
                                      const LabeledPool<T>& support,
                                      const EvalOptions& opts = {}) {
    if (support.batch.count() == 0)
        throw std::invalid_argument("classify_scene: empty support pool");
    const std::size_t ways = support.class_ids.size();

    nn::FeatureBatch<T> support_feats = nn::extract_features(model, support.batch, false);
    Prototypes<T> protos =
        compute_prototypes(support_feats.features, support.batch.labels, ways);

    SceneClassification<T> out;
    out.class_ids = support.class_ids;
    out.confusion = ConfusionMatrix(ways);
    out.predictions.resize({scene.height, scene.width});

    std::set<PixelCoord> support_set(support.batch.coords.begin(),
                                     support.batch.coords.end());
    std::vector<int> local_of_class;  // scene class id -> local index or -1
    for (std::size_t i = 0; i < ways; ++i) {
        const int id = support.class_ids[i];
        if (id <= 0) throw std::invalid_argument("classify_scene: bad class id");
        if (local_of_class.size() <= static_cast<std::size_t>(id))
            local_of_class.resize(id + 1, -1);
        local_of_class[id] = static_cast<int>(i);
    }

    std::vector<PixelCoord> queries;
    std::vector<int> truths;  // scene class ids
    for (std::size_t r = 0; r < scene.height; ++r)
        for (std::size_t c = 0; c < scene.width; ++c) {
            const int lab = scene.label_at(r, c);
            if (lab == 0) continue;
            if (support_set.count({r, c})) {
                out.predictions.at(r, c) = static_cast<std::uint16_t>(lab);
                ++out.support_pixels;
                continue;
            }
            queries.emplace_back(r, c);
            truths.push_back(lab);
        }
    out.query_pixels = queries.size();

    const std::size_t bs = std::max<std::size_t>(opts.query_batch_size, 1);
    for (std::size_t start = 0; start < queries.size(); start += bs) {
        const std::size_t end = std::min(queries.size(), start + bs);
        const std::vector<PixelCoord> chunk(queries.begin() + start,
                                            queries.begin() + end);
        PatchBatch<T> batch =
            extract_patch_batch<T>(scene, chunk, opts.patch_size, DomainRole::target);
        nn::FeatureBatch<T> feats = nn::extract_features(model, batch, false);
        nn::FeatureBatch<T> attended = nn::cross_attend(model, feats, support_feats);

        const std::size_t f = attended.width();
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const T* q = attended.features.data() + i * f;
            const std::size_t local =
                opts.nearest_support
                    ? static_cast<std::size_t>(
                          support.batch.labels[detail::nearest_prototype(
                              q, support_feats.features)])
                    : detail::nearest_prototype(q, protos.vectors);
            const int pred_id = support.class_ids[local];
            out.predictions.at(chunk[i].first, chunk[i].second) =
                static_cast<std::uint16_t>(pred_id);
            const int truth = truths[start + i];
            const int truth_local =
                static_cast<std::size_t>(truth) < local_of_class.size()
                    ? local_of_class[truth]
                    : -1;
            if (truth_local >= 0)
                ++out.confusion.at(static_cast<std::size_t>(truth_local), local);
        }
    }
    return out;
}

/// CSV export: one row per sample, columns f0..f{F-1}, label, domain.
template <typename T>
void export_embeddings(const std::filesystem::path& path,
                       const nn::FeatureBatch<T>& feats) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("embeddings: cannot write " + path.string());
    const std::size_t n = feats.count(), f = feats.width();
    for (std::size_t k = 0; k < f; ++k) out << "f" << k << ",";
    out << "label,domain\n";
    out.precision(9);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = feats.features.data() + i * f;
        for (std::size_t k = 0; k < f; ++k) out << row[k] << ",";
        out << feats.labels[i] << "," << domain_name(feats.domain) << "\n";
    }
    if (!out) throw std::runtime_error("embeddings: write failed");
}

}  // namespace hsifsl
