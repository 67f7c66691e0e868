#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsifsl/tensor.hpp"

namespace hsifsl {

struct ObjectiveConfig {
    double tau = 0.5;      // contrastive temperature
    double lambda1 = 10.0;  // weight of the contrastive loss
    double lambda2 = 1.0;   // weight of the few-shot loss
    double lambda3 = 1.0;   // weight of the domain loss

    void validate() const {
        if (tau <= 0) throw std::invalid_argument("objective: tau must be positive");
        if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
            throw std::invalid_argument("objective: loss weights must be non-negative");
    }
};

template <typename T>
struct Prototypes {
    Tensor<T> vectors;  // C x F
    std::vector<int> class_ids;
};

struct LossReport {
    double l_con = 0, l_fsl = 0, l_d = 0, total = 0;
    double query_accuracy = 0;
};

// ---------------------------------------------------------------------------
// Supervised contrastive loss
// ---------------------------------------------------------------------------

/// Sum over anchors i with a non-empty positive set P(i) of
///   (1/|P(i)|) * sum_{p in P(i)} -log( exp(z_i.z_p/tau) /
///                                      sum_{a != i} exp(z_i.z_a/tau) )
/// where z are the L2-normalized rows of `features`. Anchors whose class has
/// no other member contribute nothing. If d_features is non-null, the
/// gradient with respect to the raw (unnormalized) features is added to it.
template <typename T>
T contrastive_loss(const Tensor<T>& features, const std::vector<int>& labels, T tau,
                   Tensor<T>* d_features = nullptr) {
    const std::size_t n = features.dim(0), f = features.dim(1);
    if (n < 2) throw std::invalid_argument("contrastive_loss: need at least 2 samples");
    if (labels.size() != n)
        throw std::invalid_argument("contrastive_loss: labels missing");

    // normalized copies
    Tensor<T> z({n, f});
    std::vector<T> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T* x = features.data() + i * f;
        T nrm = T(0);
        for (std::size_t k = 0; k < f; ++k) nrm += x[k] * x[k];
        nrm = std::sqrt(nrm);
        norms[i] = std::max(nrm, static_cast<T>(1e-12));
        T* zi = z.data() + i * f;
        for (std::size_t k = 0; k < f; ++k) zi[k] = x[k] / norms[i];
    }

    Tensor<T> dz;
    if (d_features) dz.resize({n, f});

    T loss = T(0);
    std::vector<T> s(n), soft(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t positives = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) ++positives;
        if (positives == 0) continue;

        const T* zi = z.data() + i * f;
        T max_s = -std::numeric_limits<T>::infinity();
        for (std::size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            const T* za = z.data() + a * f;
            T dot = T(0);
            for (std::size_t k = 0; k < f; ++k) dot += zi[k] * za[k];
            s[a] = dot / tau;
            max_s = std::max(max_s, s[a]);
        }
        T zsum = T(0);
        for (std::size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            soft[a] = std::exp(s[a] - max_s);
            zsum += soft[a];
        }
        const T lse = max_s + std::log(zsum);
        const T inv_p = T(1) / static_cast<T>(positives);
        for (std::size_t p = 0; p < n; ++p)
            if (p != i && labels[p] == labels[i]) loss += inv_p * (lse - s[p]);

        if (d_features) {
            // dL/ds_ia = softmax_a - 1[a positive]/|P|
            for (std::size_t a = 0; a < n; ++a) {
                if (a == i) continue;
                T g = soft[a] / zsum;
                if (labels[a] == labels[i]) g -= inv_p;
                if (g == T(0)) continue;
                const T gt = g / tau;
                T* dzi = dz.data() + i * f;
                T* dza = dz.data() + a * f;
                const T* za = z.data() + a * f;
                for (std::size_t k = 0; k < f; ++k) {
                    dzi[k] += gt * za[k];
                    dza[k] += gt * zi[k];
                }
            }
        }
    }

    if (d_features) {
        // through the normalization: dx = (g - (g.z) z) / ||x||
        for (std::size_t i = 0; i < n; ++i) {
            const T* zi = z.data() + i * f;
            const T* gi = dz.data() + i * f;
            T dot = T(0);
            for (std::size_t k = 0; k < f; ++k) dot += gi[k] * zi[k];
            T* out = d_features->data() + i * f;
            for (std::size_t k = 0; k < f; ++k)
                out[k] += (gi[k] - dot * zi[k]) / norms[i];
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Prototypes and few-shot loss
// ---------------------------------------------------------------------------

/// Per-class arithmetic mean of raw support features. Labels must cover
/// 0..ways-1.
template <typename T>
Prototypes<T> compute_prototypes(const Tensor<T>& support_features,
                                 const std::vector<int>& labels, std::size_t ways) {
    const std::size_t n = support_features.dim(0), f = support_features.dim(1);
    Prototypes<T> protos;
    protos.vectors.resize({ways, f});
    std::vector<std::size_t> counts(ways, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = labels[i];
        if (c < 0 || static_cast<std::size_t>(c) >= ways)
            throw std::invalid_argument("prototypes: label out of range");
        ++counts[c];
        const T* x = support_features.data() + i * f;
        T* p = protos.vectors.data() + static_cast<std::size_t>(c) * f;
        for (std::size_t k = 0; k < f; ++k) p[k] += x[k];
    }
    for (std::size_t c = 0; c < ways; ++c) {
        if (counts[c] == 0)
            throw std::runtime_error("prototypes: class " + std::to_string(c) +
                                     " has no support feature");
        T* p = protos.vectors.data() + c * f;
        for (std::size_t k = 0; k < f; ++k) p[k] /= static_cast<T>(counts[c]);
        protos.class_ids.push_back(static_cast<int>(c));
    }
    return protos;
}

/// Distributes a prototype gradient back to the support features (mean rule).
template <typename T>
void prototypes_backward(const Tensor<T>& d_protos, const std::vector<int>& labels,
                         Tensor<T>& d_support) {
    const std::size_t n = d_support.dim(0), f = d_support.dim(1);
    const std::size_t ways = d_protos.dim(0);
    std::vector<std::size_t> counts(ways, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[labels[i]];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = static_cast<std::size_t>(labels[i]);
        const T* dp = d_protos.data() + c * f;
        T* ds = d_support.data() + i * f;
        for (std::size_t k = 0; k < f; ++k) ds[k] += dp[k] / static_cast<T>(counts[c]);
    }
}

template <typename T>
struct FslResult {
    T loss = T(0);
    Tensor<T> class_probs;  // N x C
    double accuracy = 0;    // argmax == label
};

/// Prototype classification loss: class probabilities are the softmax over
/// classes of the negated squared Euclidean distance to each prototype;
/// loss is the mean negative log-likelihood over queries.
template <typename T>
FslResult<T> fsl_loss(const Tensor<T>& query_features, const std::vector<int>& labels,
                      const Prototypes<T>& protos, Tensor<T>* d_query = nullptr,
                      Tensor<T>* d_protos = nullptr) {
    const std::size_t n = query_features.dim(0), f = query_features.dim(1);
    const std::size_t c = protos.vectors.dim(0);
    if (c < 2) throw std::invalid_argument("fsl_loss: need at least 2 classes");
    if (labels.size() != n) throw std::invalid_argument("fsl_loss: labels missing");

    FslResult<T> res;
    res.class_probs.resize({n, c});
    Tensor<T> dlogits;
    if (d_query || d_protos) dlogits.resize({n, c});

    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T* q = query_features.data() + i * f;
        T* probs = res.class_probs.data() + i * c;
        T max_l = -std::numeric_limits<T>::infinity();
        for (std::size_t h = 0; h < c; ++h) {
            const T* p = protos.vectors.data() + h * f;
            T d2 = T(0);
            for (std::size_t k = 0; k < f; ++k) {
                const T d = q[k] - p[k];
                d2 += d * d;
            }
            probs[h] = -d2;
            max_l = std::max(max_l, probs[h]);
        }
        T z = T(0);
        for (std::size_t h = 0; h < c; ++h) {
            probs[h] = std::exp(probs[h] - max_l);
            z += probs[h];
        }
        std::size_t best = 0;
        for (std::size_t h = 0; h < c; ++h) {
            probs[h] /= z;
            if (probs[h] > probs[best]) best = h;
        }
        const std::size_t y = static_cast<std::size_t>(labels[i]);
        if (best == y) ++correct;
        res.loss -= std::log(std::max(probs[y], static_cast<T>(1e-30)));
        if (d_query || d_protos) {
            T* dl = dlogits.data() + i * c;
            for (std::size_t h = 0; h < c; ++h)
                dl[h] = (probs[h] - (h == y ? T(1) : T(0))) / static_cast<T>(n);
        }
    }
    res.loss /= static_cast<T>(n);
    res.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    if (d_query || d_protos) {
        // logits = -d^2, so dd2 = -dlogits; d(d^2)/dq = 2(q-p), d/dp = -2(q-p)
        for (std::size_t i = 0; i < n; ++i) {
            const T* q = query_features.data() + i * f;
            const T* dl = dlogits.data() + i * c;
            for (std::size_t h = 0; h < c; ++h) {
                const T g = -dl[h];
                if (g == T(0)) continue;
                const T* p = protos.vectors.data() + h * f;
                for (std::size_t k = 0; k < f; ++k) {
                    const T diff = T(2) * (q[k] - p[k]);
                    if (d_query) (*d_query)[i * f + k] += g * diff;
                    if (d_protos) (*d_protos)[h * f + k] -= g * diff;
                }
            }
        }
    }
    return res;
}

/// Softmax over classes of the negated squared distance to each prototype,
/// with no gradient tracking (used to condition the domain discriminator).
template <typename T>
Tensor<T> prototype_probs(const Tensor<T>& features, const Prototypes<T>& protos) {
    const std::size_t n = features.dim(0), f = features.dim(1);
    const std::size_t c = protos.vectors.dim(0);
    Tensor<T> probs({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const T* q = features.data() + i * f;
        T* row = probs.data() + i * c;
        T max_l = -std::numeric_limits<T>::infinity();
        for (std::size_t h = 0; h < c; ++h) {
            const T* p = protos.vectors.data() + h * f;
            T d2 = T(0);
            for (std::size_t k = 0; k < f; ++k) {
                const T d = q[k] - p[k];
                d2 += d * d;
            }
            row[h] = -d2;
            max_l = std::max(max_l, row[h]);
        }
        T z = T(0);
        for (std::size_t h = 0; h < c; ++h) {
            row[h] = std::exp(row[h] - max_l);
            z += row[h];
        }
        for (std::size_t h = 0; h < c; ++h) row[h] /= z;
    }
    return probs;
}

// ---------------------------------------------------------------------------
// Domain loss
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy of domain logits (source = 0, target = 1).
template <typename T>
T domain_loss(const Tensor<T>& logits, const std::vector<int>& domain_labels,
              Tensor<T>* d_logits = nullptr) {
    const std::size_t n = logits.size();
    if (domain_labels.size() != n)
        throw std::invalid_argument("domain_loss: label count mismatch");
    T loss = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T x = logits[i];
        const T y = static_cast<T>(domain_labels[i]);
        // stable: max(x,0) - x*y + log(1 + exp(-|x|))
        loss += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
        if (d_logits) {
            const T sig = T(1) / (T(1) + std::exp(-x));
            (*d_logits)[i] += (sig - y) / static_cast<T>(n);
        }
    }
    return loss / static_cast<T>(n);
}

// ---------------------------------------------------------------------------
// Total
// ---------------------------------------------------------------------------

template <typename T>
T total_loss(T l_con, T l_fsl, T l_d, const ObjectiveConfig& cfg) {
    const T total = static_cast<T>(cfg.lambda1) * l_con +
                    static_cast<T>(cfg.lambda2) * l_fsl +
                    static_cast<T>(cfg.lambda3) * l_d;
    if (!std::isfinite(static_cast<double>(total)))
        throw std::runtime_error("total_loss: non-finite component");
    return total;
}

}  // namespace hsifsl
