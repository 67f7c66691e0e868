#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsifsl/nn/layers.hpp"
#include "hsifsl/nn/param.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl::nn {

/// softmax(q . k_j / sqrt(d_k)) over the rows of `keys`.
template <typename T>
std::vector<T> attention_weights(const T* q_row, const Tensor<T>& keys,
                                 std::size_t d_k) {
    const std::size_t n = keys.dim(0), f = keys.dim(1);
    const T scale = T(1) / std::sqrt(static_cast<T>(d_k));
    std::vector<T> scores(n);
    T max_s = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        T s = T(0);
        for (std::size_t k = 0; k < f; ++k) s += q_row[k] * keys.at(j, k);
        scores[j] = s * scale;
        max_s = std::max(max_s, scores[j]);
    }
    T z = T(0);
    for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::exp(scores[j] - max_s);
        z += scores[j];
    }
    for (std::size_t j = 0; j < n; ++j) scores[j] /= z;
    return scores;
}

namespace detail {

// y = x . w, x: [n x k], w: [k x m]
template <typename T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w) {
    const std::size_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
    Tensor<T> y({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        const T* xi = x.data() + i * k;
        T* yi = y.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T xv = xi[kk];
            if (xv == T(0)) continue;
            const T* wr = w.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) yi[j] += xv * wr[j];
        }
    }
    return y;
}

// dx = dy . w^T
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& dy, const Tensor<T>& w) {
    const std::size_t n = dy.dim(0), m = dy.dim(1), k = w.dim(0);
    Tensor<T> dx({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        const T* gi = dy.data() + i * m;
        T* di = dx.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T* wr = w.data() + kk * m;
            T acc = T(0);
            for (std::size_t j = 0; j < m; ++j) acc += gi[j] * wr[j];
            di[kk] = acc;
        }
    }
    return dx;
}

// dw += x^T . dy
template <typename T>
void matmul_tn_acc(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dw) {
    const std::size_t n = x.dim(0), k = x.dim(1), m = dy.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        const T* xi = x.data() + i * k;
        const T* gi = dy.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T xv = xi[kk];
            if (xv == T(0)) continue;
            T* dwr = dw.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) dwr[j] += xv * gi[j];
        }
    }
}

}  // namespace detail

/// One transformer layer attending a query set to a support set:
/// residual multi-head attention with keys = values = support, then a
/// residual position-wise feed-forward, layer norm after each sub-layer.
template <typename T>
class CrossAttentionLayer {
public:
    CrossAttentionLayer() = default;
    CrossAttentionLayer(std::size_t d_model, std::size_t heads,
                        std::size_t ff_hidden) {
        configure(d_model, heads, ff_hidden);
    }

    void configure(std::size_t d_model, std::size_t heads, std::size_t ff_hidden) {
        if (heads == 0 || d_model % heads != 0)
            throw std::invalid_argument("attention: d_model must be divisible by heads");
        f_ = d_model;
        heads_ = heads;
        dk_ = d_model / heads;
        wq_.resize({d_model, d_model});
        wk_.resize({d_model, d_model});
        wv_.resize({d_model, d_model});
        wo_.resize({d_model, d_model});
        norm1_.configure(d_model);
        norm2_.configure(d_model);
        ff1_.configure(d_model, ff_hidden);
        ff2_.configure(ff_hidden, d_model);
    }

    void init(Rng& rng) {
        xavier_init(wq_, f_, f_, rng);
        xavier_init(wk_, f_, f_, rng);
        xavier_init(wv_, f_, f_, rng);
        xavier_init(wo_, f_, f_, rng);
        ff1_.init(rng);
        ff2_.init(rng);
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        reg.add(prefix + ".head_proj.query", wq_);
        reg.add(prefix + ".head_proj.key", wk_);
        reg.add(prefix + ".head_proj.value", wv_);
        reg.add(prefix + ".head_proj.out", wo_);
        norm1_.register_params(prefix + ".norm1", reg);
        norm2_.register_params(prefix + ".norm2", reg);
        ff1_.register_params(prefix + ".ffn.linear1", reg);
        ff2_.register_params(prefix + ".ffn.linear2", reg);
    }

    std::size_t d_model() const { return f_; }
    std::size_t heads() const { return heads_; }

    Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& support) {
        if (support.dim(0) == 0)
            throw std::runtime_error("attention: empty support set");
        q_in_ = query;
        s_in_ = support;
        const std::size_t nq = query.dim(0), ns = support.dim(0);

        qp_ = detail::matmul(query, wq_.value);
        kp_ = detail::matmul(support, wk_.value);
        vp_ = detail::matmul(support, wv_.value);

        attn_.resize({heads_, nq, ns});
        concat_.resize({nq, f_});
        concat_.zero();
        const T scale = T(1) / std::sqrt(static_cast<T>(dk_));
        for (std::size_t h = 0; h < heads_; ++h) {
            const std::size_t off = h * dk_;
            for (std::size_t q = 0; q < nq; ++q) {
                T* arow = attn_.data() + (h * nq + q) * ns;
                const T* qrow = qp_.data() + q * f_ + off;
                T max_s = -std::numeric_limits<T>::infinity();
                for (std::size_t s = 0; s < ns; ++s) {
                    const T* krow = kp_.data() + s * f_ + off;
                    T e = T(0);
                    for (std::size_t d = 0; d < dk_; ++d) e += qrow[d] * krow[d];
                    arow[s] = e * scale;
                    max_s = std::max(max_s, arow[s]);
                }
                T z = T(0);
                for (std::size_t s = 0; s < ns; ++s) {
                    arow[s] = std::exp(arow[s] - max_s);
                    z += arow[s];
                }
                T* orow = concat_.data() + q * f_ + off;
                for (std::size_t s = 0; s < ns; ++s) {
                    arow[s] /= z;
                    const T* vrow = vp_.data() + s * f_ + off;
                    for (std::size_t d = 0; d < dk_; ++d) orow[d] += arow[s] * vrow[d];
                }
            }
        }

        Tensor<T> mha = detail::matmul(concat_, wo_.value);
        Tensor<T> sum1 = mha;
        for (std::size_t i = 0; i < sum1.size(); ++i) sum1[i] += query[i];
        r1_ = norm1_.forward(sum1);

        Tensor<T> ff = ff2_.forward(relu_.forward(ff1_.forward(r1_)));
        Tensor<T> sum2 = ff;
        for (std::size_t i = 0; i < sum2.size(); ++i) sum2[i] += r1_[i];
        return norm2_.forward(sum2);
    }

    /// Returns dL/dquery; adds dL/dsupport into d_support.
    Tensor<T> backward(const Tensor<T>& d_out, Tensor<T>& d_support) {
        const std::size_t nq = q_in_.dim(0), ns = s_in_.dim(0);

        Tensor<T> dsum2 = norm2_.backward(d_out);
        Tensor<T> dr1 = dsum2;  // residual branch
        {
            Tensor<T> dff = ff2_.backward(dsum2);
            dff = relu_.backward(dff);
            Tensor<T> d = ff1_.backward(dff);
            for (std::size_t i = 0; i < dr1.size(); ++i) dr1[i] += d[i];
        }

        Tensor<T> dsum1 = norm1_.backward(dr1);
        Tensor<T> dq = dsum1;  // residual branch
        // multi-head attention branch
        Tensor<T> dconcat = detail::matmul_nt(dsum1, wo_.value);
        detail::matmul_tn_acc(concat_, dsum1, wo_.grad);

        Tensor<T> dqp({nq, f_}), dkp({ns, f_}), dvp({ns, f_});
        const T scale = T(1) / std::sqrt(static_cast<T>(dk_));
        std::vector<T> da(ns);
        for (std::size_t h = 0; h < heads_; ++h) {
            const std::size_t off = h * dk_;
            for (std::size_t q = 0; q < nq; ++q) {
                const T* arow = attn_.data() + (h * nq + q) * ns;
                const T* dorow = dconcat.data() + q * f_ + off;
                T dot = T(0);
                for (std::size_t s = 0; s < ns; ++s) {
                    const T* vrow = vp_.data() + s * f_ + off;
                    T acc = T(0);
                    for (std::size_t d = 0; d < dk_; ++d) acc += dorow[d] * vrow[d];
                    da[s] = acc;
                    dot += arow[s] * acc;
                    T* dvrow = dvp.data() + s * f_ + off;
                    for (std::size_t d = 0; d < dk_; ++d)
                        dvrow[d] += arow[s] * dorow[d];
                }
                T* dqrow = dqp.data() + q * f_ + off;
                const T* qrow = qp_.data() + q * f_ + off;
                for (std::size_t s = 0; s < ns; ++s) {
                    const T de = arow[s] * (da[s] - dot) * scale;
                    if (de == T(0)) continue;
                    const T* krow = kp_.data() + s * f_ + off;
                    T* dkrow = dkp.data() + s * f_ + off;
                    for (std::size_t d = 0; d < dk_; ++d) {
                        dqrow[d] += de * krow[d];
                        dkrow[d] += de * qrow[d];
                    }
                }
            }
        }

        {
            Tensor<T> d = detail::matmul_nt(dqp, wq_.value);
            for (std::size_t i = 0; i < dq.size(); ++i) dq[i] += d[i];
            detail::matmul_tn_acc(q_in_, dqp, wq_.grad);
        }
        {
            Tensor<T> dk = detail::matmul_nt(dkp, wk_.value);
            Tensor<T> dv = detail::matmul_nt(dvp, wv_.value);
            for (std::size_t i = 0; i < d_support.size(); ++i)
                d_support[i] += dk[i] + dv[i];
            detail::matmul_tn_acc(s_in_, dkp, wk_.grad);
            detail::matmul_tn_acc(s_in_, dvp, wv_.grad);
        }
        return dq;
    }

private:
    std::size_t f_ = 0, heads_ = 0, dk_ = 0;
    Param<T> wq_, wk_, wv_, wo_;
    LayerNorm<T> norm1_, norm2_;
    Linear<T> ff1_, ff2_;
    ReLU<T> relu_;

    // forward cache
    Tensor<T> q_in_, s_in_, qp_, kp_, vp_, attn_, concat_, r1_;
};

/// L identical cross-attention layers. Every layer attends to the original
/// support features; only the query representation is updated.
template <typename T>
class CrossAttentionStack {
public:
    CrossAttentionStack() = default;
    CrossAttentionStack(std::size_t d_model, std::size_t heads, std::size_t layers) {
        configure(d_model, heads, layers);
    }

    void configure(std::size_t d_model, std::size_t heads, std::size_t layers) {
        layers_.clear();
        layers_.resize(layers);
        for (auto& l : layers_) l.configure(d_model, heads, 4 * d_model);
    }

    void init(Rng& rng) {
        for (auto& l : layers_) l.init(rng);
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i].register_params(prefix + ".layer" + std::to_string(i), reg);
    }

    std::size_t layer_count() const { return layers_.size(); }
    std::size_t d_model() const { return layers_.empty() ? 0 : layers_[0].d_model(); }

    Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& support) {
        Tensor<T> q = query;
        for (auto& l : layers_) q = l.forward(q, support);
        return q;
    }

    /// Returns dL/dquery; adds dL/dsupport into d_support.
    Tensor<T> backward(const Tensor<T>& d_out, Tensor<T>& d_support) {
        Tensor<T> dq = d_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            dq = it->backward(dq, d_support);
        return dq;
    }

private:
    std::vector<CrossAttentionLayer<T>> layers_;
};

}  // namespace hsifsl::nn
