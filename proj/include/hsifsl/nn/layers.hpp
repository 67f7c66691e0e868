#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsifsl/nn/param.hpp"
#include "hsifsl/rng.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl::nn {

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// y = x W^T + b over rows. Also used as a 1x1 convolution by flattening the
/// spatial positions into rows.
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, bool bias = true) { configure(in, out, bias); }

    void configure(std::size_t in, std::size_t out, bool bias = true) {
        in_ = in;
        out_ = out;
        has_bias_ = bias;
        weight_.resize({out, in});
        if (bias) bias_.resize({out});
    }

    void init(Rng& rng) {
        xavier_init(weight_, in_, out_, rng);
        if (has_bias_) bias_.value.zero();
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        reg.add(prefix + ".weight", weight_);
        if (has_bias_) reg.add(prefix + ".bias", bias_);
    }

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& x) {
        const std::size_t n = x.size() / in_;
        x_ = x;
        Tensor<T> y({n, out_});
        for (std::size_t i = 0; i < n; ++i) {
            const T* xi = x.data() + i * in_;
            T* yi = y.data() + i * out_;
            for (std::size_t o = 0; o < out_; ++o) {
                const T* w = weight_.value.data() + o * in_;
                T acc = has_bias_ ? bias_.value[o] : T(0);
                for (std::size_t k = 0; k < in_; ++k) acc += w[k] * xi[k];
                yi[o] = acc;
            }
        }
        return y;
    }

    /// Accumulates parameter gradients; returns dL/dx.
    Tensor<T> backward(const Tensor<T>& dy) {
        const std::size_t n = dy.size() / out_;
        Tensor<T> dx({n, in_});
        dx.zero();
        for (std::size_t i = 0; i < n; ++i) {
            const T* gi = dy.data() + i * out_;
            const T* xi = x_.data() + i * in_;
            T* dxi = dx.data() + i * in_;
            for (std::size_t o = 0; o < out_; ++o) {
                const T g = gi[o];
                if (g == T(0)) continue;
                const T* w = weight_.value.data() + o * in_;
                T* dw = weight_.grad.data() + o * in_;
                for (std::size_t k = 0; k < in_; ++k) {
                    dw[k] += g * xi[k];
                    dxi[k] += g * w[k];
                }
                if (has_bias_) bias_.grad[o] += g;
            }
        }
        return dx;
    }

private:
    std::size_t in_ = 0, out_ = 0;
    bool has_bias_ = true;
    Param<T> weight_, bias_;
    Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        mask_.assign(x.size(), false);
        Tensor<T> y = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i] > T(0)) {
                mask_[i] = true;
            } else {
                y[i] = T(0);
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!mask_[i]) dx[i] = T(0);
        return dx;
    }

private:
    std::vector<bool> mask_;
};

// ---------------------------------------------------------------------------
// Dropout (inverted scaling)
// ---------------------------------------------------------------------------

template <typename T>
class Dropout {
public:
    explicit Dropout(double rate = 0.5) : rate_(rate) {}

    Tensor<T> forward(const Tensor<T>& x, bool training, Rng& rng) {
        if (!training || rate_ <= 0.0) {
            scale_.assign(x.size(), T(1));
            return x;
        }
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
        scale_.assign(x.size(), T(0));
        Tensor<T> y = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (rng.next_uniform() >= rate_) {
                scale_[i] = keep_scale;
                y[i] *= keep_scale;
            } else {
                y[i] = T(0);
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= scale_[i];
        return dx;
    }

private:
    double rate_;
    std::vector<T> scale_;
};

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

enum class BnLayout {
    channels_last,   // x[m][c], stats over m
    channels_middle  // x[n][c][s], stats over n and s
};

template <typename T>
class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(std::size_t channels, BnLayout layout) { configure(channels, layout); }

    void configure(std::size_t channels, BnLayout layout) {
        channels_ = channels;
        layout_ = layout;
        gamma_.resize({channels});
        beta_.resize({channels});
        gamma_.value.fill(T(1));
        running_mean_.resize({channels});
        running_var_.resize({channels});
        running_var_.fill(T(1));
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        reg.add(prefix + ".gamma", gamma_);
        reg.add(prefix + ".beta", beta_);
        reg.add_buffer(prefix + ".running_mean", running_mean_);
        reg.add_buffer(prefix + ".running_var", running_var_);
    }

    std::size_t channels() const { return channels_; }

    /// spatial = product of the per-channel spatial extents (1 for
    /// channels_last). Total element count must be n * channels * spatial.
    Tensor<T> forward(const Tensor<T>& x, std::size_t spatial, bool training) {
        const std::size_t per = channels_ * spatial;
        const std::size_t n = x.size() / per;
        const std::size_t m = n * spatial;  // samples per channel
        x_ = x;
        spatial_ = spatial;
        training_ = training;

        mean_.assign(channels_, T(0));
        var_.assign(channels_, T(0));
        if (training) {
            for_each_channel(x, [&](std::size_t c, const T* v, std::size_t stride,
                                    std::size_t count) {
                T sum = T(0);
                for (std::size_t i = 0; i < count; ++i) sum += v[i * stride];
                mean_[c] += sum / static_cast<T>(m);
            });
            for_each_channel(x, [&](std::size_t c, const T* v, std::size_t stride,
                                    std::size_t count) {
                T sum = T(0);
                for (std::size_t i = 0; i < count; ++i) {
                    const T d = v[i * stride] - mean_[c];
                    sum += d * d;
                }
                var_[c] += sum / static_cast<T>(m);
            });
            const T mom = static_cast<T>(momentum_);
            for (std::size_t c = 0; c < channels_; ++c) {
                running_mean_[c] = (T(1) - mom) * running_mean_[c] + mom * mean_[c];
                // unbiased variance for the running estimate
                const T unbiased =
                    m > 1 ? var_[c] * static_cast<T>(m) / static_cast<T>(m - 1) : var_[c];
                running_var_[c] = (T(1) - mom) * running_var_[c] + mom * unbiased;
            }
        } else {
            for (std::size_t c = 0; c < channels_; ++c) {
                mean_[c] = running_mean_[c];
                var_[c] = running_var_[c];
            }
        }

        inv_std_.assign(channels_, T(0));
        for (std::size_t c = 0; c < channels_; ++c)
            inv_std_[c] = T(1) / std::sqrt(var_[c] + static_cast<T>(eps_));

        Tensor<T> y = x;
        xhat_.resize(x.shape());
        apply_affine(x, y);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::size_t per = channels_ * spatial_;
        const std::size_t n = dy.size() / per;
        const std::size_t m = n * spatial_;
        Tensor<T> dx(dy.shape());

        // per-channel reductions of dy and dy*xhat
        std::vector<T> sum_dy(channels_, T(0)), sum_dy_xhat(channels_, T(0));
        for_each_index(dy.size(), [&](std::size_t i, std::size_t c) {
            sum_dy[c] += dy[i];
            sum_dy_xhat[c] += dy[i] * xhat_[i];
        });
        for (std::size_t c = 0; c < channels_; ++c) {
            gamma_.grad[c] += sum_dy_xhat[c];
            beta_.grad[c] += sum_dy[c];
        }

        if (!training_) {
            // frozen statistics: pure affine map
            for_each_index(dy.size(), [&](std::size_t i, std::size_t c) {
                dx[i] = dy[i] * gamma_.value[c] * inv_std_[c];
            });
            return dx;
        }
        const T inv_m = T(1) / static_cast<T>(m);
        for_each_index(dy.size(), [&](std::size_t i, std::size_t c) {
            dx[i] = gamma_.value[c] * inv_std_[c] *
                    (dy[i] - inv_m * sum_dy[c] - xhat_[i] * inv_m * sum_dy_xhat[c]);
        });
        return dx;
    }

private:
    // Iterates all elements, reporting the channel index of each.
    template <typename F>
    void for_each_index(std::size_t total, F&& f) const {
        if (layout_ == BnLayout::channels_last) {
            for (std::size_t i = 0; i < total; ++i) f(i, i % channels_);
        } else {
            const std::size_t per = channels_ * spatial_;
            for (std::size_t i = 0; i < total; ++i) f(i, (i % per) / spatial_);
        }
    }

    // Per-channel strided slices for the statistics loops.
    template <typename F>
    void for_each_channel(const Tensor<T>& x, F&& f) const {
        const std::size_t per = channels_ * spatial_;
        const std::size_t n = x.size() / per;
        if (layout_ == BnLayout::channels_last) {
            for (std::size_t c = 0; c < channels_; ++c)
                f(c, x.data() + c, channels_, n);
        } else {
            for (std::size_t c = 0; c < channels_; ++c)
                for (std::size_t b = 0; b < n; ++b)
                    f(c, x.data() + (b * channels_ + c) * spatial_, 1, spatial_);
        }
    }

    void apply_affine(const Tensor<T>& x, Tensor<T>& y) {
        for_each_index(x.size(), [&](std::size_t i, std::size_t c) {
            const T xh = (x[i] - mean_[c]) * inv_std_[c];
            xhat_[i] = xh;
            y[i] = gamma_.value[c] * xh + beta_.value[c];
        });
    }

    std::size_t channels_ = 0;
    BnLayout layout_ = BnLayout::channels_last;
    double eps_ = 1e-5;
    double momentum_ = 0.1;
    Param<T> gamma_, beta_;
    Tensor<T> running_mean_, running_var_;

    // forward cache
    Tensor<T> x_, xhat_;
    std::vector<T> mean_, var_, inv_std_;
    std::size_t spatial_ = 1;
    bool training_ = true;
};

// ---------------------------------------------------------------------------
// Conv3d (stride 1, cubic kernel, symmetric zero padding)
// ---------------------------------------------------------------------------

template <typename T>
class Conv3d {
public:
    Conv3d() = default;
    Conv3d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t pad) {
        configure(in_ch, out_ch, kernel, pad);
    }

    void configure(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                   std::size_t pad) {
        cin_ = in_ch;
        cout_ = out_ch;
        k_ = kernel;
        pad_ = pad;
        weight_.resize({out_ch, in_ch, kernel, kernel, kernel});
        bias_.resize({out_ch});
    }

    void init(Rng& rng) {
        const std::size_t fan_in = cin_ * k_ * k_ * k_;
        const std::size_t fan_out = cout_ * k_ * k_ * k_;
        xavier_init(weight_, fan_in, fan_out, rng);
        bias_.value.zero();
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        reg.add(prefix + ".weight", weight_);
        reg.add(prefix + ".bias", bias_);
    }

    std::size_t out_extent(std::size_t in) const { return in + 2 * pad_ - k_ + 1; }

    /// x: [N][Cin][D][H][W] -> y: [N][Cout][D'][H'][W']
    Tensor<T> forward(const Tensor<T>& x) {
        const auto& s = x.shape();
        const std::size_t n = s[0], d = s[2], h = s[3], w = s[4];
        const std::size_t od = out_extent(d), oh = out_extent(h), ow = out_extent(w);
        x_ = x;
        Tensor<T> y({n, cout_, od, oh, ow});

        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t co = 0; co < cout_; ++co) {
                T* ybase = y.data() + ((b * cout_ + co) * od) * oh * ow;
                const T bv = bias_.value[co];
                for (std::size_t i = 0; i < od * oh * ow; ++i) ybase[i] = bv;
                for (std::size_t ci = 0; ci < cin_; ++ci) {
                    const T* xbase = x.data() + ((b * cin_ + ci) * d) * h * w;
                    const T* wbase =
                        weight_.value.data() + ((co * cin_ + ci) * k_) * k_ * k_;
                    accumulate_shifted(xbase, d, h, w, wbase, ybase, od, oh, ow,
                                       /*transposed=*/false);
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const auto& s = x_.shape();
        const std::size_t n = s[0], d = s[2], h = s[3], w = s[4];
        const std::size_t od = out_extent(d), oh = out_extent(h), ow = out_extent(w);
        Tensor<T> dx(s);
        dx.zero();

        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t co = 0; co < cout_; ++co) {
                const T* gybase = dy.data() + ((b * cout_ + co) * od) * oh * ow;
                T gb = T(0);
                for (std::size_t i = 0; i < od * oh * ow; ++i) gb += gybase[i];
                bias_.grad[co] += gb;
                for (std::size_t ci = 0; ci < cin_; ++ci) {
                    const T* xbase = x_.data() + ((b * cin_ + ci) * d) * h * w;
                    T* dxbase = dx.data() + ((b * cin_ + ci) * d) * h * w;
                    const T* wbase =
                        weight_.value.data() + ((co * cin_ + ci) * k_) * k_ * k_;
                    T* dwbase = weight_.grad.data() + ((co * cin_ + ci) * k_) * k_ * k_;
                    // dx += w (*) dy   and   dw += x . dy
                    accumulate_shifted(gybase, od, oh, ow, wbase, dxbase, d, h, w,
                                       /*transposed=*/true);
                    correlate_grad(xbase, d, h, w, gybase, od, oh, ow, dwbase);
                }
            }
        }
        return dx;
    }

private:
    // Shift-and-accumulate kernel shared by the forward pass and the input
    // gradient. Forward: out[o] += w[kd][kh][kw] * in[o + k - pad].
    // Transposed (input gradient): out[o + k - pad] += w * in[o], i.e. the
    // same window arithmetic with source and destination swapped.
    void accumulate_shifted(const T* in, std::size_t id, std::size_t ih, std::size_t iw,
                            const T* w, T* out, std::size_t od, std::size_t oh,
                            std::size_t ow, bool transposed) const {
        const long p = static_cast<long>(pad_);
        // loop bounds: small(d,h,w) indexes the non-shifted grid
        const std::size_t sd = transposed ? id : od;
        const std::size_t sh = transposed ? ih : oh;
        const std::size_t sw = transposed ? iw : ow;
        const std::size_t ld = transposed ? od : id;
        const std::size_t lh = transposed ? oh : ih;
        const std::size_t lw = transposed ? ow : iw;
        for (std::size_t kd = 0; kd < k_; ++kd) {
            const long offd = static_cast<long>(kd) - p;
            const std::size_t d0 =
                static_cast<std::size_t>(std::max<long>(0, -offd));
            const std::size_t d1 = std::min<std::size_t>(
                sd, static_cast<std::size_t>(std::max<long>(
                        0, static_cast<long>(ld) - offd)));
            for (std::size_t kh = 0; kh < k_; ++kh) {
                const long offh = static_cast<long>(kh) - p;
                const std::size_t h0 =
                    static_cast<std::size_t>(std::max<long>(0, -offh));
                const std::size_t h1 = std::min<std::size_t>(
                    sh, static_cast<std::size_t>(std::max<long>(
                            0, static_cast<long>(lh) - offh)));
                for (std::size_t kw = 0; kw < k_; ++kw) {
                    const long offw = static_cast<long>(kw) - p;
                    const std::size_t w0 =
                        static_cast<std::size_t>(std::max<long>(0, -offw));
                    const std::size_t w1 = std::min<std::size_t>(
                        sw, static_cast<std::size_t>(std::max<long>(
                                0, static_cast<long>(lw) - offw)));
                    if (w0 >= w1 || h0 >= h1 || d0 >= d1) continue;
                    const T wv = w[(kd * k_ + kh) * k_ + kw];
                    if (wv == T(0)) continue;
                    for (std::size_t z = d0; z < d1; ++z) {
                        for (std::size_t yy = h0; yy < h1; ++yy) {
                            if (!transposed) {
                                T* orow = out + (z * oh + yy) * ow;
                                const T* irow =
                                    in + ((z + offd) * ih + (yy + offh)) * iw;
                                for (std::size_t xx = w0; xx < w1; ++xx)
                                    orow[xx] += wv * irow[xx + offw];
                            } else {
                                T* orow =
                                    out + ((z + offd) * oh + (yy + offh)) * ow;
                                const T* irow = in + (z * ih + yy) * iw;
                                for (std::size_t xx = w0; xx < w1; ++xx)
                                    orow[xx + offw] += wv * irow[xx];
                            }
                        }
                    }
                }
            }
        }
    }

    // dw[kd][kh][kw] += sum over output positions of x[o + k - pad] * dy[o]
    void correlate_grad(const T* x, std::size_t d, std::size_t h, std::size_t w,
                        const T* dy, std::size_t od, std::size_t oh, std::size_t ow,
                        T* dw) const {
        const long p = static_cast<long>(pad_);
        for (std::size_t kd = 0; kd < k_; ++kd) {
            const long offd = static_cast<long>(kd) - p;
            const std::size_t d0 = static_cast<std::size_t>(std::max<long>(0, -offd));
            const std::size_t d1 = std::min<std::size_t>(
                od, static_cast<std::size_t>(
                        std::max<long>(0, static_cast<long>(d) - offd)));
            for (std::size_t kh = 0; kh < k_; ++kh) {
                const long offh = static_cast<long>(kh) - p;
                const std::size_t h0 =
                    static_cast<std::size_t>(std::max<long>(0, -offh));
                const std::size_t h1 = std::min<std::size_t>(
                    oh, static_cast<std::size_t>(
                            std::max<long>(0, static_cast<long>(h) - offh)));
                for (std::size_t kw = 0; kw < k_; ++kw) {
                    const long offw = static_cast<long>(kw) - p;
                    const std::size_t w0 =
                        static_cast<std::size_t>(std::max<long>(0, -offw));
                    const std::size_t w1 = std::min<std::size_t>(
                        ow, static_cast<std::size_t>(
                                std::max<long>(0, static_cast<long>(w) - offw)));
                    if (w0 >= w1 || h0 >= h1 || d0 >= d1) continue;
                    T acc = T(0);
                    for (std::size_t z = d0; z < d1; ++z) {
                        for (std::size_t yy = h0; yy < h1; ++yy) {
                            const T* xrow = x + ((z + offd) * h + (yy + offh)) * w;
                            const T* grow = dy + (z * oh + yy) * ow;
                            for (std::size_t xx = w0; xx < w1; ++xx)
                                acc += xrow[xx + offw] * grow[xx];
                        }
                    }
                    dw[(kd * k_ + kh) * k_ + kw] += acc;
                }
            }
        }
    }

    std::size_t cin_ = 0, cout_ = 0, k_ = 3, pad_ = 1;
    Param<T> weight_, bias_;
    Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// MaxPool3d (kernel == stride, ceiling mode)
// ---------------------------------------------------------------------------

template <typename T>
class MaxPool3d {
public:
    MaxPool3d() = default;
    MaxPool3d(std::size_t kd, std::size_t kh, std::size_t kw)
        : kd_(kd), kh_(kh), kw_(kw) {}

    static std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

    /// x: [N][C][D][H][W]
    Tensor<T> forward(const Tensor<T>& x) {
        const auto& s = x.shape();
        const std::size_t n = s[0], c = s[1], d = s[2], h = s[3], w = s[4];
        const std::size_t od = ceil_div(d, kd_), oh = ceil_div(h, kh_),
                          ow = ceil_div(w, kw_);
        in_shape_ = s;
        Tensor<T> y({n, c, od, oh, ow});
        argmax_.assign(y.size(), 0);

        for (std::size_t bc = 0; bc < n * c; ++bc) {
            const T* xb = x.data() + bc * d * h * w;
            T* yb = y.data() + bc * od * oh * ow;
            std::size_t* ab = argmax_.data() + bc * od * oh * ow;
            for (std::size_t z = 0; z < od; ++z)
                for (std::size_t yy = 0; yy < oh; ++yy)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        const std::size_t z1 = std::min(d, (z + 1) * kd_);
                        const std::size_t y1 = std::min(h, (yy + 1) * kh_);
                        const std::size_t x1 = std::min(w, (xx + 1) * kw_);
                        T best = -std::numeric_limits<T>::infinity();
                        std::size_t best_i = 0;
                        for (std::size_t iz = z * kd_; iz < z1; ++iz)
                            for (std::size_t iy = yy * kh_; iy < y1; ++iy)
                                for (std::size_t ix = xx * kw_; ix < x1; ++ix) {
                                    const std::size_t i = (iz * h + iy) * w + ix;
                                    if (xb[i] > best) {
                                        best = xb[i];
                                        best_i = i;
                                    }
                                }
                        const std::size_t o = (z * oh + yy) * ow + xx;
                        yb[o] = best;
                        ab[o] = best_i;
                    }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::size_t n = in_shape_[0], c = in_shape_[1], d = in_shape_[2],
                          h = in_shape_[3], w = in_shape_[4];
        const std::size_t per_out = dy.size() / (n * c);
        Tensor<T> dx(in_shape_);
        dx.zero();
        for (std::size_t bc = 0; bc < n * c; ++bc) {
            T* dxb = dx.data() + bc * d * h * w;
            const T* gyb = dy.data() + bc * per_out;
            const std::size_t* ab = argmax_.data() + bc * per_out;
            for (std::size_t o = 0; o < per_out; ++o) dxb[ab[o]] += gyb[o];
        }
        return dx;
    }

private:
    std::size_t kd_ = 4, kh_ = 2, kw_ = 2;
    std::vector<std::size_t> in_shape_;
    std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------
// LayerNorm (over the last axis, affine)
// ---------------------------------------------------------------------------

template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(std::size_t features) { configure(features); }

    void configure(std::size_t features) {
        f_ = features;
        gamma_.resize({features});
        beta_.resize({features});
        gamma_.value.fill(T(1));
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        reg.add(prefix + ".gamma", gamma_);
        reg.add(prefix + ".beta", beta_);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        const std::size_t n = x.size() / f_;
        xhat_.resize(x.shape());
        inv_std_.assign(n, T(0));
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const T* xi = x.data() + i * f_;
            T mean = T(0);
            for (std::size_t k = 0; k < f_; ++k) mean += xi[k];
            mean /= static_cast<T>(f_);
            T var = T(0);
            for (std::size_t k = 0; k < f_; ++k) {
                const T d = xi[k] - mean;
                var += d * d;
            }
            var /= static_cast<T>(f_);
            const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
            inv_std_[i] = inv;
            T* xh = xhat_.data() + i * f_;
            T* yi = y.data() + i * f_;
            for (std::size_t k = 0; k < f_; ++k) {
                xh[k] = (xi[k] - mean) * inv;
                yi[k] = gamma_.value[k] * xh[k] + beta_.value[k];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const std::size_t n = dy.size() / f_;
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < n; ++i) {
            const T* gi = dy.data() + i * f_;
            const T* xh = xhat_.data() + i * f_;
            T sum_g = T(0), sum_gx = T(0);
            for (std::size_t k = 0; k < f_; ++k) {
                const T gk = gi[k] * gamma_.value[k];
                sum_g += gk;
                sum_gx += gk * xh[k];
                gamma_.grad[k] += gi[k] * xh[k];
                beta_.grad[k] += gi[k];
            }
            const T inv_f = T(1) / static_cast<T>(f_);
            T* dxi = dx.data() + i * f_;
            for (std::size_t k = 0; k < f_; ++k) {
                const T gk = gi[k] * gamma_.value[k];
                dxi[k] = inv_std_[i] * (gk - inv_f * sum_g - xh[k] * inv_f * sum_gx);
            }
        }
        return dx;
    }

private:
    std::size_t f_ = 0;
    double eps_ = 1e-5;
    Param<T> gamma_, beta_;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

}  // namespace hsifsl::nn
