#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsifsl/nn/attention.hpp"
#include "hsifsl/nn/layers.hpp"
#include "hsifsl/nn/param.hpp"
#include "hsifsl/sampling.hpp"
#include "hsifsl/scene.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl::nn {

/// Extracted features for a batch of patches.
template <typename T>
struct FeatureBatch {
    Tensor<T> features;  // N x F
    std::vector<int> labels;
    DomainRole domain = DomainRole::source;

    std::size_t count() const { return features.empty() ? 0 : features.dim(0); }
    std::size_t width() const { return features.empty() ? 0 : features.dim(1); }
};

struct ShapeTrace {
    std::size_t after_pool1_spectral = 0, after_pool1_spatial = 0;
    std::size_t after_pool2_spectral = 0, after_pool2_spatial = 0;
    std::size_t final_spectral = 0, final_spatial = 0, final_channels = 0;
    std::size_t feature_dim = 0;
};

/// Shape arithmetic of the extractor: two shape-preserving residual blocks,
/// each pooled 4x2x2 in ceiling mode, then an unpadded 3x3x3 convolution
/// with 32 channels.
inline ShapeTrace extractor_shape_trace(std::size_t mapped_bands,
                                        std::size_t patch_size) {
    auto cd = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
    ShapeTrace t;
    t.after_pool1_spectral = cd(mapped_bands, 4);
    t.after_pool1_spatial = cd(patch_size, 2);
    t.after_pool2_spectral = cd(t.after_pool1_spectral, 4);
    t.after_pool2_spatial = cd(t.after_pool1_spatial, 2);
    if (t.after_pool2_spectral < 3 || t.after_pool2_spatial < 3)
        throw std::invalid_argument(
            "extractor: mapped_bands/patch_size too small for the final 3x3x3 "
            "convolution (need >= 33 bands and patch >= 9)");
    t.final_spectral = t.after_pool2_spectral - 2;
    t.final_spatial = t.after_pool2_spatial - 2;
    t.final_channels = 32;
    t.feature_dim = t.final_channels * t.final_spectral * t.final_spatial *
                    t.final_spatial;
    return t;
}

struct NetworkConfig {
    std::size_t source_bands = 0;  // d1 of the source scene
    std::size_t target_bands = 0;  // d1 of the target scene
    std::size_t mapped_bands = 100;  // d2
    std::size_t patch_size = 9;
    std::size_t attention_layers = 2;
    std::size_t attention_heads = 8;
    std::size_t disc_hidden = 1024;
    double disc_dropout = 0.5;
    double grl_coeff = 1.0;
    bool conditional_discriminator = true;
    std::size_t ways = 0;  // C used for conditional discriminator width

    std::size_t feature_dim() const {
        return extractor_shape_trace(mapped_bands, patch_size).feature_dim;
    }
    std::size_t discriminator_input() const {
        const std::size_t f = feature_dim();
        return conditional_discriminator ? f * ways : f;
    }
};

// ---------------------------------------------------------------------------
// Mapping module: 1x1 Conv2D across bands + BatchNorm
// ---------------------------------------------------------------------------

template <typename T>
class Mapper {
public:
    Mapper() = default;
    Mapper(std::size_t in_bands, std::size_t out_bands) { configure(in_bands, out_bands); }

    void configure(std::size_t in_bands, std::size_t out_bands) {
        in_bands_ = in_bands;
        out_bands_ = out_bands;
        conv_.configure(in_bands, out_bands);
        bn_.configure(out_bands, BnLayout::channels_last);
    }

    void init(Rng& rng) { conv_.init(rng); }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        conv_.register_params(prefix + ".conv", reg);
        bn_.register_params(prefix + ".bn", reg);
    }

    std::size_t in_bands() const { return in_bands_; }
    std::size_t out_bands() const { return out_bands_; }
    Linear<T>& conv() { return conv_; }

    /// patches: [N x P x P x d1] -> [N x P x P x d2]
    Tensor<T> forward(const Tensor<T>& patches, bool training) {
        if (patches.dim(3) != in_bands_)
            throw std::invalid_argument("mapper: band-count mismatch (got " +
                                        std::to_string(patches.dim(3)) + ", expected " +
                                        std::to_string(in_bands_) + ")");
        shape_ = patches.shape();
        Tensor<T> y = conv_.forward(patches);
        y = bn_.forward(y, 1, training);
        y.reshape({shape_[0], shape_[1], shape_[2], out_bands_});
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> d = bn_.backward(dy);
        d = conv_.backward(d);
        d.reshape(shape_);
        return d;
    }

private:
    std::size_t in_bands_ = 0, out_bands_ = 0;
    Linear<T> conv_;  // 1x1 conv == per-pixel linear map over bands
    BatchNorm<T> bn_;
    std::vector<std::size_t> shape_;
};

/// [N x P x P x B] (band fastest) -> [N x 1 x B x P x P] conv volumes.
template <typename T>
Tensor<T> patches_to_volumes(const Tensor<T>& patches) {
    const std::size_t n = patches.dim(0), p = patches.dim(1), b = patches.dim(3);
    Tensor<T> vol({n, 1, b, p, p});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = 0; c < p; ++c) {
                const T* src = patches.data() + ((i * p + r) * p + c) * b;
                for (std::size_t k = 0; k < b; ++k)
                    vol[(((i * 1 + 0) * b + k) * p + r) * p + c] = src[k];
            }
    return vol;
}

template <typename T>
Tensor<T> volumes_to_patches_grad(const Tensor<T>& dvol, std::size_t patch, std::size_t bands) {
    const std::size_t n = dvol.dim(0);
    Tensor<T> d({n, patch, patch, bands});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < patch; ++r)
            for (std::size_t c = 0; c < patch; ++c) {
                T* dst = d.data() + ((i * patch + r) * patch + c) * bands;
                for (std::size_t k = 0; k < bands; ++k)
                    dst[k] = dvol[((i * bands + k) * patch + r) * patch + c];
            }
    return d;
}

// ---------------------------------------------------------------------------
// 3-D residual feature extractor
// ---------------------------------------------------------------------------

template <typename T>
class ResidualBlock3d {
public:
    ResidualBlock3d() = default;

    void configure(std::size_t in_ch, std::size_t out_ch) {
        in_ch_ = in_ch;
        out_ch_ = out_ch;
        conv1_.configure(in_ch, out_ch, 3, 1);
        conv2_.configure(out_ch, out_ch, 3, 1);
        conv3_.configure(out_ch, out_ch, 3, 1);
        bn1_.configure(out_ch, BnLayout::channels_middle);
        bn2_.configure(out_ch, BnLayout::channels_middle);
        bn3_.configure(out_ch, BnLayout::channels_middle);
        skip_.configure(in_ch, out_ch, 1, 0);
        pool_ = MaxPool3d<T>(4, 2, 2);
    }

    void init(Rng& rng) {
        conv1_.init(rng);
        conv2_.init(rng);
        conv3_.init(rng);
        skip_.init(rng);
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        conv1_.register_params(prefix + ".conv1", reg);
        bn1_.register_params(prefix + ".bn1", reg);
        conv2_.register_params(prefix + ".conv2", reg);
        bn2_.register_params(prefix + ".bn2", reg);
        conv3_.register_params(prefix + ".conv3", reg);
        bn3_.register_params(prefix + ".bn3", reg);
        skip_.register_params(prefix + ".skip", reg);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        const std::size_t spatial = x.dim(2) * x.dim(3) * x.dim(4);
        Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x), spatial, training));
        h = relu2_.forward(bn2_.forward(conv2_.forward(h), spatial, training));
        h = relu3_.forward(bn3_.forward(conv3_.forward(h), spatial, training));
        const Tensor<T> s = skip_.forward(x);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
        return pool_.forward(h);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dsum = pool_.backward(dy);
        Tensor<T> dx = skip_.backward(dsum);
        Tensor<T> d = bn3_.backward(relu3_.backward(dsum));
        d = conv3_.backward(d);
        d = conv2_.backward(bn2_.backward(relu2_.backward(d)));
        d = conv1_.backward(bn1_.backward(relu1_.backward(d)));
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d[i];
        return dx;
    }

private:
    std::size_t in_ch_ = 0, out_ch_ = 0;
    Conv3d<T> conv1_, conv2_, conv3_, skip_;
    BatchNorm<T> bn1_, bn2_, bn3_;
    ReLU<T> relu1_, relu2_, relu3_;
    MaxPool3d<T> pool_;
};

template <typename T>
class Extractor {
public:
    Extractor() = default;

    void configure(std::size_t mapped_bands, std::size_t patch_size) {
        trace_ = extractor_shape_trace(mapped_bands, patch_size);
        block1_.configure(1, 8);
        block2_.configure(8, 16);
        final_.configure(16, 32, 3, 0);
    }

    void init(Rng& rng) {
        block1_.init(rng);
        block2_.init(rng);
        final_.init(rng);
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        block1_.register_params(prefix + ".block1", reg);
        block2_.register_params(prefix + ".block2", reg);
        final_.register_params(prefix + ".final_conv", reg);
    }

    const ShapeTrace& trace() const { return trace_; }
    std::size_t feature_dim() const { return trace_.feature_dim; }

    /// volumes: [N x 1 x d2 x P x P] -> features [N x F]
    Tensor<T> forward(const Tensor<T>& volumes, bool training) {
        const std::size_t n = volumes.dim(0);
        Tensor<T> h = block1_.forward(volumes, training);
        pool1_shape_ = h.shape();
        h = block2_.forward(h, training);
        pool2_shape_ = h.shape();
        h = final_.forward(h);
        final_shape_ = h.shape();
        h.reshape({n, trace_.feature_dim});
        return h;
    }

    Tensor<T> backward(const Tensor<T>& dfeat) {
        Tensor<T> d = dfeat;
        d.reshape(final_shape_);
        d = final_.backward(d);
        d = block2_.backward(d);
        return block1_.backward(d);
    }

    /// Intermediate shapes observed during the last forward pass,
    /// each as [N, C, spectral, h, w].
    const std::vector<std::size_t>& observed_pool1_shape() const { return pool1_shape_; }
    const std::vector<std::size_t>& observed_pool2_shape() const { return pool2_shape_; }
    const std::vector<std::size_t>& observed_final_shape() const { return final_shape_; }

private:
    ShapeTrace trace_;
    ResidualBlock3d<T> block1_, block2_;
    Conv3d<T> final_;
    std::vector<std::size_t> pool1_shape_, pool2_shape_, final_shape_;
};

// ---------------------------------------------------------------------------
// Domain discriminator
// ---------------------------------------------------------------------------

/// Two-layer MLP producing one domain logit per sample. In conditional mode
/// the input is the outer product of the feature vector with a C-way class
/// probability vector, flattened; the probabilities are treated as constants
/// in the backward pass.
template <typename T>
class Discriminator {
public:
    Discriminator() = default;

    void configure(std::size_t feature_dim, std::size_t ways, bool conditional,
                   std::size_t hidden, double dropout) {
        feature_dim_ = feature_dim;
        ways_ = ways;
        conditional_ = conditional;
        const std::size_t in = conditional ? feature_dim * ways : feature_dim;
        fc1_.configure(in, hidden);
        fc2_.configure(hidden, 1);
        drop_ = Dropout<T>(dropout);
    }

    void init(Rng& rng) {
        fc1_.init(rng);
        fc2_.init(rng);
    }

    void register_params(const std::string& prefix, ParamRegistry<T>& reg) {
        fc1_.register_params(prefix + ".fc1", reg);
        fc2_.register_params(prefix + ".fc2", reg);
    }

    bool conditional() const { return conditional_; }
    std::size_t input_width() const { return fc1_.in_features(); }

    /// features: [N x F]; class_probs: [N x C] (required in conditional mode).
    Tensor<T> forward(const Tensor<T>& features, const Tensor<T>* class_probs,
                      bool training, Rng& rng) {
        const std::size_t n = features.dim(0);
        Tensor<T> in;
        if (conditional_) {
            if (class_probs == nullptr)
                throw std::invalid_argument(
                    "discriminator: conditional mode requires class probabilities");
            probs_ = *class_probs;
            in.resize({n, feature_dim_ * ways_});
            for (std::size_t i = 0; i < n; ++i) {
                const T* f = features.data() + i * feature_dim_;
                const T* p = probs_.data() + i * ways_;
                T* row = in.data() + i * feature_dim_ * ways_;
                for (std::size_t c = 0; c < ways_; ++c)
                    for (std::size_t k = 0; k < feature_dim_; ++k)
                        row[c * feature_dim_ + k] = p[c] * f[k];
            }
        } else {
            in = features;
        }
        Tensor<T> h = relu_.forward(fc1_.forward(in));
        h = drop_.forward(h, training, rng);
        Tensor<T> logits = fc2_.forward(h);
        logits.reshape({n});
        return logits;
    }

    /// Returns dL/dfeatures (before any gradient-reversal scaling).
    Tensor<T> backward(const Tensor<T>& dlogits) {
        Tensor<T> d = dlogits;
        const std::size_t n = d.size();
        d.reshape({n, 1});
        d = fc2_.backward(d);
        d = drop_.backward(d);
        d = relu_.backward(d);
        Tensor<T> din = fc1_.backward(d);
        if (!conditional_) return din;
        Tensor<T> dfeat({n, feature_dim_});
        for (std::size_t i = 0; i < n; ++i) {
            const T* p = probs_.data() + i * ways_;
            const T* row = din.data() + i * feature_dim_ * ways_;
            T* df = dfeat.data() + i * feature_dim_;
            for (std::size_t c = 0; c < ways_; ++c) {
                const T pc = p[c];
                if (pc == T(0)) continue;
                for (std::size_t k = 0; k < feature_dim_; ++k)
                    df[k] += pc * row[c * feature_dim_ + k];
            }
        }
        return dfeat;
    }

private:
    std::size_t feature_dim_ = 0, ways_ = 0;
    bool conditional_ = true;
    Linear<T> fc1_, fc2_;
    ReLU<T> relu_;
    Dropout<T> drop_{0.5};
    Tensor<T> probs_;
};

// ---------------------------------------------------------------------------
// ModelState
// ---------------------------------------------------------------------------

/// All learnable components. Not copyable: the parameter registry hands out
/// raw pointers into the modules.
template <typename T>
class ModelState {
public:
    explicit ModelState(const NetworkConfig& cfg) : cfg_(cfg) {
        mapper_source_.configure(cfg.source_bands, cfg.mapped_bands);
        mapper_target_.configure(cfg.target_bands, cfg.mapped_bands);
        extractor_.configure(cfg.mapped_bands, cfg.patch_size);
        attention_.configure(extractor_.feature_dim(), cfg.attention_heads,
                             cfg.attention_layers);
        discriminator_.configure(extractor_.feature_dim(), cfg.ways,
                                 cfg.conditional_discriminator, cfg.disc_hidden,
                                 cfg.disc_dropout);
    }

    ModelState(const ModelState&) = delete;
    ModelState& operator=(const ModelState&) = delete;

    void init(Rng& rng) {
        mapper_source_.init(rng);
        mapper_target_.init(rng);
        extractor_.init(rng);
        attention_.init(rng);
        discriminator_.init(rng);
    }

    ParamRegistry<T> registry() {
        ParamRegistry<T> reg;
        mapper_source_.register_params("mapper.source", reg);
        mapper_target_.register_params("mapper.target", reg);
        extractor_.register_params("extractor", reg);
        attention_.register_params("attention", reg);
        discriminator_.register_params("discriminator", reg);
        return reg;
    }

    const NetworkConfig& config() const { return cfg_; }
    Mapper<T>& mapper(DomainRole role) {
        return role == DomainRole::source ? mapper_source_ : mapper_target_;
    }
    Extractor<T>& extractor() { return extractor_; }
    CrossAttentionStack<T>& attention() { return attention_; }
    Discriminator<T>& discriminator() { return discriminator_; }
    std::size_t feature_dim() const { return extractor_.feature_dim(); }

private:
    NetworkConfig cfg_;
    Mapper<T> mapper_source_, mapper_target_;
    Extractor<T> extractor_;
    CrossAttentionStack<T> attention_;
    Discriminator<T> discriminator_;
};

// ---------------------------------------------------------------------------
// Forward-only module operations
// ---------------------------------------------------------------------------

/// Maps a batch with the domain's mapper. The batch domain selects the mapper.
template <typename T>
Tensor<T> map_patches(ModelState<T>& model, const PatchBatch<T>& batch, bool training) {
    return model.mapper(batch.domain).forward(batch.patches, training);
}

/// Full mapping + extraction for one batch.
template <typename T>
FeatureBatch<T> extract_features(ModelState<T>& model, const PatchBatch<T>& batch,
                                 bool training) {
    Tensor<T> mapped = map_patches(model, batch, training);
    Tensor<T> vol = patches_to_volumes(mapped);
    FeatureBatch<T> out;
    out.features = model.extractor().forward(vol, training);
    out.labels = batch.labels;
    out.domain = batch.domain;
    if (!out.features.all_finite())
        throw std::runtime_error("extract_features: non-finite output");
    return out;
}

/// Query features updated by cross-attention against support features.
template <typename T>
FeatureBatch<T> cross_attend(ModelState<T>& model, const FeatureBatch<T>& query,
                             const FeatureBatch<T>& support) {
    FeatureBatch<T> out;
    out.features = model.attention().forward(query.features, support.features);
    out.labels = query.labels;
    out.domain = query.domain;
    return out;
}

}  // namespace hsifsl::nn
