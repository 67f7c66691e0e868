#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsifsl/checkpoint.hpp"
#include "hsifsl/nn/adam.hpp"
#include "hsifsl/nn/network.hpp"
#include "hsifsl/objectives.hpp"
#include "hsifsl/rng.hpp"
#include "hsifsl/sampling.hpp"
#include "hsifsl/scene.hpp"

namespace hsifsl {

struct TrainConfig {
    std::size_t episodes = 10000;
    double learning_rate = 0.001;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 1000;
    ObjectiveConfig objective;
    SamplerConfig sampler;
    std::string device_hint = "cpu";

    void validate() const {
        if (episodes < 1) throw std::invalid_argument("train: episodes must be >= 1");
        if (learning_rate <= 0)
            throw std::invalid_argument("train: learning_rate must be positive");
        if (checkpoint_every < 1)
            throw std::invalid_argument("train: checkpoint_every must be >= 1");
        objective.validate();
        sampler.validate();
    }
};

inline int domain_label(DomainRole role) {
    return role == DomainRole::target ? 1 : 0;
}

/// Runs the alternating two-stream optimization: even steps train on a
/// source episode against a target batch, odd steps on a target episode
/// (drawn from the augmented pool) against a source batch. Each step
/// backpropagates lambda1*L_con + lambda2*L_fsl plus the adversarial domain
/// term: the discriminator body minimizes L_d directly, while the gradient
/// crossing back into the features is reversed and scaled by
/// grl_coeff * lambda3.
template <typename T>
class Trainer {
public:
    Trainer(nn::ModelState<T>& model, const TrainConfig& cfg)
        : model_(model),
          cfg_(cfg),
          reg_(model.registry()),
          optim_(cfg.learning_rate),
          sample_rng_(Rng(cfg.seed).split()),
          dropout_rng_(Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL).split()) {
        cfg_.validate();
    }

    nn::Adam<T>& optimizer() { return optim_; }
    nn::ParamRegistry<T>& registry() { return reg_; }
    std::size_t step_count() const { return step_; }
    Rng& sample_rng() { return sample_rng_; }

    /// One optimization step on an episode plus an opposite-domain batch.
    LossReport train_step(const Episode<T>& episode, const PatchBatch<T>& opposite) {
        if (episode.support.domain == opposite.domain)
            throw std::invalid_argument(
                "train_step: episode and opposite batch must come from different "
                "domains");
        reg_.zero_grad();

        const std::size_t n_s = episode.support.count();
        const std::size_t n_q = episode.query.count();
        const std::size_t n_e = n_s + n_q;
        const std::size_t n_o = opposite.count();
        const std::size_t f = model_.feature_dim();
        const ObjectiveConfig& obj = cfg_.objective;

        // --- forward: map each domain with its own mapper, extract jointly ---
        PatchBatch<T> episode_patches = concat_batches(episode.support, episode.query);
        Tensor<T> mapped_ep = nn::map_patches(model_, episode_patches, true);
        Tensor<T> mapped_op = nn::map_patches(model_, opposite, true);
        Tensor<T> volumes = concat_volumes(nn::patches_to_volumes(mapped_ep),
                                           nn::patches_to_volumes(mapped_op));
        Tensor<T> feats = model_.extractor().forward(volumes, true);
        if (!feats.all_finite())
            throw std::runtime_error("train_step: non-finite features at step " +
                                     std::to_string(step_));

        Tensor<T> g({n_e + n_o, f});  // feature gradient accumulator

        // --- class-level contrastive loss on all episode features ---
        Tensor<T> ep_feats = slice_rows(feats, 0, n_e);
        Tensor<T> g_con({n_e, f});
        const T l_con = contrastive_loss(ep_feats, episode_patches.labels,
                                         static_cast<T>(obj.tau), &g_con);
        add_rows(g, 0, g_con, static_cast<T>(obj.lambda1));

        // --- prototypes, cross-attention, few-shot loss ---
        Tensor<T> support_feats = slice_rows(feats, 0, n_s);
        Tensor<T> query_feats = slice_rows(feats, n_s, n_q);
        Prototypes<T> protos = compute_prototypes(support_feats, episode.support.labels,
                                                  episode.ways);
        Tensor<T> attended = model_.attention().forward(query_feats, support_feats);

        Tensor<T> d_attended({n_q, f}), d_protos({episode.ways, f});
        FslResult<T> fsl = fsl_loss(attended, episode.query.labels, protos,
                                    &d_attended, &d_protos);
        scale(d_attended, static_cast<T>(obj.lambda2));
        scale(d_protos, static_cast<T>(obj.lambda2));
        Tensor<T> d_support({n_s, f});
        Tensor<T> d_query = model_.attention().backward(d_attended, d_support);
        prototypes_backward(d_protos, episode.support.labels, d_support);
        add_rows(g, 0, d_support, T(1));
        add_rows(g, n_s, d_query, T(1));

        // --- domain discrimination on the union of features ---
        const Tensor<T>* probs_ptr = nullptr;
        Tensor<T> probs;
        if (model_.discriminator().conditional()) {
            probs = prototype_probs(feats, protos);
            probs_ptr = &probs;
        }
        Tensor<T> logits =
            model_.discriminator().forward(feats, probs_ptr, true, dropout_rng_);
        std::vector<int> dlabels(n_e + n_o, domain_label(episode.support.domain));
        for (std::size_t i = n_e; i < n_e + n_o; ++i)
            dlabels[i] = domain_label(opposite.domain);
        Tensor<T> d_logits({n_e + n_o});
        const T l_d = domain_loss(logits, dlabels, &d_logits);

        // discriminator body trains on L_d directly; the reversal point scales
        // and negates the gradient flowing back into the features
        Tensor<T> d_feat_disc = model_.discriminator().backward(d_logits);
        const T reversal = -static_cast<T>(model_.config().grl_coeff * obj.lambda3);
        add_rows(g, 0, d_feat_disc, reversal);

        // --- backward through extractor and mappers ---
        Tensor<T> d_volumes = model_.extractor().backward(g);
        const std::size_t p = model_.config().patch_size;
        const std::size_t d2 = model_.config().mapped_bands;
        Tensor<T> d_vol_ep = slice_volumes(d_volumes, 0, n_e);
        Tensor<T> d_vol_op = slice_volumes(d_volumes, n_e, n_o);
        model_.mapper(episode_patches.domain)
            .backward(nn::volumes_to_patches_grad(d_vol_ep, p, d2));
        model_.mapper(opposite.domain)
            .backward(nn::volumes_to_patches_grad(d_vol_op, p, d2));

        optim_.step(reg_);
        ++step_;

        LossReport report;
        report.l_con = static_cast<double>(l_con);
        report.l_fsl = static_cast<double>(fsl.loss);
        report.l_d = static_cast<double>(l_d);
        report.total = static_cast<double>(
            total_loss(l_con, fsl.loss, l_d, obj));
        report.query_accuracy = fsl.accuracy;
        return report;
    }

    /// Full run per Algorithm-1 alternation. Writes train.log.jsonl and
    /// periodic checkpoints under run_dir.
    void train(const HsiScene& source, const HsiScene& target,
               const LabeledPool<T>& target_pool, const std::filesystem::path& run_dir,
               const nlohmann::json& frozen_config) {
        std::filesystem::create_directories(run_dir);
        const auto source_index = labeled_pixel_index(source);

        std::ofstream log(run_dir / "train.log.jsonl", std::ios::app);
        if (!log) throw std::runtime_error("train: cannot open training log");

        const std::size_t ways = model_.config().ways;
        const std::size_t episode_patches =
            ways * (cfg_.sampler.train_shots + cfg_.sampler.train_queries_per_class);
        const std::size_t batch_size = cfg_.sampler.domain_batch_size
                                           ? cfg_.sampler.domain_batch_size
                                           : episode_patches;

        // picks up where a restored checkpoint left off
        for (std::size_t e = step_; e < cfg_.episodes; ++e) {
            Episode<T> ep;
            PatchBatch<T> opposite;
            if (e % 2 == 0) {
                ep = sample_episode<T>(source_index, source, DomainRole::source, ways,
                                       cfg_.sampler, sample_rng_);
                opposite = sample_domain_batch<T>(target, DomainRole::target,
                                                  batch_size, cfg_.sampler.patch_size,
                                                  sample_rng_);
            } else {
                ep = sample_episode_from_pool(target_pool.batch, target_pool.class_ids,
                                              ways, cfg_.sampler, sample_rng_);
                opposite = sample_labeled_domain_batch<T>(
                    source, DomainRole::source, source_index, batch_size,
                    cfg_.sampler.patch_size, sample_rng_);
            }
            const LossReport r = train_step(ep, opposite);
            log << nlohmann::json({{"step", step_ - 1},
                                   {"l_con", r.l_con},
                                   {"l_fsl", r.l_fsl},
                                   {"l_d", r.l_d},
                                   {"total", r.total},
                                   {"query_accuracy", r.query_accuracy},
                                   {"domain", domain_name(ep.support.domain)}})
                       .dump()
                << "\n";
            if (step_ % cfg_.checkpoint_every == 0 || step_ == cfg_.episodes)
                write_checkpoint(run_dir, frozen_config);
        }
        log.flush();
    }

    void write_checkpoint(const std::filesystem::path& run_dir,
                          const nlohmann::json& frozen_config) {
        const std::string name = "step-" + std::to_string(step_);
        const auto dir = run_dir / "checkpoints" / name;
        checkpoint::save(dir, reg_, optim_, step_, sample_rng_, frozen_config);
        // mark latest only after the archive is fully written
        std::ofstream latest(run_dir / "checkpoints" / "latest");
        latest << name << "\n";
    }

    void restore(const std::filesystem::path& checkpoint_dir) {
        const auto meta = checkpoint::load(checkpoint_dir, reg_, &optim_);
        step_ = meta.step;
        sample_rng_ = meta.rng;
    }

private:
    static PatchBatch<T> concat_batches(const PatchBatch<T>& a, const PatchBatch<T>& b) {
        PatchBatch<T> out;
        out.domain = a.domain;
        const std::size_t stride = a.patch_size() * a.patch_size() * a.bands();
        out.patches.resize({a.count() + b.count(), a.patch_size(), a.patch_size(),
                            a.bands()});
        std::copy(a.patches.data(), a.patches.data() + a.patches.size(),
                  out.patches.data());
        std::copy(b.patches.data(), b.patches.data() + b.patches.size(),
                  out.patches.data() + a.count() * stride);
        out.labels = a.labels;
        out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
        out.coords = a.coords;
        out.coords.insert(out.coords.end(), b.coords.begin(), b.coords.end());
        return out;
    }

    static Tensor<T> concat_volumes(const Tensor<T>& a, const Tensor<T>& b) {
        auto shape = a.shape();
        shape[0] += b.dim(0);
        Tensor<T> out(shape);
        std::copy(a.data(), a.data() + a.size(), out.data());
        std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
        return out;
    }

    static Tensor<T> slice_rows(const Tensor<T>& x, std::size_t from, std::size_t n) {
        const std::size_t f = x.dim(1);
        Tensor<T> out({n, f});
        std::copy(x.data() + from * f, x.data() + (from + n) * f, out.data());
        return out;
    }

    static Tensor<T> slice_volumes(const Tensor<T>& x, std::size_t from, std::size_t n) {
        auto shape = x.shape();
        const std::size_t per = x.size() / shape[0];
        shape[0] = n;
        Tensor<T> out(shape);
        std::copy(x.data() + from * per, x.data() + (from + n) * per, out.data());
        return out;
    }

    static void add_rows(Tensor<T>& dst, std::size_t row_offset, const Tensor<T>& src,
                         T weight) {
        if (weight == T(0)) return;
        const std::size_t f = dst.dim(1);
        T* d = dst.data() + row_offset * f;
        for (std::size_t i = 0; i < src.size(); ++i) d[i] += weight * src[i];
    }

    static void scale(Tensor<T>& t, T s) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] *= s;
    }

    nn::ModelState<T>& model_;
    TrainConfig cfg_;
    nn::ParamRegistry<T> reg_;
    nn::Adam<T> optim_;
    Rng sample_rng_;
    Rng dropout_rng_;
    std::size_t step_ = 0;
};

}  // namespace hsifsl
