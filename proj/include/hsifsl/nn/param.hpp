#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "hsifsl/rng.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl::nn {

/// A learnable tensor paired with its gradient accumulator.
template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;

    void resize(std::vector<std::size_t> shape) {
        value.resize(shape);
        grad.resize(std::move(shape));
    }
    std::size_t size() const { return value.size(); }
};

/// Flat view over a model's named tensors. `params` are trainable and carry
/// gradients; `buffers` are state that is checkpointed but not optimized
/// (batch-norm running statistics).
template <typename T>
struct ParamRegistry {
    std::vector<std::pair<std::string, Param<T>*>> params;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers;

    void add(const std::string& name, Param<T>& p) { params.emplace_back(name, &p); }
    void add_buffer(const std::string& name, Tensor<T>& t) {
        buffers.emplace_back(name, &t);
    }

    void zero_grad() {
        for (auto& [name, p] : params) p->grad.zero();
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : params) n += p->size();
        return n;
    }
};

/// Xavier (Glorot) uniform initialization.
template <typename T>
void xavier_init(Param<T>& p, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < p.value.size(); ++i)
        p.value[i] = static_cast<T>(rng.next_uniform(-bound, bound));
    p.grad.zero();
}

}  // namespace hsifsl::nn
