#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "hsifsl/nn/param.hpp"
#include "hsifsl/tensor.hpp"

namespace hsifsl::nn {

/// Adam with the original defaults (0.9 / 0.999 moment decay, eps 1e-8).
template <typename T>
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamRegistry<T>& reg) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, p] : reg.params) {
            Tensor<T>& m = moment(m_, name, p->value.shape());
            Tensor<T>& v = moment(v_, name, p->value.shape());
            const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
            for (std::size_t i = 0; i < p->size(); ++i) {
                const T g = p->grad[i];
                m[i] = b1 * m[i] + (T(1) - b1) * g;
                v[i] = b2 * v[i] + (T(1) - b2) * g * g;
                const double mhat = static_cast<double>(m[i]) / bc1;
                const double vhat = static_cast<double>(v[i]) / bc2;
                p->value[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    std::size_t step_count() const { return t_; }
    void set_step_count(std::size_t t) { t_ = t; }
    double learning_rate() const { return lr_; }

    std::map<std::string, Tensor<T>>& first_moments() { return m_; }
    std::map<std::string, Tensor<T>>& second_moments() { return v_; }

private:
    Tensor<T>& moment(std::map<std::string, Tensor<T>>& store, const std::string& name,
                      const std::vector<std::size_t>& shape) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor<T>(shape)).first;
        return it->second;
    }

    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, Tensor<T>> m_, v_;
};

}  // namespace hsifsl::nn
