#pragma once

#include <cmath>
#include <vector>

#include "pemv/layers.hpp"

namespace pemv {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay: the decay shrinks the weights directly
// instead of entering the moment estimates.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, AdamWConfig config)
      : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      first_.emplace_back(p->size(), T(0));
      second_.emplace_back(p->size(), T(0));
    }
  }

  void step() {
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const auto lr = static_cast<T>(config_.learning_rate);
    const auto decay = static_cast<T>(1.0 - config_.learning_rate * config_.weight_decay);
    const auto b1 = static_cast<T>(config_.beta1);
    const auto b2 = static_cast<T>(config_.beta2);
    const auto inv_bc1 = static_cast<T>(1.0 / bc1);
    const auto inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<T>(config_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k]->value;
      const auto& grad = params_[k]->grad;
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        value[i] *= decay;
        m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
        v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
        const T m_hat = m[i] * inv_bc1;
        const T denom = std::sqrt(v[i]) * inv_sqrt_bc2 + eps;
        value[i] -= lr * m_hat / denom;
      }
    }
  }

  long steps() const { return steps_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamWConfig config_;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
  long steps_ = 0;
};

}  // namespace pemv
