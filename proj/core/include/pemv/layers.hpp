#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pemv/tensor.hpp"

namespace pemv {

using Rng = std::mt19937_64;

// Trainable tensor with its gradient accumulator. Shape bookkeeping lives in
// the owning layer; the optimizer only needs the flat views.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t size)
      : name(std::move(n)), value(size, T(0)), grad(size, T(0)) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// Square-kernel 2-D convolution without bias (every conv in the backbone is
// followed by batch-norm). Runs as im2col + a single GEMM over the batch.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
         int padding);

  // He-normal with fan-out, the usual initialization for ReLU residual nets.
  void initialize(Rng& rng);

  Activation forward(const Activation& x) const;
  // Accumulates the weight gradient; writes the input gradient when dx != nullptr.
  void backward(const Activation& x, const Activation& dy, Activation* dx);

  int out_size(int in) const { return (in + 2 * padding_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  Parameter<float>& weight() { return weight_; }
  const Parameter<float>& weight() const { return weight_; }

 private:
  int in_channels_ = 0;
  int out_channels_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int padding_ = 0;
  Parameter<float> weight_;  // (out, in, k, k)
};

struct BatchNormCache {
  Activation normalized;  // x-hat
  std::vector<float> inv_std;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  // Inference: normalizes with the running statistics.
  Activation forward(const Activation& x) const;
  // Training: normalizes with batch statistics and updates the running ones.
  Activation forward_train(const Activation& x, BatchNormCache& cache);
  Activation backward(const Activation& dy, const BatchNormCache& cache);

  Parameter<float>& gamma() { return gamma_; }
  Parameter<float>& beta() { return beta_; }
  const Parameter<float>& gamma() const { return gamma_; }
  const Parameter<float>& beta() const { return beta_; }
  std::vector<float>& running_mean() { return running_mean_; }
  std::vector<float>& running_var() { return running_var_; }
  const std::vector<float>& running_mean() const { return running_mean_; }
  const std::vector<float>& running_var() const { return running_var_; }

 private:
  int channels_ = 0;
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
  Parameter<float> gamma_;
  Parameter<float> beta_;
  std::vector<float> running_mean_;
  std::vector<float> running_var_;
};

void relu_inplace(Activation& x);
// Masks dy in place where the forward output was not positive.
void relu_backward_inplace(const Activation& y, Activation& dy);

struct MaxPoolCache {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
  int in_height = 0;
  int in_width = 0;
};

// 3x3 / stride 2 / pad 1 max pooling used by the ResNet stem.
Activation max_pool_3x3s2(const Activation& x, MaxPoolCache* cache);
Activation max_pool_backward(const Activation& dy, const MaxPoolCache& cache, int channels);

}  // namespace pemv
