#include "pemv/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>

#include "pemv/error.hpp"

namespace pemv {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Column layout: row r = (c * k + ky) * k + kx, column = (n * Ho + oy) * Wo + ox.
void im2col(const Activation& x, int k, int stride, int pad, int out_h, int out_w,
            float* col) {
  const int batch = x.batch();
  const int in_h = x.height();
  const int in_w = x.width();
  const std::size_t cols = static_cast<std::size_t>(batch) * out_h * out_w;
  for (int c = 0; c < x.channels(); ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * cols;
        for (int n = 0; n < batch; ++n) {
          for (int oy = 0; oy < out_h; ++oy) {
            float* dst = row + (static_cast<std::size_t>(n) * out_h + oy) * out_w;
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= in_h) {
              std::fill_n(dst, out_w, 0.0f);
              continue;
            }
            const float* src = &x.at(c, n, iy, 0);
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < in_w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* col, int k, int stride, int pad, int out_h, int out_w,
            Activation& dx) {
  const int batch = dx.batch();
  const int in_h = dx.height();
  const int in_w = dx.width();
  const std::size_t cols = static_cast<std::size_t>(batch) * out_h * out_w;
  for (int c = 0; c < dx.channels(); ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<std::size_t>(c * k + ky) * k + kx) * cols;
        for (int n = 0; n < batch; ++n) {
          for (int oy = 0; oy < out_h; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= in_h) continue;
            const float* src = row + (static_cast<std::size_t>(n) * out_h + oy) * out_w;
            float* dst = &dx.at(c, n, iy, 0);
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < in_w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
               int padding)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_(std::move(name) + ".weight", static_cast<std::size_t>(out_channels) * in_channels *
                                   kernel * kernel) {}

void Conv2d::initialize(Rng& rng) {
  const double fan_out = static_cast<double>(out_channels_) * kernel_ * kernel_;
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / fan_out)));
  for (float& w : weight_.value) w = dist(rng);
}

Activation Conv2d::forward(const Activation& x) const {
  if (x.channels() != in_channels_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_channels_) +
                     " input channels, received " + std::to_string(x.channels()));
  }
  const int out_h = out_size(x.height());
  const int out_w = out_size(x.width());
  Activation y(out_channels_, x.batch(), out_h, out_w);
  const int patch = in_channels_ * kernel_ * kernel_;
  const auto cols = static_cast<Eigen::Index>(y.row_size());
  std::vector<float> col(static_cast<std::size_t>(patch) * cols);
  im2col(x, kernel_, stride_, padding_, out_h, out_w, col.data());
  ConstRowMap w(weight_.value.data(), out_channels_, patch);
  ConstRowMap c(col.data(), patch, cols);
  RowMap out(y.data(), out_channels_, cols);
  out.noalias() = w * c;
  return y;
}

void Conv2d::backward(const Activation& x, const Activation& dy, Activation* dx) {
  const int out_h = dy.height();
  const int out_w = dy.width();
  const int patch = in_channels_ * kernel_ * kernel_;
  const auto cols = static_cast<Eigen::Index>(dy.row_size());
  std::vector<float> col(static_cast<std::size_t>(patch) * cols);
  im2col(x, kernel_, stride_, padding_, out_h, out_w, col.data());
  ConstRowMap g(dy.data(), out_channels_, cols);
  ConstRowMap c(col.data(), patch, cols);
  RowMap dw(weight_.grad.data(), out_channels_, patch);
  dw.noalias() += g * c.transpose();
  if (dx == nullptr) return;
  RowMap dcol(col.data(), patch, cols);
  ConstRowMap w(weight_.value.data(), out_channels_, patch);
  dcol.noalias() = w.transpose() * g;
  *dx = Activation(x.channels(), x.batch(), x.height(), x.width());
  col2im(col.data(), kernel_, stride_, padding_, out_h, out_w, *dx);
}

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".weight", static_cast<std::size_t>(channels)),
      beta_(name + ".bias", static_cast<std::size_t>(channels)),
      running_mean_(static_cast<std::size_t>(channels), 0.0f),
      running_var_(static_cast<std::size_t>(channels), 1.0f) {
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
}

Activation BatchNorm2d::forward(const Activation& x) const {
  Activation y(x.channels(), x.batch(), x.height(), x.width());
  const std::size_t m = x.row_size();
  for (int c = 0; c < channels_; ++c) {
    const float scale = gamma_.value[c] / std::sqrt(running_var_[c] + eps_);
    const float shift = beta_.value[c] - running_mean_[c] * scale;
    const float* src = x.data() + c * m;
    float* dst = y.data() + c * m;
    for (std::size_t i = 0; i < m; ++i) dst[i] = src[i] * scale + shift;
  }
  return y;
}

Activation BatchNorm2d::forward_train(const Activation& x, BatchNormCache& cache) {
  Activation y(x.channels(), x.batch(), x.height(), x.width());
  cache.normalized = Activation(x.channels(), x.batch(), x.height(), x.width());
  cache.inv_std.assign(static_cast<std::size_t>(channels_), 0.0f);
  const std::size_t m = x.row_size();
  for (int c = 0; c < channels_; ++c) {
    const float* src = x.data() + c * m;
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += src[i];
    const double mean = sum / static_cast<double>(m);
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = src[i] - mean;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(m);
    const auto inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
    cache.inv_std[c] = inv_std;
    float* xhat = cache.normalized.data() + c * m;
    float* dst = y.data() + c * m;
    const auto mean_f = static_cast<float>(mean);
    for (std::size_t i = 0; i < m; ++i) {
      xhat[i] = (src[i] - mean_f) * inv_std;
      dst[i] = xhat[i] * gamma_.value[c] + beta_.value[c];
    }
    const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
    running_mean_[c] = (1.0f - momentum_) * running_mean_[c] + momentum_ * mean_f;
    running_var_[c] =
        (1.0f - momentum_) * running_var_[c] + momentum_ * static_cast<float>(unbiased);
  }
  return y;
}

Activation BatchNorm2d::backward(const Activation& dy, const BatchNormCache& cache) {
  Activation dx(dy.channels(), dy.batch(), dy.height(), dy.width());
  const std::size_t m = dy.row_size();
  const auto mf = static_cast<float>(m);
  for (int c = 0; c < channels_; ++c) {
    const float* g = dy.data() + c * m;
    const float* xhat = cache.normalized.data() + c * m;
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * xhat[i];
    }
    gamma_.grad[c] += static_cast<float>(sum_gx);
    beta_.grad[c] += static_cast<float>(sum_g);
    const float k = gamma_.value[c] * cache.inv_std[c] / mf;
    const auto sg = static_cast<float>(sum_g);
    const auto sgx = static_cast<float>(sum_gx);
    float* out = dx.data() + c * m;
    for (std::size_t i = 0; i < m; ++i) out[i] = k * (mf * g[i] - sg - xhat[i] * sgx);
  }
  return dx;
}

void relu_inplace(Activation& x) {
  for (float& v : x.span()) v = v > 0.0f ? v : 0.0f;
}

void relu_backward_inplace(const Activation& y, Activation& dy) {
  const float* out = y.data();
  float* g = dy.data();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(out[i] > 0.0f)) g[i] = 0.0f;
  }
}

Activation max_pool_3x3s2(const Activation& x, MaxPoolCache* cache) {
  const int out_h = (x.height() + 2 - 3) / 2 + 1;
  const int out_w = (x.width() + 2 - 3) / 2 + 1;
  Activation y(x.channels(), x.batch(), out_h, out_w);
  if (cache != nullptr) {
    cache->argmax.assign(y.size(), 0);
    cache->in_height = x.height();
    cache->in_width = x.width();
  }
  std::size_t o = 0;
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_index = 0;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - 1 + ky;
            if (iy < 0 || iy >= x.height()) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 - 1 + kx;
              if (ix < 0 || ix >= x.width()) continue;
              const std::size_t idx =
                  ((static_cast<std::size_t>(c) * x.batch() + n) * x.height() + iy) *
                      x.width() + ix;
              if (x.data()[idx] > best) {
                best = x.data()[idx];
                best_index = idx;
              }
            }
          }
          y.data()[o] = best;
          if (cache != nullptr) cache->argmax[o] = static_cast<std::uint32_t>(best_index);
        }
      }
    }
  }
  return y;
}

Activation max_pool_backward(const Activation& dy, const MaxPoolCache& cache, int channels) {
  Activation dx(channels, dy.batch(), cache.in_height, cache.in_width);
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data()[cache.argmax[o]] += dy.data()[o];
  return dx;
}

}  // namespace pemv
