#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pemv {

// Dense float activation batch in channel-major (C, N, H, W) order. Keeping the
// channel outermost lets convolutions run as one GEMM over the whole batch and
// lets batch-norm reduce over a contiguous row per channel.
class Activation {
 public:
  Activation() = default;
  Activation(int channels, int batch, int height, int width, float fill = 0.0f);

  int channels() const { return channels_; }
  int batch() const { return batch_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int spatial() const { return height_ * width_; }
  // Elements per channel row: N * H * W.
  std::size_t row_size() const {
    return static_cast<std::size_t>(batch_) * height_ * width_;
  }
  std::size_t size() const { return data_.size(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> span() { return data_; }
  std::span<const float> span() const { return data_; }

  float& at(int c, int n, int y, int x) {
    return data_[index(c, n, y, x)];
  }
  const float& at(int c, int n, int y, int x) const {
    return data_[index(c, n, y, x)];
  }

  bool same_shape(const Activation& other) const {
    return channels_ == other.channels_ && batch_ == other.batch_ &&
           height_ == other.height_ && width_ == other.width_;
  }
  std::string shape_string() const;

 private:
  std::size_t index(int c, int n, int y, int x) const {
    return ((static_cast<std::size_t>(c) * batch_ + n) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int batch_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// A single image in (C, H, W) order, the unit data-io hands to the model.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Packs equally shaped images into a channel-major batch.
Activation pack_images(std::span<const Image> images);

}  // namespace pemv
