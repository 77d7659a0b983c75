#include "pemv/tensor.hpp"

#include <algorithm>

#include "pemv/error.hpp"

namespace pemv {

Activation::Activation(int channels, int batch, int height, int width, float fill)
    : channels_(channels), batch_(batch), height_(height), width_(width) {
  if (channels <= 0 || batch <= 0 || height <= 0 || width <= 0) {
    throw ShapeError("activation dimensions must be positive, got " +
                     std::to_string(channels) + "x" + std::to_string(batch) + "x" +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  data_.assign(static_cast<std::size_t>(channels) * batch * height * width, fill);
}

std::string Activation::shape_string() const {
  return "(" + std::to_string(channels_) + ", " + std::to_string(batch_) + ", " +
         std::to_string(height_) + ", " + std::to_string(width_) + ")";
}

Activation pack_images(std::span<const Image> images) {
  if (images.empty()) throw ShapeError("cannot pack an empty image batch");
  const Image& first = images.front();
  Activation out(first.channels, static_cast<int>(images.size()), first.height, first.width);
  const std::size_t plane = static_cast<std::size_t>(first.height) * first.width;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.channels != first.channels || img.height != first.height ||
        img.width != first.width) {
      throw ShapeError("image batch has mixed shapes");
    }
    for (int c = 0; c < img.channels; ++c) {
      std::copy_n(img.values.begin() + static_cast<std::ptrdiff_t>(c * plane), plane,
                  out.data() + (static_cast<std::size_t>(c) * images.size() + n) * plane);
    }
  }
  return out;
}

}  // namespace pemv
