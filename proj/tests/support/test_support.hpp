#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "pemv/layers.hpp"
#include "pemv/tensor.hpp"

namespace pemv::testing {

inline Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

inline Eigen::VectorXd random_vector(Rng& rng, int size, double scale = 1.0) {
  return random_matrix(rng, size, 1, scale).col(0);
}

inline Activation random_activation(Rng& rng, int c, int n, int h, int w, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  Activation a(c, n, h, w);
  for (float& v : a.span()) v = d(rng);
  return a;
}

inline Image random_image(Rng& rng, int size, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  Image img{3, size, size, std::vector<float>(static_cast<std::size_t>(3 * size * size))};
  for (float& v : img.values) v = d(rng);
  return img;
}

// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  // ctest runs each case in its own process, possibly in parallel.
  const auto dir = std::filesystem::temp_directory_path() /
                   ("pemv_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pemv::testing
