#include "pemv/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pemv/error.hpp"

namespace pemv {

namespace fs = std::filesystem;

std::vector<std::uint8_t> synthetic_pixels(int label, int size, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s = static_cast<double>(size);

  const double gain = 0.8 + 0.4 * unit(rng);
  const double speckle = 0.15 + 0.15 * unit(rng);
  const double background = 0.45 + 0.1 * unit(rng);

  const double cx = s * (0.4 + 0.2 * unit(rng));
  const double cy = s * (0.4 + 0.2 * unit(rng));
  const double base = s * (0.14 + 0.06 * unit(rng));
  // Malignant nodules are taller than wide.
  const double rx = label == 1 ? base * 0.75 : base * 1.25;
  const double ry = label == 1 ? base * 1.25 : base * 0.8;
  const double inside = label == 1 ? 0.15 + 0.08 * unit(rng) : 0.55 + 0.1 * unit(rng);
  const int spikes = 5 + static_cast<int>(unit(rng) * 4);
  const double phase = unit(rng) * 2.0 * std::numbers::pi;

  std::vector<std::pair<double, double>> calcs;
  if (label == 1) {
    const int n = 3 + static_cast<int>(unit(rng) * 4);
    for (int i = 0; i < n; ++i) {
      const double r = 0.6 * unit(rng);
      const double t = unit(rng) * 2.0 * std::numbers::pi;
      calcs.emplace_back(cx + r * rx * std::cos(t), cy + r * ry * std::sin(t));
    }
  }

  cv::Mat img(size, size, CV_32FC1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = (x - cx) / rx;
      const double dy = (y - cy) / ry;
      const double theta = std::atan2(dy, dx);
      double radius = 1.0;
      if (label == 1) radius += 0.25 * std::pow(std::abs(std::sin(spikes * theta + phase)), 3.0);
      const double d = std::sqrt(dx * dx + dy * dy) / radius;
      // Soft edge for benign, sharper for malignant.
      const double width = label == 1 ? 0.04 : 0.12;
      const double w = 1.0 / (1.0 + std::exp((d - 1.0) / width));
      double v = background * (1.0 - w) + inside * w;
      if (label == 0) v += 0.12 * std::exp(-std::pow((d - 1.05) / 0.06, 2.0));  // echogenic halo
      v += 0.05 * (static_cast<double>(y) / s - 0.5);                           // depth gradient
      img.at<float>(y, x) = static_cast<float>(v);
    }
  }
  for (const auto& [px, py] : calcs) {
    cv::circle(img, cv::Point(static_cast<int>(px), static_cast<int>(py)), std::max(1, size / 80),
               cv::Scalar(0.95), cv::FILLED, cv::LINE_AA);
  }
  cv::Mat noise(size, size, CV_32FC1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) noise.at<float>(y, x) = static_cast<float>(1.0 + speckle * gauss(rng));
  }
  cv::GaussianBlur(noise, noise, cv::Size(3, 3), 0.8);
  img = img.mul(noise) * gain;

  std::vector<std::uint8_t> out(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = std::clamp(static_cast<double>(img.at<float>(y, x)), 0.0, 1.0);
      out[static_cast<std::size_t>(y) * size + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

std::vector<SplitManifest> write_synthetic_dataset(const fs::path& root, const SyntheticSpec& spec) {
  if (spec.train < 0 || spec.val < 0 || spec.test < 0 || spec.image_size < 8) {
    throw ConfigError("invalid synthetic dataset spec");
  }
  fs::create_directories(root / "images");
  Rng rng(spec.seed);
  std::vector<SplitManifest> manifests;
  const std::pair<Split, int> splits[] = {{Split::kTrain, spec.train}, {Split::kVal, spec.val}, {Split::kTest, spec.test}};
  for (const auto& [split, count] : splits) {
    SplitManifest m{split, {}};
    for (int i = 0; i < count; ++i) {
      const int label = i % 2;
      const std::vector<std::uint8_t> pixels = synthetic_pixels(label, spec.image_size, rng);
      const std::string rel = "images/" + to_string(split) + "_" + std::to_string(i) + ".png";
      const cv::Mat mat(spec.image_size, spec.image_size, CV_8UC1, const_cast<std::uint8_t*>(pixels.data()));
      if (!cv::imwrite((root / rel).string(), mat)) throw DataError("cannot write " + (root / rel).string());
      m.entries.push_back({rel, label});
    }
    write_split_file(split_file_path(root / "splits", split), m);
    manifests.push_back(std::move(m));
  }
  return manifests;
}

}  // namespace pemv
