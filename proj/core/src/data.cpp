#include "pemv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "pemv/error.hpp"

namespace pemv {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split_name(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split name: " + std::string(name));
}

std::array<std::size_t, 2> SplitManifest::class_counts() const {
  std::array<std::size_t, 2> counts{0, 0};
  for (const auto& e : entries) ++counts[static_cast<std::size_t>(e.label)];
  return counts;
}

SplitManifest parse_split_text(std::string_view text, Split split, const std::string& source) {
  SplitManifest manifest;
  manifest.split = split;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    auto fail = [&](const std::string& why) {
      return DataError(source + ":" + std::to_string(line_no) + ": " + why);
    };
    const std::size_t space = line.find(' ');
    if (space == std::string_view::npos || space == 0 || line.find(' ', space + 1) != std::string_view::npos) {
      throw fail("expected '<relative_path> <label>'");
    }
    const std::string_view path = line.substr(0, space);
    const std::string_view label_text = line.substr(space + 1);
    int label = -1;
    const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size()) {
      throw fail("label is not an integer: '" + std::string(label_text) + "'");
    }
    if (label != 0 && label != 1) throw fail("label must be 0 or 1, got " + std::to_string(label));
    if (!seen.emplace(path).second) throw fail("duplicate path '" + std::string(path) + "'");
    manifest.entries.push_back({std::string(path), label});
    if (end == text.size()) break;
  }
  return manifest;
}

SplitManifest parse_split_file(const fs::path& path, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open split file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_split_text(buffer.str(), split, path.string());
}

void write_split_file(const fs::path& path, const SplitManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write split file " + path.string());
  for (const auto& e : manifest.entries) out << e.path << ' ' << e.label << '\n';
}

std::pair<SplitManifest, SplitManifest> split_train_val(const SplitManifest& pool,
                                                        double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(pool.size())));
  SplitManifest train{Split::kTrain, {}};
  SplitManifest val{Split::kVal, {}};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : val).entries.push_back(pool.entries[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

namespace {

// Float RGB image in [0, 1], HWC.
cv::Mat to_unit_rgb(const cv::Mat& decoded, int size) {
  cv::Mat rgb;
  if (decoded.channels() == 1) {
    cv::cvtColor(decoded, rgb, cv::COLOR_GRAY2RGB);
  } else if (decoded.channels() == 4) {
    cv::cvtColor(decoded, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(decoded, rgb, cv::COLOR_BGR2RGB);
  }
  cv::Mat resized;
  if (rgb.rows != size || rgb.cols != size) {
    cv::resize(rgb, resized, cv::Size(size, size), 0.0, 0.0, cv::INTER_LINEAR);
  } else {
    resized = rgb;
  }
  cv::Mat unit;
  const double scale = decoded.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  resized.convertTo(unit, CV_32FC3, scale);
  return unit;
}

void augment(cv::Mat& img, const AugmentConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < cfg.hflip_probability) cv::flip(img, img, 1);
  if (cfg.rotation_degrees > 0.0) {
    const double angle = (2.0 * unit(rng) - 1.0) * cfg.rotation_degrees;
    const cv::Point2f center(static_cast<float>(img.cols - 1) / 2.0f, static_cast<float>(img.rows - 1) / 2.0f);
    const cv::Mat m = cv::getRotationMatrix2D(center, angle, 1.0);
    cv::Mat rotated;
    cv::warpAffine(img, rotated, m, img.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    img = rotated;
  }
  const double gain = 1.0 + (2.0 * unit(rng) - 1.0) * cfg.contrast;
  const double offset = (2.0 * unit(rng) - 1.0) * cfg.brightness;
  img.convertTo(img, CV_32FC3, gain, offset);
  cv::min(img, 1.0, img);
  cv::max(img, 0.0, img);
}

Image finish(cv::Mat unit, LoadMode mode, const PreprocessConfig& config, Rng* rng) {
  if (mode == LoadMode::kTrain && config.augment.enabled) {
    if (rng == nullptr) throw ConfigError("train-mode loading requires a random stream");
    augment(unit, config.augment, *rng);
  }
  Image out;
  out.channels = 3;
  out.height = unit.rows;
  out.width = unit.cols;
  out.values.resize(static_cast<std::size_t>(3) * unit.rows * unit.cols);
  const std::size_t plane = static_cast<std::size_t>(unit.rows) * unit.cols;
  for (int y = 0; y < unit.rows; ++y) {
    const auto* row = unit.ptr<cv::Vec3f>(y);
    for (int x = 0; x < unit.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = (row[x][c] - config.normalization.mean[static_cast<std::size_t>(c)]) /
                         config.normalization.stddev[static_cast<std::size_t>(c)];
        out.values[c * plane + static_cast<std::size_t>(y) * unit.cols + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace

Image preprocess_pixels(const std::vector<std::uint8_t>& pixels, int height, int width, int channels,
                        LoadMode mode, const PreprocessConfig& config, Rng* rng) {
  if (channels != 1 && channels != 3) throw ShapeError("pixel buffers must have 1 or 3 channels");
  if (pixels.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("pixel buffer size does not match its dimensions");
  }
  cv::Mat view(height, width, channels == 1 ? CV_8UC1 : CV_8UC3, const_cast<std::uint8_t*>(pixels.data()));
  cv::Mat bgr;
  if (channels == 3) {
    cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR);
  } else {
    bgr = view.clone();
  }
  return finish(to_unit_rgb(bgr, config.size), mode, config, rng);
}

DatasetRecord load_record(const SplitEntry& entry, const fs::path& root, LoadMode mode,
                          const PreprocessConfig& config, Rng* rng) {
  const fs::path full = root / entry.path;
  cv::Mat decoded;
  try {
    decoded = cv::imread(full.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  } catch (const cv::Exception&) {
    decoded.release();
  }
  if (decoded.empty()) throw DataError("cannot read or decode image " + full.string());
  DatasetRecord record;
  record.image = finish(to_unit_rgb(decoded, config.size), mode, config, rng);
  record.label = entry.label;
  record.source = entry.path;
  return record;
}

fs::path split_file_path(const fs::path& split_dir, Split split) {
  return split_dir / (to_string(split) + ".txt");
}

std::vector<SplitManifest> load_split_dir(const fs::path& split_dir) {
  std::vector<SplitManifest> out;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    out.push_back(parse_split_file(split_file_path(split_dir, s), s));
  }
  return out;
}

IntegrityReport verify_dataset(const std::vector<SplitManifest>& manifests, const fs::path& root) {
  IntegrityReport report;
  std::unordered_map<std::string, Split> owner;
  for (const auto& m : manifests) {
    report.sizes[m.split] = m.size();
    report.class_counts[m.split] = m.class_counts();
    for (const auto& e : m.entries) {
      if (!root.empty() && !fs::is_regular_file(root / e.path)) {
        report.missing.push_back(to_string(m.split) + ": " + e.path);
      }
      const auto [it, inserted] = owner.emplace(e.path, m.split);
      if (!inserted && it->second != m.split) report.overlaps.push_back({e.path, it->second, m.split});
    }
  }
  return report;
}

std::string IntegrityReport::text() const {
  std::ostringstream os;
  os << "dataset integrity: " << (ok() ? "PASS" : "FAIL") << "\n";
  for (const auto& [split, n] : sizes) {
    const auto& counts = class_counts.at(split);
    os << "  " << to_string(split) << ": " << n << " images (benign " << counts[0] << ", malignant "
       << counts[1] << ")\n";
  }
  if (!missing.empty()) {
    os << "missing files (" << missing.size() << "):\n";
    for (const auto& m : missing) os << "  " << m << "\n";
  }
  if (!overlaps.empty()) {
    os << "split overlaps (" << overlaps.size() << "):\n";
    for (const auto& o : overlaps) {
      os << "  " << o.path << " in " << to_string(o.first) << " and " << to_string(o.second) << "\n";
    }
  }
  return os.str();
}

std::string IntegrityReport::json() const {
  nlohmann::json j;
  j["ok"] = ok();
  for (const auto& [split, n] : sizes) {
    const auto& counts = class_counts.at(split);
    j["splits"][to_string(split)] = {{"size", n}, {"benign", counts[0]}, {"malignant", counts[1]}};
  }
  j["missing"] = missing;
  j["overlaps"] = nlohmann::json::array();
  for (const auto& o : overlaps) {
    j["overlaps"].push_back({{"path", o.path}, {"first", to_string(o.first)}, {"second", to_string(o.second)}});
  }
  return j.dump();
}

}  // namespace pemv
