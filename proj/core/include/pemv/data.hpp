#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pemv/layers.hpp"
#include "pemv/tensor.hpp"

namespace pemv {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split_name(std::string_view name);

struct SplitEntry {
  std::string path;  // relative to the dataset root
  int label = 0;     // 0 benign, 1 malignant
};

struct SplitManifest {
  Split split = Split::kTrain;
  std::vector<SplitEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::array<std::size_t, 2> class_counts() const;
};

// One entry per non-empty line, `<relative_path> <label>`, order preserved.
// Errors carry the 1-based line number.
SplitManifest parse_split_text(std::string_view text, Split split,
                               const std::string& source = "<memory>");
SplitManifest parse_split_file(const std::filesystem::path& path, Split split);
void write_split_file(const std::filesystem::path& path, const SplitManifest& manifest);

// Seeded shuffle of a labelled pool into train / val with
// floor(train_fraction * n) training entries.
std::pair<SplitManifest, SplitManifest> split_train_val(const SplitManifest& pool,
                                                        double train_fraction = 0.8,
                                                        std::uint64_t seed = 0);

struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

struct AugmentConfig {
  bool enabled = true;
  double hflip_probability = 0.5;
  double rotation_degrees = 10.0;
  double brightness = 0.1;  // additive, fraction of full range
  double contrast = 0.1;    // multiplicative around 1
};

struct PreprocessConfig {
  int size = 128;
  Normalization normalization;
  AugmentConfig augment;
};

enum class LoadMode { kTrain, kEval };

struct DatasetRecord {
  Image image;
  int label = 0;
  std::string source;
};

// decode -> 3 channels (RGB) -> bilinear resize -> [0, 1] -> (train only)
// augmentation -> per-channel standardization. `rng` is required in train mode.
DatasetRecord load_record(const SplitEntry& entry, const std::filesystem::path& root, LoadMode mode,
                          const PreprocessConfig& config, Rng* rng = nullptr);

// The same pipeline on an in-memory 8-bit image (1 or 3 channels, RGB order).
Image preprocess_pixels(const std::vector<std::uint8_t>& pixels, int height, int width,
                        int channels, LoadMode mode, const PreprocessConfig& config,
                        Rng* rng = nullptr);

struct SplitOverlap {
  std::string path;
  Split first;
  Split second;
};

struct IntegrityReport {
  std::map<Split, std::size_t> sizes;
  std::map<Split, std::array<std::size_t, 2>> class_counts;
  std::vector<std::string> missing;  // "<split>: <path>"
  std::vector<SplitOverlap> overlaps;

  bool ok() const { return missing.empty() && overlaps.empty(); }
  std::string text() const;
  std::string json() const;
};

// Checks file presence under `root` (skipped when root is empty) and pairwise
// split disjointness. Violations are collected, never thrown.
IntegrityReport verify_dataset(const std::vector<SplitManifest>& manifests,
                               const std::filesystem::path& root);

// train.txt / val.txt / test.txt inside `split_dir`.
std::vector<SplitManifest> load_split_dir(const std::filesystem::path& split_dir);
std::filesystem::path split_file_path(const std::filesystem::path& split_dir, Split split);

}  // namespace pemv
