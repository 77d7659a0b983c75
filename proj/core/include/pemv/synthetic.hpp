#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pemv/data.hpp"

namespace pemv {

// Procedural stand-in for an ultrasound nodule dataset. Benign samples are
// smooth, wider-than-tall and near-isoechoic; malignant ones are hypoechoic,
// taller-than-wide, with a spiculated margin and bright micro-calcifications.
// Every image gets its own gain and speckle level to mimic device variation.
struct SyntheticSpec {
  int train = 32;
  int val = 8;
  int test = 8;
  int image_size = 160;
  std::uint64_t seed = 0;
};

// 8-bit grayscale pixels (row-major) for one sample.
std::vector<std::uint8_t> synthetic_pixels(int label, int size, Rng& rng);

// Writes <root>/images/<split>_<index>.png and <root>/splits/{train,val,test}.txt.
// Labels alternate so every split is balanced. Returns the manifests.
std::vector<SplitManifest> write_synthetic_dataset(const std::filesystem::path& root,
                                                   const SyntheticSpec& spec);

}  // namespace pemv
