// Writes a small procedural dataset in the split-file layout so the
// pipeline can be exercised without the real ultrasound archives.
#include <iostream>

#include "CLI11.hpp"
#include "pemv/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app("Generate a synthetic nodule dataset", "pemv-synth");
  std::string out;
  pemv::SyntheticSpec spec;
  app.add_option("--out", out, "Dataset root to create")->required();
  app.add_option("--train", spec.train, "Training images")->capture_default_str();
  app.add_option("--val", spec.val, "Validation images")->capture_default_str();
  app.add_option("--test", spec.test, "Test images")->capture_default_str();
  app.add_option("--size", spec.image_size, "Image side length in pixels")->capture_default_str();
  app.add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    const auto manifests = pemv::write_synthetic_dataset(out, spec);
    for (const auto& m : manifests) std::cout << pemv::to_string(m.split) << ": " << m.size() << " images\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
