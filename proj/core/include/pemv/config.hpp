#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pemv/data.hpp"
#include "pemv/model.hpp"
#include "pemv/objectives.hpp"
#include "pemv/optimizer.hpp"

namespace pemv {

// Cumulative component ladder: AB1 backbone + global head (ERM), AB2 adds
// the multi-view mediator, AB3 prototype correction, AB4 the purity
// regularizer, AB5 the fusion loss (the full model).
enum class AblationLevel { kAB1 = 1, kAB2, kAB3, kAB4, kAB5 };

std::string to_string(AblationLevel level);
AblationLevel parse_ablation_level(std::string_view text);

struct ComponentToggles {
  bool views = false;
  bool correction = false;
  bool purity = false;
  bool fusion_loss = false;

  static ComponentToggles for_level(AblationLevel level);
  int enabled_count() const { return views + correction + purity + fusion_loss; }
};

struct DataConfig {
  std::string dataset = "tn3k";
  std::string root;       // falls back to $PEMV_DATA_ROOT
  std::string split_dir;  // defaults to <root>/splits
  PreprocessConfig preprocess;
};

struct TrainConfig {
  int batch_size = 16;
  int epochs = 100;
};

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;
  LossConfig loss;
  AdamWConfig optimizer;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  AblationLevel ablation = AblationLevel::kAB5;
  std::string output_dir = "runs";

  // Pushes the ablation level into the model / loss toggles.
  void apply_ablation();
  void validate() const;

  std::filesystem::path resolved_root() const;
  std::filesystem::path resolved_split_dir() const;
};

struct ConfigKey {
  std::string key;
  std::string description;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  bool hashed = true;  // participates in the config hash
};

// Every settable key, in a fixed order.
const std::vector<ConfigKey>& config_keys();

// Applies one `key=value` assignment. Unknown keys raise ConfigError listing
// the valid ones.
void apply_assignment(ExperimentConfig& config, std::string_view assignment);
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

// Flat `key=value` text; '#' starts a comment, blank lines are ignored.
ExperimentConfig parse_config_text(std::string_view text, const std::string& source = "<memory>");
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

// All keys with their resolved values, one `key=value` per line.
std::string render_config(const ExperimentConfig& config);

// The entries that define a run's identity: every hashed key plus the
// derived component toggles. Paths, seeds, the output directory and the
// ablation label itself are excluded.
std::vector<std::pair<std::string, std::string>> hashed_entries(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);
std::string config_hash_hex(const ExperimentConfig& config);

std::string format_real(double value);

}  // namespace pemv
