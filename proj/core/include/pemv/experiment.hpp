#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pemv/config.hpp"
#include "pemv/data.hpp"
#include "pemv/metrics.hpp"
#include "pemv/model.hpp"
#include "pemv/objectives.hpp"
#include "pemv/optimizer.hpp"

namespace pemv {

std::string tool_version();
std::string git_state();

// splitmix64 finalizer; derives independent streams from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct DatasetBundle {
  std::filesystem::path root;
  SplitManifest train;
  SplitManifest val;
  SplitManifest test;

  static DatasetBundle from_config(const ExperimentConfig& config);
};

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double fusion = 0.0;
  double purity = 0.0;
};

struct StepResult {
  LossBreakdown loss;
  bool fusion_applied = false;
  std::size_t fusion_pairs = 0;
  std::vector<Mediator> mediators;  // raw A per sample; empty with views off
};

// Owns one model, its two optimizers (float backbone, double head) and the
// pair-sampling stream. One optimization step per call:
// forward -> losses -> backward -> AdamW -> prototype EMA.
class Trainer {
 public:
  Trainer(const ExperimentConfig& config, std::uint64_t seed);

  StepResult train_step(std::span<const Image> images, std::span<const int> labels);

  // Forward and backward only: fills the gradients of every parameter but
  // leaves weights and prototypes untouched.
  StepResult compute_gradients(std::span<const Image> images, std::span<const int> labels);

  PemvModel& model() { return model_; }
  const PemvModel& model() const { return model_; }
  const CorrectionStats& correction_stats() const { return correction_stats_; }
  std::uint64_t fusion_warmups() const { return fusion_warmups_; }

 private:
  ExperimentConfig config_;
  PemvModel model_;
  AdamW<float> backbone_optimizer_;
  AdamW<double> head_optimizer_;
  Rng pair_rng_;
  CorrectionStats correction_stats_;
  std::uint64_t fusion_warmups_ = 0;
};

struct SplitEvaluation {
  ConfusionCounts counts;
  ClassificationMetrics metrics;
  std::vector<int> predictions;
};

// Eval-mode inference over a manifest (no augmentation, label-free prototype
// retrieval). Throws if correction is enabled and the bank is uninitialized.
SplitEvaluation evaluate(const PemvModel& model, const SplitManifest& manifest,
                         const std::filesystem::path& root, const PreprocessConfig& preprocess,
                         int batch_size = 16);

struct EpochLog {
  int epoch = 0;
  LossBreakdown train_loss;  // mean over the epoch's batches
  ClassificationMetrics val;
};

struct TrainOptions {
  std::ostream* progress = nullptr;  // per-epoch lines when set
};

struct TrainOutcome {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::string best_checkpoint;  // serialized bytes
  std::filesystem::path checkpoint_path;
  CorrectionStats correction_stats;
  std::uint64_t fusion_warmups = 0;
};

// Writes <out_dir>/training_log.csv and <out_dir>/checkpoint.bin (the epoch
// with the best validation accuracy, earlier epoch on ties). A non-finite
// loss writes <out_dir>/divergence.txt and throws TrainingError.
TrainOutcome train(const ExperimentConfig& config, std::uint64_t seed, const DatasetBundle& data,
                   const std::filesystem::path& out_dir, const TrainOptions& options = {});

struct SeedRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  int best_epoch = 0;
  ClassificationMetrics val;
  ClassificationMetrics test;
  double wall_seconds = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  std::vector<SeedRun> runs;
  MeanStd accuracy;
  MeanStd precision;
  MeanStd recall;
  MeanStd f1;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;

  std::size_t completed() const;
  // "ACC | P | R | F1" cells in mean_{±std} form.
  std::string table_row() const;
};

// Aggregates test metrics over completed seeds (population std).
MetricsReport aggregate(std::string config_hash, std::vector<SeedRun> runs);

// Trains and evaluates every seed under <out_dir>/seed_<s>/, then writes
// <out_dir>/metrics.csv and <out_dir>/aggregate.json. A failing seed is
// recorded and skipped.
MetricsReport run_multiseed(const ExperimentConfig& config, const DatasetBundle& data,
                            const std::filesystem::path& out_dir, const TrainOptions& options = {});

struct AblationRow {
  AblationLevel level = AblationLevel::kAB1;
  ComponentToggles toggles;
  std::string config_hash;
  MetricsReport report;
};

// AB1..AB5 under <out_dir>/AB<n>/, plus ablation.csv and ablation.md.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const DatasetBundle& data,
                                      const std::filesystem::path& out_dir, const TrainOptions& options = {});

struct SweepRow {
  int num_views = 0;
  std::string config_hash;
  MetricsReport report;
};

// One multi-seed group per K under <out_dir>/num_views_<K>/, plus sweep.csv.
std::vector<SweepRow> run_sweep_views(const ExperimentConfig& config, std::span<const int> view_counts,
                                      const DatasetBundle& data, const std::filesystem::path& out_dir,
                                      const TrainOptions& options = {});

// Parses "1..9", "1,3,5" or a mix such as "1..3,7".
std::vector<int> parse_view_list(std::string_view text);

// <out_dir>/manifest.json: resolved config, tool version, timestamp, seeds
// and the dataset integrity summary. Refuses to overwrite an existing one.
void write_run_manifest(const std::filesystem::path& out_dir, const ExperimentConfig& config,
                        const std::string& command, const IntegrityReport* integrity);

std::string training_log_csv(const std::vector<EpochLog>& log);

}  // namespace pemv
