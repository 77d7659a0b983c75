#include "pemv/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "pemv/checkpoint.hpp"
#include "pemv/error.hpp"

#ifndef PEMV_VERSION
#define PEMV_VERSION "0.0.0"
#endif
#ifndef PEMV_GIT_STATE
#define PEMV_GIT_STATE "unknown"
#endif

namespace pemv {

namespace fs = std::filesystem;

std::string tool_version() { return PEMV_VERSION; }
std::string git_state() { return PEMV_GIT_STATE; }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

enum Stream : std::uint64_t { kInit = 1, kShuffle = 2, kAugment = 3, kPairs = 4 };

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

ExperimentConfig with_ablation(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.apply_ablation();
  return c;
}

}  // namespace

DatasetBundle DatasetBundle::from_config(const ExperimentConfig& config) {
  DatasetBundle bundle;
  bundle.root = config.resolved_root();
  const fs::path split_dir = config.resolved_split_dir();
  if (split_dir.empty()) throw ConfigError("no dataset configured: set data.root or PEMV_DATA_ROOT");
  auto manifests = load_split_dir(split_dir);
  bundle.train = std::move(manifests[0]);
  bundle.val = std::move(manifests[1]);
  bundle.test = std::move(manifests[2]);
  return bundle;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const ExperimentConfig& config, std::uint64_t seed)
    : config_(with_ablation(config)),
      model_((config_.validate(), config_.model), derive_seed(seed, kInit)),
      backbone_optimizer_(model_.backbone_parameters(), config_.optimizer),
      head_optimizer_(model_.head_parameters(), config_.optimizer),
      pair_rng_(derive_seed(seed, kPairs)) {}

StepResult Trainer::train_step(std::span<const Image> images, std::span<const int> labels) {
  StepResult result = compute_gradients(images, labels);
  backbone_optimizer_.step();
  head_optimizer_.step();
  if (!result.mediators.empty()) model_.prototypes().update(result.mediators, labels);
  return result;
}

StepResult Trainer::compute_gradients(std::span<const Image> images, std::span<const int> labels) {
  const int b = static_cast<int>(images.size());
  if (b == 0 || labels.size() != images.size()) throw ShapeError("train_step needs one label per image");

  const ModelConfig& mc = model_.config();
  const LossConfig& lc = config_.loss;
  const CorrectionParams cp = model_.correction_params();
  const int dg = mc.global_dim;
  const int da = mc.mediator_dim();

  model_.zero_grad();
  BackboneTape tape;
  const Activation features = model_.backbone().forward_train(pack_images(images), tape);

  std::vector<FeatureMap> fms;
  std::vector<ViewForward> views(static_cast<std::size_t>(b));
  std::vector<Eigen::VectorXd> fused(static_cast<std::size_t>(b));
  std::vector<bool> corrected(static_cast<std::size_t>(b), false);
  Eigen::MatrixXd globals(b, dg);
  Eigen::MatrixXd same(b, da);
  Eigen::MatrixXd other(b, da);
  BatchPrediction pred;
  pred.logits.resize(b, mc.num_classes);
  pred.labels.assign(labels.begin(), labels.end());
  fms.reserve(static_cast<std::size_t>(b));

  for (int i = 0; i < b; ++i) {
    const auto si = static_cast<std::size_t>(i);
    fms.push_back(FeatureMap::from_batch(features, i));
    const GlobalFeature g = model_.global_head().forward(fms[si]);
    globals.row(i) = g.values.transpose();
    if (!mc.enable_views) {
      fused[si] = model_.classifier().fuse(g.values, nullptr);
    } else {
      views[si] = model_.views().forward(fms[si]);
      const Eigen::VectorXd& a = views[si].mediator.concatenated();
      Eigen::VectorXd a_hat = a;
      if (mc.enable_correction) {
        const auto pair = retrieve_prototypes(a, model_.prototypes(), labels[si]);
        if (pair) {
          a_hat = correct_mediator(a, pair->same, pair->other, cp, &correction_stats_).values;
          other.row(i) = correct_mediator(a, pair->other, pair->same, cp).values.transpose();
          corrected[si] = true;
        } else {
          ++correction_stats_.skipped;
        }
      }
      same.row(i) = a_hat.transpose();
      fused[si] = model_.classifier().fuse(g.values, &a_hat);
    }
    pred.logits.row(i) = model_.classifier().forward_fused(fused[si]).values.transpose();
  }

  StepResult result;
  const ClassificationLoss lo = loss_classification(pred);
  result.loss.classification = lo.value;

  const bool all_corrected = std::all_of(corrected.begin(), corrected.end(), [](bool c) { return c; });
  FusionLoss lf;
  if (lc.enable_lf) {
    if (mc.enable_views && mc.enable_correction && all_corrected && b >= 2) {
      lf = loss_fusion({globals, same, other, pred.labels}, model_.classifier().fc(), &pair_rng_);
      result.fusion_applied = true;
      result.fusion_pairs = lf.pairs;
      result.loss.fusion = lf.value;
    } else {
      ++fusion_warmups_;
    }
  }

  std::vector<PurityLoss> purity;
  if (lc.enable_ip && mc.enable_views) {
    purity.reserve(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
      purity.push_back(loss_information_purity(views[static_cast<std::size_t>(i)].attention));
      result.loss.purity += purity.back().value;
    }
    result.loss.purity /= b;
  }

  result.loss.total = loss_total(result.loss.classification, result.loss.fusion, result.loss.purity, lc);
  if (!std::isfinite(result.loss.total)) {
    std::ostringstream os;
    os << "non-finite loss: total=" << result.loss.total << " classification=" << result.loss.classification
       << " fusion=" << result.loss.fusion << " purity=" << result.loss.purity;
    throw TrainingError(os.str());
  }

  // Backward through the head.
  const double lambda = lc.lambda_f;
  if (result.fusion_applied) {
    model_.classifier().fc().weight_grad() += lambda * lf.grad_weight;
    model_.classifier().fc().bias_grad() += lambda * lf.grad_bias;
  }
  Activation dfeatures(features.channels(), b, features.height(), features.width());
  for (int i = 0; i < b; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const Eigen::VectorXd dz =
        model_.classifier().backward(fused[si], lo.dlogits.row(i).transpose());
    Eigen::VectorXd dg_i = dz.head(dg);
    if (result.fusion_applied) dg_i += lambda * lf.grad_globals.row(i).transpose();
    Eigen::MatrixXd df = model_.global_head().backward(fms[si], dg_i);

    if (mc.enable_views) {
      Eigen::VectorXd da_i = dz.tail(da);
      if (result.fusion_applied) {
        da_i += lambda * (lf.grad_same.row(i) + lf.grad_other.row(i)).transpose();
      }
      if (corrected[si]) da_i *= cp.mediator_scale();
      Eigen::MatrixXd d_att;
      const Eigen::MatrixXd* d_att_ptr = nullptr;
      if (!purity.empty()) {
        d_att = purity[si].d_attention * (lc.mu_ip / b);
        d_att_ptr = &d_att;
      }
      df += model_.views().backward(fms[si], views[si], da_i, d_att_ptr);
    }

    for (int c = 0; c < df.rows(); ++c) {
      float* row = &dfeatures.at(c, i, 0, 0);
      for (int j = 0; j < df.cols(); ++j) row[j] = static_cast<float>(df(c, j));
    }
  }
  model_.backbone().backward(dfeatures, tape);

  if (mc.enable_views) {
    result.mediators.reserve(static_cast<std::size_t>(b));
    for (auto& v : views) result.mediators.push_back(std::move(v.mediator));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation and training loop

SplitEvaluation evaluate(const PemvModel& model, const SplitManifest& manifest, const fs::path& root,
                         const PreprocessConfig& preprocess, int batch_size) {
  SplitEvaluation out;
  std::vector<int> labels;
  for (std::size_t start = 0; start < manifest.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(manifest.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<Image> images;
    for (std::size_t i = start; i < end; ++i) {
      DatasetRecord r = load_record(manifest.entries[i], root, LoadMode::kEval, preprocess);
      images.push_back(std::move(r.image));
      labels.push_back(r.label);
    }
    for (const auto& r : model.infer(images)) out.predictions.push_back(r.prediction);
  }
  out.counts = count_confusion(out.predictions, labels);
  out.metrics = compute_metrics(out.counts);
  return out;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss_total,loss_cls,loss_fusion,loss_ip,val_acc,val_precision,val_recall,val_f1\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + format_fixed4(e.train_loss.total) + "," +
           format_fixed4(e.train_loss.classification) + "," + format_fixed4(e.train_loss.fusion) + "," +
           format_fixed4(e.train_loss.purity) + "," + format_fixed4(e.val.accuracy) + "," +
           format_fixed4(e.val.precision) + "," + format_fixed4(e.val.recall) + "," + format_fixed4(e.val.f1) +
           "\n";
  }
  return out;
}

TrainOutcome train(const ExperimentConfig& input_config, std::uint64_t seed, const DatasetBundle& data,
                   const fs::path& out_dir, const TrainOptions& options) {
  const ExperimentConfig config = with_ablation(input_config);
  config.validate();
  if (data.train.size() == 0) throw DataError("training split is empty");
  fs::create_directories(out_dir);

  Trainer trainer(config, seed);
  Rng shuffle_rng(derive_seed(seed, kShuffle));
  const std::uint64_t augment_seed = derive_seed(seed, kAugment);
  const auto batch = static_cast<std::size_t>(config.train.batch_size);

  TrainOutcome outcome;
  std::vector<std::size_t> order(data.train.size());
  for (int epoch = 1; epoch <= config.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }

    LossBreakdown sums;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<Image> images;
      std::vector<int> labels;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        Rng aug(derive_seed(derive_seed(augment_seed, static_cast<std::uint64_t>(epoch)), idx));
        DatasetRecord r = load_record(data.train.entries[idx], data.root, LoadMode::kTrain,
                                      config.data.preprocess, &aug);
        images.push_back(std::move(r.image));
        labels.push_back(r.label);
      }
      StepResult step;
      try {
        step = trainer.train_step(images, labels);
      } catch (const TrainingError& e) {
        std::ostringstream dump;
        dump << "seed " << seed << " epoch " << epoch << " batch " << batches << "\n" << e.what() << "\nindices:";
        for (std::size_t k = start; k < end; ++k) dump << ' ' << order[k];
        dump << "\npaths:";
        for (std::size_t k = start; k < end; ++k) dump << ' ' << data.train.entries[order[k]].path;
        dump << "\n";
        write_text(out_dir / "divergence.txt", dump.str());
        throw TrainingError(std::string(e.what()) + " (diagnostics in " + (out_dir / "divergence.txt").string() + ")");
      }
      sums.total += step.loss.total;
      sums.classification += step.loss.classification;
      sums.fusion += step.loss.fusion;
      sums.purity += step.loss.purity;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = {sums.total / batches, sums.classification / batches, sums.fusion / batches,
                        sums.purity / batches};
    const bool has_val = data.val.size() > 0;
    if (has_val) {
      entry.val = evaluate(trainer.model(), data.val, data.root, config.data.preprocess, config.train.batch_size).metrics;
    }
    outcome.log.push_back(entry);

    const bool better = has_val ? (outcome.best_epoch == 0 || entry.val.accuracy > outcome.best_val_accuracy)
                                : epoch == config.train.epochs;
    if (better) {
      outcome.best_epoch = epoch;
      outcome.best_val_accuracy = entry.val.accuracy;
      outcome.best_checkpoint = serialize_checkpoint(trainer.model(), config, seed, epoch);
    }
    if (options.progress != nullptr) {
      *options.progress << "[seed " << seed << "] epoch " << epoch << "/" << config.train.epochs
                        << " loss " << format_fixed4(entry.train_loss.total) << " (cls "
                        << format_fixed4(entry.train_loss.classification) << ", fusion "
                        << format_fixed4(entry.train_loss.fusion) << ", ip " << format_fixed4(entry.train_loss.purity)
                        << ")";
      if (has_val) *options.progress << " val acc " << format_fixed4(entry.val.accuracy);
      *options.progress << std::endl;
    }
  }

  outcome.correction_stats = trainer.correction_stats();
  outcome.fusion_warmups = trainer.fusion_warmups();
  outcome.checkpoint_path = out_dir / "checkpoint.bin";
  write_checkpoint(outcome.checkpoint_path, outcome.best_checkpoint);
  write_text(out_dir / "training_log.csv", training_log_csv(outcome.log));
  return outcome;
}

// ---------------------------------------------------------------------------
// Multi-seed aggregation

std::size_t MetricsReport::completed() const {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const SeedRun& r) { return r.ok; }));
}

std::string MetricsReport::table_row() const {
  return format_mean_std(accuracy) + " | " + format_mean_std(precision) + " | " + format_mean_std(recall) + " | " +
         format_mean_std(f1);
}

MetricsReport aggregate(std::string config_hash, std::vector<SeedRun> runs) {
  MetricsReport report;
  report.config_hash = std::move(config_hash);
  report.runs = std::move(runs);
  std::vector<double> acc, p, r, f;
  for (const auto& run : report.runs) {
    report.wall_seconds += run.wall_seconds;
    if (!run.ok) {
      report.warnings.push_back("seed " + std::to_string(run.seed) + " failed: " + run.error);
      continue;
    }
    acc.push_back(run.test.accuracy);
    p.push_back(run.test.precision);
    r.push_back(run.test.recall);
    f.push_back(run.test.f1);
  }
  report.accuracy = mean_std(acc);
  report.precision = mean_std(p);
  report.recall = mean_std(r);
  report.f1 = mean_std(f);
  if (acc.size() < report.runs.size() && !acc.empty()) {
    report.warnings.push_back("aggregated over " + std::to_string(acc.size()) + " of " +
                              std::to_string(report.runs.size()) + " seeds");
  }
  return report;
}

namespace {

nlohmann::json metrics_json(const ClassificationMetrics& m) {
  return {{"acc", format_fixed4(m.accuracy)},
          {"precision", format_fixed4(m.precision)},
          {"recall", format_fixed4(m.recall)},
          {"f1", format_fixed4(m.f1)},
          {"precision_zero_division", m.precision_undefined},
          {"recall_zero_division", m.recall_undefined},
          {"f1_zero_division", m.f1_undefined}};
}

std::string metrics_row(std::uint64_t seed, const char* split, const ClassificationMetrics& m) {
  return std::to_string(seed) + "," + split + "," + format_fixed4(m.accuracy) + "," + format_fixed4(m.precision) + "," +
         format_fixed4(m.recall) + "," + format_fixed4(m.f1) + "\n";
}

}  // namespace

MetricsReport run_multiseed(const ExperimentConfig& input_config, const DatasetBundle& data, const fs::path& out_dir,
                            const TrainOptions& options) {
  const ExperimentConfig config = with_ablation(input_config);
  config.validate();
  fs::create_directories(out_dir);
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : config.seeds) {
    SeedRun run;
    run.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const TrainOutcome outcome = train(config, seed, data, out_dir / ("seed_" + std::to_string(seed)), options);
      const LoadedCheckpoint best = deserialize_checkpoint(outcome.best_checkpoint);
      run.best_epoch = outcome.best_epoch;
      run.val = evaluate(*best.model, data.val, data.root, config.data.preprocess, config.train.batch_size).metrics;
      run.test = evaluate(*best.model, data.test, data.root, config.data.preprocess, config.train.batch_size).metrics;
      run.ok = true;
    } catch (const std::exception& e) {
      run.error = e.what();
      if (options.progress != nullptr) *options.progress << "warning: seed " << seed << " failed: " << e.what() << std::endl;
    }
    run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    runs.push_back(run);
  }

  MetricsReport report = aggregate(config_hash_hex(config), std::move(runs));

  std::string csv = "seed,split,acc,precision,recall,f1\n";
  for (const auto& run : report.runs) {
    if (!run.ok) continue;
    csv += metrics_row(run.seed, "val", run.val);
    csv += metrics_row(run.seed, "test", run.test);
  }
  write_text(out_dir / "metrics.csv", csv);

  nlohmann::json agg;
  agg["config_hash"] = report.config_hash;
  agg["ablation"] = to_string(config.ablation);
  agg["dataset"] = config.data.dataset;
  agg["num_views"] = config.model.num_views;
  agg["split"] = "test";
  agg["means"] = {{"acc", format_fixed4(report.accuracy.mean)},
                  {"precision", format_fixed4(report.precision.mean)},
                  {"recall", format_fixed4(report.recall.mean)},
                  {"f1", format_fixed4(report.f1.mean)}};
  agg["stds"] = {{"acc", format_fixed4(report.accuracy.stddev)},
                 {"precision", format_fixed4(report.precision.stddev)},
                 {"recall", format_fixed4(report.recall.stddev)},
                 {"f1", format_fixed4(report.f1.stddev)}};
  agg["table_row"] = report.table_row();
  agg["seeds"] = nlohmann::json::array();
  for (const auto& run : report.runs) {
    nlohmann::json s = {{"seed", run.seed}, {"ok", run.ok}, {"wall_seconds", format_fixed4(run.wall_seconds)}};
    if (run.ok) {
      s["best_epoch"] = run.best_epoch;
      s["val"] = metrics_json(run.val);
      s["test"] = metrics_json(run.test);
    } else {
      s["error"] = run.error;
    }
    agg["seeds"].push_back(s);
  }
  agg["completed_seeds"] = report.completed();
  agg["warnings"] = report.warnings;
  agg["metadata"] = {{"tool_version", tool_version()},
                     {"git_state", git_state()},
                     {"wall_seconds", format_fixed4(report.wall_seconds)},
                     {"std_convention", "population standard deviation over completed seeds"}};
  write_text(out_dir / "aggregate.json", agg.dump(2) + "\n");
  return report;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const DatasetBundle& data, const fs::path& out_dir,
                                      const TrainOptions& options) {
  std::vector<AblationRow> rows;
  for (int n = 1; n <= 5; ++n) {
    ExperimentConfig c = config;
    c.ablation = static_cast<AblationLevel>(n);
    c.apply_ablation();
    AblationRow row;
    row.level = c.ablation;
    row.toggles = ComponentToggles::for_level(c.ablation);
    row.config_hash = config_hash_hex(c);
    row.report = run_multiseed(c, data, out_dir / to_string(c.ablation), options);
    rows.push_back(std::move(row));
  }

  std::string csv =
      "level,views,correction,purity,fusion_loss,config_hash,completed_seeds,acc_mean,acc_std,precision_mean,"
      "precision_std,recall_mean,recall_std,f1_mean,f1_std\n";
  std::string md = "| Method | MVFE | PBC | IP | Lf | ACC | P | R | F1 |\n|---|---|---|---|---|---|---|---|---|\n";
  auto mark = [](bool b) { return b ? "x" : ""; };
  for (const auto& r : rows) {
    const auto& m = r.report;
    csv += to_string(r.level) + "," + (r.toggles.views ? "1" : "0") + "," + (r.toggles.correction ? "1" : "0") + "," +
           (r.toggles.purity ? "1" : "0") + "," + (r.toggles.fusion_loss ? "1" : "0") + "," + r.config_hash + "," +
           std::to_string(m.completed()) + "," + format_fixed4(m.accuracy.mean) + "," + format_fixed4(m.accuracy.stddev) +
           "," + format_fixed4(m.precision.mean) + "," + format_fixed4(m.precision.stddev) + "," +
           format_fixed4(m.recall.mean) + "," + format_fixed4(m.recall.stddev) + "," + format_fixed4(m.f1.mean) + "," +
           format_fixed4(m.f1.stddev) + "\n";
    md += "| " + to_string(r.level) + " | " + mark(r.toggles.views) + " | " + mark(r.toggles.correction) + " | " +
          mark(r.toggles.purity) + " | " + mark(r.toggles.fusion_loss) + " | " + m.table_row() + " |\n";
  }
  md += "\nmean_{±std} over completed seeds (population std), test split, percent.\n";
  write_text(out_dir / "ablation.csv", csv);
  write_text(out_dir / "ablation.md", md);
  return rows;
}

std::vector<SweepRow> run_sweep_views(const ExperimentConfig& config, std::span<const int> view_counts,
                                      const DatasetBundle& data, const fs::path& out_dir, const TrainOptions& options) {
  if (view_counts.empty()) throw ConfigError("view sweep needs at least one K");
  for (int k : view_counts) {
    if (k < 1) throw ConfigError("view counts must be >= 1, got " + std::to_string(k));
  }
  std::vector<SweepRow> rows;
  for (int k : view_counts) {
    ExperimentConfig c = config;
    c.model.num_views = k;
    SweepRow row;
    row.num_views = k;
    row.config_hash = config_hash_hex(with_ablation(c));
    row.report = run_multiseed(c, data, out_dir / ("num_views_" + std::to_string(k)), options);
    rows.push_back(std::move(row));
  }
  std::string csv =
      "num_views,config_hash,completed_seeds,acc_mean,acc_std,precision_mean,precision_std,recall_mean,recall_std,"
      "f1_mean,f1_std\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    csv += std::to_string(r.num_views) + "," + r.config_hash + "," + std::to_string(m.completed()) + "," +
           format_fixed4(m.accuracy.mean) + "," + format_fixed4(m.accuracy.stddev) + "," +
           format_fixed4(m.precision.mean) + "," + format_fixed4(m.precision.stddev) + "," +
           format_fixed4(m.recall.mean) + "," + format_fixed4(m.recall.stddev) + "," + format_fixed4(m.f1.mean) + "," +
           format_fixed4(m.f1.stddev) + "\n";
  }
  write_text(out_dir / "sweep.csv", csv);
  return rows;
}

std::vector<int> parse_view_list(std::string_view text) {
  std::vector<int> out;
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("invalid view list '" + std::string(text) + "'");
    }
    return v;
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view part = text.substr(start, comma - start);
    if (const auto dots = part.find(".."); dots != std::string_view::npos) {
      const int lo = parse_int(part.substr(0, dots));
      const int hi = parse_int(part.substr(dots + 2));
      if (lo > hi) throw ConfigError("empty view range '" + std::string(part) + "'");
      for (int k = lo; k <= hi; ++k) out.push_back(k);
    } else {
      out.push_back(parse_int(part));
    }
    start = comma + 1;
  }
  for (int k : out) {
    if (k < 1) throw ConfigError("view counts must be >= 1");
  }
  return out;
}

void write_run_manifest(const fs::path& out_dir, const ExperimentConfig& config, const std::string& command,
                        const IntegrityReport* integrity) {
  const fs::path path = out_dir / "manifest.json";
  if (fs::exists(path)) {
    throw ConfigError("run manifest already exists at " + path.string() + "; choose a fresh --out directory");
  }
  const ExperimentConfig resolved = with_ablation(config);
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = tool_version();
  j["git_state"] = git_state();
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp"] = stamp;
  j["seeds"] = resolved.seeds;
  j["config_hash"] = config_hash_hex(resolved);
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& k : config_keys()) cfg[k.key] = k.get(resolved);
  cfg["data.root"] = resolved.resolved_root().string();
  cfg["data.split_dir"] = resolved.resolved_split_dir().string();
  cfg["model.enable_views"] = resolved.model.enable_views;
  cfg["model.enable_correction"] = resolved.model.enable_correction;
  cfg["loss.enable_ip"] = resolved.loss.enable_ip;
  cfg["loss.enable_lf"] = resolved.loss.enable_lf;
  j["config"] = cfg;
  if (integrity != nullptr) j["dataset_integrity"] = nlohmann::json::parse(integrity->json());
  write_text(path, j.dump(2) + "\n");
}

}  // namespace pemv
