#include "pemv_cli/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <ostream>
#include <sstream>

#include "pemv/checkpoint.hpp"
#include "pemv/config.hpp"
#include "pemv/data.hpp"
#include "pemv/error.hpp"
#include "pemv/experiment.hpp"
#include "pemv/frontdoor.hpp"

namespace pemv::cli {

namespace fs = std::filesystem;

namespace {

// Thrown for argument problems detected after parsing.
struct UsageError : Error {
  using Error::Error;
};

void add_common(CLI::App& cmd, Options& o) {
  cmd.add_option("--config", o.config_path, "Config file with key=value lines")->capture_default_str();
  cmd.add_option("--set", o.overrides, "Override a config key, KEY=VALUE (repeatable)")->take_all();
  cmd.add_option("--seed", o.seed, "Run a single seed instead of experiment.seeds (-1 keeps the list)")
      ->capture_default_str();
  cmd.add_option("--out", o.out_dir, "Output directory (empty uses output.dir)")->capture_default_str();
  cmd.add_flag("--quiet", o.quiet, "Suppress progress output")->capture_default_str();
}

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    if (!fs::is_regular_file(o.config_path)) throw UsageError("config file not found: " + o.config_path);
    cfg = load_config(o.config_path, o.overrides);
  } else {
    for (const auto& s : o.overrides) apply_assignment(cfg, s);
  }
  if (o.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(o.seed)};
  cfg.apply_ablation();
  cfg.validate();
  return cfg;
}

fs::path resolve_out(const Options& o, const ExperimentConfig& cfg) {
  return o.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(o.out_dir);
}

std::string join_command(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i > 0) s += ' ';
    s += argv[i];
  }
  return s;
}

DatasetBundle checked_bundle(const ExperimentConfig& cfg, IntegrityReport& integrity) {
  const fs::path root = cfg.resolved_root();
  if (root.empty()) throw UsageError("no dataset root: set data.root or PEMV_DATA_ROOT");
  if (!fs::is_directory(root)) throw UsageError("dataset root not found: " + root.string());
  const fs::path split_dir = cfg.resolved_split_dir();
  if (!fs::is_directory(split_dir)) throw UsageError("split directory not found: " + split_dir.string());
  DatasetBundle bundle = DatasetBundle::from_config(cfg);
  integrity = verify_dataset({bundle.train, bundle.val, bundle.test}, bundle.root);
  return bundle;
}

int cmd_verify(const Options& o, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(o);
  if (!o.data_root.empty()) cfg.data.root = o.data_root;
  if (!o.split_dir.empty()) cfg.data.split_dir = o.split_dir;
  IntegrityReport report;
  checked_bundle(cfg, report);
  out << report.text();
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    std::ofstream(fs::path(o.out_dir) / "integrity.json") << report.json() << "\n";
  }
  return report.ok() ? kSuccess : kFailure;
}

struct Prepared {
  ExperimentConfig cfg;
  DatasetBundle data;
  fs::path out;
};

// Resolves config and data, checks integrity and writes the run manifest.
Prepared prepare_run(const Options& o, const std::string& command, std::ostream& out) {
  Prepared p;
  p.cfg = resolve_config(o);
  IntegrityReport integrity;
  p.data = checked_bundle(p.cfg, integrity);
  p.out = resolve_out(o, p.cfg);
  if (!integrity.ok()) {
    out << integrity.text();
    throw DataError("dataset integrity check failed");
  }
  fs::create_directories(p.out);
  write_run_manifest(p.out, p.cfg, command, &integrity);
  return p;
}

void print_warnings(const MetricsReport& r, std::ostream& err) {
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
}

int cmd_train(const Options& o, const std::string& command, std::ostream& out, std::ostream& err) {
  const Prepared p = prepare_run(o, command, out);
  TrainOptions opts;
  opts.progress = o.quiet ? nullptr : &err;
  const MetricsReport report = run_multiseed(p.cfg, p.data, p.out, opts);
  print_warnings(report, err);
  out << "config " << report.config_hash << "  seeds " << report.completed() << "/" << report.runs.size() << "\n";
  out << "test ACC | P | R | F1: " << report.table_row() << "\n";
  out << "artifacts in " << p.out.string() << "\n";
  return report.completed() > 0 ? kSuccess : kFailure;
}

int cmd_ablate(const Options& o, const std::string& command, std::ostream& out, std::ostream& err) {
  const Prepared p = prepare_run(o, command, out);
  TrainOptions opts;
  opts.progress = o.quiet ? nullptr : &err;
  const auto rows = run_ablation(p.cfg, p.data, p.out, opts);
  bool ok = true;
  for (const auto& r : rows) {
    print_warnings(r.report, err);
    out << to_string(r.level) << "  " << r.report.table_row() << "\n";
    ok = ok && r.report.completed() > 0;
  }
  out << "table in " << (p.out / "ablation.md").string() << "\n";
  return ok ? kSuccess : kFailure;
}

int cmd_sweep(const Options& o, const std::string& command, std::ostream& out, std::ostream& err) {
  std::vector<int> views;
  try {
    views = parse_view_list(o.views);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const Prepared p = prepare_run(o, command, out);
  TrainOptions opts;
  opts.progress = o.quiet ? nullptr : &err;
  const auto rows = run_sweep_views(p.cfg, views, p.data, p.out, opts);
  bool ok = true;
  for (const auto& r : rows) {
    print_warnings(r.report, err);
    out << "K=" << r.num_views << "  " << r.report.table_row() << "\n";
    ok = ok && r.report.completed() > 0;
  }
  out << "sweep data in " << (p.out / "sweep.csv").string() << "\n";
  return ok ? kSuccess : kFailure;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (!fs::is_regular_file(o.checkpoint)) throw UsageError("checkpoint not found: " + o.checkpoint);
  LoadedCheckpoint ckpt = load_checkpoint(o.checkpoint);
  ExperimentConfig cfg = ckpt.config;
  if (!o.config_path.empty()) {
    const ExperimentConfig file_cfg = load_config(o.config_path);
    cfg.data.root = file_cfg.data.root;
    cfg.data.split_dir = file_cfg.data.split_dir;
  }
  for (const auto& s : o.overrides) {
    const auto key = s.substr(0, s.find('='));
    if (key != "data.root" && key != "data.split_dir" && key != "train.batch_size") {
      throw UsageError("eval only accepts data.root, data.split_dir and train.batch_size overrides, got " + key);
    }
    apply_assignment(cfg, s);
  }
  IntegrityReport integrity;
  const DatasetBundle data = checked_bundle(cfg, integrity);
  if (!integrity.ok()) {
    out << integrity.text();
    return kFailure;
  }
  std::string csv = "seed,split,acc,precision,recall,f1\n";
  for (const auto* m : {&data.val, &data.test}) {
    if (m->size() == 0) continue;
    const SplitEvaluation ev = evaluate(*ckpt.model, *m, data.root, cfg.data.preprocess, cfg.train.batch_size);
    const std::string split = to_string(m->split);
    out << split << ": ACC " << format_fixed4(ev.metrics.accuracy) << "  P " << format_fixed4(ev.metrics.precision)
        << "  R " << format_fixed4(ev.metrics.recall) << "  F1 " << format_fixed4(ev.metrics.f1) << "  (n=" << m->size()
        << ")\n";
    csv += std::to_string(ckpt.seed) + "," + split + "," + format_fixed4(ev.metrics.accuracy) + "," +
           format_fixed4(ev.metrics.precision) + "," + format_fixed4(ev.metrics.recall) + "," +
           format_fixed4(ev.metrics.f1) + "\n";
  }
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    std::ofstream(fs::path(o.out_dir) / "metrics.csv") << csv;
  }
  return kSuccess;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  const std::uint64_t seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : 0;
  const frontdoor::SoundnessReport report = frontdoor::run_soundness_suite(o.trials, seed);
  out << report.text();
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    std::ofstream(fs::path(o.out_dir) / "oracle.json") << report.json() << "\n";
  }
  return report.sound() && report.witness_found() ? kSuccess : kFailure;
}

// Partitions a labelled pool (TN3K's official training list) into train.txt
// and val.txt. --seed 0 is the reference partition.
int cmd_split(const Options& o, std::ostream& out) {
  if (o.out_dir.empty()) throw UsageError("split needs --out");
  const fs::path dir(o.out_dir);
  for (const char* name : {"train.txt", "val.txt"}) {
    if (fs::exists(dir / name)) throw UsageError((dir / name).string() + " already exists");
  }
  if (!fs::is_regular_file(o.pool)) throw UsageError("pool file not found: " + o.pool);
  const std::uint64_t seed = o.seed >= 0 ? static_cast<std::uint64_t>(o.seed) : 0;
  const SplitManifest pool = parse_split_file(o.pool, Split::kTrain);
  auto [train, val] = split_train_val(pool, o.train_fraction, seed);
  fs::create_directories(dir);
  write_split_file(dir / "train.txt", train);
  write_split_file(dir / "val.txt", val);
  out << "train: " << train.size() << " images\nval: " << val.size() << " images\n";
  return kSuccess;
}

}  // namespace

std::unique_ptr<CLI::App> build_app(Options& o) {
  auto app = std::make_unique<CLI::App>("Prototype-enhanced multi-view nodule classification", "pemv");
  app->set_version_flag("--version", tool_version());
  app->require_subcommand(1);

  auto* verify = app->add_subcommand("verify", "Check split files, image presence and split disjointness");
  add_common(*verify, o);
  verify->add_option("--data-root", o.data_root, "Dataset root (empty uses data.root or PEMV_DATA_ROOT)")
      ->capture_default_str();
  verify->add_option("--split-dir", o.split_dir, "Directory holding train/val/test.txt (empty uses <root>/splits)")
      ->capture_default_str();

  auto* train = app->add_subcommand("train", "Train and evaluate over the configured seeds");
  add_common(*train, o);

  auto* eval = app->add_subcommand("eval", "Evaluate a checkpoint on the validation and test splits");
  add_common(*eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train")->required()->capture_default_str();

  auto* ablate = app->add_subcommand("ablate", "Run the AB1-AB5 component ladder");
  add_common(*ablate, o);

  auto* sweep = app->add_subcommand("sweep", "Sweep the number of views");
  add_common(*sweep, o);
  sweep->add_option("--views", o.views, "View counts, e.g. 1..9 or 1,3,5")->capture_default_str();

  auto* oracle = app->add_subcommand("oracle", "Check the front-door estimator against interventional truth");
  add_common(*oracle, o);
  oracle->add_option("--trials", o.trials, "Number of random structural causal models")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* split = app->add_subcommand("split", "Partition a labelled pool into train.txt and val.txt");
  split->add_option("--pool", o.pool, "Split file with every train+val entry")->required()->capture_default_str();
  split->add_option("--train-fraction", o.train_fraction, "Fraction of the pool kept for training")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  split->add_option("--seed", o.seed, "Shuffle seed (-1 uses 0)")->capture_default_str();
  split->add_option("--out", o.out_dir, "Directory for train.txt and val.txt")->required()->capture_default_str();
  return app;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options options;
  auto app = build_app(options);
  try {
    app->parse(argc, argv);
  } catch (const CLI::Success& e) {
    std::ostringstream help_out;
    std::ostringstream help_err;
    const int code = app->exit(e, help_out, help_err);
    out << help_out.str();
    err << help_err.str();
    return code;
  } catch (const CLI::ParseError& e) {
    std::ostringstream help_out;
    std::ostringstream help_err;
    app->exit(e, help_out, help_err);
    out << help_out.str();
    err << help_err.str();
    return kUsage;
  }

  const std::string command = join_command(argc, argv);
  const CLI::App* sub = app->get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (name == "verify") return cmd_verify(options, out);
    if (name == "train") return cmd_train(options, command, out, err);
    if (name == "eval") return cmd_eval(options, out);
    if (name == "ablate") return cmd_ablate(options, command, out, err);
    if (name == "sweep") return cmd_sweep(options, command, out, err);
    if (name == "oracle") return cmd_oracle(options, out);
    if (name == "split") return cmd_split(options, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace pemv::cli
