#include "pemv/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pemv/error.hpp"

namespace pemv {

namespace fs = std::filesystem;

std::string to_string(AblationLevel level) { return "AB" + std::to_string(static_cast<int>(level)); }

AblationLevel parse_ablation_level(std::string_view text) {
  if (text.size() == 3 && (text[0] == 'A' || text[0] == 'a') && (text[1] == 'B' || text[1] == 'b') &&
      text[2] >= '1' && text[2] <= '5') {
    return static_cast<AblationLevel>(text[2] - '0');
  }
  throw ConfigError("ablation level must be one of AB1..AB5, got '" + std::string(text) + "'");
}

ComponentToggles ComponentToggles::for_level(AblationLevel level) {
  const int n = static_cast<int>(level);
  return {n >= 2, n >= 3, n >= 4, n >= 5};
}

void ExperimentConfig::apply_ablation() {
  const ComponentToggles t = ComponentToggles::for_level(ablation);
  model.enable_views = t.views;
  model.enable_correction = t.correction;
  loss.enable_ip = t.purity;
  loss.enable_lf = t.fusion_loss;
}

void ExperimentConfig::validate() const {
  model.validate();
  loss.validate();
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("optim.lr must be > 0");
  if (optimizer.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("optim.beta1 / optim.beta2 must lie in [0, 1)");
  }
  if (data.preprocess.size != model.backbone.input_size) {
    throw ConfigError("data.image_size and the backbone input size disagree");
  }
  for (double s : data.preprocess.normalization.stddev) {
    if (!(s > 0.0)) throw ConfigError("data.std entries must be > 0");
  }
}

fs::path ExperimentConfig::resolved_root() const {
  if (!data.root.empty()) return data.root;
  if (const char* env = std::getenv("PEMV_DATA_ROOT"); env != nullptr && *env != '\0') return env;
  return {};
}

fs::path ExperimentConfig::resolved_split_dir() const {
  if (!data.split_dir.empty()) return data.split_dir;
  const fs::path root = resolved_root();
  return root.empty() ? fs::path{} : root / "splits";
}

std::string format_real(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " + what);
}

double parse_real(std::string_view key, std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a real number");
  return out;
}

long long parse_integer(std::string_view key, std::string_view v) {
  v = trim(v);
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

int parse_int(std::string_view key, std::string_view v) { return static_cast<int>(parse_integer(key, v)); }

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    parts.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

std::array<double, 3> parse_triple(std::string_view key, std::string_view v) {
  const auto parts = split_list(v);
  std::array<double, 3> out{};
  if (parts.size() == 1) {
    out.fill(parse_real(key, parts[0]));
  } else if (parts.size() == 3) {
    for (std::size_t i = 0; i < 3; ++i) out[i] = parse_real(key, parts[i]);
  } else {
    bad_value(key, v, "one or three comma-separated reals");
  }
  return out;
}

std::string render_triple(const std::array<double, 3>& t) {
  return format_real(t[0]) + "," + format_real(t[1]) + "," + format_real(t[2]);
}

std::string render_bool(bool b) { return b ? "true" : "false"; }

using Cfg = ExperimentConfig;


template <typename Ref>
ConfigKey make_real(std::string key, std::string description, Ref ref, bool hashed = true) {
  return {key, std::move(description),
          [ref](const Cfg& c) { return format_real(ref(const_cast<Cfg&>(c))); },
          [ref, key](Cfg& c, std::string_view v) { ref(c) = parse_real(key, v); }, hashed};
}

template <typename Ref>
ConfigKey make_int(std::string key, std::string description, Ref ref, bool hashed = true) {
  return {key, std::move(description),
          [ref](const Cfg& c) { return std::to_string(ref(const_cast<Cfg&>(c))); },
          [ref, key](Cfg& c, std::string_view v) { ref(c) = parse_int(key, v); }, hashed};
}

template <typename Ref>
ConfigKey make_bool(std::string key, std::string description, Ref ref, bool hashed = true) {
  return {key, std::move(description),
          [ref](const Cfg& c) { return render_bool(ref(const_cast<Cfg&>(c))); },
          [ref, key](Cfg& c, std::string_view v) { ref(c) = parse_bool(key, v); }, hashed};
}

template <typename Ref>
ConfigKey make_string(std::string key, std::string description, Ref ref, bool hashed = true) {
  return {key, std::move(description),
          [ref](const Cfg& c) { return ref(const_cast<Cfg&>(c)); },
          [ref](Cfg& c, std::string_view v) { ref(c) = std::string(trim(v)); }, hashed};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back(make_string("data.dataset", "dataset identifier (tn3k, tn5000, or any label)",
                          [](Cfg& c) -> std::string& { return c.data.dataset; }));
  k.push_back(make_string("data.root", "dataset root; images resolve as <root>/<relative_path> (default $PEMV_DATA_ROOT)",
                          [](Cfg& c) -> std::string& { return c.data.root; }, false));
  k.push_back(make_string("data.split_dir", "directory holding train.txt / val.txt / test.txt (default <root>/splits)",
                          [](Cfg& c) -> std::string& { return c.data.split_dir; }, false));
  k.push_back({"data.image_size", "square input resolution",
               [](const Cfg& c) { return std::to_string(c.data.preprocess.size); },
               [](Cfg& c, std::string_view v) {
                 c.data.preprocess.size = parse_int("data.image_size", v);
                 c.model.backbone.input_size = c.data.preprocess.size;
               }});
  k.push_back({"data.mean", "per-channel normalization mean (one value or r,g,b)",
               [](const Cfg& c) { return render_triple(c.data.preprocess.normalization.mean); },
               [](Cfg& c, std::string_view v) { c.data.preprocess.normalization.mean = parse_triple("data.mean", v); }});
  k.push_back({"data.std", "per-channel normalization std (one value or r,g,b)",
               [](const Cfg& c) { return render_triple(c.data.preprocess.normalization.stddev); },
               [](Cfg& c, std::string_view v) { c.data.preprocess.normalization.stddev = parse_triple("data.std", v); }});
  k.push_back(make_bool("augment.enabled", "apply training-only augmentation",
                        [](Cfg& c) -> bool& { return c.data.preprocess.augment.enabled; }));
  k.push_back(make_real("augment.hflip_probability", "horizontal flip probability",
                        [](Cfg& c) -> double& { return c.data.preprocess.augment.hflip_probability; }));
  k.push_back(make_real("augment.rotation_degrees", "maximum absolute rotation in degrees",
                        [](Cfg& c) -> double& { return c.data.preprocess.augment.rotation_degrees; }));
  k.push_back(make_real("augment.brightness", "additive brightness jitter (fraction of range)",
                        [](Cfg& c) -> double& { return c.data.preprocess.augment.brightness; }));
  k.push_back(make_real("augment.contrast", "multiplicative contrast jitter",
                        [](Cfg& c) -> double& { return c.data.preprocess.augment.contrast; }));
  k.push_back(make_int("model.num_views", "number of attention views K (num_att)",
                       [](Cfg& c) -> int& { return c.model.num_views; }));
  k.push_back(make_int("model.global_dim", "global feature dimension",
                       [](Cfg& c) -> int& { return c.model.global_dim; }));
  k.push_back(make_int("model.view_dim", "per-view feature dimension",
                       [](Cfg& c) -> int& { return c.model.view_dim; }));
  k.push_back(make_real("model.gamma_align", "pull of the corrected mediator toward its class prototype",
                        [](Cfg& c) -> double& { return c.model.gamma_align; }));
  k.push_back(make_real("model.gamma_contrast", "push of the corrected mediator away from the other prototype",
                        [](Cfg& c) -> double& { return c.model.gamma_contrast; }));
  k.push_back(make_real("model.prototype_momentum", "EMA momentum of the class prototypes",
                        [](Cfg& c) -> double& { return c.model.prototype_momentum; }));
  k.push_back(make_int("model.num_classes", "number of classes (fixed at 2)",
                       [](Cfg& c) -> int& { return c.model.num_classes; }));
  k.push_back(make_int("model.backbone_width", "channels of the first ResNet-18 stage (64 = standard)",
                       [](Cfg& c) -> int& { return c.model.backbone.base_width; }));
  k.push_back(make_real("loss.lambda_f", "fusion-loss weight lambda",
                        [](Cfg& c) -> double& { return c.loss.lambda_f; }));
  k.push_back(make_real("loss.mu_ip", "information-purity weight",
                        [](Cfg& c) -> double& { return c.loss.mu_ip; }));
  k.push_back(make_real("optim.lr", "AdamW learning rate",
                        [](Cfg& c) -> double& { return c.optimizer.learning_rate; }));
  k.push_back(make_real("optim.weight_decay", "AdamW decoupled weight decay",
                        [](Cfg& c) -> double& { return c.optimizer.weight_decay; }));
  k.push_back(make_real("optim.beta1", "AdamW first-moment decay",
                        [](Cfg& c) -> double& { return c.optimizer.beta1; }));
  k.push_back(make_real("optim.beta2", "AdamW second-moment decay",
                        [](Cfg& c) -> double& { return c.optimizer.beta2; }));
  k.push_back(make_real("optim.eps", "AdamW denominator epsilon",
                        [](Cfg& c) -> double& { return c.optimizer.eps; }));
  k.push_back(make_int("train.batch_size", "mini-batch size",
                       [](Cfg& c) -> int& { return c.train.batch_size; }));
  k.push_back(make_int("train.epochs", "training epochs (best validation accuracy is kept)",
                       [](Cfg& c) -> int& { return c.train.epochs; }));
  k.push_back({"experiment.seeds", "comma-separated run seeds",
               [](const Cfg& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
                 return out;
               },
               [](Cfg& c, std::string_view v) {
                 c.seeds.clear();
                 for (auto part : split_list(v)) {
                   const long long s = parse_integer("experiment.seeds", part);
                   if (s < 0) bad_value("experiment.seeds", v, "non-negative integers");
                   c.seeds.push_back(static_cast<std::uint64_t>(s));
                 }
               },
               false});
  k.push_back({"experiment.ablation", "component level AB1..AB5",
               [](const Cfg& c) { return to_string(c.ablation); },
               [](Cfg& c, std::string_view v) {
                 c.ablation = parse_ablation_level(trim(v));
                 c.apply_ablation();
               },
               false});
  k.push_back(make_string("output.dir", "output directory for run artifacts",
                          [](Cfg& c) -> std::string& { return c.output_dir; }, false));
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& k : config_keys()) {
    if (k.key == key) {
      k.set(config, value);
      return;
    }
  }
  std::string valid;
  for (const auto& k : config_keys()) valid += "\n  " + k.key;
  throw ConfigError("unknown config key '" + std::string(key) + "'; valid keys:" + valid);
}

void apply_assignment(ExperimentConfig& config, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected KEY=VALUE, got '" + std::string(assignment) + "'");
  }
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ExperimentConfig parse_config_text(std::string_view text, const std::string& source) {
  ExperimentConfig config;
  config.apply_ablation();
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    try {
      apply_assignment(config, view);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  ExperimentConfig config;
  config.apply_ablation();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    config = parse_config_text(buf.str(), path.string());
  }
  for (const auto& o : overrides) apply_assignment(config, o);
  config.validate();
  return config;
}

std::string render_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.key + "=" + k.get(config) + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> hashed_entries(const ExperimentConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) {
    if (k.hashed) out.emplace_back(k.key, k.get(config));
  }
  out.emplace_back("model.enable_views", render_bool(config.model.enable_views));
  out.emplace_back("model.enable_correction", render_bool(config.model.enable_correction));
  out.emplace_back("loss.enable_ip", render_bool(config.loss.enable_ip));
  out.emplace_back("loss.enable_lf", render_bool(config.loss.enable_lf));
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  // FNV-1a over the sorted "key=value\n" lines.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : hashed_entries(config)) {
    for (char ch : key + "=" + value + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string config_hash_hex(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  return buf;
}

}  // namespace pemv
