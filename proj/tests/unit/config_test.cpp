#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "pemv/config.hpp"
#include "pemv/error.hpp"
#include "test_support.hpp"

namespace pemv {
namespace {

TEST(Defaults, MatchTheReferenceProtocol) {
  const ExperimentConfig c;
  EXPECT_EQ(c.model.num_views, 3);
  EXPECT_EQ(c.model.global_dim, 256);
  EXPECT_EQ(c.model.view_dim, 128);
  EXPECT_EQ(c.model.gamma_align, 0.5);
  EXPECT_EQ(c.model.gamma_contrast, 0.1);
  EXPECT_EQ(c.model.prototype_momentum, 0.9);
  EXPECT_EQ(c.loss.lambda_f, 0.5);
  EXPECT_EQ(c.loss.mu_ip, 0.1);
  EXPECT_EQ(c.optimizer.learning_rate, 1e-4);
  EXPECT_EQ(c.train.batch_size, 16);
  EXPECT_EQ(c.data.preprocess.size, 128);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(c.ablation, AblationLevel::kAB5);
  EXPECT_NO_THROW(c.validate());
}

TEST(Ablation, ComponentSetsGrowStrictly) {
  int previous = -1;
  ComponentToggles before{};
  for (int n = 1; n <= 5; ++n) {
    const ComponentToggles t = ComponentToggles::for_level(static_cast<AblationLevel>(n));
    EXPECT_EQ(t.enabled_count(), n - 1);
    EXPECT_GT(t.enabled_count(), previous);
    EXPECT_GE(t.views, before.views);
    EXPECT_GE(t.correction, before.correction);
    EXPECT_GE(t.purity, before.purity);
    EXPECT_GE(t.fusion_loss, before.fusion_loss);
    previous = t.enabled_count();
    before = t;
  }
  const auto ab1 = ComponentToggles::for_level(AblationLevel::kAB1);
  EXPECT_FALSE(ab1.views || ab1.correction || ab1.purity || ab1.fusion_loss);
  const auto ab2 = ComponentToggles::for_level(AblationLevel::kAB2);
  EXPECT_TRUE(ab2.views);
  EXPECT_FALSE(ab2.correction);
}

TEST(Ablation, LabelsRoundTrip) {
  for (int n = 1; n <= 5; ++n) {
    const auto level = static_cast<AblationLevel>(n);
    EXPECT_EQ(parse_ablation_level(to_string(level)), level);
  }
  EXPECT_EQ(parse_ablation_level("ab3"), AblationLevel::kAB3);
  EXPECT_THROW(parse_ablation_level("AB6"), ConfigError);
}

TEST(Parse, CommentsBlankLinesAndOverrides) {
  const ExperimentConfig c = parse_config_text(
      "# comment\n\nmodel.num_views = 5   # trailing\nloss.lambda_f=0.25\nexperiment.seeds=3,7\n"
      "experiment.ablation=AB2\n");
  EXPECT_EQ(c.model.num_views, 5);
  EXPECT_EQ(c.loss.lambda_f, 0.25);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3, 7}));
  EXPECT_EQ(c.ablation, AblationLevel::kAB2);
  EXPECT_TRUE(c.model.enable_views);
  EXPECT_FALSE(c.model.enable_correction);
}

TEST(Parse, UnknownKeyListsValidKeys) {
  try {
    parse_config_text("model.views=3\n", "run.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.cfg:1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("model.views"), std::string::npos);
    for (const auto& k : config_keys()) EXPECT_NE(msg.find(k.key), std::string::npos) << k.key;
  }
}

TEST(Parse, BadValuesAreRejected) {
  ExperimentConfig c;
  EXPECT_THROW(apply_assignment(c, "model.num_views=three"), ConfigError);
  EXPECT_THROW(apply_assignment(c, "loss.lambda_f=abc"), ConfigError);
  EXPECT_THROW(apply_assignment(c, "augment.enabled=maybe"), ConfigError);
  EXPECT_THROW(apply_assignment(c, "experiment.seeds=-1"), ConfigError);
  EXPECT_THROW(apply_assignment(c, "no_equals_sign"), ConfigError);
  apply_assignment(c, "model.num_views=0");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Parse, ImageSizeDrivesTheBackboneInput) {
  ExperimentConfig c;
  apply_assignment(c, "data.image_size=96");
  EXPECT_EQ(c.data.preprocess.size, 96);
  EXPECT_EQ(c.model.backbone.input_size, 96);
  EXPECT_NO_THROW(c.validate());
}

TEST(Render, RoundTripsEveryKey) {
  ExperimentConfig c;
  apply_assignment(c, "model.gamma_align=0.3");
  apply_assignment(c, "data.mean=0.1,0.2,0.3");
  apply_assignment(c, "optim.lr=3e-4");
  apply_assignment(c, "experiment.ablation=AB3");
  apply_assignment(c, "data.root=/data/tn3k");
  const ExperimentConfig back = parse_config_text(render_config(c));
  EXPECT_EQ(render_config(back), render_config(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  std::set<std::string> keys;
  for (const auto& k : config_keys()) EXPECT_TRUE(keys.insert(k.key).second) << k.key;
  EXPECT_EQ(back.optimizer.learning_rate, 3e-4);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

TEST(Hash, IsFnv1aOverSortedEntries) {
  ExperimentConfig c;
  std::string text;
  const auto entries = hashed_entries(c);
  EXPECT_TRUE(std::is_sorted(entries.begin(), entries.end()));
  for (const auto& [k, v] : entries) text += k + "=" + v + "\n";
  EXPECT_EQ(config_hash(c), fnv1a(text));
  EXPECT_EQ(config_hash_hex(c).size(), 16u);
}

TEST(Hash, IgnoresPathsSeedsAndOutputButTracksModelSettings) {
  const ExperimentConfig base;
  const std::uint64_t h = config_hash(base);
  for (const char* a : {"data.root=/elsewhere", "data.split_dir=/x/splits", "experiment.seeds=9",
                        "output.dir=/tmp/runs"}) {
    ExperimentConfig c;
    apply_assignment(c, a);
    EXPECT_EQ(config_hash(c), h) << a;
  }
  for (const char* a : {"model.num_views=4", "loss.lambda_f=0", "optim.lr=0.001", "augment.enabled=false",
                        "experiment.ablation=AB4", "data.dataset=tn5000", "model.backbone_width=32"}) {
    ExperimentConfig c;
    apply_assignment(c, a);
    EXPECT_NE(config_hash(c), h) << a;
  }
}

TEST(Hash, DependsOnValuesNotFileLayout) {
  const ExperimentConfig a = parse_config_text("model.num_views=4\nloss.mu_ip=0.2\n");
  const ExperimentConfig b = parse_config_text("# other order\nloss.mu_ip = 0.20\n\nmodel.num_views=4\n");
  EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(LoadConfig, FileThenOverrides) {
  const auto dir = testing::scratch_dir("load_config");
  std::ofstream(dir / "run.cfg") << "model.num_views=5\nloss.lambda_f=0.5\n";
  const ExperimentConfig c = load_config(dir / "run.cfg", {"loss.lambda_f=0", "train.epochs=3"});
  EXPECT_EQ(c.model.num_views, 5);
  EXPECT_EQ(c.loss.lambda_f, 0.0);
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_THROW(load_config(dir / "missing.cfg"), ConfigError);
}

TEST(Paths, EnvironmentFallbackForTheDatasetRoot) {
  ExperimentConfig c;
  ::setenv("PEMV_DATA_ROOT", "/env/root", 1);
  EXPECT_EQ(c.resolved_root(), std::filesystem::path("/env/root"));
  EXPECT_EQ(c.resolved_split_dir(), std::filesystem::path("/env/root/splits"));
  c.data.root = "/cfg/root";
  EXPECT_EQ(c.resolved_root(), std::filesystem::path("/cfg/root"));
  c.data.split_dir = "/cfg/splits";
  EXPECT_EQ(c.resolved_split_dir(), std::filesystem::path("/cfg/splits"));
  ::unsetenv("PEMV_DATA_ROOT");
  EXPECT_TRUE(ExperimentConfig{}.resolved_root().empty());
}

TEST(ShippedConfigs, LoadAndValidate) {
  const std::filesystem::path dir = PEMV_CONFIG_DIR;
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".cfg") continue;
    ++seen;
    ExperimentConfig c;
    EXPECT_NO_THROW(c = load_config(entry.path())) << entry.path();
    c.apply_ablation();
    EXPECT_NO_THROW(c.validate()) << entry.path();
  }
  EXPECT_GE(seen, 3);
  // The dataset configs spell out the defaults; only paths differ.
  const ExperimentConfig tn3k = load_config(dir / "tn3k.cfg");
  EXPECT_EQ(config_hash(tn3k), config_hash(ExperimentConfig{}));
}

}  // namespace
}  // namespace pemv
