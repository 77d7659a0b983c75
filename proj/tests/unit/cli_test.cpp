#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pemv/data.hpp"
#include "pemv/synthetic.hpp"
#include "pemv_cli/cli.hpp"
#include "test_support.hpp"

namespace pemv::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pemv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TEST(FlagRegistry, EveryFlagIsDocumentedInHelp) {
  Options options;
  auto app = build_app(options);
  const auto subs = app->get_subcommands({});
  ASSERT_EQ(subs.size(), 7u);
  for (const auto* sub : subs) {
    const std::string help = sub->help();
    for (const auto* opt : sub->get_options()) {
      EXPECT_FALSE(opt->get_description().empty()) << sub->get_name() << " " << opt->get_name();
      for (const auto& name : opt->get_lnames()) {
        EXPECT_NE(help.find("--" + name), std::string::npos) << sub->get_name() << " --" << name;
      }
      const std::string def = opt->get_default_str();
      if (!def.empty() && opt->get_expected_min() > 0) {
        EXPECT_NE(help.find("[" + def + "]"), std::string::npos) << sub->get_name() << " " << opt->get_name();
      }
    }
    if (sub->get_name() == "split") continue;
    for (const char* common : {"--config", "--set", "--seed", "--out", "--quiet"}) {
      EXPECT_NE(help.find(common), std::string::npos) << sub->get_name() << " " << common;
    }
  }
}

TEST(FlagRegistry, HelpShowsDefaults) {
  const Result r = invoke({"oracle", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("[1000]"), std::string::npos) << r.out;
  const Result s = invoke({"sweep", "--help"});
  EXPECT_NE(s.out.find("[1..9]"), std::string::npos) << s.out;
}

TEST(ExitCodes, UsageErrors) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"bogus"}).code, kUsage);
  EXPECT_EQ(invoke({"oracle", "--trials", "0"}).code, kUsage);
  EXPECT_EQ(invoke({"train", "--undocumented"}).code, kUsage);
  EXPECT_EQ(invoke({"verify", "--data-root", "/definitely/not/here"}).code, kUsage);
  EXPECT_EQ(invoke({"eval"}).code, kUsage);
  EXPECT_EQ(invoke({"eval", "--checkpoint", "/no/such.bin"}).code, kUsage);
  const Result unknown = invoke({"train", "--set", "model.nope=1"});
  EXPECT_EQ(unknown.code, kUsage);
  EXPECT_NE(unknown.err.find("model.num_views"), std::string::npos) << unknown.err;
}

TEST(Oracle, DefaultRunPassesAndIsReproducible) {
  const Result a = invoke({"oracle"});
  const Result b = invoke({"oracle"});
  EXPECT_EQ(a.code, kSuccess);
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("worst discrepancy"), std::string::npos);
  EXPECT_NE(a.out.find("witness"), std::string::npos);
  const fs::path out = testing::scratch_dir("cli_oracle");
  EXPECT_EQ(invoke({"oracle", "--trials", "50", "--seed", "3", "--out", out.string()}).code, kSuccess);
  EXPECT_EQ(nlohmann::json::parse(slurp(out / "oracle.json"))["trials"], 50);
}

class CliData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(testing::scratch_dir("cli_data"));
    write_synthetic_dataset(*root_, {8, 4, 4, 64, 1});
  }
  static void TearDownTestSuite() { delete root_; }
  static fs::path* root_;

  static std::vector<std::string> tiny(std::vector<std::string> args) {
    for (const char* s : {"data.image_size=64", "model.backbone_width=4", "model.global_dim=8", "model.view_dim=4",
                          "train.batch_size=4", "train.epochs=1"}) {
      args.push_back("--set");
      args.push_back(s);
    }
    args.push_back("--set");
    args.push_back("data.root=" + root_->string());
    args.push_back("--quiet");
    return args;
  }
};

fs::path* CliData::root_ = nullptr;

TEST(Split, WritesADisjointSeededPartitionOnce) {
  const fs::path dir = testing::scratch_dir("cli_split");
  {
    std::ofstream pool(dir / "trainval.txt");
    for (int i = 0; i < 50; ++i) pool << "img/" << i << ".png " << i % 2 << "\n";
  }
  const auto args = std::vector<std::string>{"split", "--pool", (dir / "trainval.txt").string(), "--out",
                                             (dir / "a").string()};
  ASSERT_EQ(invoke(args).code, kSuccess);
  const SplitManifest train = parse_split_file(dir / "a" / "train.txt", Split::kTrain);
  const SplitManifest val = parse_split_file(dir / "a" / "val.txt", Split::kVal);
  EXPECT_EQ(train.size(), 40u);
  EXPECT_EQ(val.size(), 10u);
  EXPECT_TRUE(verify_dataset({train, val}, {}).ok());

  ASSERT_EQ(invoke({"split", "--pool", (dir / "trainval.txt").string(), "--out", (dir / "b").string(), "--seed",
                    "0"}).code,
            kSuccess);
  EXPECT_EQ(slurp(dir / "a" / "train.txt"), slurp(dir / "b" / "train.txt"));
  EXPECT_EQ(invoke(args).code, kUsage);
  EXPECT_EQ(invoke({"split", "--pool", (dir / "missing.txt").string(), "--out", (dir / "c").string()}).code, kUsage);
}

TEST_F(CliData, VerifyPassesAndFlagsOverlaps) {
  EXPECT_EQ(invoke({"verify", "--data-root", root_->string()}).code, kSuccess);
  const fs::path bad = testing::scratch_dir("cli_overlap");
  fs::create_directories(bad / "splits");
  std::ofstream(bad / "splits" / "train.txt") << "x.png 0\ny.png 1\n";
  std::ofstream(bad / "splits" / "val.txt") << "z.png 0\n";
  std::ofstream(bad / "splits" / "test.txt") << "y.png 1\n";
  const Result r = invoke({"verify", "--data-root", bad.string()});
  EXPECT_EQ(r.code, kFailure);
  EXPECT_NE(r.out.find("y.png"), std::string::npos) << r.out;
}

TEST_F(CliData, TrainRecordsOverridesThenEvalReadsTheCheckpoint) {
  const fs::path out = testing::scratch_dir("cli_train");
  const auto args = tiny({"train", "--seed", "2", "--set", "loss.lambda_f=0", "--out", out.string()});
  const Result r = invoke(args);
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["config"]["loss.lambda_f"], "0");
  EXPECT_EQ(manifest["seeds"], nlohmann::json::array({2}));
  EXPECT_TRUE(manifest.contains("dataset_integrity"));
  EXPECT_TRUE(fs::exists(out / "seed_2" / "checkpoint.bin"));
  EXPECT_EQ(invoke(args).code, kUsage);  // manifest already present

  const fs::path eval_out = testing::scratch_dir("cli_eval");
  const Result e = invoke({"eval", "--checkpoint", (out / "seed_2" / "checkpoint.bin").string(), "--out",
                           eval_out.string(), "--set", "data.root=" + root_->string()});
  EXPECT_EQ(e.code, kSuccess) << e.err;
  EXPECT_NE(e.out.find("test: ACC"), std::string::npos);
  EXPECT_TRUE(fs::exists(eval_out / "metrics.csv"));
}

TEST_F(CliData, SweepWritesOneRowPerK) {
  const fs::path out = testing::scratch_dir("cli_sweep");
  const Result r = invoke(tiny({"sweep", "--views", "1,2", "--seed", "0", "--out", out.string()}));
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
  EXPECT_TRUE(fs::exists(out / "num_views_1" / "aggregate.json"));
  EXPECT_EQ(invoke(tiny({"sweep", "--views", "0..2", "--out", (out / "x").string()})).code, kUsage);
}

}  // namespace
}  // namespace pemv::cli
