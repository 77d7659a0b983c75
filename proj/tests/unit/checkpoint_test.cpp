#include <gtest/gtest.h>

#include <cstring>

#include "pemv/checkpoint.hpp"
#include "pemv/error.hpp"
#include "test_support.hpp"

namespace pemv {
namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.model.backbone = BackboneConfig{3, 32, 4};
  cfg.data.preprocess.size = 32;
  cfg.model.global_dim = 8;
  cfg.model.view_dim = 4;
  cfg.model.num_views = 2;
  return cfg;
}

PemvModel trained_looking_model(const ExperimentConfig& cfg, Rng& rng) {
  PemvModel model(cfg.model, 21);
  for (auto* p : model.backbone_parameters()) {
    for (float& v : p->value) v += 0.01f * static_cast<float>(rng() % 100) / 100.0f;
  }
  for (auto& s : model.backbone().state()) {
    if (s.name.find("running_var") != std::string::npos) {
      for (float& v : *s.values) v = 1.5f;
    }
  }
  model.prototypes().set(0, testing::random_vector(rng, cfg.model.mediator_dim()));
  model.prototypes().set(1, testing::random_vector(rng, cfg.model.mediator_dim()));
  return model;
}

TEST(Checkpoint, RoundTripReproducesInferenceExactly) {
  const ExperimentConfig cfg = small_config();
  Rng rng(1);
  PemvModel model = trained_looking_model(cfg, rng);
  const std::string bytes = serialize_checkpoint(model, cfg, 3, 17);
  const LoadedCheckpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(back.epoch, 17);
  EXPECT_EQ(back.config_hash, config_hash_hex(cfg));
  std::vector<Image> imgs;
  for (int i = 0; i < 3; ++i) imgs.push_back(testing::random_image(rng, 32));
  const auto a = model.infer(imgs);
  const auto b = back.model->infer(imgs);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].logits.values, b[i].logits.values);
    EXPECT_EQ(a[i].prediction, b[i].prediction);
  }
  EXPECT_EQ(serialize_checkpoint(*back.model, back.config, back.seed, back.epoch), bytes);
}

TEST(Checkpoint, PartiallyInitializedBankSurvives) {
  ExperimentConfig cfg = small_config();
  Rng rng(2);
  PemvModel model(cfg.model, 4);
  model.prototypes().set(1, testing::random_vector(rng, cfg.model.mediator_dim()));
  const LoadedCheckpoint back = deserialize_checkpoint(serialize_checkpoint(model, cfg, 0, 1));
  EXPECT_FALSE(back.model->prototypes().initialized(0));
  ASSERT_TRUE(back.model->prototypes().initialized(1));
  EXPECT_EQ(*back.model->prototypes().prototype(1), *model.prototypes().prototype(1));
}

TEST(Checkpoint, FileRoundTrip) {
  const ExperimentConfig cfg = small_config();
  Rng rng(3);
  PemvModel model = trained_looking_model(cfg, rng);
  const auto dir = testing::scratch_dir("checkpoint_file");
  const std::string bytes = serialize_checkpoint(model, cfg, 1, 2);
  write_checkpoint(dir / "m.bin", bytes);
  EXPECT_EQ(serialize_checkpoint(*load_checkpoint(dir / "m.bin").model, cfg, 1, 2), bytes);
  EXPECT_THROW(load_checkpoint(dir / "absent.bin"), CheckpointError);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const ExperimentConfig cfg = small_config();
  Rng rng(4);
  PemvModel model = trained_looking_model(cfg, rng);
  const std::string bytes = serialize_checkpoint(model, cfg, 0, 1);

  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), CheckpointError);

  bad = bytes;
  bad[8] = 9;  // version
  EXPECT_THROW(deserialize_checkpoint(bad), CheckpointError);

  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 30)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(""), CheckpointError);
}

TEST(Checkpoint, TamperedConfigFailsTheHashCheck) {
  const ExperimentConfig cfg = small_config();
  Rng rng(5);
  PemvModel model = trained_looking_model(cfg, rng);
  std::string bytes = serialize_checkpoint(model, cfg, 0, 1);
  const std::string needle = "model.prototype_momentum=0.9";
  const auto pos = bytes.find(needle);
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, needle.size(), "model.prototype_momentum=0.8");
  try {
    deserialize_checkpoint(bytes);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("hash"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace pemv
