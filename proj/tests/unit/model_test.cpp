#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pemv/error.hpp"
#include "pemv/model.hpp"
#include "test_support.hpp"

namespace pemv {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::random_matrix;
using testing::random_vector;

FeatureMap random_map(Rng& rng, int channels, int h, int w) {
  return FeatureMap(h, w, random_matrix(rng, channels, h * w));
}

TEST(GlobalHead, ConstantCellsProjectTheCellVector) {
  Rng rng(1);
  GlobalHead head(5, 3);
  head.initialize(rng);
  const VectorXd v = random_vector(rng, 5);
  const FeatureMap fm(2, 3, v.replicate(1, 6));
  const GlobalFeature g = extract_global(fm, head);
  EXPECT_LT((g.values - head.projection().forward(v)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GlobalHead, DefaultShapes) {
  Rng rng(2);
  GlobalHead head(512, 256);
  head.initialize(rng);
  EXPECT_EQ(extract_global(random_map(rng, 512, 4, 4), head).values.size(), 256);
}

TEST(GlobalHead, NonFiniteMapIsRejected) {
  Rng rng(3);
  GlobalHead head(4, 2);
  head.initialize(rng);
  FeatureMap fm = random_map(rng, 4, 2, 2);
  fm.values()(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(extract_global(fm, head), DataError);
  fm.values()(1, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(extract_global(fm, head), DataError);
}

TEST(ViewExtractor, ZeroScoresGiveUniformAttentionAndMeanPooling) {
  Rng rng(4);
  ViewExtractor views(6, 3, 4);
  views.initialize(rng);
  std::fill(views.score_weight().value.begin(), views.score_weight().value.end(), 0.0);
  std::fill(views.score_bias().value.begin(), views.score_bias().value.end(), 0.0);
  const FeatureMap fm = random_map(rng, 6, 3, 3);
  const ViewForward out = extract_views(fm, views);
  EXPECT_LT((out.attention.weights.array() - 1.0 / 9.0).abs().maxCoeff(), 1e-15);
  const VectorXd mean = fm.values().rowwise().mean();
  for (int k = 0; k < 3; ++k) {
    const VectorXd expect = views.projections()[static_cast<std::size_t>(k)].forward(mean);
    EXPECT_LT((out.mediator.view(k) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ViewExtractor, HandSoftmaxOnFourCells) {
  Rng rng(5);
  ViewExtractor views(1, 1, 2);
  views.initialize(rng);
  views.score_weight().value = {1.0};
  views.score_bias().value = {0.0};
  MatrixXd values(1, 4);
  values << 0.0, std::log(3.0), 0.0, 0.0;
  const ViewForward out = extract_views(FeatureMap(2, 2, values), views);
  EXPECT_NEAR(out.attention.weights(0, 0), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(out.attention.weights(0, 1), 1.0 / 2.0, 1e-15);
  EXPECT_NEAR(out.attention.weights(0, 2), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(out.attention.weights(0, 3), 1.0 / 6.0, 1e-15);
}

TEST(ViewExtractor, DefaultMediatorLength) {
  Rng rng(6);
  ViewExtractor views(512, 3, 128);
  views.initialize(rng);
  const ViewForward out = extract_views(random_map(rng, 512, 4, 4), views);
  EXPECT_EQ(out.mediator.dim(), 384);
  EXPECT_EQ(out.mediator.num_views(), 3);
  EXPECT_EQ(out.attention.num_views(), 3);
}

TEST(ViewExtractor, AttentionIsADistributionForLargeScores) {
  Rng rng(7);
  for (int k : {1, 3, 9}) {
    ViewExtractor views(8, k, 4);
    views.initialize(rng);
    for (double& w : views.score_weight().value) w *= 200.0;
    const ViewForward out = extract_views(random_map(rng, 8, 4, 4), views);
    EXPECT_TRUE(out.attention.weights.allFinite());
    EXPECT_GE(out.attention.weights.minCoeff(), 0.0);
    for (int r = 0; r < k; ++r) EXPECT_NEAR(out.attention.weights.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(ViewExtractor, WrongChannelCountIsAShapeError) {
  Rng rng(8);
  ViewExtractor views(8, 2, 4);
  views.initialize(rng);
  EXPECT_THROW(extract_views(random_map(rng, 7, 2, 2), views), ShapeError);
}

TEST(Mediator, ConcatenationAndSlicesAgree) {
  const std::vector<VectorXd> parts{VectorXd::Constant(2, 1.0), VectorXd::Constant(2, 2.0),
                                    VectorXd::Constant(2, 3.0)};
  const Mediator m = Mediator::from_views(parts);
  EXPECT_EQ(m.dim(), 6);
  EXPECT_EQ(m.view(1), parts[1]);
  EXPECT_DOUBLE_EQ(m.concatenated()(5), 3.0);
  EXPECT_THROW(Mediator(4, VectorXd::Zero(6)), ShapeError);
}

Mediator med(std::initializer_list<double> v) {
  VectorXd x(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double d : v) x(i++) = d;
  return Mediator(static_cast<int>(v.size()), x);
}

TEST(PrototypeBank, FirstSightingInitializesToTheClassMean) {
  PrototypeBank bank(2, 2, 0.9);
  EXPECT_EQ(bank.prototype(0), nullptr);
  const std::vector<Mediator> ms{med({1, 0}), med({3, 2}), med({5, 5})};
  const std::vector<int> ys{1, 1, 1};
  bank.update(ms, ys);
  ASSERT_NE(bank.prototype(1), nullptr);
  EXPECT_EQ(bank.prototype(0), nullptr);
  EXPECT_FALSE(bank.all_initialized());
  EXPECT_DOUBLE_EQ((*bank.prototype(1))(0), 3.0);
  EXPECT_DOUBLE_EQ((*bank.prototype(1))(1), 7.0 / 3.0);
}

TEST(PrototypeBank, OneStepMomentumUpdate) {
  PrototypeBank bank(2, 2, 0.9);
  VectorXd p(2);
  p << 1.0, 0.0;
  bank.set(0, p);
  const std::vector<Mediator> ms{med({0, 1})};
  const std::vector<int> ys{0};
  bank.update(ms, ys);
  EXPECT_DOUBLE_EQ((*bank.prototype(0))(0), 0.9);
  EXPECT_DOUBLE_EQ((*bank.prototype(0))(1), 0.9 * 0.0 + (1.0 - 0.9) * 1.0);
}

TEST(PrototypeBank, MomentumOneFreezesAndZeroCopies) {
  PrototypeBank frozen(2, 2, 1.0);
  PrototypeBank copy(2, 2, 0.0);
  VectorXd p(2);
  p << 4.0, -2.0;
  frozen.set(1, p);
  copy.set(1, p);
  const std::vector<Mediator> ms{med({1, 1}), med({3, 5})};
  const std::vector<int> ys{1, 1};
  frozen.update(ms, ys);
  copy.update(ms, ys);
  EXPECT_EQ(*frozen.prototype(1), p);
  EXPECT_DOUBLE_EQ((*copy.prototype(1))(0), 2.0);
  EXPECT_DOUBLE_EQ((*copy.prototype(1))(1), 3.0);
}

TEST(PrototypeBank, AbsentClassIsLeftUntouched) {
  PrototypeBank bank(2, 2, 0.5);
  VectorXd p(2);
  p << 1.0, 2.0;
  bank.set(0, p);
  const std::vector<Mediator> ms{med({9, 9})};
  const std::vector<int> ys{1};
  bank.update(ms, ys);
  EXPECT_EQ(*bank.prototype(0), p);
  EXPECT_THROW(bank.update(ms, std::vector<int>{2}), ConfigError);
}

TEST(PrototypeBank, GeometricConvergenceToAConstantMean) {
  const double m = 0.9;
  PrototypeBank bank(2, 3, m);
  const VectorXd start = VectorXd::Zero(3);
  bank.set(0, start);
  const VectorXd mu = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  const std::vector<Mediator> ms{Mediator(3, mu)};
  const std::vector<int> ys{0};
  const double initial = (start - mu).norm();
  for (int n = 1; n <= 50; ++n) {
    bank.update(ms, ys);
    EXPECT_LE((*bank.prototype(0) - mu).norm(), std::pow(m, n) * initial * (1 + 1e-12) + 1e-15);
  }
}

TEST(Correction, ZeroCoefficientsAreTheIdentity) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const VectorXd a = random_vector(rng, 7);
    const VectorXd ps = random_vector(rng, 7);
    const VectorXd po = random_vector(rng, 7);
    EXPECT_EQ(correct_mediator(a, &ps, &po, {0.0, 0.0}).values, a);
  }
}

TEST(Correction, FullAlignmentReturnsTheSamePrototype) {
  Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    const VectorXd a = random_vector(rng, 7);
    const VectorXd ps = random_vector(rng, 7);
    const VectorXd po = random_vector(rng, 7);
    EXPECT_EQ(correct_mediator(a, &ps, &po, {1.0, 0.0}).values, ps);
  }
}

TEST(Correction, HandExample) {
  const VectorXd a = (VectorXd(2) << 1, 1).finished();
  const VectorXd ps = (VectorXd(2) << 3, 1).finished();
  const VectorXd po = (VectorXd(2) << 1, 3).finished();
  const VectorXd out = correct_mediator(a, &ps, &po, {0.5, 0.1}).values;
  EXPECT_NEAR(out(0), 2.0, 1e-15);
  EXPECT_NEAR(out(1), 0.8, 1e-15);
}

TEST(Correction, MissingPrototypeSkipsAndCounts) {
  const VectorXd a = VectorXd::Ones(3);
  const VectorXd p = VectorXd::Zero(3);
  CorrectionStats stats;
  EXPECT_EQ(correct_mediator(a, nullptr, &p, {0.5, 0.1}, &stats).values, a);
  EXPECT_EQ(correct_mediator(a, &p, nullptr, {0.5, 0.1}, &stats).values, a);
  correct_mediator(a, &p, &p, {0.5, 0.1}, &stats);
  EXPECT_EQ(stats.skipped, 2u);
  EXPECT_EQ(stats.applied, 1u);
}

TEST(Correction, IsAffineInEachArgument) {
  Rng rng(11);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  const CorrectionParams params{0.5, 0.1};
  for (int t = 0; t < 100; ++t) {
    const VectorXd a1 = random_vector(rng, 6), a2 = random_vector(rng, 6);
    const VectorXd ps = random_vector(rng, 6), po = random_vector(rng, 6);
    const double s = coef(rng);
    const VectorXd mixed = correct_mediator(s * a1 + (1 - s) * a2, &ps, &po, params).values;
    const VectorXd combo = s * correct_mediator(a1, &ps, &po, params).values +
                           (1 - s) * correct_mediator(a2, &ps, &po, params).values;
    EXPECT_LT((mixed - combo).cwiseAbs().maxCoeff(), 1e-12);
  }
}

PrototypeBank two_class_bank(const VectorXd& p0, const VectorXd& p1) {
  PrototypeBank bank(2, static_cast<int>(p0.size()), 0.9);
  bank.set(0, p0);
  bank.set(1, p1);
  return bank;
}

TEST(Retrieval, LabelSelectsDirectly) {
  const VectorXd p0 = (VectorXd(2) << 1, 0).finished();
  const VectorXd p1 = (VectorXd(2) << 0, 1).finished();
  const PrototypeBank bank = two_class_bank(p0, p1);
  const auto pair = retrieve_prototypes(p0, bank, 1);
  ASSERT_TRUE(pair);
  EXPECT_EQ(*pair->same, p1);
  EXPECT_EQ(*pair->other, p0);
  EXPECT_EQ(pair->same_class, 1);
}

TEST(Retrieval, InferenceUsesCosineSimilarity) {
  const VectorXd p0 = (VectorXd(2) << 2, 1).finished();
  const VectorXd p1 = (VectorXd(2) << -1, 3).finished();
  const PrototypeBank bank = two_class_bank(p0, p1);
  auto pair = retrieve_prototypes(p0, bank, std::nullopt);
  ASSERT_TRUE(pair);
  EXPECT_EQ(pair->same_class, 0);
  pair = retrieve_prototypes(p1 * 5.0, bank, std::nullopt);
  EXPECT_EQ(pair->same_class, 1);
}

TEST(Retrieval, CosineTieGoesToClassZero) {
  const VectorXd p0 = (VectorXd(2) << 1, 0).finished();
  const VectorXd p1 = (VectorXd(2) << 0, 1).finished();
  const PrototypeBank bank = two_class_bank(p0, p1);
  const auto pair = retrieve_prototypes((VectorXd(2) << 1, 1).finished(), bank, std::nullopt);
  ASSERT_TRUE(pair);
  EXPECT_EQ(pair->same_class, 0);
  EXPECT_EQ(*pair->same, p0);
  EXPECT_EQ(*pair->other, p1);
}

TEST(Retrieval, WarmupAndUninitializedBank) {
  PrototypeBank bank(2, 2, 0.9);
  bank.set(0, VectorXd::Ones(2));
  EXPECT_FALSE(retrieve_prototypes(VectorXd::Ones(2), bank, 0).has_value());
  EXPECT_THROW(retrieve_prototypes(VectorXd::Ones(2), bank, std::nullopt), Error);
}

TEST(Classifier, ZeroHeadGivesUniformSoftmax) {
  ClassifierHead head(3, 4, 2);
  const VectorXd g = VectorXd::Ones(3);
  const VectorXd a = VectorXd::Ones(4);
  const Logits logits = head.forward(g, &a);
  EXPECT_EQ(logits.values, VectorXd::Zero(2));
  EXPECT_DOUBLE_EQ(logits.softmax()(0), 0.5);
}

TEST(Classifier, SoftmaxOfTwoZero) {
  const VectorXd p = softmax((VectorXd(2) << 2, 0).finished());
  EXPECT_NEAR(p(0), 0.8808, 5e-5);
  EXPECT_NEAR(p(1), 0.1192, 5e-5);
  const VectorXd big = softmax((VectorXd(2) << 1000, 0).finished());
  EXPECT_TRUE(big.allFinite());
  EXPECT_DOUBLE_EQ(big(0), 1.0);
}

TEST(Classifier, DefaultFusedWidth) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.fused_dim(), 640);
  ClassifierHead head(cfg.global_dim, cfg.mediator_dim(), 2);
  EXPECT_EQ(head.fc().in_features(), 640);
  EXPECT_THROW(head.fuse(VectorXd::Zero(256), nullptr), ShapeError);
}

TEST(Classifier, PredictIsArgmaxWithTiesToBenign) {
  EXPECT_EQ(predict(Logits{(VectorXd(2) << 0.3, 0.9).finished()}), 1);
  EXPECT_EQ(predict(Logits{(VectorXd(2) << 0.5, 0.5).finished()}), 0);
  EXPECT_EQ(predict(Logits{(VectorXd(2) << 1.0, -1.0).finished()}), 0);
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.num_views = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.gamma_align = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig{};
  cfg.enable_views = false;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.enable_correction = false;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.fused_dim(), 256);
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.backbone = BackboneConfig{3, 32, 4};
  cfg.global_dim = 8;
  cfg.view_dim = 4;
  return cfg;
}

TEST(PemvModel, InferenceRequiresInitializedPrototypes) {
  PemvModel model(small_config(), 1);
  Rng rng(12);
  const std::vector<Image> imgs{testing::random_image(rng, 32)};
  EXPECT_THROW(model.infer(imgs), Error);
  model.prototypes().set(0, VectorXd::Ones(12));
  model.prototypes().set(1, -VectorXd::Ones(12));
  const auto out = model.infer(imgs);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].logits.values.allFinite());
}

TEST(PemvModel, SameSeedSameWeights) {
  PemvModel a(small_config(), 5);
  PemvModel b(small_config(), 5);
  PemvModel c(small_config(), 6);
  EXPECT_EQ(a.classifier().fc().weight().value, b.classifier().fc().weight().value);
  EXPECT_EQ(a.backbone_parameters()[0]->value, b.backbone_parameters()[0]->value);
  EXPECT_NE(a.classifier().fc().weight().value, c.classifier().fc().weight().value);
}

TEST(PemvModel, ErmVariantIsALinearProbeOnPooledFeatures) {
  ModelConfig cfg = small_config();
  cfg.enable_views = false;
  cfg.enable_correction = false;
  PemvModel model(cfg, 3);
  Rng rng(13);
  const Image img = testing::random_image(rng, 32);
  const FeatureMap fm = backbone_forward(model.backbone(), img);
  const VectorXd pooled = fm.values().rowwise().mean();
  const auto& gh = model.global_head().projection();
  const auto& fc = model.classifier().fc();
  const MatrixXd w = fc.weight_matrix() * gh.weight_matrix();
  const VectorXd b = fc.weight_matrix() * gh.bias_vector() + fc.bias_vector();
  const VectorXd expect = w * pooled + b;
  const std::vector<Image> imgs{img};
  const auto out = model.infer(imgs);
  EXPECT_LT((out[0].logits.values - expect).cwiseAbs().maxCoeff(), 1e-9);
}

}  // namespace
}  // namespace pemv
