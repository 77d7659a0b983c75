#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "pemv/backbone.hpp"
#include "pemv/error.hpp"
#include "pemv/model.hpp"
#include "test_support.hpp"

namespace pemv {
namespace {

TEST(Backbone, DefaultInputYieldsFiveHundredTwelveByFourByFour) {
  Backbone net;
  Rng rng(1);
  net.initialize(rng);
  const Image img = testing::random_image(rng, 128);
  const FeatureMap fm = backbone_forward(net, img);
  EXPECT_EQ(fm.channels(), 512);
  EXPECT_EQ(fm.height(), 4);
  EXPECT_EQ(fm.width(), 4);
  EXPECT_EQ(net.out_size(), 4);
}

TEST(Backbone, WrongResolutionIsAShapeError) {
  Backbone net;
  Rng rng(2);
  net.initialize(rng);
  const Image img = testing::random_image(rng, 64);
  try {
    backbone_forward(net, img);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(3, 64, 64)"), std::string::npos) << e.what();
  }
}

TEST(Backbone, WrongChannelCountIsAShapeError) {
  Backbone net;
  const Image img{1, 128, 128, std::vector<float>(128 * 128)};
  EXPECT_THROW(backbone_forward(net, img), ShapeError);
}

TEST(Backbone, ZeroImageGivesFiniteFeatures) {
  Backbone net;
  Rng rng(3);
  net.initialize(rng);
  const Image img{3, 128, 128, std::vector<float>(3 * 128 * 128, 0.0f)};
  const FeatureMap fm = backbone_forward(net, img);
  EXPECT_TRUE(fm.values().allFinite());
  EXPECT_NO_THROW(fm.validate());
}

TEST(Backbone, ParameterCountMatchesResNet18Trunk) {
  Backbone net;
  std::size_t total = 0;
  for (auto* p : net.parameters()) total += p->size();
  // torchvision resnet18 has 11,689,512 parameters, 513,000 of them in the fc layer.
  EXPECT_EQ(total, 11176512u);
}

TEST(Backbone, StateNamesAreUniqueAndIncludeRunningStatistics) {
  Backbone net;
  std::set<std::string> names;
  bool has_running = false;
  for (const auto& s : net.state()) {
    EXPECT_TRUE(names.insert(s.name).second) << s.name;
    has_running = has_running || s.name == "layer4.1.bn2.running_var";
  }
  EXPECT_TRUE(has_running);
  EXPECT_TRUE(names.count("layer2.0.downsample.0.weight"));
  EXPECT_TRUE(names.count("conv1.weight"));
}

TEST(Backbone, OutputSizeScalesWithInputSize) {
  Backbone net(BackboneConfig{3, 64, 4});
  Rng rng(4);
  net.initialize(rng);
  const Activation out = net.forward(testing::random_activation(rng, 3, 2, 64, 64));
  EXPECT_EQ(out.channels(), 32);
  EXPECT_EQ(out.batch(), 2);
  EXPECT_EQ(out.height(), 2);
  EXPECT_EQ(out.width(), 2);
}

TEST(Backbone, EvalForwardIsBatchIndependent) {
  Backbone net(BackboneConfig{3, 32, 4});
  Rng rng(5);
  net.initialize(rng);
  const Activation batch = testing::random_activation(rng, 3, 3, 32, 32);
  const Activation all = net.forward(batch);
  Activation single(3, 1, 32, 32);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) single.at(c, 0, y, x) = batch.at(c, 1, y, x);
    }
  }
  const Activation one = net.forward(single);
  for (int c = 0; c < one.channels(); ++c) EXPECT_NEAR(one.at(c, 0, 0, 0), all.at(c, 1, 0, 0), 1e-4);
}

// Central differences in float on a narrow trunk. Only a loose agreement is
// achievable in single precision; this guards wiring, not rounding.
TEST(Backbone, ParameterGradientsMatchFiniteDifferences) {
  Backbone net(BackboneConfig{3, 32, 2});
  Rng rng(6);
  net.initialize(rng);
  const Activation images = testing::random_activation(rng, 3, 4, 32, 32);
  BackboneTape probe_tape;
  const Activation probe = net.forward_train(images, probe_tape);
  const Activation weights = testing::random_activation(rng, probe.channels(), probe.batch(), probe.height(),
                                                        probe.width());
  auto loss = [&](Backbone& b) {
    BackboneTape tape;
    const Activation out = b.forward_train(images, tape);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += static_cast<double>(out.data()[i]) * weights.data()[i];
    return s;
  };

  Backbone work = net;
  for (auto* p : work.parameters()) p->zero_grad();
  BackboneTape tape;
  work.forward_train(images, tape);
  work.backward(weights, tape);
  auto grads = work.parameters();

  int checked = 0;
  int agreed = 0;
  std::vector<std::size_t> picks{0, 5, 11};
  for (std::size_t pi : {std::size_t{0}, std::size_t{1}, grads.size() / 2, grads.size() - 3, grads.size() - 1}) {
    for (std::size_t k : picks) {
      if (k >= grads[pi]->size()) continue;
      Backbone plus = net;
      Backbone minus = net;
      const float h = 1e-3f;
      plus.parameters()[pi]->value[k] += h;
      minus.parameters()[pi]->value[k] -= h;
      const double fd = (loss(plus) - loss(minus)) / (2.0 * h);
      const double an = grads[pi]->grad[k];
      ++checked;
      if (std::abs(fd - an) <= 5e-2 * std::max(1.0, std::abs(fd))) ++agreed;
    }
  }
  // Float differencing straddles ReLU kinks now and then.
  EXPECT_GE(agreed * 5, checked * 4) << agreed << " of " << checked;
}

}  // namespace
}  // namespace pemv
