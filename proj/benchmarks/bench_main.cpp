#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pemv/backbone.hpp"
#include "pemv/frontdoor.hpp"
#include "pemv/layers.hpp"
#include "pemv/model.hpp"
#include "pemv/objectives.hpp"

namespace {

using Eigen::MatrixXd;

pemv::Activation random_activation(pemv::Rng& rng, int c, int n, int h, int w) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  pemv::Activation a(c, n, h, w);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = d(rng);
  return a;
}

MatrixXd random_matrix(pemv::Rng& rng, int r, int c) {
  std::normal_distribution<double> d(0.0, 1.0);
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

// 3x3 stride-1 convolution at the width of the first residual stage.
void BM_Conv3x3(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  pemv::Rng rng(1);
  pemv::Conv2d conv("conv", channels, channels, 3, 1, 1);
  conv.initialize(rng);
  const pemv::Activation x = random_activation(rng, channels, 4, 32, 32);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BackboneForward(benchmark::State& state) {
  pemv::Rng rng(2);
  pemv::Backbone net(pemv::BackboneConfig{3, 128, static_cast<int>(state.range(0))});
  net.initialize(rng);
  const pemv::Activation images = random_activation(rng, 3, 8, 128, 128);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(images));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_BackboneForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BackboneTrainStep(benchmark::State& state) {
  pemv::Rng rng(3);
  pemv::Backbone net(pemv::BackboneConfig{3, 128, static_cast<int>(state.range(0))});
  net.initialize(rng);
  const pemv::Activation images = random_activation(rng, 3, 8, 128, 128);
  for (auto _ : state) {
    pemv::BackboneTape tape;
    const pemv::Activation out = net.forward_train(images, tape);
    net.backward(out, tape);
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_BackboneTrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// Global head, K views, correction and classifier on one 512 x 4 x 4 map.
void BM_HeadInference(benchmark::State& state) {
  pemv::ModelConfig cfg;
  cfg.num_views = static_cast<int>(state.range(0));
  pemv::PemvModel model(cfg, 4);
  pemv::Rng rng(4);
  const int da = cfg.mediator_dim();
  model.prototypes().set(0, random_matrix(rng, da, 1).col(0));
  model.prototypes().set(1, random_matrix(rng, da, 1).col(0));
  const pemv::FeatureMap fm(4, 4, random_matrix(rng, 512, 16));
  for (auto _ : state) benchmark::DoNotOptimize(model.infer_features(fm));
}
BENCHMARK(BM_HeadInference)->Arg(1)->Arg(3)->Arg(9);

void BM_FusionLoss(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  pemv::Rng rng(5);
  pemv::Linear head("fc", 256 + 384, 2);
  head.initialize(rng);
  std::vector<int> labels(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
  const pemv::FusionBatch fb{random_matrix(rng, batch, 256), random_matrix(rng, batch, 384),
                             random_matrix(rng, batch, 384), labels};
  pemv::Rng pairs(6);
  for (auto _ : state) benchmark::DoNotOptimize(pemv::loss_fusion(fb, head, &pairs));
}
BENCHMARK(BM_FusionLoss)->Arg(16)->Arg(32)->Arg(64);

void BM_FrontdoorSuite(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(pemv::frontdoor::run_soundness_suite(1000, 0));
}
BENCHMARK(BM_FrontdoorSuite)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
