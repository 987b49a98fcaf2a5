// Copyright 2026 The gvswhip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <random>

#include <benchmark/benchmark.h>

#include "gvswhip/diffusion_policy.h"
#include "gvswhip/pita.h"

namespace {

using namespace gvswhip;

DiffusionPolicy SmallPolicy(int d_model) {
  DiffusionPolicy p;
  p.config.net.d_model = d_model;
  p.config.net.blocks = 2;
  p.config.net.ffn_mult = 2;
  p.params = DenoiserParams::Init(p.config.net, 1);
  p.ema = p.params;
  p.normalizer = Normalizer::Identity(p.config.net.features);
  return p;
}

Eigen::MatrixXd Noise(const DiffusionPolicy& p) {
  std::mt19937_64 rng(7);
  return SampleNoise(p.config.net.horizon, p.config.net.features, rng);
}

void BM_DenoiserForward(benchmark::State& state) {
  const DiffusionPolicy p = SmallPolicy(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = Noise(p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoise(p.ema, x, Eigen::Vector3d(0.1, 0.2, 0.3), 100));
  }
}
BENCHMARK(BM_DenoiserForward)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_DiffusionLossGradient(benchmark::State& state) {
  const DiffusionPolicy p = SmallPolicy(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd q0 = Noise(p);
  const Eigen::MatrixXd eps = Noise(p).reverse();
  for (auto _ : state) {
    ParamGrads grads;
    benchmark::DoNotOptimize(diffusion_loss(p.params, p.schedule, q0, Eigen::Vector3d::Zero(), 200,
                                            eps, p.loss_weights(), &grads));
  }
}
BENCHMARK(BM_DiffusionLossGradient)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_GuidedSample(benchmark::State& state) {
  const DiffusionPolicy p = SmallPolicy(64);
  const RodModel model;
  const Eigen::MatrixXd noise = Noise(p);
  AdaptConfig config;
  config.mode = static_cast<AdaptMode>(state.range(0));
  state.SetLabel(std::string(AdaptModeName(config.mode)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        guided_sample_from_noise(p, model, Eigen::Vector3d(0.2, 0.1, -0.3), config, noise));
  }
}
BENCHMARK(BM_GuidedSample)
    ->DenseRange(0, 3)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
