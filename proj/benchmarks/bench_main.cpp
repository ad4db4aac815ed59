// Copyright 2026 The sfskit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sfskit/ad/ops.hpp"
#include "sfskit/ad/tensor.hpp"
#include "sfskit/datagen.hpp"
#include "sfskit/nets.hpp"
#include "sfskit/photometrics.hpp"
#include "sfskit/sh.hpp"

namespace {

using sfskit::ad::Tensor;

Tensor<float> random_tensor(sfskit::ad::Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 0.5f);
  Tensor<float> t(std::move(shape), 0.0f, grad);
  for (float& v : t.data()) v = d(rng);
  return t;
}

sfskit::datagen::Sample sample_of(int size) {
  sfskit::datagen::DatasetOptions opts;
  opts.size = size;
  return sfskit::datagen::make_sample(1, 0, sfskit::datagen::Family::kSynthetic, opts);
}

void BM_ShBasis(benchmark::State& state) {
  const Eigen::Vector3d n = Eigen::Vector3d(0.3, -0.4, 0.8).normalized();
  for (auto _ : state) benchmark::DoNotOptimize(sfskit::sh_basis(n));
}
BENCHMARK(BM_ShBasis);

void BM_Render(benchmark::State& state) {
  const auto s = sample_of(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sfskit::render(s.normal, s.albedo, s.light, s.mask));
  state.SetItemsProcessed(state.iterations() * s.image.pixels());
}
BENCHMARK(BM_Render)->Arg(64)->Arg(128);

void BM_SolveLight(benchmark::State& state) {
  const auto s = sample_of(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sfskit::solve_light_ls(s.image, s.normal, s.albedo, s.mask));
  }
}
BENCHMARK(BM_SolveLight)->Arg(64)->Arg(128);

// Args: channels, spatial size, kernel, stride.
void BM_Conv2dForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const int k = static_cast<int>(state.range(2));
  const int stride = static_cast<int>(state.range(3));
  const auto x = random_tensor({4, c, hw, hw}, 1);
  const auto w = random_tensor({c, c, k, k}, 2);
  const auto b = random_tensor({c}, 3);
  sfskit::ad::NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(sfskit::ad::conv2d(x, w, b, stride));
}
BENCHMARK(BM_Conv2dForward)
    ->Args({32, 64, 3, 1})
    ->Args({64, 32, 3, 1})
    ->Args({32, 64, 4, 2})
    ->Args({16, 64, 7, 1})
    ->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const auto x = random_tensor({4, c, hw, hw}, 1, true);
  const auto w = random_tensor({c, c, 3, 3}, 2, true);
  const auto b = random_tensor({c}, 3, true);
  std::vector<float> proj(static_cast<std::size_t>(4) * c * hw * hw, 1.0f);
  for (auto _ : state) {
    sfskit::ad::Tape tape;
    sfskit::ad::TapeScope scope(tape);
    auto y = sfskit::ad::dot_const(sfskit::ad::conv2d(x, w, b, 1), proj);
    tape.backward(y);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({32, 64})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  const auto arch = static_cast<sfskit::nets::Architecture>(state.range(0));
  sfskit::nets::NetConfig cfg;
  cfg.input_size = 64;
  cfg.width_scale = 0.5;
  auto model = sfskit::nets::build_model(arch, cfg);
  const auto images = random_tensor({4, 3, 64, 64}, 4);
  sfskit::ad::NoGradScope no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model->forward(images, sfskit::ad::NormMode::kEval, nullptr));
  }
  state.SetLabel(sfskit::nets::to_string(arch));
}
BENCHMARK(BM_ModelForward)
    ->Arg(static_cast<int>(sfskit::nets::Architecture::kSfsNet))
    ->Arg(static_cast<int>(sfskit::nets::Architecture::kSkipNet))
    ->Arg(static_cast<int>(sfskit::nets::Architecture::kSkipNetPlus))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
