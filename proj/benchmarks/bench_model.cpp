// Copyright 2026 The MACO Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "maco/model.hpp"
#include "maco/ops.hpp"
#include "maco/random.hpp"
#include "maco/runtime.hpp"

namespace {

using maco::Shape;
using maco::Tensor;

Tensor<float> random_tensor(Shape shape, maco::Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(maco::numel(shape)));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return Tensor<float>(std::move(shape), std::move(v));
}

maco::Episode<float> random_episode(const maco::ModelConfig& c, maco::Rng& rng) {
  maco::Episode<float> ep;
  for (int k = 0; k < c.ways; ++k) {
    auto& cls = ep.support.emplace_back();
    for (int i = 0; i < c.shots; ++i) cls.push_back(random_tensor(Shape{c.image_size, c.image_size, c.channels}, rng));
  }
  ep.query = random_tensor(Shape{c.image_size, c.image_size, c.channels}, rng);
  ep.target = static_cast<int>(rng.below(c.ways));
  return ep;
}

void BM_Conv2dSameForward(benchmark::State& state) {
  maco::Rng rng(1);
  const auto side = state.range(0);
  const auto cin = state.range(1);
  auto x = random_tensor(Shape{8, side, side, cin}, rng);
  auto k = random_tensor(Shape{3, 3, cin, 32}, rng);
  Tensor<float> b(Shape{32}, 0.f);
  for (auto _ : state) benchmark::DoNotOptimize(maco::conv2d_same(x, k, b).data().data());
  state.SetItemsProcessed(state.iterations() * 8 * side * side * 9 * cin * 32);
}
BENCHMARK(BM_Conv2dSameForward)->Args({84, 3})->Args({42, 32})->Args({21, 32})->Unit(benchmark::kMillisecond);

void BM_Conv2dSameBackward(benchmark::State& state) {
  maco::Rng rng(2);
  const auto side = state.range(0);
  const auto cin = state.range(1);
  auto x = random_tensor(Shape{8, side, side, cin}, rng);
  x.set_requires_grad(true);
  auto k = random_tensor(Shape{3, 3, cin, 32}, rng);
  k.set_requires_grad(true);
  Tensor<float> b(Shape{32}, 0.f);
  for (auto _ : state) {
    auto y = maco::sum(maco::conv2d_same(x, k, b));
    maco::backward(y);
  }
}
BENCHMARK(BM_Conv2dSameBackward)->Args({42, 32})->Unit(benchmark::kMillisecond);

// One optimizer-free training step: forward + backward over a minibatch of
// 5-way 5-shot 84x84 episodes.
void BM_TrainStep(benchmark::State& state) {
  maco::ModelConfig c;
  c.relational_depth = c.conditioning_depth = 2;
  maco::MacoNet<float> net(c, 3);
  maco::Rng rng(4);
  std::vector<maco::Episode<float>> batch;
  for (int i = 0; i < state.range(0); ++i) batch.push_back(random_episode(c, rng));
  for (auto _ : state) {
    auto r = net.forward(std::span<const maco::Episode<float>>(batch), maco::Mode::kTrain);
    maco::backward(r.loss, net.params());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_EvalForward(benchmark::State& state) {
  maco::ModelConfig c;
  c.relational_depth = c.conditioning_depth = 2;
  maco::MacoNet<float> net(c, 5);
  maco::Rng rng(6);
  auto ep = random_episode(c, rng);
  maco::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(ep, maco::Mode::kEval).loss.item());
}
BENCHMARK(BM_EvalForward)->Unit(benchmark::kMillisecond);

}  // namespace
int main(int argc, char** argv) {
  maco::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
