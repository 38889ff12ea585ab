// Copyright 2026 The accdat Authors.
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

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "accdat/ctc.h"
#include "accdat/data.h"
#include "accdat/experiment.h"
#include "accdat/model.h"
#include "accdat/ops.h"
#include "accdat/optim.h"
#include "accdat/train.h"

namespace {

using namespace accdat;

Tensor<float> random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

// Depthwise conv forward and backward over a C x T input, K = 5.
void BM_Conv1dDepthwise(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto t = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const auto x = random_tensor({c, t}, rng);
  const auto k = random_tensor({c, 5}, rng);
  for (auto _ : state) {
    Tape<float> tape;
    const Var xv = tape.variable(x);
    tape.backward(sum(tape, conv1d(tape, xv, tape.variable(k), ConvMode::kDepthwise)));
    benchmark::DoNotOptimize(tape.grad(xv));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * t));
}
BENCHMARK(BM_Conv1dDepthwise)->Args({32, 100})->Args({256, 400});

void BM_Conv1dPointwise(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto t = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const auto x = random_tensor({c, t}, rng);
  const auto k = random_tensor({c, c}, rng);
  for (auto _ : state) {
    Tape<float> tape;
    const Var xv = tape.variable(x);
    tape.backward(sum(tape, conv1d(tape, xv, tape.variable(k), ConvMode::kPointwise)));
    benchmark::DoNotOptimize(tape.grad(xv));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c * t));
}
BENCHMARK(BM_Conv1dPointwise)->Args({32, 100})->Args({256, 400});

// Loss and gradient of one utterance: T frames, 28 labels plus blank.
void BM_CtcLossGrad(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const std::size_t classes = 29;
  Rng rng(3);
  Tensor<double> lp({frames, classes});
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t t = 0; t < frames; ++t) {
    double z = 0;
    for (std::size_t v = 0; v < classes; ++v) z += std::exp(lp.at(t, v) = n(rng));
    for (std::size_t v = 0; v < classes; ++v) lp.at(t, v) -= std::log(z);
  }
  std::uniform_int_distribution<int> label(0, static_cast<int>(classes) - 2);
  LabelSequence target(frames / 4);
  for (auto& l : target) l = label(rng);
  for (auto _ : state) benchmark::DoNotOptimize(ctc_loss_grad(lp, target));
}
BENCHMARK(BM_CtcLossGrad)->Arg(50)->Arg(200)->Arg(800);

// One DAT update of the mini model on a mixed batch of 8 utterances.
void BM_DatStep(benchmark::State& state) {
  CorpusSettings s;
  s.accent_counts = {8, 8};
  s.accent_names = {"a", "b"};
  const auto utts = generate_utterances(new_corpus_config(s));
  Rng rng(4);
  auto params = build_model<float>(mini_model_config(s.feature_dim, s.alphabet_size, 2), rng);
  OptimizerState<float> opt;
  Batch batch;
  for (std::size_t i = 0; i < 8; ++i) batch.push_back({&utts[i * 2], i % 2 == 0});
  for (auto _ : state) {
    benchmark::DoNotOptimize(dat_step(params, opt, batch, 0.5, DatOptions{}, rng));
  }
}
BENCHMARK(BM_DatStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
