// Copyright 2026 The cqdraw Authors.
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

// Serial reference against OpenMP kernels. Each pair runs the same inputs
// through both paths; outputs are identical by construction (see the
// SerialMatchesParallel tests), so only time differs.

#include <benchmark/benchmark.h>

#include <memory>

#include "cqdraw/analysis.h"
#include "cqdraw/dialogue.h"
#include "cqdraw/drawer.h"
#include "cqdraw/random.h"

namespace cqdraw {
namespace {

const Gallery& G() { return default_gallery(); }

struct Inputs {
  std::vector<TrainingTurn> turns;
  Vocabulary vocab;
  std::shared_ptr<const Ensemble> drawer;
  std::vector<TellerScript> scripts;
  std::vector<double> scores;
  std::vector<int> labels;
  FeatureMatrix features;
};

const Inputs& SharedInputs() {
  static const Inputs in = [] {
    Inputs x;
    const SyntheticCorpus corpus = synthetic_corpus(G(), 60, 1);
    x.turns = training_turns(corpus.dialogues, G().size());
    std::vector<std::string> texts;
    for (const auto& t : x.turns) texts.push_back(t.input_text);
    x.vocab = Vocabulary::build(texts, G());
    TrainConfig c;
    c.epochs = 2;
    x.drawer = std::make_shared<const Ensemble>(train_ensemble(G(), x.vocab, x.turns, c, {0, 1, 2}));
    for (int i = 0; i < 32; ++i) {
      const uint64_t s = derive_seed(7, static_cast<uint64_t>(i));
      x.scripts.push_back(TellerScript::synthetic(G(), "b" + std::to_string(i), random_scene(G(), s), {}, s));
    }
    Rng rng = make_rng(3);
    for (int i = 0; i < 2000; ++i) {
      const int y = bernoulli(rng, 0.25) ? 1 : 0;
      x.labels.push_back(y);
      x.scores.push_back(uniform01(rng) + 0.3 * y);
      x.features.push_back({uniform01(rng) + 0.5 * y, uniform01(rng), uniform01(rng) - 0.2 * y, uniform01(rng)});
    }
    return x;
  }();
  return in;
}

Execution Mode(const benchmark::State& state) {
  return state.range(0) ? Execution::kParallel : Execution::kSerial;
}

void BM_RunBatch(benchmark::State& state) {
  const Inputs& in = SharedInputs();
  const auto policy = ClarificationPolicy::threshold(0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_batch(G(), in.scripts, in.drawer, policy, {}, Mode(state)));
  }
}
BENCHMARK(BM_RunBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainEnsemble(benchmark::State& state) {
  const Inputs& in = SharedInputs();
  TrainConfig c;
  c.epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_ensemble(G(), in.vocab, in.turns, c, {0, 1, 2}, Mode(state)));
  }
}
BENCHMARK(BM_TrainEnsemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_PermutationTest(benchmark::State& state) {
  const Inputs& in = SharedInputs();
  for (auto _ : state) {
    benchmark::DoNotOptimize(permutation_test_ap(in.scores, in.labels, 1000, 1, Mode(state)));
  }
}
BENCHMARK(BM_PermutationTest)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BootstrapCoefficients(benchmark::State& state) {
  const Inputs& in = SharedInputs();
  const std::vector<std::string> names = {"a", "b", "c", "d"};
  for (auto _ : state) {
    benchmark::DoNotOptimize(bootstrap_coefficients(in.features, in.labels, names, {}, 200, 1, Mode(state)));
  }
}
BENCHMARK(BM_BootstrapCoefficients)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_StudyGrid(benchmark::State& state) {
  const Inputs& in = SharedInputs();
  const SyntheticCorpus corpus = synthetic_corpus(G(), 30, 9);
  StudyCheckpoints ck;
  StudyConfig c;
  c.seeds = {0, 1, 2};
  c.epochs = {2};
  c.label_mode = StudyLabelMode::kNoise;
  c.permutation_resamples = 200;
  c.bootstrap_resamples = 50;
  for (int s = 0; s < 3; ++s) ck.params[{s, 2}] = in.drawer->members[static_cast<std::size_t>(s)];
  for (auto _ : state) {
    benchmark::DoNotOptimize(study_grid(G(), corpus.dialogues, ck, nullptr, c, Mode(state)));
  }
}
BENCHMARK(BM_StudyGrid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cqdraw

BENCHMARK_MAIN();
