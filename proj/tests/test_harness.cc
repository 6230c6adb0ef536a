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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cqdraw/harness.h"
#include "cqdraw/text_util.h"
#include "test_support.h"

namespace cqdraw {
namespace {

using testing::ExpectError;

ExperimentConfig SmallConfig() {
  ExperimentConfig c = ExperimentConfig::parse(
      "# quick world\n"
      "ensemble_seeds = 0\n"
      "epochs = 2\n"
      "train_dialogues = 60\n"
      "eval_dialogues = 12\n"
      "study_dialogues = 30\n"
      "bootstrap_resamples = 200\n"
      "study_epochs = 1,2\n"
      "study_labels = noise\n"
      "study_permutations = 20\n"
      "study_bootstraps = 10\n"
      "sweep_thetas = 0,0.7,1.6\n"
      "sweep_rates = 0,0.5\n");
  return c;
}

const World& SmallWorld() {
  static const World w = prepare_world(SmallConfig());
  return w;
}

TEST(Config, DefaultsRoundTripThroughText) {
  const ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(ExperimentConfig::parse(c.to_text()).to_text(), c.to_text());
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  ExperimentConfig a = SmallConfig();
  ExperimentConfig b = a;
  b.set("output_dir", "elsewhere");
  EXPECT_EQ(a.hash(), b.hash());
  b.set("seed", "5");
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(ExperimentConfig::parse(b.to_text()).hash(), b.hash());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ExpectError([] { ExperimentConfig::parse("epoch = 3\n"); }, "unknown config key 'epoch'");
  ExpectError([] { ExperimentConfig::parse("write_transcripts = maybe\n"); }, "invalid boolean");
  ExpectError([] { ExperimentConfig::parse("world = replay\n").validate(); }, "corpus_path");
  ExpectError([] { ExperimentConfig::parse("thetas = -1\n").validate(); }, "thetas");
  ExpectError([] { ExperimentConfig::parse("epochs = 0\n").validate(); }, "epochs");
}

TEST(PairedTest, MatchesReferenceTTest) {
  const std::vector<double> d = {1, 2, 3, 4};
  const PairedTest t = paired_test(d, 500, 1);
  EXPECT_DOUBLE_EQ(t.mean_delta, 2.5);
  EXPECT_NEAR(t.t_statistic, 3.872983346207417, 1e-12);
  EXPECT_NEAR(t.t_p_value, 0.030466291662170977, 1e-9);
  EXPECT_EQ(t.bootstrap_p_value, 0.0);  // every resampled mean is positive
  const std::vector<double> zeros = {0, 0, 0};
  const PairedTest z = paired_test(zeros, 100, 1);
  EXPECT_EQ(z.t_p_value, 1.0);
  EXPECT_EQ(z.bootstrap_p_value, 1.0);
}

TEST(Summaries, PoolSizePairsAcrossDialogues) {
  const std::vector<DialogueScore> s = {{3, 4, 4.0, 2}, {0, 1, 1.0, 0}, {1, 0, 0.0, 0}};
  const RunSummary r = summarize(s);
  EXPECT_DOUBLE_EQ(r.size_accuracy, 80.0);
  EXPECT_DOUBLE_EQ(r.similarity, 5.0 / 3.0);
  EXPECT_NEAR(r.pct_with_cq, 100.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(*r.cqs_per_cq_dialogue, 2.0);
  EXPECT_FALSE(summarize(std::vector<DialogueScore>{{1, 1, 5.0, 0}}).cqs_per_cq_dialogue.has_value());
}

TEST(Budgets, ClosestThresholdWithinTolerance) {
  const std::vector<CurvePoint> pts = {{"threshold", 0.3, 1.0, 80, 4}, {"threshold", 0.7, 0.75, 70, 3.8},
                                       {"random", 0.5, 0.5, 60, 3.7},  {"random", 1.0, 2.0, 90, 4.1},
                                       {"threshold", 0.1, 0.25, 75, 3.9}};
  const auto m = match_budgets(pts, 0.3);
  ASSERT_EQ(m.size(), 2u);
  ASSERT_TRUE(m[0].threshold.has_value());
  EXPECT_EQ(m[0].threshold->parameter, 0.7);  // first of the two tied distances
  EXPECT_FALSE(m[1].threshold.has_value());
}

TEST(SmallWorld, PreparesEveryInput) {
  const World& w = SmallWorld();
  EXPECT_EQ(w.drawer->size(), 1u);
  EXPECT_EQ(w.eval_scripts.size(), 12u);
  EXPECT_EQ(w.checkpoints.params.size(), 2u);
  EXPECT_TRUE(w.checkpoints.params.count({0, 2}));
  EXPECT_EQ(w.study_corpus.size(), 30u);
  EXPECT_TRUE(w.has_study_annotations);
  EXPECT_EQ(make_policy(w, "threshold:0.3").theta, 0.3);
  ExpectError([&] { make_policy(w, "sometimes"); }, "policy");
}

TEST(SmallWorld, Table2IsMonotoneWithDashForNoQuestions) {
  const auto rows = exp_table2(SmallWorld());
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_LE(rows[i].summary.pct_with_cq, rows[i - 1].summary.pct_with_cq);
    EXPECT_LE(rows[i].summary.cqs_per_dialogue, rows[i - 1].summary.cqs_per_dialogue);
  }
  EXPECT_EQ(rows.back().summary.cqs_per_dialogue, 0.0);  // 1.6 bits exceeds log2(3)
  const ExperimentReport r = table2_report(SmallWorld(), rows);
  EXPECT_NE(r.files.at("table2.md").find("| 1.6 | 0.00 | — |"), std::string::npos) << r.files.at("table2.md");
  EXPECT_NE(r.files.at("table2.md").find(SmallWorld().config.hash()), std::string::npos);
}

TEST(SmallWorld, Table1SilentRowHasNoBoost) {
  const Table1 t = exp_table1(SmallWorld());
  const Table1Row& silent = t.row("silent");
  EXPECT_EQ(silent.cq_dialogues, 0);
  EXPECT_FALSE(silent.size_accuracy_boost.has_value());
  const ExperimentReport r = table1_report(SmallWorld(), t);
  EXPECT_NE(r.files.at("table1.md").find("| silent |"), std::string::npos);
  EXPECT_NE(r.files.at("table1.csv").find("silent,"), std::string::npos);
  EXPECT_NE(r.files.at("table1.csv").find(",--,--"), std::string::npos);
}

TEST(Calibration, IdenticalRunsAreEqualAndUnpairedRunsAreRejected) {
  const Gallery& g = default_gallery();
  std::vector<DialogueTranscript> silent;
  for (uint64_t i = 0; i < 10; ++i) {
    const auto script = TellerScript::synthetic(g, "c" + std::to_string(i), random_scene(g, i), {}, i);
    silent.push_back(run_dialogue(g, script, testing::Tiny().drawer, ClarificationPolicy::silent()));
  }
  const CalibrationResult c = calibration_between(g, silent, silent, 10, 50, 1);
  EXPECT_GT(c.rows, 0);  // the fixture drawer places target cliparts
  EXPECT_EQ(c.ece_silent, c.ece_cq);
  EXPECT_EQ(c.brier_silent, c.brier_cq);
  EXPECT_EQ(c.ece_p_value, 1.0);
  std::vector<DialogueTranscript> shifted(silent.begin() + 1, silent.end());
  shifted.push_back(silent.front());
  ExpectError([&] { calibration_between(g, silent, shifted, 10, 5, 1); }, "not paired");
}

TEST(SmallWorld, SerialAndParallelReportsAreByteIdentical) {
  const World& w = SmallWorld();
  for (const char* name : {"table2", "figure4", "study"}) {
    const ExperimentReport a = run_experiment(w, name, Execution::kSerial);
    const ExperimentReport b = run_experiment(w, name, Execution::kParallel);
    EXPECT_EQ(a.files, b.files) << name;
  }
}

TEST(SmallWorld, RerunFromConfigTextReproducesReports) {
  const World& w = SmallWorld();
  const World again = prepare_world(ExperimentConfig::parse(w.config.to_text()));
  EXPECT_EQ(again.config.hash(), w.config.hash());
  EXPECT_EQ(run_experiment(again, "table1").files, run_experiment(w, "table1").files);
}

TEST(SmallWorld, SavedWeightsReloadToTheSameReports) {
  const World& w = SmallWorld();
  const std::string dir = (std::filesystem::temp_directory_path() / "cqdraw_test_harness_world").string();
  std::filesystem::remove_all(dir);
  const auto written = save_world(w, dir);
  EXPECT_GE(written.size(), 4u);
  ExperimentConfig c = w.config;
  c.set("drawer_weights", dir + "/drawer.json");
  c.set("checkpoint_dir", dir + "/checkpoints");
  if (w.decider) c.set("decider_weights", dir + "/decider.json");
  const World loaded = prepare_world(c);
  EXPECT_EQ(save_ensemble(*loaded.drawer), save_ensemble(*w.drawer));
  EXPECT_EQ(loaded.checkpoints.params, w.checkpoints.params);
  const auto a = run_experiment(w, "table2").files.at("table2.csv");
  const auto b = run_experiment(loaded, "table2").files.at("table2.csv");
  EXPECT_EQ(a, b);
  std::filesystem::remove_all(dir);
}

TEST(SmallWorld, UnknownExperimentIsAnError) {
  ExpectError([] { run_experiment(SmallWorld(), "table9"); }, "unknown experiment");
}

}  // namespace
}  // namespace cqdraw
