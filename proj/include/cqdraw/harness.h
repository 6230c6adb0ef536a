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

#ifndef CQDRAW_HARNESS_H_
#define CQDRAW_HARNESS_H_

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cqdraw/analysis.h"
#include "cqdraw/clarification.h"
#include "cqdraw/dialogue.h"
#include "cqdraw/drawer.h"
#include "cqdraw/ingest.h"
#include "cqdraw/metrics.h"
#include "cqdraw/parallel.h"

namespace cqdraw {

enum class WorldMode { kSynthetic, kReplay };

// Flat `key = value` experiment file. Lines starting with '#' are comments;
// unknown keys are rejected. Lists are comma-separated.
struct ExperimentConfig {
  std::string experiment = "table1";
  WorldMode world = WorldMode::kSynthetic;
  uint64_t seed = 0;
  std::vector<int> ensemble_seeds = {0, 1, 2, 3, 4};
  TrainConfig training;
  // Synthetic world.
  int train_dialogues = 1000;
  int eval_dialogues = 500;
  int study_dialogues = 300;
  HumanPlayConfig human;
  // Policies for table1, in row order.
  std::vector<std::string> policies = {"silent", "human", "decider", "threshold:0.3", "threshold:0.7",
                                       "threshold:1.1"};
  std::vector<double> thetas = {0.3, 0.7, 1.1, 1.6};
  std::vector<double> sweep_thetas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8,
                                      0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6};
  std::vector<double> sweep_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double calibration_theta = 0.3;
  int calibration_bins = 10;
  SelectionMode selection_mode = SelectionMode::kRaw;
  int bootstrap_resamples = 10000;
  // Study grid.
  std::vector<int> study_epochs = {1, 5, 10, 15};
  StudyLabelMode study_labels = StudyLabelMode::kAnnotations;
  double study_label_noise = 0.3;
  int study_permutations = 1000;
  int study_bootstraps = 1000;
  double l2_lambda = 1.0;
  // Outputs and optional inputs.
  std::string output_dir = "out";
  bool write_transcripts = true;
  std::string corpus_path;
  CorpusFormat corpus_format = CorpusFormat::kNormalized;
  std::string annotations_path;
  std::string split_path;
  std::string drawer_weights;
  std::string checkpoint_dir;
  std::string decider_weights;

  void validate() const;
  // Canonical key = value form, keys sorted. parse(to_text()) == *this.
  std::string to_text() const;
  // Hex FNV-1a 64 of to_text(), excluding output_dir.
  std::string hash() const;
  static ExperimentConfig parse(std::string_view text);
  // Applies one key = value pair; throws Error on an unknown key or bad value.
  void set(std::string_view key, std::string_view value);
};

ExperimentConfig load_experiment_config(const std::string& path);

// Everything the experiments share: the drawer, evaluation scripts, human
// positions and the decider. Built once per configuration.
struct World {
  ExperimentConfig config;
  const Gallery* gallery = nullptr;
  std::vector<CorpusDialogue> train_corpus;
  std::vector<AnnotationRecord> train_annotations;
  std::shared_ptr<const Ensemble> drawer;
  StudyCheckpoints checkpoints;  // empty when weights were loaded
  std::vector<TellerScript> eval_scripts;
  std::set<TurnKey> human_positions;
  std::shared_ptr<const DeciderParams> decider;
  // Study input: held-out corpus dialogues and their annotations.
  std::vector<CorpusDialogue> study_corpus;
  std::vector<AnnotationRecord> study_annotations;
  bool has_study_annotations = false;
};

// Trains (or loads) the drawer ensemble and the decider, and builds the
// evaluation scripts. Training captures checkpoints at the study epochs.
World prepare_world(const ExperimentConfig& config, Execution execution = Execution::kParallel);

// Checkpoint file name inside a checkpoint directory.
std::string checkpoint_file(const std::string& dir, int seed, int epoch);

// Writes drawer.json, checkpoints/seed{s}_epoch{e}.json, decider.json (when
// present) and train.config under `dir`; returns the paths written. The
// outputs load back through drawer_weights, checkpoint_dir and
// decider_weights.
std::vector<std::string> save_world(const World& world, const std::string& dir);

// Concatenated JSONL transcripts.
std::string transcripts_jsonl(const std::vector<DialogueTranscript>& transcripts);

ClarificationPolicy make_policy(const World& world, std::string_view spec);

// Paired evaluation of one policy over the world's scripts.
struct PolicyRun {
  std::string policy;
  std::vector<DialogueTranscript> transcripts;
};

PolicyRun run_policy(const World& world, std::string_view policy_spec, Execution execution = Execution::kParallel);

// Per-dialogue summaries used by every report.
struct DialogueScore {
  int size_matches = 0;
  int size_pairs = 0;  // cliparts in both target and final scene
  double similarity = 0.0;
  int cqs = 0;
};

DialogueScore score_dialogue(const Gallery& gallery, const DialogueTranscript& transcript);

struct RunSummary {
  double size_accuracy = 0.0;  // pooled over dialogues, in percent
  double similarity = 0.0;     // mean SS v2
  double pct_with_cq = 0.0;
  double cqs_per_dialogue = 0.0;
  std::optional<double> cqs_per_cq_dialogue;
  int dialogues = 0;
};

RunSummary summarize(std::span<const DialogueScore> scores);

// Two-sided paired tests on per-dialogue deltas.
struct PairedTest {
  double mean_delta = 0.0;
  double t_statistic = 0.0;
  double t_p_value = 1.0;
  double bootstrap_p_value = 1.0;  // 2 min(P(mean* <= 0), P(mean* >= 0))
  int n = 0;
};

PairedTest paired_test(std::span<const double> deltas, int resamples, uint64_t seed);

// Named output files of an experiment; every report embeds the config hash.
struct ExperimentReport {
  std::string name;
  std::string config_hash;
  std::map<std::string, std::string> files;
};

void write_report(const ExperimentReport& report, const std::string& dir);

// Table 1: size accuracy, SS and CQ boost per policy. Boost columns compare
// each policy with its silent counterfactual on the dialogues where it asked.
struct Table1Row {
  std::string policy;
  RunSummary summary;
  int cq_dialogues = 0;
  std::optional<double> size_accuracy_boost;
  std::optional<double> similarity_boost;
  std::optional<PairedTest> similarity_test;
  std::optional<PairedTest> size_accuracy_test;
};

struct Table1 {
  std::vector<Table1Row> rows;
  const Table1Row& row(std::string_view policy) const;
};

Table1 exp_table1(const World& world, Execution execution = Execution::kParallel);
ExperimentReport table1_report(const World& world, const Table1& table);

struct Table2Row {
  double theta = 0.0;
  RunSummary summary;
};

std::vector<Table2Row> exp_table2(const World& world, Execution execution = Execution::kParallel);
ExperimentReport table2_report(const World& world, const std::vector<Table2Row>& rows);

struct CurvePoint {
  std::string policy;  // threshold | random | decider | human
  double parameter = 0.0;
  double budget = 0.0;  // questions per dialogue
  double size_accuracy = 0.0;
  double similarity = 0.0;
};

std::vector<CurvePoint> exp_figure4(const World& world, Execution execution = Execution::kParallel);
ExperimentReport figure4_report(const World& world, const std::vector<CurvePoint>& points);

// For every random point, the threshold point closest in budget within
// `tolerance`; a missing match leaves `threshold` empty.
struct BudgetMatch {
  CurvePoint random;
  std::optional<CurvePoint> threshold;
};
std::vector<BudgetMatch> match_budgets(const std::vector<CurvePoint>& points, double tolerance);

struct CalibrationResult {
  double theta = 0.0;
  int rows = 0;
  double ece_silent = 0.0;
  double ece_cq = 0.0;
  double brier_silent = 0.0;
  double brier_cq = 0.0;
  double ece_p_value = 1.0;    // paired dialogue bootstrap of the ECE delta
  double brier_p_value = 1.0;  // paired dialogue bootstrap of the Brier delta
};

// Rows are the cliparts present in the target and in both final scenes of a
// dialogue, using the size distribution behind each run's last write.
CalibrationResult calibration_between(const Gallery& gallery, std::span<const DialogueTranscript> silent,
                                      std::span<const DialogueTranscript> asked, int bins, int resamples,
                                      uint64_t seed);
CalibrationResult exp_calibration(const World& world, Execution execution = Execution::kParallel);
ExperimentReport calibration_report(const World& world, const CalibrationResult& result);

StudyReport exp_study(const World& world, Execution execution = Execution::kParallel);
ExperimentReport study_report(const World& world, const StudyReport& study);

// Runs experiment `name` (table1, table2, figure4, calibration, study,
// clusters) and returns its report.
ExperimentReport run_experiment(const World& world, std::string_view name, Execution execution = Execution::kParallel);

}  // namespace cqdraw

#endif  // CQDRAW_HARNESS_H_
