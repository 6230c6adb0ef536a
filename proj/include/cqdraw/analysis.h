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

#ifndef CQDRAW_ANALYSIS_H_
#define CQDRAW_ANALYSIS_H_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cqdraw/drawer.h"
#include "cqdraw/ingest.h"
#include "cqdraw/parallel.h"
#include "cqdraw/uncertainty.h"

namespace cqdraw {

// Row-major feature matrix and 0/1 labels.
using FeatureMatrix = std::vector<std::vector<double>>;

struct LogisticConfig {
  double l2_lambda = 1.0;
  double learning_rate = 1.0;
  int max_iters = 10000;
  // Stop once every gradient component is below tol in magnitude.
  double tol = 1e-8;
  uint64_t seed = 0;

  void validate() const;
};

// Logistic regression on z-scored features. weights/bias live in the
// standardized space; raw_weights() maps them back to input units.
struct RegressionModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> means;
  std::vector<double> stds;  // population standard deviation, > 0
  double l2_lambda = 0.0;
  int iterations = 0;
  bool converged = false;

  std::vector<double> standardize(std::span<const double> features) const;
  double logit(std::span<const double> features) const;
  double probability(std::span<const double> features) const;
  std::vector<double> raw_weights() const;
  double raw_bias() const;
};

// Objective minimized by fit_logistic, on already standardized rows:
//   J(w, b) = (1/n) sum_i [log(1 + e^{s_i}) - y_i s_i] + lambda/(2n) |w|^2,
//   s_i = b + w . z_i,
// with theta = (w_1..w_d, b). Writes dJ/dtheta into `grad` when non-null.
double logistic_objective(std::span<const double> theta, const FeatureMatrix& z, std::span<const int> labels,
                          double l2_lambda, std::vector<double>* grad);

// Gradient descent from zero (or from `warm_start`, which must have matching
// standardization). Throws Error on fewer than 2 rows, a single class, or a
// constant feature.
RegressionModel fit_logistic(const FeatureMatrix& x, std::span<const int> labels, const LogisticConfig& config = {},
                             const RegressionModel* warm_start = nullptr);

std::vector<double> predict_proba(const RegressionModel& model, const FeatureMatrix& x);

// Rows sorted by descending score with equal scores kept in input order;
// AP = sum over positive ranks n of (R_n - R_{n-1}) P_n. Throws Error when no
// label is positive.
double average_precision(std::span<const double> scores, std::span<const int> labels);
// Number of scores equal to some earlier score.
int tie_count(std::span<const double> scores);

// 2TP / (2TP + FP + FN); 0 when TP = 0.
double f1_score(int tp, int fp, int fn);
// Predictions are probability >= 0.5.
double f1_at_half(const RegressionModel& model, const FeatureMatrix& x, std::span<const int> labels);

struct PermutationResult {
  double observed = 0.0;
  double baseline = 0.0;  // mean AP over shuffles
  double p_value = 1.0;   // fraction of shuffles with AP >= observed
  int resamples = 0;
};

// Resample r shuffles the scores with stream derive_seed(seed, r), so the
// serial and parallel paths agree exactly.
PermutationResult permutation_test_ap(std::span<const double> scores, std::span<const int> labels,
                                      int resamples = 1000, uint64_t seed = 0,
                                      Execution execution = Execution::kParallel);

struct CoefficientInterval {
  std::string name;
  double estimate = 0.0;  // standardized coefficient on the full data
  double lo = 0.0;        // 2.5th percentile over bootstrap fits
  double hi = 0.0;        // 97.5th percentile
  // Two-sided: 2 min(P(w <= 0), P(w >= 0)) over bootstrap fits, capped at 1.
  double p_value = 1.0;
  int resamples_used = 0;  // resamples with both classes and no constant column
};

// Row bootstrap of the standardized coefficients. Each refit starts from the
// full-data fit.
std::vector<CoefficientInterval> bootstrap_coefficients(const FeatureMatrix& x, std::span<const int> labels,
                                                        const std::vector<std::string>& names,
                                                        const LogisticConfig& config, int resamples, uint64_t seed,
                                                        Execution execution = Execution::kParallel);

// ---- Model-vs-human study.

inline constexpr int kStudyFeatures = 4;
inline constexpr std::array<std::string_view, kStudyFeatures> kStudyFeatureNames = {"u_select", "h_size", "h_flip",
                                                                                    "u_position"};

struct StudyRow {
  std::string dialogue_id;
  int turn_index = 0;
  std::array<double, kStudyFeatures> features{};
  bool label = false;
};

// Max-aggregated (u_select, h_size, h_flip, u_position); zeros when nothing
// is selected.
std::array<double, kStudyFeatures> study_features(const TurnUncertainty& u);

// Drawer snapshots keyed by (seed, epoch).
struct StudyCheckpoints {
  std::map<std::pair<int, int>, DrawerParams> params;

  const DrawerParams& at(int seed, int epoch) const;  // throws "missing checkpoint"
  Ensemble ensemble_at(int epoch, const std::vector<int>& seeds) const;
};

enum class StudyLabelMode {
  kAnnotations,     // human asked at the drawer turn answering the instruction
  kNoisyThreshold,  // reference h_size above its median, then flipped w.p. label_noise
  kNoise,           // independent coin flips with probability noise_prevalence
};

std::string_view to_string(StudyLabelMode mode);
StudyLabelMode parse_study_label_mode(std::string_view text);

struct StudyConfig {
  std::vector<int> seeds = {0, 1, 2, 3, 4};
  std::vector<int> epochs = {1, 5, 10, 15};
  double fit_fraction = 0.7;
  uint64_t seed = 0;
  LogisticConfig logistic;
  int permutation_resamples = 1000;
  int bootstrap_resamples = 1000;
  StudyLabelMode label_mode = StudyLabelMode::kAnnotations;
  double label_noise = 0.3;
  double noise_prevalence = 0.2;
  // Cell whose h_size defines the kNoisyThreshold labels; defaults to the
  // first seed at the last epoch.
  std::optional<std::pair<int, int>> reference_cell;

  void validate() const;
};

struct StudyCell {
  int seed = 0;
  int epoch = 0;
  int fit_rows = 0;
  int eval_rows = 0;
  double prevalence = 0.0;  // positive fraction of the evaluation rows
  double ap = 0.0;
  double f1 = 0.0;
  PermutationResult permutation;
  std::vector<CoefficientInterval> coefficients;
  // Features dropped from this cell's fit because they were constant.
  std::vector<std::string> dropped_features;
  int ties = 0;
  std::array<double, kStudyFeatures> mean_features{};
  double similarity = 0.0;  // mean SS v2 of the silent replay of the eval dialogues
};

struct StudyReport {
  StudyConfig config;
  std::vector<StudyCell> cells;  // seed-major, epochs in config order
  int dialogues = 0;
  int rows = 0;

  const StudyCell& cell(int seed, int epoch) const;
};

// Per-turn rows for one (seed, epoch): features from that member, u_position
// from the epoch's ensemble over `ensemble_seeds`. Labels are left false.
std::vector<StudyRow> study_rows(const Gallery& gallery, const std::vector<CorpusDialogue>& dialogues,
                                 const StudyCheckpoints& checkpoints, int seed, int epoch,
                                 const std::vector<int>& ensemble_seeds);

// The epochs x seeds grid. Rows come from replaying each corpus turn
// (previous drawer utterance + teller utterance on the recorded canvas).
// Dialogues are split fit_fraction / rest by dialogue, identically for every
// cell. `annotations` is required for kAnnotations.
StudyReport study_grid(const Gallery& gallery, const std::vector<CorpusDialogue>& dialogues,
                       const StudyCheckpoints& checkpoints, const AnnotationJoin* annotations,
                       const StudyConfig& config, Execution execution = Execution::kParallel);

std::string study_cells_csv(const StudyReport& report);
std::string study_coefficients_csv(const StudyReport& report);
// Seed rows by epoch columns of one statistic ("ap", "baseline", "f1", "ss").
std::string study_markdown(const StudyReport& report);

// ---- Keyword clusters over first-turn instructions.

enum class LexiconKind { kClipartNames, kSizeWords, kLocationWords };
// Compiled-in copies of data/lexicons/*.txt.
std::string_view default_lexicon_text(LexiconKind kind);

struct Lexicons {
  std::vector<std::vector<std::string>> clipart_names;  // tokenized, possibly multi-word
  std::set<std::string> size_words;
  std::set<std::string> location_words;

  // Newline-separated entries; blank lines and '#' comments skipped. Throws
  // Error on an empty list.
  static Lexicons parse(std::string_view clipart_names, std::string_view size_words,
                        std::string_view location_words);
  static Lexicons load_dir(const std::string& dir);
  static const Lexicons& defaults();
};

struct KeywordCounts {
  int clipart = 0;
  int size = 0;
  int location = 0;

  bool operator==(const KeywordCounts&) const = default;
};

// Case-insensitive whole-token counts. Clipart names match longest first and
// consume their tokens, so "pine tree" counts once.
KeywordCounts count_keywords(std::string_view text, const Lexicons& lexicons);

struct CountConstraint {
  enum class Kind { kAny, kExact, kAtLeast };
  Kind kind = Kind::kAny;
  int value = 0;

  static CountConstraint any() { return {}; }
  static CountConstraint exactly(int v) { return {Kind::kExact, v}; }
  static CountConstraint at_least(int v) { return {Kind::kAtLeast, v}; }
  bool accepts(int count) const;
  std::string describe() const;  // "-", "1", ">=1"
};

struct ClusterSpec {
  std::string name;
  CountConstraint clipart;
  CountConstraint size;
  CountConstraint location;

  void validate() const;  // at least one constraint
  bool matches(const KeywordCounts& counts) const;
};

// Rows A-F of the reference cluster table.
std::vector<ClusterSpec> reference_clusters();

struct ClusterRow {
  ClusterSpec spec;
  int utterances = 0;
  int followed_by_cq = 0;
  double pct_cq = 0.0;
  std::map<CqAttribute, int> attribute_counts;  // over the CQ-followed utterances
  std::vector<std::string> examples;            // first two matches
};

// Uses turn 0 of every dialogue; the label is whether that turn's drawer
// message is annotated as a CQ.
std::vector<ClusterRow> cluster_analysis(const std::vector<CorpusDialogue>& corpus, const AnnotationJoin& annotations,
                                         const Lexicons& lexicons, const std::vector<ClusterSpec>& specs);
std::string clusters_csv(const std::vector<ClusterRow>& rows);
std::string clusters_markdown(const std::vector<ClusterRow>& rows);

}  // namespace cqdraw

#endif  // CQDRAW_ANALYSIS_H_
