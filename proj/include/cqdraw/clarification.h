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

#ifndef CQDRAW_CLARIFICATION_H_
#define CQDRAW_CLARIFICATION_H_

#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cqdraw/drawer.h"
#include "cqdraw/ingest.h"
#include "cqdraw/random.h"
#include "cqdraw/uncertainty.h"

namespace cqdraw {

struct DeciderParams {
  std::vector<double> weights;
  double bias = 0.0;
  uint64_t seed = 0;
  int iterations = 0;
  double train_accuracy = 0.0;

  double probability(std::span<const double> features) const;
};

enum class PolicyKind { kSilent, kThreshold, kRandom, kHumanPositions, kDecider };

struct ClarificationPolicy {
  PolicyKind kind = PolicyKind::kSilent;
  double theta = 0.0;
  double rate = 0.0;
  std::set<TurnKey> human_positions;
  std::shared_ptr<const DeciderParams> decider;
  int max_targets = 2;
  // Skip cliparts already asked about earlier in the dialogue.
  bool dedup = false;

  static ClarificationPolicy silent();
  static ClarificationPolicy threshold(double theta);
  static ClarificationPolicy random(double rate);
  static ClarificationPolicy human(std::set<TurnKey> positions);
  static ClarificationPolicy with_decider(DeciderParams params);

  // Throws Error on theta < 0, rate outside [0, 1], max_targets < 1 or a
  // decider policy without parameters.
  void validate() const;
  std::string describe() const;
};

// `threshold:0.7`, `random:0.3`, `human`, `decider:<weights-file>`,
// `silent`. Human positions are supplied by the caller.
ClarificationPolicy parse_policy(std::string_view spec, const std::set<TurnKey>& human_positions = {});

struct DecisionContext {
  std::string dialogue_id;
  int turn_index = 0;
  Rng rng;
  // concat(text encoding, canvas encoding); required by the decider kind.
  std::optional<std::vector<double>> features;
  std::set<int> already_asked;
};

struct Decision {
  std::vector<int> targets;  // empty: stay silent
  Rng rng;                   // successor state
};

// Targets are selected cliparts ordered by descending h_size (ties by
// ascending id), at most max_targets of them. Threshold keeps h_size > theta;
// the other kinds gate the turn (coin flip, replayed human position, decider
// probability > 0.5) and then keep h_size > 0.
Decision decide(const ClarificationPolicy& policy, const TurnUncertainty& uncertainty, DecisionContext context);

struct ClarificationTarget {
  int clipart = 0;
  std::optional<Size> size;  // ground truth, absent if not in the target scene
};

struct ClarificationExchange {
  std::string question_text;
  std::string answer_text;
  std::vector<ClarificationTarget> targets;
  int turn_index = 0;
  bool answer_fallback = false;  // some target was not in the target scene
};

nlohmann::json exchange_to_json(const ClarificationExchange& exchange);

std::string render_question(std::span<const int> targets, const Gallery& gallery);

struct RenderedAnswer {
  std::string text;
  std::vector<ClarificationTarget> targets;
  bool fallback = false;
};

// Ground-truth answer read from the target scene.
RenderedAnswer render_answer(std::span<const int> targets, const Scene& target_scene, const Gallery& gallery);
// Template answer for known sizes.
std::string render_answer_text(std::span<const std::pair<int, Size>> sizes, const Gallery& gallery);

// Inverse of render_question. Throws if the text does not follow a template.
std::vector<int> parse_question(std::string_view text, const Gallery& gallery);

// Lenient scan of a free-text answer for size words. A size word binds to
// the most recently mentioned, still unassigned target; otherwise to the
// next unassigned target in question order. Throws if any target is left
// without a size.
std::vector<Size> parse_answer(std::string_view text, std::span<const int> targets, const Gallery& gallery);

// Longest-match clipart name mentions in token order.
std::vector<int> find_clipart_mentions(const std::vector<std::string>& tokens, const Gallery& gallery,
                                       std::span<const int> restrict_to = {});

std::vector<double> decider_features(const DrawerParams& drawer, std::string_view input_text, const Scene& canvas);

struct DeciderExample {
  std::vector<double> features;
  bool asked = false;
};

struct DeciderConfig {
  double learning_rate = 0.5;
  int iterations = 400;
  double l2 = 1e-4;
  uint64_t seed = 0;
};

// Full-batch logistic regression by gradient descent. Throws Error
// ("single-class") if all labels agree.
DeciderParams train_decider(std::span<const DeciderExample> examples, const DeciderConfig& config = {});

struct DeciderTurn {
  std::string input_text;
  Scene canvas;
  bool asked = false;
};

DeciderParams train_decider(const DrawerParams& frozen_drawer, std::span<const DeciderTurn> turns,
                            const DeciderConfig& config = {});

std::string save_decider(const DeciderParams& params);
DeciderParams load_decider(std::string_view bytes);

}  // namespace cqdraw

#endif  // CQDRAW_CLARIFICATION_H_
