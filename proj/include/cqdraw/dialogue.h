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

#ifndef CQDRAW_DIALOGUE_H_
#define CQDRAW_DIALOGUE_H_

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cqdraw/clarification.h"
#include "cqdraw/drawer.h"
#include "cqdraw/ingest.h"
#include "cqdraw/parallel.h"
#include "cqdraw/uncertainty.h"

namespace cqdraw {

inline constexpr std::string_view kDrawerAck = "ok";

struct InstructionConfig {
  int min_cliparts_per_turn = 1;
  int max_cliparts_per_turn = 2;
  double omit_size_p = 0.7;
  double omit_flip_p = 0.5;

  void validate() const;
};

struct Instruction {
  std::string text;
  std::vector<int> described;
  std::vector<int> size_omitted;
  std::vector<int> flip_omitted;
};

// 3x3 grid: rows top/middle/bottom, columns left/center/right; the middle
// cell is "center".
std::string region_name(double x, double y);

// "add a {size?} {name} {facing left|right?} at the {region}" per clipart,
// clauses joined with " and ".
Instruction synthetic_instruction(const Gallery& gallery, const Scene& target, const std::set<int>& already_described,
                                  const InstructionConfig& config, Rng& rng);

// Teller side of one dialogue: the full list of utterances, consumed in order.
struct TellerScript {
  std::string dialogue_id;
  Scene target;
  std::vector<std::string> utterances;
  // Synthetic scripts only: per utterance, the cliparts whose size went unsaid.
  std::vector<std::vector<int>> size_omitted;
  bool replay = false;

  static TellerScript synthetic(const Gallery& gallery, std::string dialogue_id, const Scene& target,
                                const InstructionConfig& config, uint64_t seed);
  static TellerScript from_corpus(const CorpusDialogue& dialogue);
};

struct TranscriptTurn {
  int turn_index = 0;
  std::string teller_text;
  std::string input_text;
  Action drawer_action;
  std::string drawer_reply;
  std::optional<ClarificationExchange> cq;
  std::optional<Action> post_cq_action;
  Scene canvas_after;
  TurnUncertainty uncertainty;
  std::optional<TurnUncertainty> post_cq_uncertainty;
};

struct DialogueTranscript {
  std::string dialogue_id;
  std::vector<TranscriptTurn> turns;
  Scene final_scene;
  Scene target_scene;
  // Size distribution behind the latest write of each clipart on the canvas.
  std::map<int, std::array<double, kNumSizes>> size_beliefs;

  int cq_count() const;
};

struct DialogueConfig {
  SelectionMode selection_mode = SelectionMode::kRaw;
  uint64_t policy_seed = 0;  // stream for the random policy
  int max_turns = 0;         // 0: until the script is exhausted
};

// The turn engine. Each turn is instruct() followed by exactly one of
// finish_silent() or answer(). The batch simulator and the HTTP service both
// drive dialogues through this class.
class DialogueEngine {
 public:
  DialogueEngine(const Gallery& gallery, std::shared_ptr<const Ensemble> drawer, std::string dialogue_id,
                 Scene target_scene, DialogueConfig config = {});

  // Steps (1)-(4): build the input text, run the drawer, apply its action and
  // compute uncertainty. Throws if a turn is already pending.
  const TurnUncertainty& instruct(std::string_view teller_text);
  // Drawer features of the pending turn (decider input).
  std::vector<double> pending_features() const;
  bool pending() const { return pending_.has_value(); }
  const TranscriptTurn* pending_turn() const { return pending_ ? &*pending_ : nullptr; }

  void finish_silent();
  // Records the exchange and runs the post-answer drawer step with input
  // question + answer on the updated canvas.
  void answer(ClarificationExchange exchange);

  const Scene& canvas() const { return canvas_; }
  int turn_count() const { return static_cast<int>(transcript_.turns.size()); }
  const DialogueTranscript& transcript() const { return transcript_; }
  DialogueTranscript finish();
  const std::set<int>& asked() const { return asked_; }

 private:
  struct StepResult {
    Action action;
    TurnUncertainty uncertainty;
  };
  StepResult step(const std::string& input_text);
  void commit(std::string reply);

  const Gallery* gallery_;
  Scene canvas_before_;
  std::shared_ptr<const Ensemble> drawer_;
  DialogueConfig config_;
  Scene canvas_;
  std::string previous_drawer_;
  std::optional<TranscriptTurn> pending_;
  std::set<int> asked_;
  DialogueTranscript transcript_;
};

DialogueTranscript run_dialogue(const Gallery& gallery, const TellerScript& teller,
                                std::shared_ptr<const Ensemble> drawer, const ClarificationPolicy& policy,
                                const DialogueConfig& config = {});

// The !CQ counterfactual: the same configuration with the policy silenced.
DialogueTranscript suppress_cqs(const Gallery& gallery, const TellerScript& teller,
                                std::shared_ptr<const Ensemble> drawer, const DialogueConfig& config = {});

std::vector<DialogueTranscript> run_batch(const Gallery& gallery, const std::vector<TellerScript>& scripts,
                                          std::shared_ptr<const Ensemble> drawer, const ClarificationPolicy& policy,
                                          const DialogueConfig& config, Execution execution = Execution::kParallel);

// Replays the recorded actions from an empty canvas; returns false if any
// canvas_after disagrees.
bool replay_consistent(const Gallery& gallery, const DialogueTranscript& transcript);

// JSONL: a header line, one line per turn, and a footer with the final scene.
std::string transcript_to_jsonl(const DialogueTranscript& transcript);
nlohmann::json turn_to_json(const TranscriptTurn& turn);
// Human-readable log, one utterance per line.
std::string render_transcript_text(const DialogueTranscript& transcript, const Gallery& gallery);

// Synthetic human play used as training data: a scripted teller and a human
// drawer that draws what it is told, guesses unsaid attributes uniformly and,
// with probability ask_p, asks about unsaid sizes; the answer arrives as the
// next teller turn.
struct HumanPlayConfig {
  InstructionConfig instruction;
  RandomSceneConfig scene;
  double ask_p = 0.5;
};

struct SyntheticCorpus {
  std::vector<CorpusDialogue> dialogues;
  std::vector<AnnotationRecord> annotations;
};

SyntheticCorpus synthetic_corpus(const Gallery& gallery, int dialogues, uint64_t seed,
                                 const HumanPlayConfig& config = {}, const std::string& id_prefix = "syn");

// Turns of synthetic evaluation scripts at which the simulated human would ask
// (some size omitted, then a coin flip with probability ask_p).
std::set<TurnKey> synthetic_human_positions(const std::vector<TellerScript>& scripts, double ask_p, uint64_t seed);

}  // namespace cqdraw

#endif  // CQDRAW_DIALOGUE_H_
