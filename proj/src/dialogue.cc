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

#include "cqdraw/dialogue.h"

#include <algorithm>

#include "cqdraw/random.h"
#include "cqdraw/text_util.h"

namespace cqdraw {

void InstructionConfig::validate() const {
  if (min_cliparts_per_turn < 1 || min_cliparts_per_turn > max_cliparts_per_turn) {
    throw Error("invalid cliparts-per-turn range");
  }
  if (!(omit_size_p >= 0.0 && omit_size_p <= 1.0) || !(omit_flip_p >= 0.0 && omit_flip_p <= 1.0)) {
    throw Error("omission probabilities must lie in [0, 1]");
  }
}

std::string region_name(double x, double y) {
  static constexpr const char* kRows[] = {"top", "middle", "bottom"};
  static constexpr const char* kCols[] = {"left", "center", "right"};
  const int col = std::clamp(static_cast<int>(x * 3.0), 0, 2);
  const int row = std::clamp(static_cast<int>(y * 3.0), 0, 2);
  if (row == 1 && col == 1) return "center";
  return std::string(kRows[row]) + " " + kCols[col];
}

Instruction synthetic_instruction(const Gallery& gallery, const Scene& target, const std::set<int>& already_described,
                                  const InstructionConfig& config, Rng& rng) {
  config.validate();
  std::vector<int> remaining;
  for (const auto& [id, p] : target.placements) {
    if (!already_described.count(id)) remaining.push_back(id);
  }
  if (remaining.empty()) throw Error("nothing left to describe");
  const int span = config.max_cliparts_per_turn - config.min_cliparts_per_turn + 1;
  int count = config.min_cliparts_per_turn + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(span)));
  count = std::min<int>(count, static_cast<int>(remaining.size()));

  Instruction out;
  std::vector<std::string> clauses;
  for (int i = 0; i < count; ++i) {
    const std::size_t j = uniform_index(rng, remaining.size());
    const int id = remaining[j];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(j));
    const Placement& p = *target.find(id);
    const bool omit_size = bernoulli(rng, config.omit_size_p);
    const bool omit_flip = bernoulli(rng, config.omit_flip_p);
    std::string clause = "add a ";
    if (!omit_size) clause += std::string(to_string(p.size)) + " ";
    clause += gallery.at(id).name;
    if (!omit_flip) clause += p.flip == Flip::kFacingLeft ? " facing left" : " facing right";
    clause += " at the " + region_name(p.x, p.y);
    clauses.push_back(std::move(clause));
    out.described.push_back(id);
    if (omit_size) out.size_omitted.push_back(id);
    if (omit_flip) out.flip_omitted.push_back(id);
  }
  out.text = join(clauses, " and ");
  return out;
}

TellerScript TellerScript::synthetic(const Gallery& gallery, std::string dialogue_id, const Scene& target,
                                     const InstructionConfig& config, uint64_t seed) {
  TellerScript script;
  script.dialogue_id = std::move(dialogue_id);
  script.target = target;
  Rng rng = make_rng(seed);
  std::set<int> described;
  while (static_cast<int>(described.size()) < target.size()) {
    Instruction ins = synthetic_instruction(gallery, target, described, config, rng);
    described.insert(ins.described.begin(), ins.described.end());
    script.utterances.push_back(std::move(ins.text));
    script.size_omitted.push_back(std::move(ins.size_omitted));
  }
  return script;
}

TellerScript TellerScript::from_corpus(const CorpusDialogue& dialogue) {
  TellerScript script;
  script.dialogue_id = dialogue.dialogue_id;
  script.target = dialogue.target;
  script.replay = true;
  for (const auto& t : dialogue.turns) script.utterances.push_back(t.teller_text);
  return script;
}

int DialogueTranscript::cq_count() const {
  int n = 0;
  for (const auto& t : turns) n += t.cq.has_value();
  return n;
}

DialogueEngine::DialogueEngine(const Gallery& gallery, std::shared_ptr<const Ensemble> drawer, std::string dialogue_id,
                               Scene target_scene, DialogueConfig config)
    : gallery_(&gallery), drawer_(std::move(drawer)), config_(config) {
  if (!drawer_ || drawer_->members.empty()) throw Error("dialogue engine needs a drawer");
  if (drawer_->front().dims.gallery != gallery.size() || drawer_->front().gallery_hash != gallery.hash()) {
    throw Error("drawer dimensions do not match the gallery");
  }
  transcript_.dialogue_id = std::move(dialogue_id);
  transcript_.target_scene = std::move(target_scene);
}

DialogueEngine::StepResult DialogueEngine::step(const std::string& input_text) {
  const EnsembleOutput out = forward_ensemble(*drawer_, input_text, canvas_);
  StepResult result;
  result.uncertainty = turn_uncertainty(out, config_.selection_mode);
  for (int c : out.mean.selected()) {
    const ClipartPrediction& pred = out.mean.cliparts[c];
    Placement p;
    p.clipart = c;
    p.size = pred.size();
    p.flip = pred.flip();
    p.x = pred.x;
    p.y = pred.y;
    if (gallery_->at(c).is_person) {
      const Placement* existing = canvas_.find(c);
      p.expression = existing ? existing->expression : 0;
      p.pose = existing ? existing->pose : 0;
    }
    result.action.upserts.push_back(p);
    transcript_.size_beliefs[c] = pred.size_dist;
  }
  canvas_ = apply_action(*gallery_, canvas_, result.action);
  return result;
}

const TurnUncertainty& DialogueEngine::instruct(std::string_view teller_text) {
  if (pending_) throw Error("a turn is already pending");
  TranscriptTurn turn;
  turn.turn_index = turn_count();
  turn.teller_text = std::string(teller_text);
  turn.input_text = drawer_input_text(previous_drawer_, teller_text);
  canvas_before_ = canvas_;
  StepResult r = step(turn.input_text);
  turn.drawer_action = std::move(r.action);
  turn.uncertainty = std::move(r.uncertainty);
  pending_ = std::move(turn);
  return pending_->uncertainty;
}

std::vector<double> DialogueEngine::pending_features() const {
  if (!pending_) throw Error("no pending turn");
  return decider_features(drawer_->front(), pending_->input_text, canvas_before_);
}

void DialogueEngine::commit(std::string reply) {
  pending_->drawer_reply = std::move(reply);
  pending_->canvas_after = canvas_;
  transcript_.turns.push_back(std::move(*pending_));
  pending_.reset();
  // After a clarification exchange the drawer has acknowledged the answer,
  // so the next turn sees the acknowledgement either way.
  previous_drawer_ = std::string(kDrawerAck);
}

void DialogueEngine::finish_silent() {
  if (!pending_) throw Error("no pending turn");
  commit(std::string(kDrawerAck));
}

void DialogueEngine::answer(ClarificationExchange exchange) {
  if (!pending_) throw Error("no pending turn");
  exchange.turn_index = pending_->turn_index;
  StepResult r = step(drawer_input_text(exchange.question_text, exchange.answer_text));
  pending_->post_cq_action = std::move(r.action);
  pending_->post_cq_uncertainty = std::move(r.uncertainty);
  for (const auto& t : exchange.targets) asked_.insert(t.clipart);
  std::string reply = exchange.question_text;
  pending_->cq = std::move(exchange);
  commit(std::move(reply));
}

DialogueTranscript DialogueEngine::finish() {
  if (pending_) throw Error("cannot finish with a pending turn");
  transcript_.final_scene = canvas_;
  return transcript_;
}

DialogueTranscript run_dialogue(const Gallery& gallery, const TellerScript& teller,
                                std::shared_ptr<const Ensemble> drawer, const ClarificationPolicy& policy,
                                const DialogueConfig& config) {
  policy.validate();
  DialogueEngine engine(gallery, std::move(drawer), teller.dialogue_id, teller.target, config);
  Rng rng = make_rng(derive_seed(config.policy_seed, fnv1a64(teller.dialogue_id)));
  const int limit = config.max_turns > 0 ? std::min<int>(config.max_turns, static_cast<int>(teller.utterances.size()))
                                         : static_cast<int>(teller.utterances.size());
  for (int i = 0; i < limit; ++i) {
    const TurnUncertainty& u = engine.instruct(teller.utterances[i]);
    DecisionContext ctx{teller.dialogue_id, i, rng, std::nullopt, engine.asked()};
    if (policy.kind == PolicyKind::kDecider) ctx.features = engine.pending_features();
    Decision d = decide(policy, u, std::move(ctx));
    rng = d.rng;
    if (d.targets.empty()) {
      engine.finish_silent();
      continue;
    }
    ClarificationExchange ex;
    ex.question_text = render_question(d.targets, gallery);
    RenderedAnswer ans = render_answer(d.targets, teller.target, gallery);
    ex.answer_text = std::move(ans.text);
    ex.targets = std::move(ans.targets);
    ex.answer_fallback = ans.fallback;
    engine.answer(std::move(ex));
  }
  return engine.finish();
}

DialogueTranscript suppress_cqs(const Gallery& gallery, const TellerScript& teller,
                                std::shared_ptr<const Ensemble> drawer, const DialogueConfig& config) {
  return run_dialogue(gallery, teller, std::move(drawer), ClarificationPolicy::silent(), config);
}

std::vector<DialogueTranscript> run_batch(const Gallery& gallery, const std::vector<TellerScript>& scripts,
                                          std::shared_ptr<const Ensemble> drawer, const ClarificationPolicy& policy,
                                          const DialogueConfig& config, Execution execution) {
  std::vector<DialogueTranscript> out(scripts.size());
  for_each_index(execution, scripts.size(),
                 [&](std::size_t i) { out[i] = run_dialogue(gallery, scripts[i], drawer, policy, config); });
  return out;
}

bool replay_consistent(const Gallery& gallery, const DialogueTranscript& transcript) {
  Scene canvas;
  for (const auto& t : transcript.turns) {
    canvas = apply_action(gallery, canvas, t.drawer_action);
    if (t.post_cq_action) canvas = apply_action(gallery, canvas, *t.post_cq_action);
    if (!(canvas == t.canvas_after)) return false;
  }
  return canvas == transcript.final_scene;
}

nlohmann::json turn_to_json(const TranscriptTurn& t) {
  return {{"turn_index", t.turn_index},
          {"teller_text", t.teller_text},
          {"input_text", t.input_text},
          {"drawer_action", action_to_json(t.drawer_action)},
          {"drawer_reply", t.drawer_reply},
          {"cq", t.cq ? exchange_to_json(*t.cq) : nlohmann::json()},
          {"post_cq_action", t.post_cq_action ? action_to_json(*t.post_cq_action) : nlohmann::json()},
          {"canvas_after", scene_to_json(t.canvas_after)},
          {"uncertainty", uncertainty_to_json(t.uncertainty)},
          {"post_cq_uncertainty", t.post_cq_uncertainty ? uncertainty_to_json(*t.post_cq_uncertainty) : nlohmann::json()}};
}

std::string transcript_to_jsonl(const DialogueTranscript& transcript) {
  std::string out;
  out += nlohmann::json{{"kind", "header"},
                        {"dialogue_id", transcript.dialogue_id},
                        {"target_scene", scene_to_json(transcript.target_scene)}}
             .dump() +
         "\n";
  for (const auto& t : transcript.turns) {
    nlohmann::json line = turn_to_json(t);
    line["kind"] = "turn";
    line["dialogue_id"] = transcript.dialogue_id;
    out += line.dump() + "\n";
  }
  nlohmann::json beliefs = nlohmann::json::object();
  for (const auto& [id, dist] : transcript.size_beliefs) beliefs[std::to_string(id)] = dist;
  out += nlohmann::json{{"kind", "footer"},
                        {"dialogue_id", transcript.dialogue_id},
                        {"final_scene", scene_to_json(transcript.final_scene)},
                        {"size_beliefs", beliefs}}
             .dump() +
         "\n";
  return out;
}

std::string render_transcript_text(const DialogueTranscript& transcript, const Gallery& gallery) {
  std::string out = "== dialogue " + transcript.dialogue_id + "\n";
  for (const auto& t : transcript.turns) {
    out += "Teller: " + t.teller_text + "\n";
    if (t.cq) {
      out += "Drawer: " + t.cq->question_text + "\n";
      out += "Teller: " + t.cq->answer_text + "\n";
      out += "Drawer: " + std::string(kDrawerAck) + "\n";
    } else {
      out += "Drawer: " + t.drawer_reply + "\n";
    }
    std::vector<std::string> items;
    for (const auto& [id, p] : t.canvas_after.placements) {
      items.push_back(gallery.at(id).name + "(" + std::string(to_string(p.size)) + ", " +
                      std::string(to_string(p.flip)) + ", " + format_fixed(p.x, 2) + ", " + format_fixed(p.y, 2) + ")");
    }
    out += "  [canvas] " + join(items, "; ") + "\n";
  }
  return out;
}

SyntheticCorpus synthetic_corpus(const Gallery& gallery, int dialogues, uint64_t seed, const HumanPlayConfig& config,
                                 const std::string& id_prefix) {
  config.instruction.validate();
  if (!(config.ask_p >= 0.0 && config.ask_p <= 1.0)) throw Error("ask_p must lie in [0, 1]");
  SyntheticCorpus corpus;
  for (int d = 0; d < dialogues; ++d) {
    const uint64_t dseed = derive_seed(seed, static_cast<uint64_t>(d));
    CorpusDialogue dialogue;
    dialogue.dialogue_id = id_prefix + "_" + std::to_string(d);
    dialogue.target = random_scene(gallery, dseed, config.scene);
    Rng rng = make_rng(derive_seed(dseed, 1));
    std::set<int> described;
    Scene canvas;
    auto record = [&](std::string teller, std::string drawer, bool is_cq) {
      AnnotationRecord a;
      a.dialogue_id = dialogue.dialogue_id;
      a.turn_index = static_cast<int>(dialogue.turns.size());
      a.is_cq = is_cq;
      if (is_cq) a.attributes.insert(CqAttribute::kSize);
      corpus.annotations.push_back(std::move(a));
      dialogue.turns.push_back({std::move(teller), std::move(drawer), canvas});
    };
    while (static_cast<int>(described.size()) < dialogue.target.size()) {
      Instruction ins = synthetic_instruction(gallery, dialogue.target, described, config.instruction, rng);
      described.insert(ins.described.begin(), ins.described.end());
      Action action;
      for (int id : ins.described) {
        Placement p = *dialogue.target.find(id);
        if (std::count(ins.size_omitted.begin(), ins.size_omitted.end(), id)) {
          p.size = static_cast<Size>(uniform_index(rng, kNumSizes));
        }
        if (std::count(ins.flip_omitted.begin(), ins.flip_omitted.end(), id)) {
          p.flip = static_cast<Flip>(uniform_index(rng, kNumFlips));
        }
        action.upserts.push_back(p);
      }
      canvas = apply_action(gallery, canvas, action);
      const bool ask = !ins.size_omitted.empty() && bernoulli(rng, config.ask_p);
      if (!ask) {
        record(ins.text, std::string(kDrawerAck), false);
        continue;
      }
      std::vector<int> targets(ins.size_omitted.begin(),
                               ins.size_omitted.begin() + std::min<std::ptrdiff_t>(2, ins.size_omitted.size()));
      record(ins.text, render_question(targets, gallery), true);
      RenderedAnswer answer = render_answer(targets, dialogue.target, gallery);
      Action fix;
      for (int id : targets) {
        Placement p = *canvas.find(id);
        p.size = dialogue.target.find(id)->size;
        fix.upserts.push_back(p);
      }
      canvas = apply_action(gallery, canvas, fix);
      record(answer.text, std::string(kDrawerAck), false);
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }
  return corpus;
}

std::set<TurnKey> synthetic_human_positions(const std::vector<TellerScript>& scripts, double ask_p, uint64_t seed) {
  std::set<TurnKey> out;
  for (const auto& s : scripts) {
    Rng rng = make_rng(derive_seed(seed, fnv1a64(s.dialogue_id)));
    for (std::size_t i = 0; i < s.size_omitted.size(); ++i) {
      if (bernoulli(rng, ask_p) && !s.size_omitted[i].empty()) out.insert({s.dialogue_id, static_cast<int>(i)});
    }
  }
  return out;
}

}  // namespace cqdraw
