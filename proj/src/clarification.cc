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

#include "cqdraw/clarification.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cqdraw/text_util.h"

namespace cqdraw {

namespace {

constexpr std::string_view kQuestionPrefix = "what size ";

std::vector<std::vector<std::string>> tokenized_names(const Gallery& gallery) {
  std::vector<std::vector<std::string>> out;
  for (const auto& e : gallery.entries()) out.push_back(tokenize_words(e.name));
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double DeciderParams::probability(std::span<const double> features) const {
  if (features.size() != weights.size()) {
    throw Error("decider expects " + std::to_string(weights.size()) + " features, got " +
                std::to_string(features.size()));
  }
  double z = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * features[i];
  return sigmoid(z);
}

ClarificationPolicy ClarificationPolicy::silent() { return {}; }

ClarificationPolicy ClarificationPolicy::threshold(double theta) {
  ClarificationPolicy p;
  p.kind = PolicyKind::kThreshold;
  p.theta = theta;
  p.validate();
  return p;
}

ClarificationPolicy ClarificationPolicy::random(double rate) {
  ClarificationPolicy p;
  p.kind = PolicyKind::kRandom;
  p.rate = rate;
  p.validate();
  return p;
}

ClarificationPolicy ClarificationPolicy::human(std::set<TurnKey> positions) {
  ClarificationPolicy p;
  p.kind = PolicyKind::kHumanPositions;
  p.human_positions = std::move(positions);
  return p;
}

ClarificationPolicy ClarificationPolicy::with_decider(DeciderParams params) {
  ClarificationPolicy p;
  p.kind = PolicyKind::kDecider;
  p.decider = std::make_shared<const DeciderParams>(std::move(params));
  return p;
}

void ClarificationPolicy::validate() const {
  if (!(theta >= 0.0)) throw Error("theta must be >= 0");
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("random rate must lie in [0, 1]");
  if (max_targets < 1) throw Error("max_targets must be >= 1");
  if (kind == PolicyKind::kDecider && !decider) throw Error("decider policy without parameters");
}

std::string ClarificationPolicy::describe() const {
  switch (kind) {
    case PolicyKind::kSilent: return "silent";
    case PolicyKind::kThreshold: return "threshold:" + format_double(theta);
    case PolicyKind::kRandom: return "random:" + format_double(rate);
    case PolicyKind::kHumanPositions: return "human";
    case PolicyKind::kDecider: return "decider";
  }
  return "silent";
}

ClarificationPolicy parse_policy(std::string_view spec, const std::set<TurnKey>& human_positions) {
  spec = trim(spec);
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view() : spec.substr(colon + 1);
  if (kind == "silent") return ClarificationPolicy::silent();
  if (kind == "threshold") return ClarificationPolicy::threshold(parse_double(arg, "threshold"));
  if (kind == "random") return ClarificationPolicy::random(parse_double(arg, "random rate"));
  if (kind == "human") return ClarificationPolicy::human(human_positions);
  if (kind == "decider") {
    if (arg.empty()) throw Error("decider policy needs a weights file: decider:<path>");
    return ClarificationPolicy::with_decider(load_decider(read_file(std::string(arg))));
  }
  throw Error("unknown policy '" + std::string(spec) + "'");
}

Decision decide(const ClarificationPolicy& policy, const TurnUncertainty& uncertainty, DecisionContext context) {
  Decision out{{}, context.rng};
  double floor = 0.0;
  switch (policy.kind) {
    case PolicyKind::kSilent:
      return out;
    case PolicyKind::kThreshold:
      floor = policy.theta;
      break;
    case PolicyKind::kRandom: {
      const bool ask = bernoulli(out.rng, policy.rate);
      if (!ask) return out;
      break;
    }
    case PolicyKind::kHumanPositions:
      if (!policy.human_positions.count({context.dialogue_id, context.turn_index})) return out;
      break;
    case PolicyKind::kDecider:
      if (!policy.decider) throw Error("decider policy without parameters");
      if (!context.features) throw Error("decider policy requires turn encodings");
      if (!(policy.decider->probability(*context.features) > 0.5)) return out;
      break;
  }
  std::vector<const ClipartUncertainty*> candidates;
  for (const auto& c : uncertainty.cliparts) {
    if (c.h_size > floor && !(policy.dedup && context.already_asked.count(c.clipart))) {
      candidates.push_back(&c);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto* a, const auto* b) {
    if (a->h_size != b->h_size) return a->h_size > b->h_size;
    return a->clipart < b->clipart;
  });
  for (std::size_t i = 0; i < candidates.size() && static_cast<int>(i) < policy.max_targets; ++i) {
    out.targets.push_back(candidates[i]->clipart);
  }
  return out;
}

nlohmann::json exchange_to_json(const ClarificationExchange& ex) {
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& t : ex.targets) {
    targets.push_back({{"clipart", t.clipart},
                       {"size", t.size ? nlohmann::json(std::string(to_string(*t.size))) : nlohmann::json()}});
  }
  return {{"question_text", ex.question_text},
          {"answer_text", ex.answer_text},
          {"targets", targets},
          {"turn_index", ex.turn_index},
          {"answer_fallback", ex.answer_fallback}};
}

std::string render_question(std::span<const int> targets, const Gallery& gallery) {
  if (targets.size() == 1) return "what size is the " + gallery.at(targets[0]).name + "?";
  if (targets.size() == 2) {
    return "what size are the " + gallery.at(targets[0]).name + " and the " + gallery.at(targets[1]).name + "?";
  }
  throw Error("a question covers one or two cliparts, got " + std::to_string(targets.size()));
}

RenderedAnswer render_answer(std::span<const int> targets, const Scene& target_scene, const Gallery& gallery) {
  if (targets.empty() || targets.size() > 2) throw Error("an answer covers one or two cliparts");
  RenderedAnswer out;
  std::vector<std::string> parts;
  for (int id : targets) {
    const std::string& name = gallery.at(id).name;
    const Placement* p = target_scene.find(id);
    if (p) {
      parts.push_back("the " + name + " is " + std::string(to_string(p->size)));
      out.targets.push_back({id, p->size});
    } else {
      parts.push_back("the " + name + " is not in the scene");
      out.targets.push_back({id, std::nullopt});
      out.fallback = true;
    }
  }
  out.text = join(parts, " and ");
  return out;
}

std::string render_answer_text(std::span<const std::pair<int, Size>> sizes, const Gallery& gallery) {
  std::vector<std::string> parts;
  for (const auto& [id, size] : sizes) parts.push_back("the " + gallery.at(id).name + " is " + std::string(to_string(size)));
  return join(parts, " and ");
}

std::vector<int> parse_question(std::string_view text, const Gallery& gallery) {
  const auto fail = [&] { return Error("not a template question: '" + std::string(text) + "'"); };
  text = trim(text);
  if (!text.starts_with(kQuestionPrefix) || !text.ends_with("?")) throw fail();
  std::string_view body = text.substr(kQuestionPrefix.size(), text.size() - kQuestionPrefix.size() - 1);
  std::vector<std::string_view> names;
  if (body.starts_with("is the ")) {
    names.push_back(body.substr(7));
  } else if (body.starts_with("are the ")) {
    body.remove_prefix(8);
    const auto sep = body.find(" and the ");
    if (sep == std::string_view::npos) throw fail();
    names.push_back(body.substr(0, sep));
    names.push_back(body.substr(sep + 9));
  } else {
    throw fail();
  }
  std::vector<int> out;
  for (auto name : names) {
    const auto id = gallery.find(name);
    if (!id) throw Error("unknown clipart '" + std::string(name) + "' in question");
    out.push_back(*id);
  }
  return out;
}

std::vector<int> find_clipart_mentions(const std::vector<std::string>& tokens, const Gallery& gallery,
                                       std::span<const int> restrict_to) {
  const auto names = tokenized_names(gallery);
  std::vector<int> candidates;
  if (restrict_to.empty()) {
    for (int i = 0; i < gallery.size(); ++i) candidates.push_back(i);
  } else {
    candidates.assign(restrict_to.begin(), restrict_to.end());
  }
  std::vector<int> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (int id : candidates) {
      const auto& name = names[id];
      if (name.size() <= best_len || i + name.size() > tokens.size()) continue;
      if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        best = id;
        best_len = name.size();
      }
    }
    if (best >= 0) {
      out.push_back(best);
      i += best_len;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<Size> parse_answer(std::string_view text, std::span<const int> targets, const Gallery& gallery) {
  if (targets.empty()) throw Error("no pending targets to answer");
  const auto tokens = tokenize_words(text);
  const auto names = tokenized_names(gallery);
  std::vector<std::optional<Size>> assigned(targets.size());
  std::optional<std::size_t> current;  // index into targets of the last mention
  std::size_t i = 0;
  bool any_size = false;
  while (i < tokens.size()) {
    std::size_t best_len = 0;
    std::optional<std::size_t> best;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto& name = names[targets[t]];
      if (name.size() <= best_len || i + name.size() > tokens.size()) continue;
      if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        best = t;
        best_len = name.size();
      }
    }
    if (best) {
      current = best;
      i += best_len;
      continue;
    }
    if (auto size = size_from_word(tokens[i])) {
      any_size = true;
      if (current && !assigned[*current]) {
        assigned[*current] = size;
      } else {
        for (auto& slot : assigned) {
          if (!slot) {
            slot = size;
            break;
          }
        }
      }
      current.reset();
    }
    ++i;
  }
  if (!any_size) throw Error("no size word found; answer with small, medium or large");
  std::vector<Size> out;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!assigned[t]) {
      throw Error("no size given for the " + gallery.at(targets[t]).name +
                  "; answer with small, medium or large for each clipart");
    }
    out.push_back(*assigned[t]);
  }
  return out;
}

std::vector<double> decider_features(const DrawerParams& drawer, std::string_view input_text, const Scene& canvas) {
  std::vector<double> features = encode_text(drawer, drawer.vocab.encode(input_text));
  const auto canvas_enc = encode_canvas(drawer.dims.gallery, canvas);
  features.insert(features.end(), canvas_enc.begin(), canvas_enc.end());
  return features;
}

DeciderParams train_decider(std::span<const DeciderExample> examples, const DeciderConfig& config) {
  if (examples.empty()) throw Error("train_decider: no examples");
  const std::size_t dim = examples.front().features.size();
  std::size_t positives = 0;
  for (const auto& e : examples) {
    if (e.features.size() != dim) throw Error("train_decider: inconsistent feature dimensions");
    positives += e.asked;
  }
  if (positives == 0 || positives == examples.size()) throw Error("single-class labels: cannot train decider");

  DeciderParams p;
  p.weights.assign(dim, 0.0);
  p.seed = config.seed;
  const double n = static_cast<double>(examples.size());
  std::vector<double> grad(dim);
  for (int it = 0; it < config.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_bias = 0.0;
    for (const auto& e : examples) {
      const double r = p.probability(e.features) - (e.asked ? 1.0 : 0.0);
      for (std::size_t k = 0; k < dim; ++k) grad[k] += r * e.features[k];
      grad_bias += r;
    }
    for (std::size_t k = 0; k < dim; ++k) {
      p.weights[k] -= config.learning_rate * (grad[k] / n + config.l2 * p.weights[k]);
    }
    p.bias -= config.learning_rate * grad_bias / n;
    p.iterations = it + 1;
  }
  std::size_t correct = 0;
  for (const auto& e : examples) correct += (p.probability(e.features) > 0.5) == e.asked;
  p.train_accuracy = static_cast<double>(correct) / n;
  return p;
}

DeciderParams train_decider(const DrawerParams& frozen_drawer, std::span<const DeciderTurn> turns,
                            const DeciderConfig& config) {
  std::vector<DeciderExample> examples;
  examples.reserve(turns.size());
  for (const auto& t : turns) {
    examples.push_back({decider_features(frozen_drawer, t.input_text, t.canvas), t.asked});
  }
  return train_decider(examples, config);
}

std::string save_decider(const DeciderParams& p) {
  return nlohmann::json{{"schema_version", 1},
                        {"kind", "decider"},
                        {"weights", p.weights},
                        {"bias", p.bias},
                        {"seed", p.seed},
                        {"iterations", p.iterations},
                        {"train_accuracy", p.train_accuracy}}
             .dump() +
         "\n";
}

DeciderParams load_decider(std::string_view bytes) {
  try {
    const auto j = nlohmann::json::parse(bytes);
    if (j.at("schema_version").get<int>() != 1 || j.at("kind").get<std::string>() != "decider") {
      throw Error("not a version-1 decider weight file");
    }
    DeciderParams p;
    p.weights = j.at("weights").get<std::vector<double>>();
    p.bias = j.at("bias").get<double>();
    p.seed = j.at("seed").get<uint64_t>();
    p.iterations = j.at("iterations").get<int>();
    p.train_accuracy = j.at("train_accuracy").get<double>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed decider file: ") + e.what());
  }
}

}  // namespace cqdraw
