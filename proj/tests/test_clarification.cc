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

#include <algorithm>
#include <cmath>

#include "cqdraw/clarification.h"
#include "cqdraw/random.h"
#include "test_support.h"

namespace cqdraw {
namespace {

using testing::ExpectError;
using testing::Id;
using testing::Put;
using testing::SceneOf;

const Gallery& G() { return default_gallery(); }

TurnUncertainty WithSizeEntropies(std::vector<std::pair<int, double>> entries) {
  std::sort(entries.begin(), entries.end());
  TurnUncertainty u;
  for (const auto& [id, h] : entries) {
    ClipartUncertainty c;
    c.clipart = id;
    c.h_size = h;
    u.cliparts.push_back(c);
  }
  return u;
}

DecisionContext Ctx(uint64_t seed = 0) {
  DecisionContext c;
  c.dialogue_id = "d";
  c.rng = make_rng(seed);
  return c;
}

TEST(Decide, ThresholdKeepsTopTwoAboveTheta) {
  const TurnUncertainty u = WithSizeEntropies({{Id("tree"), 1.2}, {Id("sun"), 0.4}, {Id("boy"), 1.5}});
  const Decision d = decide(ClarificationPolicy::threshold(1.1), u, Ctx());
  EXPECT_EQ(d.targets, (std::vector<int>{Id("boy"), Id("tree")}));
}

TEST(Decide, ComparisonIsStrictAndTiesBreakByAscendingId) {
  const TurnUncertainty u = WithSizeEntropies({{5, 0.9}, {3, 0.9}, {7, 0.7}});
  EXPECT_EQ(decide(ClarificationPolicy::threshold(0.7), u, Ctx()).targets, (std::vector<int>{3, 5}));
  EXPECT_TRUE(decide(ClarificationPolicy::threshold(0.9), u, Ctx()).targets.empty());
  ClarificationPolicy one = ClarificationPolicy::threshold(0.0);
  one.max_targets = 1;
  EXPECT_EQ(decide(one, u, Ctx()).targets, (std::vector<int>{3}));
}

TEST(Decide, ThetaAtEntropyBoundNeverAsks) {
  Rng rng = make_rng(1);
  const ClarificationPolicy p = ClarificationPolicy::threshold(std::log2(3.0));
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> dist = {uniform01(rng), uniform01(rng), uniform01(rng)};
    const double s = dist[0] + dist[1] + dist[2];
    for (double& v : dist) v /= s;
    const TurnUncertainty u = WithSizeEntropies({{trial % 58, entropy_bits(dist)}});
    ASSERT_TRUE(decide(p, u, Ctx()).targets.empty());
  }
}

TEST(Decide, RandomRateBoundaries) {
  const TurnUncertainty some = WithSizeEntropies({{1, 0.5}, {2, 1.0}});
  const TurnUncertainty zeros = WithSizeEntropies({{1, 0.0}, {2, 0.0}});
  for (uint64_t s = 0; s < 200; ++s) {
    EXPECT_TRUE(decide(ClarificationPolicy::random(0.0), some, Ctx(s)).targets.empty());
    EXPECT_TRUE(decide(ClarificationPolicy::random(1.0), zeros, Ctx(s)).targets.empty());
    EXPECT_EQ(decide(ClarificationPolicy::random(1.0), some, Ctx(s)).targets, (std::vector<int>{2, 1}));
  }
}

TEST(Decide, RandomPolicyThreadsRngState) {
  const TurnUncertainty u = WithSizeEntropies({{1, 0.5}});
  const ClarificationPolicy p = ClarificationPolicy::random(0.5);
  Decision a = decide(p, u, Ctx(3));
  const Decision b = decide(p, u, Ctx(3));
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_EQ(a.rng, b.rng);
  int asked = 0;
  DecisionContext c = Ctx(4);
  for (int i = 0; i < 2000; ++i) {
    Decision d = decide(p, u, c);
    asked += d.targets.empty() ? 0 : 1;
    c.rng = d.rng;
  }
  EXPECT_NEAR(asked / 2000.0, 0.5, 0.05);
}

TEST(Decide, HumanPositionsReplayExactTurns) {
  const ClarificationPolicy p = ClarificationPolicy::human({{"d", 2}});
  const TurnUncertainty u = WithSizeEntropies({{4, 0.2}});
  DecisionContext c = Ctx();
  c.turn_index = 1;
  EXPECT_TRUE(decide(p, u, c).targets.empty());
  c.turn_index = 2;
  EXPECT_EQ(decide(p, u, c).targets, (std::vector<int>{4}));
}

TEST(Decide, DeciderGatesOnProbability) {
  DeciderParams params;
  params.weights = {1.0, -1.0};
  const ClarificationPolicy p = ClarificationPolicy::with_decider(params);
  const TurnUncertainty u = WithSizeEntropies({{4, 0.2}});
  DecisionContext c = Ctx();
  ExpectError([&] { decide(p, u, c); }, "requires turn encodings");
  c.features = std::vector<double>{2.0, 1.0};
  EXPECT_EQ(decide(p, u, c).targets, (std::vector<int>{4}));
  c.features = std::vector<double>{1.0, 1.0};  // probability exactly 0.5
  EXPECT_TRUE(decide(p, u, c).targets.empty());
}

TEST(Decide, DedupSkipsAlreadyAskedCliparts) {
  ClarificationPolicy p = ClarificationPolicy::threshold(0.1);
  const TurnUncertainty u = WithSizeEntropies({{1, 0.5}, {2, 1.0}});
  DecisionContext c = Ctx();
  c.already_asked = {2};
  EXPECT_EQ(decide(p, u, c).targets, (std::vector<int>{2, 1}));
  p.dedup = true;
  EXPECT_EQ(decide(p, u, c).targets, (std::vector<int>{1}));
}

TEST(Decide, ThresholdTargetsShrinkAsThetaGrows) {
  Rng rng = make_rng(17);
  const std::vector<double> thetas = {0.0, 0.3, 0.7, 1.1, 1.3, 1.6};
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::pair<int, double>> entries;
    for (int id = 0; id < 58; ++id) {
      if (bernoulli(rng, 0.1)) entries.push_back({id, std::log2(3.0) * uniform01(rng)});
    }
    const TurnUncertainty u = WithSizeEntropies(entries);
    std::vector<int> previous;
    for (std::size_t k = 0; k < thetas.size(); ++k) {
      ClarificationPolicy p = ClarificationPolicy::threshold(thetas[k]);
      p.max_targets = 58;  // subset property of the unclipped rule
      std::vector<int> t = decide(p, u, Ctx()).targets;
      std::sort(t.begin(), t.end());
      if (k > 0) {
        ASSERT_TRUE(std::includes(previous.begin(), previous.end(), t.begin(), t.end())) << trial;
      }
      previous = t;
    }
  }
}

TEST(Decide, NeverTargetsUnselectedCliparts) {
  const auto& tiny = testing::Tiny();
  const ClarificationPolicy p = ClarificationPolicy::threshold(0.0);
  for (const auto& d : tiny.corpus.dialogues) {
    for (const auto& turn : training_turns(d, G().size())) {
      const EnsembleOutput out = forward_ensemble(*tiny.drawer, turn.input_text, turn.canvas_before);
      for (int id : decide(p, turn_uncertainty(out), Ctx()).targets) {
        ASSERT_GT(out.mean.cliparts[static_cast<std::size_t>(id)].score, 0.0);
      }
    }
  }
}

TEST(Policy, ValidationAndParsing) {
  ExpectError([] { ClarificationPolicy::threshold(-1.0).validate(); }, "theta");
  ExpectError([] { ClarificationPolicy::random(1.5).validate(); }, "rate");
  ClarificationPolicy p = ClarificationPolicy::threshold(0.7);
  p.max_targets = 0;
  ExpectError([&] { p.validate(); }, "max_targets");
  EXPECT_EQ(parse_policy("threshold:0.7").kind, PolicyKind::kThreshold);
  EXPECT_EQ(parse_policy("threshold:0.7").theta, 0.7);
  EXPECT_EQ(parse_policy("random:0.3").rate, 0.3);
  EXPECT_EQ(parse_policy("silent").kind, PolicyKind::kSilent);
  EXPECT_EQ(parse_policy("human", {{"a", 1}}).human_positions.size(), 1u);
  ExpectError([] { parse_policy("decider:"); }, "weights file");
  ExpectError([] { parse_policy("always"); }, "unknown policy");
}

TEST(Templates, QuestionsAndAnswers) {
  const std::vector<int> tree = {Id("tree")};
  const std::vector<int> two = {Id("tree"), Id("sun")};
  EXPECT_EQ(render_question(tree, G()), "what size is the tree?");
  EXPECT_EQ(render_question(two, G()), "what size are the tree and the sun?");
  ExpectError([] { render_question({}, G()); }, "one or two");
  const Scene target = SceneOf({Put("tree", Size::kSmall, Flip::kFacingLeft, 0.2, 0.5),
                                Put("sun", Size::kLarge, Flip::kFacingLeft, 0.8, 0.1)});
  EXPECT_EQ(render_answer(tree, target, G()).text, "the tree is small");
  const RenderedAnswer a = render_answer(two, target, G());
  EXPECT_EQ(a.text, "the tree is small and the sun is large");
  EXPECT_FALSE(a.fallback);
  EXPECT_EQ(a.targets[1].size, Size::kLarge);
  const std::vector<int> absent = {Id("boy")};
  const RenderedAnswer f = render_answer(absent, target, G());
  EXPECT_EQ(f.text, "the boy is not in the scene");
  EXPECT_TRUE(f.fallback);
  EXPECT_FALSE(f.targets[0].size.has_value());
  const std::vector<std::pair<int, Size>> sizes = {{Id("tree"), Size::kMedium}};
  EXPECT_EQ(render_answer_text(sizes, G()), "the tree is medium");
}

TEST(Templates, QuestionsParseBackForEveryPair) {
  for (int a = 0; a < G().size(); ++a) {
    const std::vector<int> one = {a};
    ASSERT_EQ(parse_question(render_question(one, G()), G()), one);
    for (int b = 0; b < G().size(); b += 7) {
      if (a == b) continue;
      const std::vector<int> two = {a, b};
      ASSERT_EQ(parse_question(render_question(two, G()), G()), two);
    }
  }
  ExpectError([] { parse_question("how big is the tree?", G()); }, "not a template question");
}

TEST(ParseAnswer, BindsSizesToTargets) {
  const std::vector<int> two = {Id("tree"), Id("sun")};
  EXPECT_EQ(parse_answer("small and large", two, G()), (std::vector<Size>{Size::kSmall, Size::kLarge}));
  EXPECT_EQ(parse_answer("the sun is large and the tree is small", two, G()),
            (std::vector<Size>{Size::kSmall, Size::kLarge}));
  // A size word with no preceding mention fills the next unassigned target.
  EXPECT_EQ(parse_answer("Medium, then the sun: LARGE.", two, G()), (std::vector<Size>{Size::kMedium, Size::kLarge}));
  const std::vector<int> one = {Id("tree")};
  EXPECT_EQ(parse_answer("it is large", one, G()), (std::vector<Size>{Size::kLarge}));
  ExpectError([&] { parse_answer("banana", one, G()); }, "no size word");
  ExpectError([&] { parse_answer("the tree is small", two, G()); }, "sun");
}

TEST(ParseAnswer, RenderedAnswersRoundTrip) {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const Scene s = random_scene(G(), seed);
    std::vector<int> ids = s.ids();
    if (ids.size() > 2) ids.resize(2);
    const RenderedAnswer a = render_answer(ids, s, G());
    std::vector<Size> expected;
    for (int id : ids) expected.push_back(s.find(id)->size);
    ASSERT_EQ(parse_answer(a.text, ids, G()), expected) << a.text;
  }
}

std::vector<DeciderExample> Blobs(int n, uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<DeciderExample> out;
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    DeciderExample e;
    e.features = {(pos ? 2.0 : -2.0) + uniform01(rng) - 0.5, uniform01(rng) - 0.5, uniform01(rng) - 0.5};
    e.asked = pos;
    out.push_back(e);
  }
  return out;
}

TEST(Decider, SeparableDataIsLearned) {
  const auto examples = Blobs(400, 2);
  const DeciderParams p = train_decider(examples);
  int correct = 0;
  for (const auto& e : examples) correct += (p.probability(e.features) > 0.5) == e.asked ? 1 : 0;
  EXPECT_GE(correct / 400.0, 0.99);
  EXPECT_GE(p.train_accuracy, 0.99);
  EXPECT_EQ(train_decider(examples).weights, p.weights);
}

TEST(Decider, RejectsDegenerateInput) {
  auto examples = Blobs(10, 1);
  for (auto& e : examples) e.asked = false;
  ExpectError([&] { train_decider(examples); }, "single-class");
  ExpectError([] { train_decider(std::vector<DeciderExample>{}); }, "no examples");
  DeciderParams p;
  p.weights = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  ExpectError([&] { p.probability(two); }, "features");
}

TEST(Decider, TrainsOnFrozenDrawerEncodingsAndRoundTrips) {
  const auto& tiny = testing::Tiny();
  std::vector<DeciderTurn> turns;
  for (const auto& d : tiny.corpus.dialogues) {
    const auto tt = training_turns(d, G().size());
    for (std::size_t i = 0; i < tt.size(); ++i) {
      turns.push_back({tt[i].input_text, tt[i].canvas_before, i % 3 == 0});
    }
  }
  const DrawerParams& drawer = tiny.drawer->front();
  const DeciderParams p = train_decider(drawer, turns);
  EXPECT_EQ(p.weights.size(), decider_features(drawer, "a tree", Scene{}).size());
  const DeciderParams back = load_decider(save_decider(p));
  EXPECT_EQ(back.weights, p.weights);
  EXPECT_EQ(back.bias, p.bias);
  ExpectError([] { load_decider(R"({"schema_version":2})"); }, "version-1");
}

}  // namespace
}  // namespace cqdraw
