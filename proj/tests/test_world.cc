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

#include <set>

#include "cqdraw/random.h"
#include "cqdraw/world.h"
#include "test_support.h"

namespace cqdraw {
namespace {

using testing::ExpectError;
using testing::Id;
using testing::Put;
using testing::SceneOf;

const Gallery& G() { return default_gallery(); }

TEST(Gallery, DefaultManifestHas58DenseEntries) {
  ASSERT_EQ(G().size(), 58);
  std::set<std::string> names;
  for (int i = 0; i < G().size(); ++i) {
    const GalleryEntry& e = G().at(i);
    EXPECT_EQ(e.id, i);
    EXPECT_TRUE(names.insert(e.name).second);
    EXPECT_EQ(e.is_person, e.expression_count > 0);
    EXPECT_EQ(e.is_person, e.pose_count > 0);
  }
}

TEST(Gallery, ContainsNamesUsedInExamples) {
  for (const char* name : {"tree", "pine tree", "sun", "boy", "girl", "bear", "swing", "slide", "sandbox", "balloons",
                           "pie", "table", "maple tree"}) {
    EXPECT_TRUE(G().find(name).has_value()) << name;
  }
  EXPECT_TRUE(G().at(Id("boy")).is_person);
  EXPECT_EQ(G().at(Id("boy")).expression_count, 5);
  EXPECT_EQ(G().at(Id("boy")).pose_count, 7);
}

TEST(Gallery, RejectsGapInIds) {
  ExpectError(
      [] {
        load_gallery(
            "id,name,is_person,is_symmetric,expression_count,pose_count\n0,tree,0,1,0,0\n2,sun,0,1,0,0\n");
      },
      "gap in ids");
}

TEST(Gallery, RejectsPersonWithoutExpressions) {
  ExpectError(
      [] { load_gallery("id,name,is_person,is_symmetric,expression_count,pose_count\n0,boy,1,0,0,7\n"); }, "boy");
}

TEST(Gallery, RejectsDuplicateNamesAndMalformedRows) {
  const std::string header = "id,name,is_person,is_symmetric,expression_count,pose_count\n";
  ExpectError([&] { load_gallery(header + "0,tree,0,1,0,0\n1,tree,0,1,0,0\n"); }, "duplicate");
  ExpectError([&] { load_gallery(header + "0,tree,0,1,0\n"); }, "malformed row");
  ExpectError([] { load_gallery("id,name\n0,tree\n"); }, "header");
}

TEST(Gallery, HashIsStableAndContentSensitive) {
  const std::string header = "id,name,is_person,is_symmetric,expression_count,pose_count\n";
  const Gallery a = load_gallery(header + "0,tree,0,1,0,0\n");
  const Gallery b = load_gallery(header + "0,tree,0,1,0,0\n");
  const Gallery c = load_gallery(header + "0,sun,0,1,0,0\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

TEST(ApplyAction, InsertsIntoEmptyScene) {
  Action a;
  a.upserts.push_back(Put("tree", Size::kLarge, Flip::kFacingLeft, 0.3, 0.4));
  const Scene out = apply_action(G(), Scene{}, a);
  EXPECT_EQ(out.size(), 1);
  EXPECT_EQ(out.find(Id("tree"))->size, Size::kLarge);
}

TEST(ApplyAction, UpsertReplacesWholePlacement) {
  const Scene before = SceneOf({Put("tree", Size::kLarge, Flip::kFacingLeft, 0.3, 0.4)});
  Action a;
  a.upserts.push_back(Put("tree", Size::kSmall, Flip::kFacingRight, 0.5, 0.5));
  const Scene out = apply_action(G(), before, a);
  EXPECT_EQ(*out.find(Id("tree")), a.upserts[0]);
  // Value semantics: the input is untouched.
  EXPECT_EQ(before.find(Id("tree"))->size, Size::kLarge);
}

TEST(ApplyAction, RemovingAbsentIdIsNoOp) {
  const Scene before = SceneOf({Put("tree", Size::kLarge, Flip::kFacingLeft, 0.3, 0.4)});
  Action a;
  a.removals.push_back(Id("sun"));
  EXPECT_EQ(apply_action(G(), before, a), before);
}

TEST(ApplyAction, RejectsInvalidActions) {
  Action both;
  both.upserts.push_back(Put("tree", Size::kLarge, Flip::kFacingLeft, 0.3, 0.4));
  both.removals.push_back(Id("tree"));
  ExpectError([&] { apply_action(G(), Scene{}, both); }, "both upserted and removed");

  Action dup;
  dup.upserts.push_back(Put("tree", Size::kLarge, Flip::kFacingLeft, 0.3, 0.4));
  dup.upserts.push_back(Put("tree", Size::kSmall, Flip::kFacingLeft, 0.3, 0.4));
  ExpectError([&] { apply_action(G(), Scene{}, dup); }, "duplicate upsert");

  Action out_of_range;
  out_of_range.removals.push_back(58);
  ExpectError([&] { apply_action(G(), Scene{}, out_of_range); }, "out of gallery range");

  Action person_attr;
  Placement p = Put("tree", Size::kLarge, Flip::kFacingLeft, 0.3, 0.4);
  p.expression = 1;
  person_attr.upserts.push_back(p);
  ExpectError([&] { apply_action(G(), Scene{}, person_attr); }, "person attributes");

  Action off_canvas;
  off_canvas.upserts.push_back(Put("tree", Size::kLarge, Flip::kFacingLeft, 1.2, 0.4));
  ExpectError([&] { apply_action(G(), Scene{}, off_canvas); }, "unit square");
}

TEST(ApplyAction, RepeatedIdenticalUpsertIsIdempotent) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = random_scene(G(), seed);
    const Scene t = random_scene(G(), seed + 1000);
    Action a;
    for (const auto& [id, p] : t.placements) a.upserts.push_back(p);
    const Scene once = apply_action(G(), s, a);
    EXPECT_EQ(apply_action(G(), once, a), once);
  }
}

TEST(ApplyAction, UpsertThenRemoveLeavesOriginalIdsMinusUpserted) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = random_scene(G(), seed);
    const Scene t = random_scene(G(), seed + 5000);
    Action up;
    Action down;
    for (const auto& [id, p] : t.placements) {
      up.upserts.push_back(p);
      down.removals.push_back(id);
    }
    const Scene round = apply_action(G(), apply_action(G(), s, up), down);
    std::set<int> expected;
    for (int id : s.ids()) {
      if (!t.contains(id)) expected.insert(id);
    }
    const auto ids = round.ids();
    EXPECT_EQ(std::set<int>(ids.begin(), ids.end()), expected);
  }
}

TEST(RandomScene, SameSeedSameScene) {
  EXPECT_EQ(random_scene(G(), 7), random_scene(G(), 7));
  EXPECT_EQ(scene_to_json(random_scene(G(), 7)).dump(), scene_to_json(random_scene(G(), 7)).dump());
  EXPECT_NE(random_scene(G(), 7), random_scene(G(), 8));
}

TEST(RandomScene, ForcedBoundsGiveExactCount) {
  RandomSceneConfig c;
  c.min_cliparts = c.max_cliparts = 6;
  for (uint64_t seed = 0; seed < 10000; ++seed) ASSERT_EQ(random_scene(G(), seed, c).size(), 6);
}

TEST(RandomScene, DefaultMeanCountIsSix) {
  double total = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const int k = random_scene(G(), static_cast<uint64_t>(i)).size();
    ASSERT_GE(k, 4);
    ASSERT_LE(k, 8);
    total += k;
  }
  EXPECT_NEAR(total / n, 6.0, 0.1);
}

TEST(RandomScene, EveryPlacementValid) {
  RandomSceneConfig c;
  c.person_fraction = 0.5;
  for (uint64_t seed = 0; seed < 100000; ++seed) {
    const Scene s = random_scene(G(), seed, seed % 2 ? c : RandomSceneConfig{});
    ASSERT_NO_THROW(validate_scene(G(), s)) << seed;
  }
}

TEST(RandomScene, RejectsInvalidBounds) {
  RandomSceneConfig c;
  c.min_cliparts = 0;
  ExpectError([&] { random_scene(G(), 0, c); }, "invalid clipart bounds");
  c.min_cliparts = 5;
  c.max_cliparts = 4;
  ExpectError([&] { random_scene(G(), 0, c); }, "invalid clipart bounds");
  c.min_cliparts = 1;
  c.max_cliparts = 59;
  ExpectError([&] { random_scene(G(), 0, c); }, "invalid clipart bounds");
}

TEST(WorldJson, RoundTripsScenesAndActions) {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Scene s = random_scene(G(), seed);
    EXPECT_EQ(scene_from_json(G(), scene_to_json(s)), s);
    Action a;
    for (const auto& [id, p] : s.placements) a.upserts.push_back(p);
    a.removals.push_back((s.ids().back() + 1) % G().size());
    if (s.contains(a.removals[0])) a.removals.clear();
    EXPECT_EQ(action_from_json(G(), action_to_json(a)), a);
  }
}

TEST(SizeFlip, StringsRoundTrip) {
  for (Size s : {Size::kSmall, Size::kMedium, Size::kLarge}) EXPECT_EQ(parse_size(to_string(s)), s);
  for (Flip f : {Flip::kFacingLeft, Flip::kFacingRight}) EXPECT_EQ(parse_flip(to_string(f)), f);
  EXPECT_LT(Size::kSmall, Size::kMedium);
  EXPECT_LT(Size::kMedium, Size::kLarge);
  EXPECT_EQ(size_from_word("large"), Size::kLarge);
  EXPECT_FALSE(size_from_word("huge").has_value());
  ExpectError([] { parse_size("huge"); }, "unknown size");
}

TEST(RngStreams, DerivedSeedsAreDistinctAndUniformInRange) {
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 1000; ++i) EXPECT_TRUE(seen.insert(derive_seed(42, i)).second);
  Rng rng = make_rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(uniform_index(rng, 7), 7u);
  }
}

}  // namespace
}  // namespace cqdraw
