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
#include <string>

#include "cqdraw/ingest.h"
#include "test_support.h"

namespace cqdraw {
namespace {

using testing::ExpectError;
using testing::Id;
using testing::Put;
using testing::SceneOf;

const Gallery& G() { return default_gallery(); }

CorpusDialogue HandDialogue() {
  CorpusDialogue d;
  d.dialogue_id = "hand_1";
  d.target = SceneOf({Put("tree", Size::kLarge, Flip::kFacingLeft, 0.25, 0.5),
                      Put("boy", Size::kSmall, Flip::kFacingRight, 0.7, 0.6)});
  d.target.placements[Id("boy")].expression = 3;
  d.target.placements[Id("boy")].pose = 6;
  d.turns.push_back({"a big tree on the left", "ok", SceneOf({Put("tree", Size::kLarge, Flip::kFacingLeft, 0.25, 0.5)})});
  d.turns.push_back({"a small boy, right side", "what size is the boy?", d.target});
  return d;
}

TEST(NormalizedCorpus, RoundTripsHandWrittenDialogue) {
  const std::vector<CorpusDialogue> corpus = {HandDialogue()};
  const std::string bytes = serialize_corpus_jsonl(corpus);
  EXPECT_EQ(parse_corpus_jsonl(G(), bytes), corpus);
  EXPECT_EQ(serialize_corpus_jsonl(parse_corpus_jsonl(G(), bytes)), bytes);
  EXPECT_EQ(parse_codraw(G(), bytes, CorpusFormat::kNormalized), corpus);
}

TEST(NormalizedCorpus, FieldNamesAreExact) {
  const auto j = nlohmann::json::parse(serialize_corpus_jsonl({HandDialogue()}));
  EXPECT_TRUE(j.contains("dialogue_id"));
  const auto& p = j["target"]["placements"][0];
  for (const char* key : {"clipart", "size", "flip", "x", "y", "expression", "pose"}) EXPECT_TRUE(p.contains(key)) << key;
  for (const char* key : {"teller_text", "drawer_text", "canvas_after"}) EXPECT_TRUE(j["turns"][0].contains(key)) << key;
}

TEST(NormalizedCorpus, RejectsBadRecords) {
  ExpectError([] { parse_corpus_jsonl(G(), "{not json}\n"); }, "line 1");
  ExpectError([] { parse_corpus_jsonl(G(), R"({"dialogue_id":"a","target":{"placements":[]},"turns":[]})"); },
              "at least one turn");
  ExpectError(
      [] {
        parse_corpus_jsonl(
            G(), R"({"dialogue_id":"a","target":{"placements":[{"clipart":99,"size":"small","flip":"facing_left","x":0.1,"y":0.1}]},"turns":[{"teller_text":"","drawer_text":"","canvas_after":{"placements":[]}}]})");
      },
      "line 1");
}

TEST(OfficialCorpus, ParsesSceneStringsAndNormalizesCoordinates) {
  const int tree = Id("tree");
  const int boy = Id("boy");
  // count, then png, local, clipart, subtype, x, y, depth, flip per clipart.
  const std::string target = "2," + std::string("t.png,0,") + std::to_string(tree) + ",0,125,200,0,1," +
                             "b.png,0," + std::to_string(boy) + ",12,250,100,2,0,";
  const std::string turn = "1,t.png,0," + std::to_string(tree) + ",0,125,200,1,0,";
  const std::string bytes = R"({"data":{"d7":{"abs_t":")" + target + R"(","dialog":[{"msg_t":"a tree","msg_d":"ok","abs_d":")" +
                            turn + R"("},{"msg_t":"done","msg_d":"bye"}]}}})";
  const auto corpus = parse_codraw(G(), bytes, CorpusFormat::kOfficial);
  ASSERT_EQ(corpus.size(), 1u);
  const CorpusDialogue& d = corpus[0];
  EXPECT_EQ(d.dialogue_id, "d7");
  ASSERT_EQ(d.target.size(), 2);
  const Placement& t = *d.target.find(tree);
  EXPECT_EQ(t.size, Size::kLarge);
  EXPECT_EQ(t.flip, Flip::kFacingRight);
  EXPECT_DOUBLE_EQ(t.x, 0.25);
  EXPECT_DOUBLE_EQ(t.y, 0.5);
  const Placement& b = *d.target.find(boy);
  EXPECT_EQ(b.size, Size::kSmall);
  EXPECT_EQ(b.expression, 12 % 5);
  EXPECT_EQ(b.pose, 12 / 5);
  ASSERT_EQ(d.turns.size(), 2u);
  EXPECT_EQ(d.turns[0].canvas_after.find(tree)->size, Size::kMedium);
  // A turn without a scene keeps the previous canvas.
  EXPECT_EQ(d.turns[1].canvas_after, d.turns[0].canvas_after);
}

TEST(OfficialCorpus, SkipsOffCanvasAndRejectsBadEntries) {
  const Scene s = parse_official_scene(G(), "1,x.png,0,3,0,-10000,-10000,0,0");
  EXPECT_TRUE(s.empty());
  ExpectError([] { parse_official_scene(G(), "1,x.png,0,58,0,10,10,0,0"); }, "outside gallery");
  ExpectError([] { parse_official_scene(G(), "1,x.png,0,3,0,600,10,0,0"); }, "canvas bounds");
  ExpectError([] { parse_official_scene(G(), "2,x.png,0,3,0,10,10,0,0"); }, "malformed scene string");
  ExpectError([] { parse_codraw(G(), "{}", CorpusFormat::kOfficial); }, "'data'");
  ExpectError([] { parse_corpus_format("xml"); }, "unknown corpus format");
}

TEST(Annotations, ParseAndSerializeRoundTrip) {
  const std::string csv =
      "dialogue_id,turn_index,is_cq,attributes\nd1,0,0,\nd1,1,1,size|position\nd2,0,1,orientation\n";
  const auto records = parse_icr(csv);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_TRUE(records[1].is_cq);
  EXPECT_EQ(records[1].attributes, (std::set<CqAttribute>{CqAttribute::kSize, CqAttribute::kPosition}));
  EXPECT_EQ(parse_icr(serialize_icr(records)), records);
}

TEST(Annotations, EmptyFileGivesNoRecords) {
  EXPECT_TRUE(parse_icr("").empty());
  EXPECT_TRUE(parse_icr("dialogue_id,turn_index,is_cq,attributes\n").empty());
}

TEST(Annotations, RejectsBadRows) {
  const std::string h = "dialogue_id,turn_index,is_cq,attributes\n";
  ExpectError([&] { parse_icr(h + "d1,0,1,colour\n"); }, "unknown attribute tag");
  ExpectError([&] { parse_icr(h + "d1,0,1,size\nd1,0,1,size\n"); }, "duplicate key");
  ExpectError([&] { parse_icr(h + "d1,0,1,\n"); }, "present iff is_cq");
  ExpectError([&] { parse_icr(h + "d1,0,0,size\n"); }, "present iff is_cq");
  ExpectError([&] { parse_icr("id,turn\n"); }, "header");
}

TEST(Annotations, JoinCountsAndReportsOrphans) {
  CorpusDialogue a = HandDialogue();
  CorpusDialogue b = HandDialogue();
  b.dialogue_id = "hand_2";
  CorpusDialogue c = HandDialogue();
  c.dialogue_id = "hand_3";
  const auto records = parse_icr(
      "dialogue_id,turn_index,is_cq,attributes\nhand_1,0,1,size\nhand_1,1,1,size\nhand_2,1,1,other\nhand_2,5,1,size\n"
      "ghost,0,1,size\nhand_3,0,0,\n");
  const AnnotationJoin join = join_annotations({a, b, c}, records);
  EXPECT_EQ(join.orphans.size(), 2u);
  EXPECT_EQ(join.dialogues, 3);
  EXPECT_EQ(join.dialogues_with_cq, 2);
  EXPECT_EQ(join.cq_count, 3);
  EXPECT_NEAR(join.fraction_with_cq(), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(join.mean_cqs_per_cq_dialogue(), 1.5, 1e-12);
  EXPECT_TRUE(join.is_cq("hand_1", 1));
  EXPECT_FALSE(join.is_cq("hand_3", 0));
  EXPECT_FALSE(join.is_cq("hand_2", 5));
}

std::vector<CorpusDialogue> Stubs(int n) {
  std::vector<CorpusDialogue> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)].dialogue_id = "d" + std::to_string(i);
    out[static_cast<std::size_t>(i)].turns.resize(static_cast<std::size_t>(1 + i % 3));
  }
  return out;
}

TEST(Split, FullCorpusSizes) {
  const CorpusSplit s = split_corpus(Stubs(9993), 0);
  EXPECT_TRUE(s.train.size() == 7994 || s.train.size() == 7995);
  EXPECT_EQ(s.val.size(), 999u);
  EXPECT_GE(s.test.size(), 999u);
  EXPECT_LE(s.test.size(), 1002u);
}

TEST(Split, DeterministicPartition) {
  const auto corpus = Stubs(10);
  const CorpusSplit a = split_corpus(corpus, 5);
  const CorpusSplit b = split_corpus(corpus, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::string> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& id : *part) EXPECT_TRUE(all.insert(id).second) << id;
  }
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(a.train.size(), 8u);
  EXPECT_EQ(a.val.size(), 1u);
  EXPECT_EQ(a.test.size(), 1u);
  EXPECT_NE(split_corpus(Stubs(100), 5).test, split_corpus(Stubs(100), 6).test);
}

TEST(Split, FileOverridesRandomSplit) {
  const auto corpus = Stubs(3);
  const CorpusSplit s = split_from_file(corpus, "dialogue_id,split\nd0,test\nd1,train\nd2,val\n");
  EXPECT_EQ(s.test, (std::vector<std::string>{"d0"}));
  EXPECT_EQ(s.train, (std::vector<std::string>{"d1"}));
  ExpectError([&] { split_from_file(corpus, "d0,test\nd1,train\n"); }, "missing from split file");
  ExpectError([&] { split_from_file(corpus, "d0,test\nd1,train\nd2,dev\n"); }, "unknown split");
}

TEST(Corpus, MeanTurnsAndSelection) {
  const auto corpus = Stubs(6);  // 1,2,3,1,2,3 turns
  EXPECT_NEAR(mean_turns(corpus), 2.0, 1e-12);
  const auto picked = select_dialogues(corpus, {"d4", "d1"});
  ASSERT_EQ(picked.size(), 2u);
  EXPECT_EQ(picked[0].dialogue_id, "d1");  // corpus order
  EXPECT_EQ(mean_turns({}), 0.0);
}

}  // namespace
}  // namespace cqdraw
