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

#ifndef CQDRAW_INGEST_H_
#define CQDRAW_INGEST_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cqdraw/world.h"

namespace cqdraw {

struct CorpusTurn {
  std::string teller_text;
  std::string drawer_text;
  Scene canvas_after;

  bool operator==(const CorpusTurn&) const = default;
};

struct CorpusDialogue {
  std::string dialogue_id;
  Scene target;
  std::vector<CorpusTurn> turns;

  bool operator==(const CorpusDialogue&) const = default;
};

enum class CorpusFormat { kNormalized, kOfficial };
CorpusFormat parse_corpus_format(std::string_view name);

// Normalized JSONL: one dialogue per line.
std::vector<CorpusDialogue> parse_corpus_jsonl(const Gallery& gallery, std::string_view bytes);
std::string serialize_corpus_jsonl(const std::vector<CorpusDialogue>& corpus);
nlohmann::json dialogue_to_json(const CorpusDialogue& dialogue);
CorpusDialogue dialogue_from_json(const Gallery& gallery, const nlohmann::json& j);

// Official CoDraw JSON ({"data": {id: {"abs_t", "dialog": [{"msg_t",
// "msg_d", "abs_d"}]}}}). Scene strings are parsed as a leading clipart count
// followed by 8 fields per clipart:
//   png, local_index, clipart_index, subtype, x, y, depth, flip
// Pixel coordinates are normalized by a 500x400 canvas. Entries at negative
// coordinates are off-canvas and skipped. Depth 0/1/2 -> large/medium/small.
// For people, subtype encodes pose * expression_count + expression.
inline constexpr double kOfficialCanvasWidth = 500.0;
inline constexpr double kOfficialCanvasHeight = 400.0;
std::vector<CorpusDialogue> parse_codraw_official(const Gallery& gallery, std::string_view bytes);
Scene parse_official_scene(const Gallery& gallery, std::string_view scene_string);

std::vector<CorpusDialogue> parse_codraw(const Gallery& gallery, std::string_view bytes,
                                         CorpusFormat format);

enum class CqAttribute { kSize, kPosition, kOrientation, kOther };
std::string_view to_string(CqAttribute attribute);
CqAttribute parse_cq_attribute(std::string_view tag);

// One row of the clarification-request annotation layer. turn_index is the
// 0-based index into CorpusDialogue::turns of the turn whose drawer message
// is (or is not) a clarification request.
struct AnnotationRecord {
  std::string dialogue_id;
  int turn_index = 0;
  bool is_cq = false;
  std::set<CqAttribute> attributes;

  bool operator==(const AnnotationRecord&) const = default;
};

// CSV `dialogue_id,turn_index,is_cq,attributes`, attributes `|`-separated.
std::vector<AnnotationRecord> parse_icr(std::string_view bytes);
std::string serialize_icr(const std::vector<AnnotationRecord>& records);

using TurnKey = std::pair<std::string, int>;

struct AnnotationJoin {
  std::map<TurnKey, AnnotationRecord> records;  // resolved to corpus turns
  std::vector<AnnotationRecord> orphans;        // no matching corpus turn
  int dialogues = 0;
  int dialogues_with_cq = 0;
  int cq_count = 0;

  double fraction_with_cq() const;
  // Mean CQs over dialogues that contain at least one; 0 when there are none.
  double mean_cqs_per_cq_dialogue() const;
  bool is_cq(const std::string& dialogue_id, int turn_index) const;
};

AnnotationJoin join_annotations(const std::vector<CorpusDialogue>& corpus,
                                const std::vector<AnnotationRecord>& records);

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// 80/10/10 by count (val and test rounded to nearest, train takes the
// rest), deterministic per seed.
CorpusSplit split_corpus(const std::vector<CorpusDialogue>& corpus, uint64_t seed);
// Split file: CSV `dialogue_id,split` with split in {train,val,test}. Every
// corpus dialogue must be assigned.
CorpusSplit split_from_file(const std::vector<CorpusDialogue>& corpus, std::string_view bytes);

// Dialogues whose ids appear in `ids`, in corpus order.
std::vector<CorpusDialogue> select_dialogues(const std::vector<CorpusDialogue>& corpus,
                                             const std::vector<std::string>& ids);

double mean_turns(const std::vector<CorpusDialogue>& corpus);

}  // namespace cqdraw

#endif  // CQDRAW_INGEST_H_
