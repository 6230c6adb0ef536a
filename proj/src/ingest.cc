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

#include "cqdraw/ingest.h"

#include <algorithm>
#include <cmath>

#include "cqdraw/parallel.h"
#include "cqdraw/random.h"
#include "cqdraw/text_util.h"

namespace cqdraw {

namespace {

constexpr std::string_view kIcrHeader = "dialogue_id,turn_index,is_cq,attributes";

std::string get_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(std::string("missing string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "normalized") return CorpusFormat::kNormalized;
  if (name == "official") return CorpusFormat::kOfficial;
  throw Error("unknown corpus format '" + std::string(name) + "' (official|normalized)");
}

nlohmann::json dialogue_to_json(const CorpusDialogue& d) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : d.turns) {
    turns.push_back({{"teller_text", t.teller_text},
                     {"drawer_text", t.drawer_text},
                     {"canvas_after", scene_to_json(t.canvas_after)}});
  }
  return {{"dialogue_id", d.dialogue_id}, {"target", scene_to_json(d.target)}, {"turns", turns}};
}

CorpusDialogue dialogue_from_json(const Gallery& gallery, const nlohmann::json& j) {
  if (!j.is_object()) throw Error("dialogue record must be a JSON object");
  CorpusDialogue d;
  d.dialogue_id = get_string(j, "dialogue_id");
  if (!j.contains("target")) throw Error("dialogue '" + d.dialogue_id + "' has no target");
  d.target = scene_from_json(gallery, j["target"]);
  if (!j.contains("turns") || !j["turns"].is_array() || j["turns"].empty()) {
    throw Error("dialogue '" + d.dialogue_id + "' needs at least one turn");
  }
  for (const auto& t : j["turns"]) {
    CorpusTurn turn;
    turn.teller_text = get_string(t, "teller_text");
    turn.drawer_text = get_string(t, "drawer_text");
    if (!t.contains("canvas_after")) throw Error("turn without canvas_after");
    turn.canvas_after = scene_from_json(gallery, t["canvas_after"]);
    d.turns.push_back(std::move(turn));
  }
  return d;
}

std::vector<CorpusDialogue> parse_corpus_jsonl(const Gallery& gallery, std::string_view bytes) {
  std::vector<std::string_view> lines;
  for (auto line : split_lines(bytes)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  std::vector<CorpusDialogue> out(lines.size());
  for_each_index(Execution::kParallel, lines.size(), [&](std::size_t i) {
    try {
      out[i] = dialogue_from_json(gallery, nlohmann::json::parse(lines[i]));
    } catch (const nlohmann::json::exception& e) {
      throw Error("malformed record on line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("line " + std::to_string(i + 1) + ": " + e.what());
    }
  });
  return out;
}

std::string serialize_corpus_jsonl(const std::vector<CorpusDialogue>& corpus) {
  std::string out;
  for (const auto& d : corpus) out += dialogue_to_json(d).dump() + "\n";
  return out;
}

Scene parse_official_scene(const Gallery& gallery, std::string_view scene_string) {
  Scene scene;
  scene_string = trim(scene_string);
  if (scene_string.empty()) return scene;
  auto fields = split(scene_string, ',');
  if (!fields.empty() && trim(fields.back()).empty()) fields.pop_back();
  const int64_t count = parse_int(fields[0], "clipart count");
  if (count < 0 || fields.size() != static_cast<std::size_t>(1 + 8 * count)) {
    throw Error("malformed scene string: expected " + std::to_string(1 + 8 * count) +
                " fields, got " + std::to_string(fields.size()));
  }
  for (int64_t i = 0; i < count; ++i) {
    const auto f = [&](int k) { return fields[1 + 8 * i + k]; };
    const int64_t clipart = parse_int(f(2), "clipart index");
    if (clipart < 0 || clipart >= gallery.size()) {
      throw Error("clipart index " + std::to_string(clipart) + " outside gallery of " +
                  std::to_string(gallery.size()));
    }
    const double px = parse_double(f(4), "x");
    const double py = parse_double(f(5), "y");
    if (px < 0 || py < 0) continue;  // off-canvas sentinel
    if (px > kOfficialCanvasWidth || py > kOfficialCanvasHeight) {
      throw Error("coordinate outside canvas bounds: (" + format_double(px) + ", " +
                  format_double(py) + ")");
    }
    const int64_t depth = parse_int(f(6), "depth");
    const int64_t flip = parse_int(f(7), "flip");
    if (depth < 0 || depth > 2) throw Error("depth code must be 0, 1 or 2");
    if (flip < 0 || flip > 1) throw Error("flip code must be 0 or 1");
    const GalleryEntry& entry = gallery.at(static_cast<int>(clipart));
    Placement p;
    p.clipart = static_cast<int>(clipart);
    p.size = depth == 0 ? Size::kLarge : depth == 1 ? Size::kMedium : Size::kSmall;
    p.flip = flip == 0 ? Flip::kFacingLeft : Flip::kFacingRight;
    p.x = px / kOfficialCanvasWidth;
    p.y = py / kOfficialCanvasHeight;
    if (entry.is_person) {
      const int64_t subtype = parse_int(f(3), "subtype");
      if (subtype < 0 || subtype >= entry.expression_count * entry.pose_count) {
        throw Error("person subtype out of range for '" + entry.name + "'");
      }
      p.expression = static_cast<int>(subtype % entry.expression_count);
      p.pose = static_cast<int>(subtype / entry.expression_count);
    }
    scene.placements.insert_or_assign(p.clipart, p);
  }
  return scene;
}

std::vector<CorpusDialogue> parse_codraw_official(const Gallery& gallery, std::string_view bytes) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed official corpus: ") + e.what());
  }
  if (!root.contains("data") || !root["data"].is_object()) {
    throw Error("official corpus must have a 'data' object");
  }
  std::vector<CorpusDialogue> out;
  for (const auto& [id, record] : root["data"].items()) {
    try {
      CorpusDialogue d;
      d.dialogue_id = id;
      d.target = parse_official_scene(gallery, get_string(record, "abs_t"));
      if (!record.contains("dialog") || !record["dialog"].is_array() || record["dialog"].empty()) {
        throw Error("no dialog turns");
      }
      Scene canvas;
      for (const auto& t : record["dialog"]) {
        CorpusTurn turn;
        turn.teller_text = t.contains("msg_t") && t["msg_t"].is_string() ? t["msg_t"].get<std::string>() : "";
        turn.drawer_text = t.contains("msg_d") && t["msg_d"].is_string() ? t["msg_d"].get<std::string>() : "";
        if (t.contains("abs_d") && t["abs_d"].is_string()) {
          canvas = parse_official_scene(gallery, t["abs_d"].get<std::string>());
        }
        turn.canvas_after = canvas;
        d.turns.push_back(std::move(turn));
      }
      out.push_back(std::move(d));
    } catch (const Error& e) {
      throw Error("dialogue '" + id + "': " + e.what());
    }
  }
  return out;
}

std::vector<CorpusDialogue> parse_codraw(const Gallery& gallery, std::string_view bytes,
                                         CorpusFormat format) {
  return format == CorpusFormat::kOfficial ? parse_codraw_official(gallery, bytes)
                                           : parse_corpus_jsonl(gallery, bytes);
}

std::string_view to_string(CqAttribute attribute) {
  switch (attribute) {
    case CqAttribute::kSize: return "size";
    case CqAttribute::kPosition: return "position";
    case CqAttribute::kOrientation: return "orientation";
    case CqAttribute::kOther: return "other";
  }
  return "other";
}

CqAttribute parse_cq_attribute(std::string_view tag) {
  tag = trim(tag);
  if (tag == "size") return CqAttribute::kSize;
  if (tag == "position") return CqAttribute::kPosition;
  if (tag == "orientation") return CqAttribute::kOrientation;
  if (tag == "other") return CqAttribute::kOther;
  throw Error("unknown attribute tag '" + std::string(tag) + "'");
}

std::vector<AnnotationRecord> parse_icr(std::string_view bytes) {
  std::vector<AnnotationRecord> out;
  const auto lines = split_lines(bytes);
  if (lines.empty()) return out;
  if (trim(lines[0]) != kIcrHeader) {
    throw Error("annotation CSV must start with header '" + std::string(kIcrHeader) + "'");
  }
  std::set<TurnKey> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = "annotation line " + std::to_string(i + 1);
    const auto fields = split(lines[i], ',');
    if (fields.size() != 4) throw Error(where + ": expected 4 fields");
    AnnotationRecord r;
    r.dialogue_id = std::string(trim(fields[0]));
    r.turn_index = static_cast<int>(parse_int(fields[1], "turn_index"));
    const auto flag = trim(fields[2]);
    if (flag == "1" || flag == "true") {
      r.is_cq = true;
    } else if (flag == "0" || flag == "false") {
      r.is_cq = false;
    } else {
      throw Error(where + ": is_cq must be 0/1");
    }
    const auto attrs = trim(fields[3]);
    if (!attrs.empty()) {
      for (auto tag : split(attrs, '|')) r.attributes.insert(parse_cq_attribute(tag));
    }
    if (r.is_cq == r.attributes.empty()) {
      throw Error(where + ": attributes must be present iff is_cq");
    }
    if (!seen.insert({r.dialogue_id, r.turn_index}).second) {
      throw Error(where + ": duplicate key (" + r.dialogue_id + ", " +
                  std::to_string(r.turn_index) + ")");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string serialize_icr(const std::vector<AnnotationRecord>& records) {
  std::string out = std::string(kIcrHeader) + "\n";
  for (const auto& r : records) {
    std::vector<std::string> tags;
    for (auto a : r.attributes) tags.emplace_back(to_string(a));
    out += r.dialogue_id + "," + std::to_string(r.turn_index) + "," + (r.is_cq ? "1" : "0") +
           "," + join(tags, "|") + "\n";
  }
  return out;
}

double AnnotationJoin::fraction_with_cq() const {
  return dialogues == 0 ? 0.0 : static_cast<double>(dialogues_with_cq) / dialogues;
}

double AnnotationJoin::mean_cqs_per_cq_dialogue() const {
  return dialogues_with_cq == 0 ? 0.0 : static_cast<double>(cq_count) / dialogues_with_cq;
}

bool AnnotationJoin::is_cq(const std::string& dialogue_id, int turn_index) const {
  auto it = records.find({dialogue_id, turn_index});
  return it != records.end() && it->second.is_cq;
}

AnnotationJoin join_annotations(const std::vector<CorpusDialogue>& corpus,
                                const std::vector<AnnotationRecord>& records) {
  std::map<std::string, int> turn_counts;
  for (const auto& d : corpus) turn_counts[d.dialogue_id] = static_cast<int>(d.turns.size());
  AnnotationJoin join;
  join.dialogues = static_cast<int>(corpus.size());
  std::map<std::string, int> cq_per_dialogue;
  for (const auto& r : records) {
    auto it = turn_counts.find(r.dialogue_id);
    if (it == turn_counts.end() || r.turn_index < 0 || r.turn_index >= it->second) {
      join.orphans.push_back(r);
      continue;
    }
    join.records.emplace(TurnKey{r.dialogue_id, r.turn_index}, r);
    if (r.is_cq) {
      ++join.cq_count;
      ++cq_per_dialogue[r.dialogue_id];
    }
  }
  join.dialogues_with_cq = static_cast<int>(cq_per_dialogue.size());
  return join;
}

CorpusSplit split_corpus(const std::vector<CorpusDialogue>& corpus, uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(corpus.size());
  for (const auto& d : corpus) ids.push_back(d.dialogue_id);
  Rng rng = make_rng(seed);
  shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * n));
  const auto n_test = static_cast<std::size_t>(std::llround(0.1 * n));
  const std::size_t n_train = ids.size() - n_val - n_test;
  CorpusSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

CorpusSplit split_from_file(const std::vector<CorpusDialogue>& corpus, std::string_view bytes) {
  std::map<std::string, std::string> assignment;
  const auto lines = split_lines(bytes);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty() || (i == 0 && trim(lines[i]) == "dialogue_id,split")) continue;
    const auto fields = split(lines[i], ',');
    if (fields.size() != 2) throw Error("split file line " + std::to_string(i + 1) + ": expected 2 fields");
    assignment[std::string(trim(fields[0]))] = std::string(trim(fields[1]));
  }
  CorpusSplit split;
  for (const auto& d : corpus) {
    auto it = assignment.find(d.dialogue_id);
    if (it == assignment.end()) throw Error("dialogue '" + d.dialogue_id + "' missing from split file");
    if (it->second == "train") {
      split.train.push_back(d.dialogue_id);
    } else if (it->second == "val") {
      split.val.push_back(d.dialogue_id);
    } else if (it->second == "test") {
      split.test.push_back(d.dialogue_id);
    } else {
      throw Error("unknown split '" + it->second + "'");
    }
  }
  return split;
}

std::vector<CorpusDialogue> select_dialogues(const std::vector<CorpusDialogue>& corpus,
                                             const std::vector<std::string>& ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<CorpusDialogue> out;
  for (const auto& d : corpus) {
    if (wanted.count(d.dialogue_id)) out.push_back(d);
  }
  return out;
}

double mean_turns(const std::vector<CorpusDialogue>& corpus) {
  if (corpus.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& d : corpus) total += d.turns.size();
  return static_cast<double>(total) / static_cast<double>(corpus.size());
}

}  // namespace cqdraw
