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

#include "cqdraw/world.h"

#include <algorithm>
#include <set>

#include "cqdraw/random.h"
#include "cqdraw/text_util.h"

namespace cqdraw {

namespace {

constexpr std::string_view kManifestHeader =
    "id,name,is_person,is_symmetric,expression_count,pose_count";

bool parse_flag(std::string_view text, int line) {
  text = trim(text);
  if (text == "0") return false;
  if (text == "1") return true;
  throw Error("malformed row " + std::to_string(line) +
              ": boolean must be 0 or 1, got '" + std::string(text) + "'");
}

}  // namespace

std::string_view to_string(Size size) {
  switch (size) {
    case Size::kSmall: return "small";
    case Size::kMedium: return "medium";
    case Size::kLarge: return "large";
  }
  return "medium";
}

std::string_view to_string(Flip flip) {
  return flip == Flip::kFacingLeft ? "facing_left" : "facing_right";
}

Size parse_size(std::string_view text) {
  if (auto size = size_from_word(text)) return *size;
  throw Error("unknown size '" + std::string(text) + "'");
}

Flip parse_flip(std::string_view text) {
  if (text == "facing_left") return Flip::kFacingLeft;
  if (text == "facing_right") return Flip::kFacingRight;
  throw Error("unknown flip '" + std::string(text) + "'");
}

std::optional<Size> size_from_word(std::string_view word) {
  if (word == "small") return Size::kSmall;
  if (word == "medium") return Size::kMedium;
  if (word == "large") return Size::kLarge;
  return std::nullopt;
}

Gallery::Gallery(std::vector<GalleryEntry> entries) : entries_(std::move(entries)) {
  std::string canonical;
  for (int i = 0; i < size(); ++i) {
    const GalleryEntry& e = entries_[i];
    if (e.id != i) {
      throw Error("gap in ids: expected " + std::to_string(i) + ", got " +
                  std::to_string(e.id));
    }
    if (e.name.empty()) throw Error("empty clipart name for id " + std::to_string(i));
    if (!by_name_.emplace(e.name, i).second) {
      throw Error("duplicate clipart name '" + e.name + "'");
    }
    if (e.is_person != (e.expression_count > 0) || e.is_person != (e.pose_count > 0)) {
      throw Error("clipart '" + e.name +
                  "': expression/pose counts must be positive iff is_person");
    }
    if (e.expression_count < 0 || e.pose_count < 0) {
      throw Error("clipart '" + e.name + "': negative attribute count");
    }
    canonical += std::to_string(e.id) + "," + e.name + "," + (e.is_person ? "1" : "0") +
                 "," + (e.is_symmetric ? "1" : "0") + "," +
                 std::to_string(e.expression_count) + "," + std::to_string(e.pose_count) +
                 "\n";
  }
  hash_ = hex64(fnv1a64(canonical));
}

const GalleryEntry& Gallery::at(int id) const {
  if (!contains(id)) throw Error("clipart id out of gallery range: " + std::to_string(id));
  return entries_[id];
}

std::optional<int> Gallery::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

Gallery load_gallery(std::string_view manifest) {
  const auto lines = split_lines(manifest);
  if (lines.empty() || trim(lines[0]) != kManifestHeader) {
    throw Error("gallery manifest must start with header '" +
                std::string(kManifestHeader) + "'");
  }
  std::vector<GalleryEntry> entries;
  std::set<int64_t> seen_ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const int line_no = static_cast<int>(i) + 1;
    const auto fields = split(lines[i], ',');
    if (fields.size() != 6) {
      throw Error("malformed row " + std::to_string(line_no) + ": expected 6 fields, got " +
                  std::to_string(fields.size()));
    }
    GalleryEntry e;
    const int64_t id = parse_int(fields[0], "id");
    if (!seen_ids.insert(id).second) throw Error("duplicate id " + std::to_string(id));
    e.id = static_cast<int>(id);
    e.name = to_lower(trim(fields[1]));
    e.is_person = parse_flag(fields[2], line_no);
    e.is_symmetric = parse_flag(fields[3], line_no);
    e.expression_count = static_cast<int>(parse_int(fields[4], "expression_count"));
    e.pose_count = static_cast<int>(parse_int(fields[5], "pose_count"));
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const GalleryEntry& a, const GalleryEntry& b) { return a.id < b.id; });
  return Gallery(std::move(entries));
}

const Gallery& default_gallery() {
  static const Gallery gallery = load_gallery(default_gallery_manifest());
  return gallery;
}

void validate_placement(const Gallery& gallery, const Placement& p) {
  const GalleryEntry& entry = gallery.at(p.clipart);
  if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
    throw Error("placement of '" + entry.name + "' outside the unit square");
  }
  if (entry.is_person) {
    if (!p.expression || !p.pose) {
      throw Error("person clipart '" + entry.name + "' requires expression and pose");
    }
    if (*p.expression < 0 || *p.expression >= entry.expression_count ||
        *p.pose < 0 || *p.pose >= entry.pose_count) {
      throw Error("expression/pose index out of range for '" + entry.name + "'");
    }
  } else if (p.expression || p.pose) {
    throw Error("person attributes on non-person clipart '" + entry.name + "'");
  }
}

const Placement* Scene::find(int id) const {
  auto it = placements.find(id);
  return it == placements.end() ? nullptr : &it->second;
}

std::vector<int> Scene::ids() const {
  std::vector<int> out;
  out.reserve(placements.size());
  for (const auto& [id, p] : placements) out.push_back(id);
  return out;
}

void validate_scene(const Gallery& gallery, const Scene& scene) {
  for (const auto& [id, p] : scene.placements) {
    if (id != p.clipart) throw Error("scene key does not match placement clipart");
    validate_placement(gallery, p);
  }
}

Scene apply_action(const Gallery& gallery, const Scene& scene, const Action& action) {
  std::set<int> upserted;
  for (const Placement& p : action.upserts) {
    validate_placement(gallery, p);
    if (!upserted.insert(p.clipart).second) {
      throw Error("duplicate upsert for clipart " + std::to_string(p.clipart));
    }
  }
  std::set<int> removed;
  for (int id : action.removals) {
    gallery.at(id);
    if (!removed.insert(id).second) {
      throw Error("duplicate removal for clipart " + std::to_string(id));
    }
    if (upserted.count(id)) {
      throw Error("clipart " + std::to_string(id) + " both upserted and removed");
    }
  }
  Scene out = scene;
  for (const Placement& p : action.upserts) out.placements.insert_or_assign(p.clipart, p);
  for (int id : action.removals) out.placements.erase(id);
  return out;
}

Scene random_scene(const Gallery& gallery, uint64_t seed, const RandomSceneConfig& config) {
  const int g = gallery.size();
  if (config.min_cliparts < 1 || config.min_cliparts > config.max_cliparts ||
      config.max_cliparts > g) {
    throw Error("invalid clipart bounds [" + std::to_string(config.min_cliparts) + ", " +
                std::to_string(config.max_cliparts) + "] for gallery of " +
                std::to_string(g));
  }
  if (config.person_fraction &&
      !(*config.person_fraction >= 0.0 && *config.person_fraction <= 1.0)) {
    throw Error("person_fraction must lie in [0, 1]");
  }
  Rng rng = make_rng(seed);
  const int count = config.min_cliparts +
                    static_cast<int>(uniform_index(
                        rng, static_cast<std::size_t>(config.max_cliparts - config.min_cliparts + 1)));

  std::vector<int> people;
  std::vector<int> objects;
  for (const auto& e : gallery.entries()) (e.is_person ? people : objects).push_back(e.id);
  std::vector<int> pool(g);
  for (int i = 0; i < g; ++i) pool[i] = i;

  std::vector<int> chosen;
  std::set<int> used;
  auto take_from = [&](std::vector<int>& bucket) {
    const std::size_t j = uniform_index(rng, bucket.size());
    const int id = bucket[j];
    bucket.erase(bucket.begin() + static_cast<std::ptrdiff_t>(j));
    used.insert(id);
    chosen.push_back(id);
  };
  for (int i = 0; i < count; ++i) {
    if (config.person_fraction) {
      const bool want_person = bernoulli(rng, *config.person_fraction);
      if (want_person && !people.empty()) {
        take_from(people);
      } else if (!objects.empty()) {
        take_from(objects);
      } else {
        take_from(people);
      }
    } else {
      take_from(pool);
    }
  }

  Scene scene;
  for (int id : chosen) {
    const GalleryEntry& e = gallery.at(id);
    Placement p;
    p.clipart = id;
    p.size = static_cast<Size>(uniform_index(rng, kNumSizes));
    p.flip = static_cast<Flip>(uniform_index(rng, kNumFlips));
    p.x = uniform01(rng);
    p.y = uniform01(rng);
    if (e.is_person) {
      p.expression = static_cast<int>(uniform_index(rng, e.expression_count));
      p.pose = static_cast<int>(uniform_index(rng, e.pose_count));
    }
    scene.placements.emplace(id, p);
  }
  return scene;
}

nlohmann::json placement_to_json(const Placement& p) {
  nlohmann::json j;
  j["clipart"] = p.clipart;
  j["size"] = std::string(to_string(p.size));
  j["flip"] = std::string(to_string(p.flip));
  j["x"] = p.x;
  j["y"] = p.y;
  j["expression"] = p.expression ? nlohmann::json(*p.expression) : nlohmann::json();
  j["pose"] = p.pose ? nlohmann::json(*p.pose) : nlohmann::json();
  return j;
}

Placement placement_from_json(const Gallery& gallery, const nlohmann::json& j) {
  if (!j.is_object()) throw Error("placement must be a JSON object");
  Placement p;
  try {
    p.clipart = j.at("clipart").get<int>();
    p.size = parse_size(j.at("size").get<std::string>());
    p.flip = parse_flip(j.at("flip").get<std::string>());
    p.x = j.at("x").get<double>();
    p.y = j.at("y").get<double>();
    if (j.contains("expression") && !j["expression"].is_null()) {
      p.expression = j["expression"].get<int>();
    }
    if (j.contains("pose") && !j["pose"].is_null()) p.pose = j["pose"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed placement: ") + e.what());
  }
  validate_placement(gallery, p);
  return p;
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [id, p] : scene.placements) list.push_back(placement_to_json(p));
  return nlohmann::json{{"placements", list}};
}

Scene scene_from_json(const Gallery& gallery, const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("placements") || !j["placements"].is_array()) {
    throw Error("scene must be an object with a 'placements' array");
  }
  Scene scene;
  for (const auto& item : j["placements"]) {
    Placement p = placement_from_json(gallery, item);
    if (!scene.placements.emplace(p.clipart, p).second) {
      throw Error("clipart " + std::to_string(p.clipart) + " placed twice in one scene");
    }
  }
  return scene;
}

nlohmann::json action_to_json(const Action& action) {
  nlohmann::json ups = nlohmann::json::array();
  for (const auto& p : action.upserts) ups.push_back(placement_to_json(p));
  return nlohmann::json{{"upserts", ups}, {"removals", action.removals}};
}

Action action_from_json(const Gallery& gallery, const nlohmann::json& j) {
  Action action;
  for (const auto& item : j.at("upserts")) action.upserts.push_back(placement_from_json(gallery, item));
  for (const auto& id : j.at("removals")) action.removals.push_back(id.get<int>());
  return action;
}

}  // namespace cqdraw
