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

#ifndef CQDRAW_WORLD_H_
#define CQDRAW_WORLD_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqdraw/error.h"
#include "json.hpp"

namespace cqdraw {

enum class Size : uint8_t { kSmall = 0, kMedium = 1, kLarge = 2 };
enum class Flip : uint8_t { kFacingLeft = 0, kFacingRight = 1 };

inline constexpr int kNumSizes = 3;
inline constexpr int kNumFlips = 2;

std::string_view to_string(Size size);
std::string_view to_string(Flip flip);
// Accept exactly the strings produced by to_string; throw otherwise.
Size parse_size(std::string_view text);
Flip parse_flip(std::string_view text);
// Returns the size named by a single lowercase word, if any.
std::optional<Size> size_from_word(std::string_view word);

struct GalleryEntry {
  int id = 0;
  std::string name;
  bool is_person = false;
  bool is_symmetric = false;
  int expression_count = 0;
  int pose_count = 0;
};

// The clipart catalogue: dense ids 0..size()-1 with unique names.
class Gallery {
 public:
  Gallery() = default;
  explicit Gallery(std::vector<GalleryEntry> entries);

  int size() const { return static_cast<int>(entries_.size()); }
  bool contains(int id) const { return id >= 0 && id < size(); }
  const GalleryEntry& at(int id) const;
  const std::vector<GalleryEntry>& entries() const { return entries_; }
  std::optional<int> find(std::string_view name) const;
  // Stable fingerprint of the manifest content (hex FNV-1a 64).
  const std::string& hash() const { return hash_; }

 private:
  std::vector<GalleryEntry> entries_;
  std::unordered_map<std::string, int> by_name_;
  std::string hash_;
};

// Parses the manifest CSV
// `id,name,is_person,is_symmetric,expression_count,pose_count`.
Gallery load_gallery(std::string_view manifest);

// The shipped 58-entry manifest (data/gallery.csv, compiled in).
std::string_view default_gallery_manifest();
const Gallery& default_gallery();

struct Placement {
  int clipart = 0;
  Size size = Size::kMedium;
  Flip flip = Flip::kFacingLeft;
  double x = 0.5;
  double y = 0.5;
  std::optional<int> expression;
  std::optional<int> pose;

  bool operator==(const Placement&) const = default;
};

// Throws Error unless the placement is valid for `gallery`.
void validate_placement(const Gallery& gallery, const Placement& placement);

// At most one placement per clipart id. Iteration is in ascending id order.
struct Scene {
  std::map<int, Placement> placements;

  bool empty() const { return placements.empty(); }
  int size() const { return static_cast<int>(placements.size()); }
  bool contains(int id) const { return placements.count(id) > 0; }
  const Placement* find(int id) const;
  std::vector<int> ids() const;

  bool operator==(const Scene&) const = default;
};

void validate_scene(const Gallery& gallery, const Scene& scene);

struct Action {
  std::vector<Placement> upserts;
  std::vector<int> removals;

  bool empty() const { return upserts.empty() && removals.empty(); }
  bool operator==(const Action&) const = default;
};

// Returns a new scene: upserts replace or insert whole placements by id,
// removals of absent ids are no-ops.
Scene apply_action(const Gallery& gallery, const Scene& scene,
                   const Action& action);

struct RandomSceneConfig {
  int min_cliparts = 4;
  int max_cliparts = 8;
  // Probability that each slot is filled from the person subset of the
  // gallery. Unset: cliparts are drawn uniformly from the whole gallery.
  std::optional<double> person_fraction;
};

Scene random_scene(const Gallery& gallery, uint64_t seed,
                   const RandomSceneConfig& config = {});

// JSON mapping used by the normalized corpus, transcripts and the service.
nlohmann::json placement_to_json(const Placement& placement);
Placement placement_from_json(const Gallery& gallery, const nlohmann::json& j);
nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const Gallery& gallery, const nlohmann::json& j);
nlohmann::json action_to_json(const Action& action);
Action action_from_json(const Gallery& gallery, const nlohmann::json& j);

}  // namespace cqdraw

#endif  // CQDRAW_WORLD_H_
