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

#include "cqdraw/metrics.h"

#include <algorithm>
#include <cmath>

#include "cqdraw/text_util.h"

namespace cqdraw {

SimilarityBreakdown similarity_v2(const Gallery& gallery, const Scene& target,
                                  const Scene& drawn, double position_tolerance) {
  SimilarityBreakdown out;
  std::vector<int> common;
  int union_count = 0;
  for (const auto& [id, p] : target.placements) {
    ++union_count;
    if (drawn.contains(id)) common.push_back(id);
  }
  for (const auto& [id, p] : drawn.placements) {
    if (!target.contains(id)) ++union_count;
  }
  if (union_count == 0) {
    out.total = 5.0;
    return out;
  }
  out.presence = static_cast<double>(common.size()) / union_count;

  if (!common.empty()) {
    int size_hits = 0;
    int flip_hits = 0, flip_n = 0;
    int expr_hits = 0, pose_hits = 0, person_n = 0;
    double position_sum = 0.0;
    for (int id : common) {
      const Placement& a = *target.find(id);
      const Placement& b = *drawn.find(id);
      const GalleryEntry& entry = gallery.at(id);
      if (a.size == b.size) ++size_hits;
      if (!entry.is_symmetric) {
        ++flip_n;
        if (a.flip == b.flip) ++flip_hits;
      }
      if (entry.is_person) {
        ++person_n;
        if (a.expression == b.expression) ++expr_hits;
        if (a.pose == b.pose) ++pose_hits;
      }
      const double dist = std::hypot(a.x - b.x, a.y - b.y);
      position_sum += 1.0 - std::min(1.0, dist / position_tolerance);
    }
    const double n = static_cast<double>(common.size());
    out.size = size_hits / n;
    out.position = position_sum / n;
    if (flip_n > 0) out.flip = static_cast<double>(flip_hits) / flip_n;
    if (person_n > 0) {
      out.expression = static_cast<double>(expr_hits) / person_n;
      out.pose = static_cast<double>(pose_hits) / person_n;
    }
  }

  double sum = 0.0;
  int applicable = 0;
  for (const auto& c : {out.presence, out.size, out.flip, out.position, out.expression, out.pose}) {
    if (c) {
      sum += *c;
      ++applicable;
    }
  }
  out.total = 5.0 * sum / applicable;
  return out;
}

double size_accuracy(std::span<const std::pair<Size, Size>> pairs) {
  if (pairs.empty()) throw Error("size_accuracy requires at least one pair");
  std::size_t hits = 0;
  for (const auto& [predicted, truth] : pairs) hits += predicted == truth;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pairs.size());
}

void validate_calibration(std::span<const CalibrationRow> rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    double sum = 0.0;
    for (double p : row.probs) {
      if (!(p >= 0.0)) throw Error("row " + std::to_string(i) + ": negative or NaN probability");
      sum += p;
    }
    if (row.probs.empty() || std::abs(sum - 1.0) > 1e-9) {
      throw Error("row " + std::to_string(i) + ": probabilities do not sum to 1");
    }
    if (row.label < 0 || row.label >= static_cast<int>(row.probs.size())) {
      throw Error("row " + std::to_string(i) + ": label out of range");
    }
  }
}

double ece(std::span<const CalibrationRow> rows, int bins) {
  if (bins < 1) throw Error("ece requires at least one bin");
  validate_calibration(rows);
  if (rows.empty()) return 0.0;
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> hit_sum(bins, 0.0);
  std::vector<int> count(bins, 0);
  for (const auto& row : rows) {
    const auto top = std::max_element(row.probs.begin(), row.probs.end());
    const double confidence = *top;
    const int predicted = static_cast<int>(top - row.probs.begin());
    // Bin b covers (b/M, (b+1)/M].
    int b = static_cast<int>(std::ceil(confidence * bins)) - 1;
    b = std::clamp(b, 0, bins - 1);
    conf_sum[b] += confidence;
    hit_sum[b] += predicted == row.label ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(rows.size());
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    total += (count[b] / n) * std::abs(hit_sum[b] / count[b] - conf_sum[b] / count[b]);
  }
  return total;
}

double brier(std::span<const CalibrationRow> rows) {
  if (rows.empty()) throw Error("brier requires at least one row");
  validate_calibration(rows);
  double total = 0.0;
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.probs.size(); ++k) {
      const double target = static_cast<int>(k) == row.label ? 1.0 : 0.0;
      total += (row.probs[k] - target) * (row.probs[k] - target);
    }
  }
  return total / static_cast<double>(rows.size());
}

std::optional<double> MetricsReport::get(const std::string& name) const {
  for (const auto& [key, value] : rows_) {
    if (key == name) return value;
  }
  return std::nullopt;
}

std::string MetricsReport::to_csv() const {
  std::string out = "metric,value\n";
  for (const auto& [key, value] : rows_) out += key + "," + format_double(value) + "\n";
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : rows_) j[key] = value;
  return j;
}

}  // namespace cqdraw
