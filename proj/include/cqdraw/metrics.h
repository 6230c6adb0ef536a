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

#ifndef CQDRAW_METRICS_H_
#define CQDRAW_METRICS_H_

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqdraw/world.h"
#include "json.hpp"

namespace cqdraw {

inline constexpr double kPositionTolerance = 0.2;

// Components of the equal-weight scene similarity. An absent component is
// not applicable to this pair of scenes and does not enter the mean.
struct SimilarityBreakdown {
  std::optional<double> presence;
  std::optional<double> size;
  std::optional<double> flip;
  std::optional<double> position;
  std::optional<double> expression;
  std::optional<double> pose;
  double total = 0.0;  // 5 x mean of applicable components, in [0, 5]
};

SimilarityBreakdown similarity_v2(const Gallery& gallery, const Scene& target,
                                  const Scene& drawn,
                                  double position_tolerance = kPositionTolerance);

// 100 x fraction of exact matches. Throws on empty input.
double size_accuracy(std::span<const std::pair<Size, Size>> pairs);

struct CalibrationRow {
  std::vector<double> probs;
  int label = 0;
};

// Throws unless every row is a probability vector (sum 1 +- 1e-9, entries
// >= 0) with a label inside it.
void validate_calibration(std::span<const CalibrationRow> rows);

// Top-label expected calibration error with equal-width bins over (0, 1].
double ece(std::span<const CalibrationRow> rows, int bins = 10);
// Mean squared distance to the one-hot label, summed over classes.
double brier(std::span<const CalibrationRow> rows);

// Ordered `metric,value` report.
class MetricsReport {
 public:
  void add(std::string name, double value) { rows_.emplace_back(std::move(name), value); }
  const std::vector<std::pair<std::string, double>>& rows() const { return rows_; }
  std::optional<double> get(const std::string& name) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;

 private:
  std::vector<std::pair<std::string, double>> rows_;
};

}  // namespace cqdraw

#endif  // CQDRAW_METRICS_H_
