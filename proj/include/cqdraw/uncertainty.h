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

#ifndef CQDRAW_UNCERTAINTY_H_
#define CQDRAW_UNCERTAINTY_H_

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqdraw/drawer.h"

namespace cqdraw {

// Shannon entropy in bits, 0 log 0 = 0. Throws on an invalid distribution.
double entropy_bits(std::span<const double> dist);

// Raw mode: u = -score. Normalized mode: min-max over the given scores, then
// reversed (u = 1 - norm); a single score (or all equal) maps to 0.5.
std::vector<double> selection_uncertainty(std::span<const double> scores, bool normalize);

// Population variance of x plus that of y across ensemble members.
double position_uncertainty(std::span<const std::pair<double, double>> member_positions);

struct Decomposition {
  double total = 0.0;  // entropy of the member mean
  double data = 0.0;   // mean member entropy (aleatoric)
  double model = 0.0;  // total - data (epistemic)
};

Decomposition decompose(std::span<const std::vector<double>> member_dists);

struct ClipartUncertainty {
  int clipart = 0;
  double u_select = 0.0;
  double h_size = 0.0;
  double h_flip = 0.0;
  double u_position = 0.0;
  std::optional<Decomposition> size_decomposition;  // ensemble mode only
  std::optional<Decomposition> flip_decomposition;
};

struct TurnUncertainty {
  std::vector<ClipartUncertainty> cliparts;  // selected cliparts, ascending id

  bool empty() const { return cliparts.empty(); }
  // Maxima over the selected cliparts; nullopt when none are selected.
  std::optional<double> u_select_max() const;
  std::optional<double> h_size_max() const;
  std::optional<double> h_flip_max() const;
  std::optional<double> u_position_max() const;
  const ClipartUncertainty* find(int clipart) const;
};

enum class SelectionMode { kRaw, kNormalized };

// Single-model report: u_position is 0.
TurnUncertainty turn_uncertainty(const DrawerOutput& output, SelectionMode mode = SelectionMode::kRaw);
// Ensemble report over the mean output's selected cliparts; u_position from
// member disagreement, entropies from the mean distributions, plus the
// data/model decomposition.
TurnUncertainty turn_uncertainty(const EnsembleOutput& output, SelectionMode mode = SelectionMode::kRaw);

nlohmann::json uncertainty_to_json(const TurnUncertainty& u);

// Dump row for the analysis module.
struct UncertaintyDumpRow {
  std::string dialogue_id;
  int turn_index = 0;
  double u_select = 0.0;
  double h_size = 0.0;
  double h_flip = 0.0;
  double u_position = 0.0;
};

// CSV `dialogue_id,turn_index,u_select,h_size,h_flip,u_position`.
std::string serialize_uncertainty_dump(const std::vector<UncertaintyDumpRow>& rows);
std::vector<UncertaintyDumpRow> parse_uncertainty_dump(std::string_view bytes);

}  // namespace cqdraw

#endif  // CQDRAW_UNCERTAINTY_H_
