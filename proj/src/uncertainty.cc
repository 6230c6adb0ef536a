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

#include "cqdraw/uncertainty.h"

#include <algorithm>
#include <cmath>

#include "cqdraw/text_util.h"

namespace cqdraw {

namespace {

constexpr std::string_view kDumpHeader = "dialogue_id,turn_index,u_select,h_size,h_flip,u_position";

void validate_distribution(std::span<const double> dist) {
  if (dist.empty()) throw Error("empty probability distribution");
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0)) throw Error("probability distribution has a negative or NaN entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("probability distribution does not sum to 1");
}

double entropy_unchecked(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

template <typename Getter>
std::optional<double> max_of(const std::vector<ClipartUncertainty>& cliparts, Getter get) {
  if (cliparts.empty()) return std::nullopt;
  double best = get(cliparts.front());
  for (const auto& c : cliparts) best = std::max(best, get(c));
  return best;
}

TurnUncertainty base_report(const DrawerOutput& output, SelectionMode mode) {
  TurnUncertainty report;
  const std::vector<int> selected = output.selected();
  std::vector<double> scores;
  for (int c : selected) scores.push_back(output.cliparts[c].score);
  const auto u = selection_uncertainty(scores, mode == SelectionMode::kNormalized);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto& pred = output.cliparts[selected[i]];
    ClipartUncertainty cu;
    cu.clipart = selected[i];
    cu.u_select = u[i];
    cu.h_size = entropy_bits(pred.size_dist);
    cu.h_flip = entropy_bits(pred.flip_dist);
    report.cliparts.push_back(cu);
  }
  return report;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

double entropy_bits(std::span<const double> dist) {
  validate_distribution(dist);
  return entropy_unchecked(dist);
}

std::vector<double> selection_uncertainty(std::span<const double> scores, bool normalize) {
  std::vector<double> out(scores.size());
  if (!normalize) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = -scores[i];
    return out;
  }
  if (scores.empty()) return out;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = range > 0.0 ? 1.0 - (scores[i] - *lo) / range : 0.5;
  }
  return out;
}

double position_uncertainty(std::span<const std::pair<double, double>> members) {
  if (members.empty()) throw Error("position_uncertainty requires at least one member");
  // Shifted by the first member so identical predictions give exactly 0.
  const double n = static_cast<double>(members.size());
  const auto [x0, y0] = members.front();
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& [x, y] : members) {
    sx += x - x0;
    sy += y - y0;
    sxx += (x - x0) * (x - x0);
    syy += (y - y0) * (y - y0);
  }
  const double vx = std::max(0.0, sxx / n - (sx / n) * (sx / n));
  const double vy = std::max(0.0, syy / n - (sy / n) * (sy / n));
  return vx + vy;
}

Decomposition decompose(std::span<const std::vector<double>> member_dists) {
  if (member_dists.empty()) throw Error("decompose requires at least one member");
  const std::size_t k = member_dists.front().size();
  std::vector<double> mean(k, 0.0);
  double data = 0.0;
  for (const auto& d : member_dists) {
    if (d.size() != k) throw Error("decompose: members disagree on dimensionality");
    data += entropy_bits(d);
    for (std::size_t i = 0; i < k; ++i) mean[i] += d[i];
  }
  const double n = static_cast<double>(member_dists.size());
  for (auto& v : mean) v /= n;
  Decomposition out;
  out.total = entropy_unchecked(mean);
  out.data = data / n;
  out.model = out.total - out.data;
  return out;
}

std::optional<double> TurnUncertainty::u_select_max() const {
  return max_of(cliparts, [](const ClipartUncertainty& c) { return c.u_select; });
}
std::optional<double> TurnUncertainty::h_size_max() const {
  return max_of(cliparts, [](const ClipartUncertainty& c) { return c.h_size; });
}
std::optional<double> TurnUncertainty::h_flip_max() const {
  return max_of(cliparts, [](const ClipartUncertainty& c) { return c.h_flip; });
}
std::optional<double> TurnUncertainty::u_position_max() const {
  return max_of(cliparts, [](const ClipartUncertainty& c) { return c.u_position; });
}

const ClipartUncertainty* TurnUncertainty::find(int clipart) const {
  for (const auto& c : cliparts) {
    if (c.clipart == clipart) return &c;
  }
  return nullptr;
}

TurnUncertainty turn_uncertainty(const DrawerOutput& output, SelectionMode mode) {
  return base_report(output, mode);
}

TurnUncertainty turn_uncertainty(const EnsembleOutput& output, SelectionMode mode) {
  if (output.members.empty()) throw Error("turn_uncertainty: ensemble outputs required");
  TurnUncertainty report = base_report(output.mean, mode);
  for (auto& cu : report.cliparts) {
    std::vector<std::pair<double, double>> positions;
    std::vector<std::vector<double>> sizes, flips;
    for (const auto& m : output.members) {
      const auto& pc = m.cliparts[cu.clipart];
      positions.emplace_back(pc.x, pc.y);
      sizes.emplace_back(pc.size_dist.begin(), pc.size_dist.end());
      flips.emplace_back(pc.flip_dist.begin(), pc.flip_dist.end());
    }
    cu.u_position = position_uncertainty(positions);
    cu.size_decomposition = decompose(sizes);
    cu.flip_decomposition = decompose(flips);
  }
  return report;
}

nlohmann::json uncertainty_to_json(const TurnUncertainty& u) {
  nlohmann::json cliparts = nlohmann::json::array();
  for (const auto& c : u.cliparts) {
    nlohmann::json item = {{"clipart", c.clipart},
                           {"u_select", c.u_select},
                           {"h_size", c.h_size},
                           {"h_flip", c.h_flip},
                           {"u_position", c.u_position}};
    if (c.size_decomposition) {
      item["size_decomposition"] = {{"total", c.size_decomposition->total},
                                    {"data", c.size_decomposition->data},
                                    {"model", c.size_decomposition->model}};
    }
    cliparts.push_back(std::move(item));
  }
  return {{"cliparts", cliparts},
          {"u_select_max", optional_json(u.u_select_max())},
          {"h_size_max", optional_json(u.h_size_max())},
          {"h_flip_max", optional_json(u.h_flip_max())},
          {"u_position_max", optional_json(u.u_position_max())}};
}

std::string serialize_uncertainty_dump(const std::vector<UncertaintyDumpRow>& rows) {
  std::string out = std::string(kDumpHeader) + "\n";
  for (const auto& r : rows) {
    out += r.dialogue_id + "," + std::to_string(r.turn_index) + "," + format_double(r.u_select) + "," +
           format_double(r.h_size) + "," + format_double(r.h_flip) + "," + format_double(r.u_position) + "\n";
  }
  return out;
}

std::vector<UncertaintyDumpRow> parse_uncertainty_dump(std::string_view bytes) {
  const auto lines = split_lines(bytes);
  if (lines.empty() || trim(lines[0]) != kDumpHeader) {
    throw Error("uncertainty dump must start with header '" + std::string(kDumpHeader) + "'");
  }
  std::vector<UncertaintyDumpRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 6) throw Error("uncertainty dump line " + std::to_string(i + 1) + ": expected 6 fields");
    rows.push_back({std::string(trim(f[0])), static_cast<int>(parse_int(f[1], "turn_index")),
                    parse_double(f[2], "u_select"), parse_double(f[3], "h_size"), parse_double(f[4], "h_flip"),
                    parse_double(f[5], "u_position")});
  }
  return rows;
}

}  // namespace cqdraw
