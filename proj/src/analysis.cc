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

#include "cqdraw/analysis.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cqdraw/dialogue.h"
#include "cqdraw/metrics.h"
#include "cqdraw/random.h"
#include "cqdraw/text_util.h"

namespace cqdraw {
namespace {

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

void check_labels(std::span<const int> labels) {
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
  }
}

// Linear-interpolated quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void LogisticConfig::validate() const {
  if (!(l2_lambda >= 0.0)) throw Error("l2_lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (max_iters < 1) throw Error("max_iters must be >= 1");
  if (!(tol > 0.0)) throw Error("tol must be > 0");
}

std::vector<double> RegressionModel::standardize(std::span<const double> features) const {
  if (features.size() != weights.size()) throw Error("feature count does not match the model");
  std::vector<double> z(features.size());
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = (features[j] - means[j]) / stds[j];
  return z;
}

double RegressionModel::logit(std::span<const double> features) const {
  const auto z = standardize(features);
  double s = bias;
  for (std::size_t j = 0; j < z.size(); ++j) s += weights[j] * z[j];
  return s;
}

double RegressionModel::probability(std::span<const double> features) const { return sigmoid(logit(features)); }

std::vector<double> RegressionModel::raw_weights() const {
  std::vector<double> w(weights.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = weights[j] / stds[j];
  return w;
}

double RegressionModel::raw_bias() const {
  double b = bias;
  for (std::size_t j = 0; j < weights.size(); ++j) b -= weights[j] * means[j] / stds[j];
  return b;
}

namespace {

double objective_impl(std::span<const double> theta, const FeatureMatrix& z, std::span<const int> labels,
                      double l2_lambda, std::vector<double>* grad, bool want_loss) {
  const std::size_t n = z.size();
  if (n == 0 || labels.size() != n) throw Error("logistic objective needs matching non-empty rows and labels");
  const std::size_t d = theta.size() - 1;
  const double b = theta[d];
  if (grad) grad->assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = b;
    for (std::size_t j = 0; j < d; ++j) s += theta[j] * z[i][j];
    if (want_loss) loss += softplus(s) - labels[i] * s;
    if (grad) {
      const double r = sigmoid(s) - labels[i];
      for (std::size_t j = 0; j < d; ++j) (*grad)[j] += r * z[i][j];
      (*grad)[d] += r;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double penalty = 0.0;
  for (std::size_t j = 0; j < d; ++j) penalty += theta[j] * theta[j];
  if (grad) {
    for (std::size_t j = 0; j < d; ++j) (*grad)[j] = (*grad)[j] * inv_n + l2_lambda * inv_n * theta[j];
    (*grad)[d] *= inv_n;
  }
  return loss * inv_n + 0.5 * l2_lambda * inv_n * penalty;
}

// Newton steps from a converged first-order point. The objective is strictly
// convex so each step is well posed; a few steps drive the gradient to
// rounding level, which makes the optimum independent of the descent path.
void newton_polish(std::vector<double>& theta, const FeatureMatrix& z, std::span<const int> labels,
                   double l2_lambda) {
  const std::size_t m = theta.size();
  const std::size_t d = m - 1;
  const double inv_n = 1.0 / static_cast<double>(z.size());
  std::vector<double> grad, h(m * m), rhs(m), scratch(m);
  for (int step = 0; step < 8; ++step) {
    objective_impl(theta, z, labels, l2_lambda, &grad, false);
    std::fill(h.begin(), h.end(), 0.0);
    for (const auto& row : z) {
      double s = theta[d];
      for (std::size_t j = 0; j < d; ++j) s += theta[j] * row[j];
      const double p = sigmoid(s);
      const double w = p * (1.0 - p);
      for (std::size_t a = 0; a < m; ++a) scratch[a] = a < d ? row[a] : 1.0;
      for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) h[a * m + b] += w * scratch[a] * scratch[b];
      }
    }
    for (double& v : h) v *= inv_n;
    for (std::size_t j = 0; j < d; ++j) h[j * m + j] += l2_lambda * inv_n;
    rhs = grad;
    // Gaussian elimination with partial pivoting on the small system.
    for (std::size_t c = 0; c < m; ++c) {
      std::size_t piv = c;
      for (std::size_t r = c + 1; r < m; ++r) {
        if (std::abs(h[r * m + c]) > std::abs(h[piv * m + c])) piv = r;
      }
      if (!(std::abs(h[piv * m + c]) > 0.0)) return;
      if (piv != c) {
        for (std::size_t k = 0; k < m; ++k) std::swap(h[c * m + k], h[piv * m + k]);
        std::swap(rhs[c], rhs[piv]);
      }
      for (std::size_t r = c + 1; r < m; ++r) {
        const double f = h[r * m + c] / h[c * m + c];
        for (std::size_t k = c; k < m; ++k) h[r * m + k] -= f * h[c * m + k];
        rhs[r] -= f * rhs[c];
      }
    }
    double change = 0.0;
    for (std::size_t c = m; c-- > 0;) {
      double v = rhs[c];
      for (std::size_t k = c + 1; k < m; ++k) v -= h[c * m + k] * scratch[k];
      scratch[c] = v / h[c * m + c];
      change = std::max(change, std::abs(scratch[c]));
    }
    for (std::size_t j = 0; j < m; ++j) theta[j] -= scratch[j];
    if (change < 1e-15 * (1.0 + std::abs(theta[d]))) return;
  }
}

}  // namespace

double logistic_objective(std::span<const double> theta, const FeatureMatrix& z, std::span<const int> labels,
                          double l2_lambda, std::vector<double>* grad) {
  return objective_impl(theta, z, labels, l2_lambda, grad, true);
}

RegressionModel fit_logistic(const FeatureMatrix& x, std::span<const int> labels, const LogisticConfig& config,
                             const RegressionModel* warm_start) {
  config.validate();
  const std::size_t n = x.size();
  if (n < 2 || labels.size() != n) throw Error("logistic regression needs at least 2 labelled rows");
  check_labels(labels);
  const int positives = std::accumulate(labels.begin(), labels.end(), 0);
  if (positives == 0 || positives == static_cast<int>(n)) throw Error("single-class labels");
  const std::size_t d = x[0].size();
  for (const auto& row : x) {
    if (row.size() != d) throw Error("ragged feature matrix");
    for (double v : row) {
      if (!std::isfinite(v)) throw Error("non-finite feature value");
    }
  }

  RegressionModel model;
  model.l2_lambda = config.l2_lambda;
  model.means.assign(d, 0.0);
  model.stds.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (const auto& row : x) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& row : x) var += (row[j] - mean) * (row[j] - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) throw Error("constant feature " + std::to_string(j));
    model.means[j] = mean;
    model.stds[j] = sd;
  }
  FeatureMatrix z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i][j] = (x[i][j] - model.means[j]) / model.stds[j];
  }

  std::vector<double> theta(d + 1, 0.0);
  if (warm_start) {
    if (warm_start->weights.size() != d) throw Error("warm start has the wrong feature count");
    std::copy(warm_start->weights.begin(), warm_start->weights.end(), theta.begin());
    theta[d] = warm_start->bias;
  }

  // Lipschitz bound of the gradient: 0.25 lambda_max(A^T A / n) + lambda / n
  // with A = [z, 1], lambda_max by power iteration on the (d+1)^2 Gram matrix.
  const std::size_t m = d + 1;
  std::vector<double> gram(m * m, 0.0);
  for (const auto& row : z) {
    for (std::size_t a = 0; a < m; ++a) {
      const double va = a < d ? row[a] : 1.0;
      for (std::size_t b = 0; b < m; ++b) gram[a * m + b] += va * (b < d ? row[b] : 1.0);
    }
  }
  for (double& v : gram) v /= static_cast<double>(n);
  std::vector<double> vec(m, 1.0), tmp(m);
  double lambda_max = 1.0;
  for (int k = 0; k < 100; ++k) {
    double norm = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      tmp[a] = 0.0;
      for (std::size_t b = 0; b < m; ++b) tmp[a] += gram[a * m + b] * vec[b];
      norm += tmp[a] * tmp[a];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    for (std::size_t a = 0; a < m; ++a) vec[a] = tmp[a] / norm;
    lambda_max = norm;
  }
  const double lipschitz = 0.25 * lambda_max + config.l2_lambda / static_cast<double>(n);
  const double step = config.learning_rate / lipschitz;

  // Accelerated gradient descent with gradient-based restart.
  std::vector<double> y = theta, grad, next(m);
  double t = 1.0;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    objective_impl(y, z, labels, config.l2_lambda, &grad, false);
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < config.tol) {
      theta = y;
      model.converged = true;
      break;
    }
    double progress = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      next[j] = y[j] - step * grad[j];
      progress += grad[j] * (next[j] - theta[j]);
    }
    if (progress > 0.0) {
      t = 1.0;
      y = next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      for (std::size_t j = 0; j < m; ++j) y[j] = next[j] + ((t - 1.0) / t_next) * (next[j] - theta[j]);
      t = t_next;
    }
    theta = next;
  }
  if (model.converged) newton_polish(theta, z, labels, config.l2_lambda);
  model.iterations = it;
  model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = theta[d];
  return model;
}

std::vector<double> predict_proba(const RegressionModel& model, const FeatureMatrix& x) {
  std::vector<double> p;
  p.reserve(x.size());
  for (const auto& row : x) p.push_back(model.probability(row));
  return p;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  check_labels(labels);
  const int positives = std::accumulate(labels.begin(), labels.end(), 0);
  if (positives == 0) throw Error("average precision needs at least one positive");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // At each positive rank recall rises by 1/positives.
  double ap = 0.0;
  int hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return ap / positives;
}

int tie_count(std::span<const double> scores) {
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  int ties = 0;
  for (std::size_t i = 1; i < sorted.size(); ++i) ties += sorted[i] == sorted[i - 1];
  return ties;
}

double f1_score(int tp, int fp, int fn) {
  if (tp == 0) return 0.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

double f1_at_half(const RegressionModel& model, const FeatureMatrix& x, std::span<const int> labels) {
  if (x.size() != labels.size()) throw Error("rows and labels differ in length");
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool predicted = model.probability(x[i]) >= 0.5;
    tp += predicted && labels[i];
    fp += predicted && !labels[i];
    fn += !predicted && labels[i];
  }
  return f1_score(tp, fp, fn);
}

PermutationResult permutation_test_ap(std::span<const double> scores, std::span<const int> labels, int resamples,
                                      uint64_t seed, Execution execution) {
  if (resamples < 1) throw Error("resamples must be >= 1");
  PermutationResult result;
  result.observed = average_precision(scores, labels);
  result.resamples = resamples;
  std::vector<double> aps(static_cast<std::size_t>(resamples));
  for_each_index(execution, aps.size(), [&](std::size_t r) {
    Rng rng = make_rng(derive_seed(seed, r));
    std::vector<double> shuffled(scores.begin(), scores.end());
    shuffle(shuffled.begin(), shuffled.end(), rng);
    aps[r] = average_precision(shuffled, labels);
  });
  int at_least = 0;
  double sum = 0.0;
  for (double ap : aps) {
    sum += ap;
    at_least += ap >= result.observed;
  }
  result.baseline = sum / resamples;
  result.p_value = static_cast<double>(at_least) / resamples;
  return result;
}

std::vector<CoefficientInterval> bootstrap_coefficients(const FeatureMatrix& x, std::span<const int> labels,
                                                        const std::vector<std::string>& names,
                                                        const LogisticConfig& config, int resamples, uint64_t seed,
                                                        Execution execution) {
  if (resamples < 1) throw Error("resamples must be >= 1");
  const RegressionModel full = fit_logistic(x, labels, config);
  const std::size_t d = full.weights.size();
  if (names.size() != d) throw Error("coefficient names do not match the feature count");

  std::vector<std::optional<std::vector<double>>> draws(static_cast<std::size_t>(resamples));
  for_each_index(execution, draws.size(), [&](std::size_t r) {
    Rng rng = make_rng(derive_seed(seed, r));
    FeatureMatrix bx;
    std::vector<int> by;
    bx.reserve(x.size());
    by.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t k = uniform_index(rng, x.size());
      bx.push_back(x[k]);
      by.push_back(labels[k]);
    }
    try {
      draws[r] = fit_logistic(bx, by, config, &full).weights;
    } catch (const Error&) {
      // Degenerate resample (one class or a constant column): not counted.
    }
  });

  std::vector<CoefficientInterval> out;
  for (std::size_t j = 0; j < d; ++j) {
    CoefficientInterval ci;
    ci.name = names[j];
    ci.estimate = full.weights[j];
    std::vector<double> values;
    for (const auto& w : draws) {
      if (w) values.push_back((*w)[j]);
    }
    std::sort(values.begin(), values.end());
    ci.resamples_used = static_cast<int>(values.size());
    if (!values.empty()) {
      ci.lo = quantile(values, 0.025);
      ci.hi = quantile(values, 0.975);
      const double m = static_cast<double>(values.size());
      const double le = std::count_if(values.begin(), values.end(), [](double v) { return v <= 0.0; }) / m;
      const double ge = std::count_if(values.begin(), values.end(), [](double v) { return v >= 0.0; }) / m;
      ci.p_value = std::min(1.0, 2.0 * std::min(le, ge));
    }
    out.push_back(std::move(ci));
  }
  return out;
}

// ---- Study.

std::array<double, kStudyFeatures> study_features(const TurnUncertainty& u) {
  return {u.u_select_max().value_or(0.0), u.h_size_max().value_or(0.0), u.h_flip_max().value_or(0.0),
          u.u_position_max().value_or(0.0)};
}

const DrawerParams& StudyCheckpoints::at(int seed, int epoch) const {
  auto it = params.find({seed, epoch});
  if (it == params.end()) {
    throw Error("missing checkpoint for seed " + std::to_string(seed) + " epoch " + std::to_string(epoch));
  }
  return it->second;
}

Ensemble StudyCheckpoints::ensemble_at(int epoch, const std::vector<int>& seeds) const {
  Ensemble e;
  for (int s : seeds) e.members.push_back(at(s, epoch));
  return e;
}

std::string_view to_string(StudyLabelMode mode) {
  switch (mode) {
    case StudyLabelMode::kAnnotations:
      return "annotations";
    case StudyLabelMode::kNoisyThreshold:
      return "noisy_threshold";
    case StudyLabelMode::kNoise:
      return "noise";
  }
  return "?";
}

StudyLabelMode parse_study_label_mode(std::string_view text) {
  for (auto m : {StudyLabelMode::kAnnotations, StudyLabelMode::kNoisyThreshold, StudyLabelMode::kNoise}) {
    if (to_string(m) == text) return m;
  }
  throw Error("unknown study label mode '" + std::string(text) + "'");
}

void StudyConfig::validate() const {
  if (seeds.empty() || epochs.empty()) throw Error("study grid needs seeds and epochs");
  if (!(fit_fraction > 0.0 && fit_fraction < 1.0)) throw Error("fit_fraction must lie in (0, 1)");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw Error("label_noise must lie in [0, 1]");
  if (!(noise_prevalence > 0.0 && noise_prevalence < 1.0)) throw Error("noise_prevalence must lie in (0, 1)");
  if (permutation_resamples < 1 || bootstrap_resamples < 1) throw Error("resample counts must be >= 1");
  logistic.validate();
}

const StudyCell& StudyReport::cell(int seed, int epoch) const {
  for (const auto& c : cells) {
    if (c.seed == seed && c.epoch == epoch) return c;
  }
  throw Error("no study cell for seed " + std::to_string(seed) + " epoch " + std::to_string(epoch));
}

namespace {

struct ReplayTurn {
  std::size_t dialogue = 0;
  int turn = 0;
  std::string input_text;
  const Scene* canvas = nullptr;
};

std::vector<ReplayTurn> replay_turns(const std::vector<CorpusDialogue>& dialogues) {
  static const Scene kEmpty;
  std::vector<ReplayTurn> out;
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    std::string previous;
    const auto& turns = dialogues[d].turns;
    for (std::size_t t = 0; t < turns.size(); ++t) {
      out.push_back({d, static_cast<int>(t), drawer_input_text(previous, turns[t].teller_text),
                     t == 0 ? &kEmpty : &turns[t - 1].canvas_after});
      previous = turns[t].drawer_text;
    }
  }
  return out;
}

// Rows for every member of `ensemble`, indexed [member][turn].
std::vector<std::vector<StudyRow>> rows_for_ensemble(const std::vector<CorpusDialogue>& dialogues,
                                                     const std::vector<ReplayTurn>& turns, const Ensemble& ensemble,
                                                     Execution execution) {
  const std::size_t m = static_cast<std::size_t>(ensemble.size());
  std::vector<std::vector<StudyRow>> rows(m, std::vector<StudyRow>(turns.size()));
  for_each_index(execution, turns.size(), [&](std::size_t i) {
    const ReplayTurn& rt = turns[i];
    const EnsembleOutput out = forward_ensemble(ensemble, rt.input_text, *rt.canvas);
    for (std::size_t k = 0; k < m; ++k) {
      const TurnUncertainty u = turn_uncertainty(out.members[k], SelectionMode::kNormalized);
      StudyRow row;
      row.dialogue_id = dialogues[rt.dialogue].dialogue_id;
      row.turn_index = rt.turn;
      row.features = study_features(u);
      double u_pos = 0.0;
      for (const auto& c : u.cliparts) {
        std::vector<std::pair<double, double>> xy;
        for (const auto& member : out.members) xy.emplace_back(member.cliparts[c.clipart].x, member.cliparts[c.clipart].y);
        u_pos = std::max(u_pos, position_uncertainty(xy));
      }
      row.features[3] = u_pos;
      rows[k][i] = std::move(row);
    }
  });
  return rows;
}

}  // namespace

std::vector<StudyRow> study_rows(const Gallery& gallery, const std::vector<CorpusDialogue>& dialogues,
                                 const StudyCheckpoints& checkpoints, int seed, int epoch,
                                 const std::vector<int>& ensemble_seeds) {
  (void)gallery;
  const auto pos = std::find(ensemble_seeds.begin(), ensemble_seeds.end(), seed);
  if (pos == ensemble_seeds.end()) throw Error("seed is not part of the ensemble");
  const Ensemble ensemble = checkpoints.ensemble_at(epoch, ensemble_seeds);
  auto rows = rows_for_ensemble(dialogues, replay_turns(dialogues), ensemble, Execution::kSerial);
  return std::move(rows[static_cast<std::size_t>(pos - ensemble_seeds.begin())]);
}

StudyReport study_grid(const Gallery& gallery, const std::vector<CorpusDialogue>& dialogues,
                       const StudyCheckpoints& checkpoints, const AnnotationJoin* annotations,
                       const StudyConfig& config, Execution execution) {
  config.validate();
  if (dialogues.empty()) throw Error("study grid needs dialogues");
  if (config.label_mode == StudyLabelMode::kAnnotations && !annotations) {
    throw Error("missing annotations for the study grid");
  }
  // Fail before any work if the grid is incomplete.
  for (int s : config.seeds) {
    for (int e : config.epochs) checkpoints.at(s, e);
  }

  const std::vector<ReplayTurn> turns = replay_turns(dialogues);
  const std::size_t n_seeds = config.seeds.size();
  // features[epoch index][seed index][turn]
  std::vector<std::vector<std::vector<StudyRow>>> features;
  for (int e : config.epochs) {
    features.push_back(rows_for_ensemble(dialogues, turns, checkpoints.ensemble_at(e, config.seeds), execution));
  }

  std::vector<int> labels(turns.size(), 0);
  switch (config.label_mode) {
    case StudyLabelMode::kAnnotations:
      for (std::size_t i = 0; i < turns.size(); ++i) {
        labels[i] = annotations->is_cq(dialogues[turns[i].dialogue].dialogue_id, turns[i].turn);
      }
      break;
    case StudyLabelMode::kNoisyThreshold: {
      const auto ref = config.reference_cell.value_or(std::make_pair(config.seeds.front(), config.epochs.back()));
      const auto si = std::find(config.seeds.begin(), config.seeds.end(), ref.first);
      const auto ei = std::find(config.epochs.begin(), config.epochs.end(), ref.second);
      if (si == config.seeds.end() || ei == config.epochs.end()) throw Error("reference cell outside the grid");
      const auto& ref_rows = features[ei - config.epochs.begin()][si - config.seeds.begin()];
      std::vector<double> h;
      for (const auto& r : ref_rows) h.push_back(r.features[1]);
      std::vector<double> sorted = h;
      std::sort(sorted.begin(), sorted.end());
      const double median = quantile(sorted, 0.5);
      Rng rng = make_rng(derive_seed(config.seed, 0x1abe1));
      for (std::size_t i = 0; i < h.size(); ++i) {
        const bool above = h[i] > median;
        labels[i] = bernoulli(rng, config.label_noise) ? !above : above;
      }
      break;
    }
    case StudyLabelMode::kNoise: {
      Rng rng = make_rng(derive_seed(config.seed, 0x1abe1));
      for (auto& y : labels) y = bernoulli(rng, config.noise_prevalence);
      break;
    }
  }

  // Same dialogue split for every cell.
  std::vector<std::size_t> order(dialogues.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = make_rng(derive_seed(config.seed, 0x5917));
  shuffle(order.begin(), order.end(), split_rng);
  const auto n_fit = static_cast<std::size_t>(std::llround(config.fit_fraction * static_cast<double>(dialogues.size())));
  std::vector<bool> in_fit(dialogues.size(), false);
  for (std::size_t k = 0; k < n_fit && k < order.size(); ++k) in_fit[order[k]] = true;
  std::vector<CorpusDialogue> eval_dialogues;
  for (std::size_t d = 0; d < dialogues.size(); ++d) {
    if (!in_fit[d]) eval_dialogues.push_back(dialogues[d]);
  }

  StudyReport report;
  report.config = config;
  report.dialogues = static_cast<int>(dialogues.size());
  report.rows = static_cast<int>(turns.size());
  report.cells.resize(n_seeds * config.epochs.size());
  std::vector<std::string> names(kStudyFeatureNames.begin(), kStudyFeatureNames.end());

  for_each_index(execution, report.cells.size(), [&](std::size_t ci) {
    const std::size_t si = ci / config.epochs.size();
    const std::size_t ei = ci % config.epochs.size();
    StudyCell& cell = report.cells[ci];
    cell.seed = config.seeds[si];
    cell.epoch = config.epochs[ei];
    const auto& rows = features[ei][si];

    FeatureMatrix fit_x, eval_x;
    std::vector<int> fit_y, eval_y;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::vector<double> f(rows[i].features.begin(), rows[i].features.end());
      for (int j = 0; j < kStudyFeatures; ++j) cell.mean_features[j] += f[j];
      if (in_fit[turns[i].dialogue]) {
        fit_x.push_back(f);
        fit_y.push_back(labels[i]);
      } else {
        eval_x.push_back(f);
        eval_y.push_back(labels[i]);
      }
    }
    for (auto& m : cell.mean_features) m /= static_cast<double>(std::max<std::size_t>(1, rows.size()));

    // Columns that are constant on the fit rows carry no information and
    // would break standardization; they are dropped for this cell.
    std::vector<int> keep;
    for (int j = 0; j < kStudyFeatures; ++j) {
      bool constant = true;
      for (const auto& r : fit_x) constant = constant && r[j] == fit_x.front()[j];
      if (constant) {
        cell.dropped_features.push_back(names[j]);
      } else {
        keep.push_back(j);
      }
    }
    auto project = [&](const FeatureMatrix& x) {
      FeatureMatrix out;
      for (const auto& r : x) {
        std::vector<double> p;
        for (int j : keep) p.push_back(r[j]);
        out.push_back(std::move(p));
      }
      return out;
    };
    const FeatureMatrix fx = project(fit_x), ex = project(eval_x);
    std::vector<std::string> kept_names;
    for (int j : keep) kept_names.push_back(names[j]);

    const RegressionModel model = fit_logistic(fx, fit_y, config.logistic);
    const std::vector<double> scores = predict_proba(model, ex);
    cell.fit_rows = static_cast<int>(fx.size());
    cell.eval_rows = static_cast<int>(ex.size());
    cell.prevalence = static_cast<double>(std::accumulate(eval_y.begin(), eval_y.end(), 0)) /
                      static_cast<double>(std::max<std::size_t>(1, eval_y.size()));
    cell.ap = average_precision(scores, eval_y);
    cell.f1 = f1_at_half(model, ex, eval_y);
    cell.ties = tie_count(scores);
    cell.permutation = permutation_test_ap(scores, eval_y, config.permutation_resamples,
                                           derive_seed(config.seed, 0x9e77 + ci), Execution::kSerial);
    if (!keep.empty()) {
      cell.coefficients = bootstrap_coefficients(fx, fit_y, kept_names, config.logistic, config.bootstrap_resamples,
                                                 derive_seed(config.seed, 0xb007 + ci), Execution::kSerial);
    }

    auto member = std::make_shared<Ensemble>();
    member->members.push_back(checkpoints.at(cell.seed, cell.epoch));
    double ss = 0.0;
    for (const auto& d : eval_dialogues) {
      const DialogueTranscript t =
          run_dialogue(gallery, TellerScript::from_corpus(d), member, ClarificationPolicy::silent());
      ss += similarity_v2(gallery, d.target, t.final_scene).total;
    }
    cell.similarity = eval_dialogues.empty() ? 0.0 : ss / static_cast<double>(eval_dialogues.size());
  });
  return report;
}

std::string study_cells_csv(const StudyReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.cells) {
    std::string dropped;
    for (const auto& d : c.dropped_features) dropped += (dropped.empty() ? "" : "|") + d;
    rows.push_back({std::to_string(c.seed), std::to_string(c.epoch), std::to_string(c.fit_rows),
                    std::to_string(c.eval_rows), format_fixed(c.prevalence, 4), format_fixed(c.ap, 4),
                    format_fixed(c.permutation.baseline, 4), format_fixed(c.permutation.p_value, 4),
                    format_fixed(c.f1, 4), format_fixed(c.similarity, 4), std::to_string(c.ties),
                    format_fixed(c.mean_features[0], 4), format_fixed(c.mean_features[1], 4),
                    format_fixed(c.mean_features[2], 4), format_fixed(c.mean_features[3], 4), dropped});
  }
  return csv_table({"seed", "epoch", "fit_rows", "eval_rows", "prevalence", "ap", "baseline_ap", "p_value", "f1",
                    "ss", "ties", "mean_u_select", "mean_h_size", "mean_h_flip", "mean_u_position",
                    "dropped_features"},
                   rows);
}

std::string study_coefficients_csv(const StudyReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.cells) {
    for (const auto& k : c.coefficients) {
      rows.push_back({std::to_string(c.seed), std::to_string(c.epoch), k.name, format_fixed(k.estimate, 4),
                      format_fixed(k.lo, 4), format_fixed(k.hi, 4), format_fixed(k.p_value, 4),
                      std::to_string(k.resamples_used)});
    }
  }
  return csv_table({"seed", "epoch", "variable", "coefficient", "ci_lo", "ci_hi", "p_value", "resamples"}, rows);
}

std::string study_markdown(const StudyReport& report) {
  const auto& cfg = report.config;
  std::vector<std::string> header = {"seed"};
  for (int e : cfg.epochs) header.push_back("epoch " + std::to_string(e));
  auto grid = [&](auto value) {
    std::vector<std::vector<std::string>> rows;
    for (int s : cfg.seeds) {
      std::vector<std::string> row = {std::to_string(s)};
      for (int e : cfg.epochs) row.push_back(value(report.cell(s, e)));
      rows.push_back(std::move(row));
    }
    return markdown_table(header, rows);
  };
  std::string out;
  out += "Labels: " + std::string(to_string(cfg.label_mode)) + "; L2 lambda " + format_double(cfg.logistic.l2_lambda) +
         "; coefficient significance by row bootstrap (" + std::to_string(cfg.bootstrap_resamples) +
         " resamples); baseline by score permutation (" + std::to_string(cfg.permutation_resamples) +
         " resamples). Dialogues: " + std::to_string(report.dialogues) + ", turns: " + std::to_string(report.rows) +
         ".\n\n";
  out += "### Average precision (random baseline, p)\n\n";
  out += grid([](const StudyCell& c) {
    return format_fixed(c.ap, 3) + " (" + format_fixed(c.permutation.baseline, 3) + ", p=" +
           format_fixed(c.permutation.p_value, 3) + ")";
  });
  out += "\n### F1 at 0.5\n\n";
  out += grid([](const StudyCell& c) { return format_fixed(c.f1, 3); });
  out += "\n### Similarity (silent replay)\n\n";
  out += grid([](const StudyCell& c) { return format_fixed(c.similarity, 3); });
  out += "\n### Coefficients (standardized, 95% bootstrap interval)\n\n";
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.cells) {
    std::vector<std::string> row = {std::to_string(c.seed), std::to_string(c.epoch)};
    for (std::string_view name : kStudyFeatureNames) {
      auto it = std::find_if(c.coefficients.begin(), c.coefficients.end(),
                             [&](const CoefficientInterval& k) { return k.name == name; });
      row.push_back(it == c.coefficients.end()
                        ? "--"
                        : format_fixed(it->estimate, 3) + " [" + format_fixed(it->lo, 3) + ", " +
                              format_fixed(it->hi, 3) + "]" + (it->p_value < 0.05 ? " *" : ""));
    }
    rows.push_back(std::move(row));
  }
  out += markdown_table({"seed", "epoch", "u_select", "h_size", "h_flip", "u_position"}, rows);
  return out;
}

// ---- Clusters.

namespace {

std::vector<std::string> lexicon_lines(std::string_view text, std::string_view what) {
  std::vector<std::string> out;
  for (auto line : split_lines(text)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(to_lower(t));
  }
  if (out.empty()) throw Error("empty lexicon: " + std::string(what));
  return out;
}

}  // namespace

Lexicons Lexicons::parse(std::string_view clipart_names, std::string_view size_words,
                         std::string_view location_words) {
  Lexicons lex;
  for (const auto& name : lexicon_lines(clipart_names, "clipart names")) {
    lex.clipart_names.push_back(tokenize_words(name));
  }
  // Longest names first so that multi-word names win.
  std::stable_sort(lex.clipart_names.begin(), lex.clipart_names.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  for (const auto& w : lexicon_lines(size_words, "size words")) lex.size_words.insert(w);
  for (const auto& w : lexicon_lines(location_words, "location words")) lex.location_words.insert(w);
  return lex;
}

Lexicons Lexicons::load_dir(const std::string& dir) {
  return parse(read_file(dir + "/clipart_names.txt"), read_file(dir + "/size_words.txt"),
               read_file(dir + "/location_words.txt"));
}

const Lexicons& Lexicons::defaults() {
  static const Lexicons lex = parse(default_lexicon_text(LexiconKind::kClipartNames),
                                    default_lexicon_text(LexiconKind::kSizeWords),
                                    default_lexicon_text(LexiconKind::kLocationWords));
  return lex;
}

KeywordCounts count_keywords(std::string_view text, const Lexicons& lexicons) {
  const auto tokens = tokenize_words(text);
  KeywordCounts counts;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    for (const auto& name : lexicons.clipart_names) {
      if (name.empty() || i + name.size() > tokens.size()) continue;
      if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
        matched = name.size();
        break;
      }
    }
    if (matched > 0) {
      ++counts.clipart;
      i += matched;
      continue;
    }
    counts.size += lexicons.size_words.count(tokens[i]) > 0;
    counts.location += lexicons.location_words.count(tokens[i]) > 0;
    ++i;
  }
  return counts;
}

bool CountConstraint::accepts(int count) const {
  switch (kind) {
    case Kind::kAny:
      return true;
    case Kind::kExact:
      return count == value;
    case Kind::kAtLeast:
      return count >= value;
  }
  return false;
}

std::string CountConstraint::describe() const {
  switch (kind) {
    case Kind::kAny:
      return "-";
    case Kind::kExact:
      return std::to_string(value);
    case Kind::kAtLeast:
      return ">=" + std::to_string(value);
  }
  return "?";
}

void ClusterSpec::validate() const {
  using K = CountConstraint::Kind;
  if (clipart.kind == K::kAny && size.kind == K::kAny && location.kind == K::kAny) {
    throw Error("cluster '" + name + "' has no constraint");
  }
}

bool ClusterSpec::matches(const KeywordCounts& c) const {
  return clipart.accepts(c.clipart) && size.accepts(c.size) && location.accepts(c.location);
}

std::vector<ClusterSpec> reference_clusters() {
  using C = CountConstraint;
  return {
      {"A", C::exactly(1), C::exactly(1), C::at_least(1)}, {"B", C::at_least(1), C::any(), C::exactly(0)},
      {"C", C::at_least(1), C::exactly(0), C::any()},      {"D", C::exactly(1), C::any(), C::exactly(0)},
      {"E", C::exactly(1), C::exactly(0), C::any()},       {"F", C::exactly(1), C::any(), C::any()},
  };
}

std::vector<ClusterRow> cluster_analysis(const std::vector<CorpusDialogue>& corpus, const AnnotationJoin& annotations,
                                         const Lexicons& lexicons, const std::vector<ClusterSpec>& specs) {
  std::vector<ClusterRow> rows;
  for (const auto& spec : specs) {
    spec.validate();
    ClusterRow row;
    row.spec = spec;
    rows.push_back(std::move(row));
  }
  for (const auto& d : corpus) {
    if (d.turns.empty()) continue;
    const std::string& text = d.turns.front().teller_text;
    const KeywordCounts counts = count_keywords(text, lexicons);
    auto rec = annotations.records.find({d.dialogue_id, 0});
    const bool cq = rec != annotations.records.end() && rec->second.is_cq;
    for (auto& row : rows) {
      if (!row.spec.matches(counts)) continue;
      ++row.utterances;
      if (row.examples.size() < 2) row.examples.push_back(text);
      if (!cq) continue;
      ++row.followed_by_cq;
      for (CqAttribute a : rec->second.attributes) ++row.attribute_counts[a];
    }
  }
  for (auto& row : rows) {
    row.pct_cq = row.utterances ? 100.0 * row.followed_by_cq / row.utterances : 0.0;
  }
  return rows;
}

namespace {

std::string attribute_share(const ClusterRow& row, CqAttribute a) {
  auto it = row.attribute_counts.find(a);
  const int n = it == row.attribute_counts.end() ? 0 : it->second;
  return format_fixed(row.followed_by_cq ? 100.0 * n / row.followed_by_cq : 0.0, 1);
}

constexpr CqAttribute kAttributes[] = {CqAttribute::kSize, CqAttribute::kPosition, CqAttribute::kOrientation,
                                       CqAttribute::kOther};

}  // namespace

std::string clusters_csv(const std::vector<ClusterRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.spec.name,
                                     std::to_string(r.utterances),
                                     r.spec.clipart.describe(),
                                     r.spec.size.describe(),
                                     r.spec.location.describe(),
                                     std::to_string(r.followed_by_cq),
                                     format_fixed(r.pct_cq, 1)};
    for (CqAttribute a : kAttributes) line.push_back(attribute_share(r, a));
    out.push_back(std::move(line));
  }
  return csv_table({"cluster", "utterances", "clipart", "size", "location", "followed_by_cq", "pct_cq", "pct_size",
                    "pct_position", "pct_orientation", "pct_other"},
                   out);
}

std::string clusters_markdown(const std::vector<ClusterRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    std::string types;
    for (CqAttribute a : kAttributes) {
      types += (types.empty() ? "" : ", ") + std::string(to_string(a)) + " " + attribute_share(r, a) + "%";
    }
    std::string examples;
    for (const auto& e : r.examples) examples += (examples.empty() ? "" : " / ") + e;
    out.push_back({r.spec.name, std::to_string(r.utterances), r.spec.clipart.describe(), r.spec.size.describe(),
                   r.spec.location.describe(), examples, format_fixed(r.pct_cq, 1) + "%", types});
  }
  return markdown_table({"", "# utts.", "Clip.", "Size", "Loc.", "Examples", "% CQ", "CQ type"}, out);
}

}  // namespace cqdraw
