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

#ifndef CQDRAW_TESTS_GRAD_CHECK_H_
#define CQDRAW_TESTS_GRAD_CHECK_H_

// Central finite-difference oracles shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cqdraw/drawer.h"
#include "cqdraw/random.h"

namespace cqdraw::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  int checked = 0;
  int nonzero = 0;  // entries where either gradient exceeds the zero floor
};

// |a - n| / max(|a|, |n|); entries where both are below `zero_floor` count as
// agreeing exact zeros (unused embedding rows, absent canvas inputs).
inline double RelError(double analytic, double numeric, double zero_floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < zero_floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Samples `per_tensor` entries of tensor `id` and compares the analytic
// batch-mean gradient with central differences at step `h`. Odd samples are
// drawn from entries with a nonzero analytic gradient so sparse tensors are
// still exercised.
inline GradCheck CheckDrawerTensor(DrawerParams params, std::span<const TrainingTurn> batch, int id,
                                   int per_tensor, uint64_t seed, double h = 1e-5, double zero_floor = 1e-7) {
  Gradients grads;
  loss_and_gradient(params, batch, LossWeights{}, &grads);
  Rng rng = make_rng(seed);
  GradCheck out;
  auto& values = params.tensors[id].values;
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (std::abs(grads[id].values[k]) >= zero_floor) active.push_back(k);
  }
  for (int s = 0; s < per_tensor; ++s) {
    const std::size_t k = (s % 2 == 1 && !active.empty()) ? active[uniform_index(rng, active.size())]
                                                          : uniform_index(rng, values.size());
    const double saved = values[k];
    values[k] = saved + h;
    const double up = loss_and_gradient(params, batch, LossWeights{}, nullptr);
    values[k] = saved - h;
    const double down = loss_and_gradient(params, batch, LossWeights{}, nullptr);
    values[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grads[id].values[k];
    out.max_rel_error = std::max(out.max_rel_error, RelError(analytic, numeric, zero_floor));
    ++out.checked;
    if (std::max(std::abs(analytic), std::abs(numeric)) >= zero_floor) ++out.nonzero;
  }
  return out;
}

}  // namespace cqdraw::testing

#endif  // CQDRAW_TESTS_GRAD_CHECK_H_
