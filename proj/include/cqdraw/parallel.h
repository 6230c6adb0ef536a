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

#ifndef CQDRAW_PARALLEL_H_
#define CQDRAW_PARALLEL_H_

#include <cstddef>
#include <exception>
#include <vector>

namespace cqdraw {

// Every batch kernel takes one of these. kSerial is the reference path the
// tests compare the OpenMP path against; both must give identical results,
// which holds because each work item owns its state and its RNG stream.
enum class Execution { kSerial, kParallel };

// Number of threads OpenMP would use for a parallel region (1 without
// OpenMP).
int max_threads();

// Calls fn(i) for i in [0, n). Exceptions are collected per index and the
// lowest-index one is rethrown after the loop.
template <typename Fn>
void for_each_index(Execution execution, std::size_t n, Fn&& fn) {
  if (execution == Execution::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace cqdraw

#endif  // CQDRAW_PARALLEL_H_
