/*
 * Copyright 2026 The msitt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "msitt/numcore/graph.hpp"
#include "msitt/numcore/params.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace msitt {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries with |analytic| and |numeric| both below this are compared in
  /// absolute terms.
  double floor = 1e-6;
  /// 0 checks every entry; otherwise a seeded sample of this many per tensor.
  int max_entries_per_tensor = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  /// Trainable tensors that received no gradient from backward().
  std::vector<std::string> absent;
  /// Frozen tensors; checked to have produced no gradient at all.
  std::vector<std::string> frozen;
  double tolerance = 1e-4;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Builds the loss on a fresh graph through `loss`; compares backward() input
/// gradients with central differences for every trainable tensor.
/// Throws NumericError when the loss or a gradient is non-finite.
GradCheckReport grad_check(ParamStore<double>& params,
                           const std::function<Var<double>(Graph<double>&)>& loss,
                           const GradCheckOptions& options = {});

}  // namespace msitt
