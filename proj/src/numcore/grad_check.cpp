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

#include "msitt/numcore/grad_check.hpp"

#include "msitt/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace msitt {

namespace {

double evaluate(const std::function<Var<double>(Graph<double>&)>& loss) {
  Graph<double> g(false);
  const double v = loss(g).scalar();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(ParamStore<double>& params,
                           const std::function<Var<double>(Graph<double>&)>& loss,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  std::vector<Matrix<double>> analytic(static_cast<std::size_t>(params.size()));
  std::vector<bool> has(static_cast<std::size_t>(params.size()), false);
  {
    Graph<double> g(true);
    Var<double> l = loss(g);
    if (!std::isfinite(l.scalar())) throw NumericError("grad_check: loss is not finite");
    g.backward(l);
    for (auto& [id, grad] : g.parameter_grads()) {
      if (!grad.allFinite()) throw NumericError("grad_check: non-finite gradient for " + params.name(id));
      analytic[static_cast<std::size_t>(id)] = grad;
      has[static_cast<std::size_t>(id)] = true;
    }
  }

  std::mt19937_64 rng(options.seed);
  for (int id = 0; id < params.size(); ++id) {
    const auto uid = static_cast<std::size_t>(id);
    if (!params.trainable(id)) {
      if (has[uid]) throw ContractError("grad_check: frozen tensor received a gradient: " + params.name(id));
      report.frozen.push_back(params.name(id));
      continue;
    }
    Matrix<double>& value = params.value(id);
    if (!has[uid]) {
      report.absent.push_back(params.name(id));
      analytic[uid] = Matrix<double>::Zero(value.rows(), value.cols());
    }
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(value.size()));
    std::iota(entries.begin(), entries.end(), Eigen::Index{0});
    if (options.max_entries_per_tensor > 0 &&
        entries.size() > static_cast<std::size_t>(options.max_entries_per_tensor)) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(static_cast<std::size_t>(options.max_entries_per_tensor));
    }
    for (Eigen::Index e : entries) {
      double& x = value.data()[e];
      const double saved = x;
      x = saved + options.step;
      const double up = evaluate(loss);
      x = saved - options.step;
      const double down = evaluate(loss);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[uid].data()[e];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params.name(id);
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace msitt
