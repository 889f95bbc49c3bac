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

#include "msitt/numcore/params.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <unordered_map>
#include <utility>
#include <vector>

namespace msitt {

/// Paper learning-rate grid; from-scratch toy stages default far above it.
inline constexpr std::array<double, 5> kPaperLearningRates{1e-6, 3e-6, 5e-6, 7e-6, 1e-5};

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // global gradient-norm threshold; 0 disables

  void validate() const;
};

struct StepInfo {
  bool applied = false;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

/// AdamW with global-norm clipping applied first. A step whose gradients are
/// not all finite is skipped and counted.
template <typename S>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {});

  /// `grads` must name trainable tensors only.
  StepInfo step(ParamStore<S>& params, std::vector<std::pair<int, Matrix<S>>> grads);

  long steps() const { return t_; }
  long skipped() const { return skipped_; }
  const AdamWConfig& config() const { return config_; }

  /// Moment estimates keyed by parameter name.
  nlohmann::json to_json(const ParamStore<S>& params) const;
  void load_json(const nlohmann::json& j, const ParamStore<S>& params);

 private:
  struct Moments {
    Matrix<S> m, v;
  };
  AdamWConfig config_;
  std::unordered_map<int, Moments> state_;
  long t_ = 0;
  long skipped_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace msitt
