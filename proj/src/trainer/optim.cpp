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

#include "msitt/trainer/optim.hpp"

#include "msitt/common/error.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <map>

namespace msitt {

void AdamWConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("adamw: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("adamw: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("adamw: eps must be positive");
  if (weight_decay < 0.0 || clip_norm < 0.0) throw ContractError("adamw: weight_decay and clip_norm must be non-negative");
}

template <typename S>
AdamW<S>::AdamW(AdamWConfig config) : config_(config) {
  config_.validate();
}

template <typename S>
StepInfo AdamW<S>::step(ParamStore<S>& params, std::vector<std::pair<int, Matrix<S>>> grads) {
  StepInfo info;
  double sq = 0.0;
  for (const auto& [id, g] : grads) {
    if (!params.trainable(id)) throw ContractError("adamw: gradient for frozen tensor " + params.name(id));
    if (g.rows() != params.value(id).rows() || g.cols() != params.value(id).cols())
      throw DimensionError("adamw: gradient shape mismatch for " + params.name(id));
    sq += g.template cast<double>().squaredNorm();
  }
  info.grad_norm = std::sqrt(sq);
  if (!std::isfinite(info.grad_norm)) {
    ++skipped_;
    spdlog::warn("adamw: non-finite gradient, step skipped ({} so far)", skipped_);
    return info;
  }
  if (config_.clip_norm > 0.0 && info.grad_norm > config_.clip_norm) info.clip_scale = config_.clip_norm / info.grad_norm;
  ++t_;
  const S b1 = static_cast<S>(config_.beta1), b2 = static_cast<S>(config_.beta2);
  const S c1 = static_cast<S>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  const S c2 = static_cast<S>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
  const S lr = static_cast<S>(config_.lr), eps = static_cast<S>(config_.eps), wd = static_cast<S>(config_.weight_decay);
  const S scale = static_cast<S>(info.clip_scale);
  for (auto& [id, g] : grads) {
    if (info.clip_scale != 1.0) g *= scale;
    auto [it, fresh] = state_.try_emplace(id);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Matrix<S>::Zero(g.rows(), g.cols());
      mo.v = Matrix<S>::Zero(g.rows(), g.cols());
    }
    mo.m = b1 * mo.m + (S(1) - b1) * g;
    mo.v = b2 * mo.v + (S(1) - b2) * g.cwiseProduct(g);
    Matrix<S>& p = params.value(id);
    const auto update = ((mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + eps)).matrix();
    p = p - lr * (update + wd * p);
  }
  info.applied = true;
  return info;
}

template <typename S>
nlohmann::json AdamW<S>::to_json(const ParamStore<S>& params) const {
  std::map<std::string, int> ordered;
  for (const auto& [id, mo] : state_) ordered.emplace(params.name(id), id);
  nlohmann::json moments = nlohmann::json::object();
  for (const auto& [name, id] : ordered) {
    const Moments& mo = state_.at(id);
    moments[name] = {{"m", std::vector<double>(mo.m.data(), mo.m.data() + mo.m.size())},
                     {"v", std::vector<double>(mo.v.data(), mo.v.data() + mo.v.size())}};
  }
  return {{"lr", config_.lr},
          {"beta1", config_.beta1},
          {"beta2", config_.beta2},
          {"eps", config_.eps},
          {"weight_decay", config_.weight_decay},
          {"clip_norm", config_.clip_norm},
          {"t", t_},
          {"skipped", skipped_},
          {"moments", std::move(moments)}};
}

template <typename S>
void AdamW<S>::load_json(const nlohmann::json& j, const ParamStore<S>& params) {
  t_ = j.at("t").get<long>();
  skipped_ = j.at("skipped").get<long>();
  state_.clear();
  for (const auto& [name, mv] : j.at("moments").items()) {
    const int id = params.at(name);
    const Matrix<S>& p = params.value(id);
    const auto m = mv.at("m").template get<std::vector<double>>();
    const auto v = mv.at("v").template get<std::vector<double>>();
    if (static_cast<Eigen::Index>(m.size()) != p.size() || static_cast<Eigen::Index>(v.size()) != p.size())
      throw ParseError("optimizer state for " + name + " has the wrong size");
    Moments mo{Matrix<S>(p.rows(), p.cols()), Matrix<S>(p.rows(), p.cols())};
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      mo.m.data()[i] = static_cast<S>(m[static_cast<std::size_t>(i)]);
      mo.v.data()[i] = static_cast<S>(v[static_cast<std::size_t>(i)]);
    }
    state_.emplace(id, std::move(mo));
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace msitt
