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

#include "msitt/model/config.hpp"

#include "msitt/common/error.hpp"

namespace msitt {

std::string_view to_string(ExpertMode m) {
  switch (m) {
    case ExpertMode::Separate: return "separate";
    case ExpertMode::SeparateQkv: return "separate_qkv";
    case ExpertMode::SeparateMlp: return "separate_mlp";
    case ExpertMode::Shared: return "shared";
  }
  return "separate";
}

ExpertMode expert_mode_from_string(std::string_view s) {
  for (ExpertMode m : {ExpertMode::Separate, ExpertMode::SeparateQkv, ExpertMode::SeparateMlp, ExpertMode::Shared})
    if (to_string(m) == s) return m;
  throw ParseError("unknown expert mode: " + std::string(s));
}

std::string_view to_string(TsEmbeddingKind k) {
  switch (k) {
    case TsEmbeddingKind::Discrete: return "discrete";
    case TsEmbeddingKind::Linear: return "linear";
    case TsEmbeddingKind::Mlp: return "mlp";
  }
  return "discrete";
}

TsEmbeddingKind ts_embedding_from_string(std::string_view s) {
  for (TsEmbeddingKind k : {TsEmbeddingKind::Discrete, TsEmbeddingKind::Linear, TsEmbeddingKind::Mlp})
    if (to_string(k) == s) return k;
  throw ParseError("unknown ts embedding: " + std::string(s));
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractError("model config: " + m); };
  if (layers < 1) fail("layers must be positive");
  if (d_model < 2 || heads < 1 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (head_dim() % 2 != 0) fail("head dimension must be even for rotary positions");
  if (vocab < 5) fail("text vocabulary must include the special tokens");
  if (bins < 2) fail("bin count must be at least 2");
  if (d_ts < 1) fail("d_ts must be positive");
  if (channels < 1 || channels > 15) fail("channels must lie in [1, 15]");
  if (cross_first() < 1 || cross_first() > layers + 1) fail("cross-modal start layer must lie in [1, layers + 1]");
  if (cross_last() > layers) fail("cross-modal end layer beyond the last layer");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (classifier_hidden < 1) fail("classifier_hidden must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"layers", layers},
                        {"d_model", d_model},
                        {"heads", heads},
                        {"mlp_hidden", mlp_hidden},
                        {"vocab", vocab},
                        {"bins", bins},
                        {"d_ts", d_ts},
                        {"channels", channels},
                        {"cross_begin", cross_begin},
                        {"cross_end", cross_end},
                        {"rotary_base", rotary_base},
                        {"dropout", dropout},
                        {"experts", std::string(to_string(experts))},
                        {"shared_out_proj", shared_out_proj},
                        {"ts_embedding", std::string(to_string(ts_embedding))},
                        {"classifier_hidden", classifier_hidden},
                        {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_hidden = j.value("mlp_hidden", 0);
  c.vocab = j.at("vocab").get<int>();
  c.bins = j.at("bins").get<int>();
  c.d_ts = j.at("d_ts").get<int>();
  c.channels = j.value("channels", 1);
  c.cross_begin = j.value("cross_begin", 0);
  c.cross_end = j.value("cross_end", 0);
  c.rotary_base = j.value("rotary_base", 10000.0);
  c.dropout = j.value("dropout", 0.0);
  c.experts = expert_mode_from_string(j.value("experts", std::string("separate")));
  c.shared_out_proj = j.value("shared_out_proj", false);
  c.ts_embedding = ts_embedding_from_string(j.value("ts_embedding", std::string("discrete")));
  c.classifier_hidden = j.value("classifier_hidden", 64);
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

}  // namespace msitt
