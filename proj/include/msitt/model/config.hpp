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

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace msitt {

/// Which sub-modules a ts token gets its own copy of.
enum class ExpertMode {
  Separate,     // LN, QKV, output projection and MLP per modality
  SeparateQkv,  // attention block per modality, MLP shared
  SeparateMlp,  // MLP block per modality, attention shared
  Shared,       // one set of weights for both modalities
};

/// How a ts token is embedded.
enum class TsEmbeddingKind {
  Discrete,  // quantile bin embedding and projection
  Linear,    // affine map of the raw values
  Mlp,       // two-layer map of the raw values
};

enum class AdapterTarget { TsBranch, TextBranch };

inline constexpr std::array<int, 3> kAdapterRanks{16, 32, 64};

std::string_view to_string(ExpertMode m);
ExpertMode expert_mode_from_string(std::string_view s);
std::string_view to_string(TsEmbeddingKind k);
TsEmbeddingKind ts_embedding_from_string(std::string_view s);

struct ModelConfig {
  int layers = 8;
  int d_model = 128;
  int heads = 4;
  int mlp_hidden = 0;  // 0 means 4 * d_model
  int vocab = 0;
  int bins = 16;
  int d_ts = 32;
  int channels = 1;
  /// Layers (1-based, inclusive) that use the full causal mask; the rest keep
  /// modalities apart. 0 means the top half: layers/2+1 .. layers. A begin of
  /// layers+1 disables cross-modal attention.
  int cross_begin = 0;
  int cross_end = 0;
  double rotary_base = 10000.0;
  double dropout = 0.0;
  ExpertMode experts = ExpertMode::Separate;
  bool shared_out_proj = false;
  TsEmbeddingKind ts_embedding = TsEmbeddingKind::Discrete;
  int classifier_hidden = 64;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / heads; }
  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * d_model; }
  int cross_first() const { return cross_begin > 0 ? cross_begin : layers / 2 + 1; }
  int cross_last() const { return cross_end > 0 ? cross_end : layers; }
  /// Layer l is 1-based.
  bool cross_modal(int l) const { return l >= cross_first() && l <= cross_last(); }

  /// Throws ContractError.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

}  // namespace msitt
