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

#include "msitt/model/config.hpp"
#include "msitt/numcore/graph.hpp"
#include "msitt/numcore/params.hpp"
#include "msitt/seqbuild/sequence.hpp"
#include "msitt/tscodec/codec.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace msitt {

struct ForwardOptions {
  /// Rows whose hidden state feeds U_text / U_ts. Defaults: rows whose
  /// successor is a text / ts token.
  std::optional<std::vector<int>> text_rows;
  std::optional<std::vector<int>> ts_rows;
  bool heads = true;
  bool keep_layers = false;
  /// Dropout is active only when an RNG is supplied.
  std::mt19937_64* rng = nullptr;
};

template <typename S>
struct ForwardResult {
  Var<S> hidden;                    // L x d after the per-modality final norm
  std::vector<int> text_rows;
  std::vector<int> ts_rows;
  Var<S> text_logits;               // |text_rows| x vocab
  std::vector<Var<S>> ts_logits;    // per channel, |ts_rows| x bins (discrete embedding)
  Var<S> ts_values;                 // |ts_rows| x channels (continuous embeddings)
  std::vector<Var<S>> layers;       // residual stream after each layer when requested
};

/// Rows i (0-based) whose successor i+1 has the given modality.
std::vector<int> successor_rows(const MultimodalSequence& seq, Modality m);

/// Interleaved text/time-series transformer with per-modality experts.
template <typename S>
class Model {
 public:
  struct Linear {
    int w = -1;
    int lora_a = -1;  // in x r, zero at creation
    int lora_b = -1;  // r x out
  };
  struct Branch {
    int ln1_g = -1, ln1_b = -1;
    Linear qkv, out;
    int ln2_g = -1, ln2_b = -1;
    Linear mlp_in, mlp_out;
  };
  struct Layer {
    Branch text, ts;
  };

  /// Discrete embeddings take their initial tables from `codecs` when given.
  explicit Model(const ModelConfig& config, const ChannelSet* codecs = nullptr);

  const ModelConfig& config() const { return config_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }
  const std::vector<Layer>& layers() const { return layers_; }

  ForwardResult<S> forward(Graph<S>& g, const MultimodalSequence& seq, const MaskPair& masks,
                           const ForwardOptions& options = {}) const;

  /// Classifier logit on the final <eos> state; throws ContractError without one.
  Var<S> classifier_logit(Graph<S>& g, const ForwardResult<S>& f, const MultimodalSequence& seq) const;
  /// sigmoid(classifier_logit) without recording.
  double classify(const MultimodalSequence& seq) const;

  /// Low-rank terms on every linear map that a `target` token passes through.
  /// Maps shared with the other modality carry one shared adapter. The
  /// adapted base weights are frozen. A second call throws ContractError.
  void apply_adapters(int rank, AdapterTarget target = AdapterTarget::TsBranch);
  bool has_adapters() const { return adapter_rank_ > 0; }
  int adapter_rank() const { return adapter_rank_; }
  double adapter_scale() const { return adapter_rank_ > 0 ? 2.0 : 0.0; }  // alpha / r with alpha = 2r

  /// Freezes text branch, text embedding and U_text.
  void freeze_text();
  /// Copies every text-branch tensor into its ts-branch counterpart.
  void mirror_text_to_ts();

  /// Number of scalars in ts-specific branch tensors.
  std::size_t ts_branch_count() const;

  /// Scale applied to raw values for continuous embeddings.
  const std::vector<double>& value_scale() const { return value_scale_; }

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  template <typename O>
  Model<O> cast() const {
    return Model<O>::from_json(to_json());
  }

 private:
  Model() = default;
  void build(const ChannelSet* codecs);
  Var<S> linear(Graph<S>& g, Var<S> x, const Linear& l) const;
  Var<S> embed(Graph<S>& g, const MultimodalSequence& seq, std::span<const int> text_idx,
               std::span<const int> ts_idx) const;

  ModelConfig config_;
  ParamStore<S> params_;
  std::vector<Layer> layers_;
  int text_emb_ = -1;
  std::vector<int> ts_emb_, ts_proj_;  // discrete, per channel
  int ts_w1_ = -1, ts_b1_ = -1, ts_w2_ = -1, ts_b2_ = -1;  // continuous
  int final_text_g_ = -1, final_text_b_ = -1, final_ts_g_ = -1, final_ts_b_ = -1;
  int head_text_ = -1;
  std::vector<int> head_ts_;
  int head_ts_reg_ = -1;
  int cls_w1_ = -1, cls_b1_ = -1, cls_w2_ = -1, cls_b2_ = -1;
  int adapter_rank_ = 0;
  AdapterTarget adapter_target_ = AdapterTarget::TsBranch;
  std::vector<double> value_scale_;

  template <typename>
  friend class Model;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace msitt
