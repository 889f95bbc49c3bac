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

#include "msitt/model/model.hpp"

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace msitt {

/// How the two loss components are scaled before they are summed.
enum class LossNormalization {
  PerModality,  // each component divided by its own scored-token count
  RawSum,       // plain sums over scored tokens
};

struct StwConfig {
  double warm_frac = 0.20;
  double clamp_lo = 0.1;
  double clamp_hi = 10.0;
  long total_steps = 0;

  /// Throws ContractError.
  void validate() const;
  /// True while all weights are pinned to 1.
  bool warm(long step) const { return static_cast<double>(step) < warm_frac * static_cast<double>(total_steps); }
};

/// Weights for the text targets of one sequence. Entry k belongs to the
/// target at position rows[k] + 1.
struct TokenWeights {
  std::vector<int> rows;
  std::vector<double> log_ratio;   // log P_mm - log P_text, 0 without a baseline
  std::vector<double> raw;         // W
  std::vector<double> clamped;     // W clamped into [clamp_lo, clamp_hi]
  std::vector<double> normalized;  // mean one over the sequence
  std::vector<char> has_baseline;  // 0 when the target has no text-only predecessor
  bool warm = false;

  static TokenWeights uniform(std::vector<int> rows);
  std::size_t size() const { return rows.size(); }
};

struct SalmonOptions {
  LossNormalization normalization = LossNormalization::PerModality;
  /// Score <boa>/<eoa> targets in the text component.
  bool score_markers = true;
  /// Multiplier on the ts component.
  double ts_weight = 1.0;
};

template <typename S>
struct SalmonLoss {
  Var<S> total;
  Var<S> text;  // invalid when text_count == 0
  Var<S> ts;    // invalid when ts_count == 0
  double text_value = 0.0;
  double ts_value = 0.0;
  double total_value = 0.0;
  std::size_t text_count = 0;
  std::size_t ts_count = 0;
  bool text_empty() const { return text_count == 0; }
  bool ts_empty() const { return ts_count == 0; }
};

/// Rows i whose successor is a scored text token.
std::vector<int> text_target_rows(const MultimodalSequence& seq, const SalmonOptions& options = {});

/// Text component: next-text-token cross-entropy weighted by `weights`
/// (uniform when null). ts component: unweighted next-bin cross-entropy,
/// averaged over channels; mean squared error on scaled values for
/// continuous embeddings. A modality with no scored targets contributes 0.
template <typename S>
SalmonLoss<S> salmon_loss(const Model<S>& model, Graph<S>& g, const MultimodalSequence& seq, const MaskPair& masks,
                          const TokenWeights* weights = nullptr, const SalmonOptions& options = {},
                          std::mt19937_64* rng = nullptr);

/// log P(x_{r+1}) for each row r under the full interleaved input.
template <typename S>
std::vector<double> multimodal_log_probs(const Model<S>& model, const MultimodalSequence& seq, const MaskPair& masks,
                                         std::span<const int> rows);

/// log P(x_{r+1}) for each row r given only the preceding text tokens, with
/// ts tokens removed and positions renumbered. NaN where no text precedes it.
template <typename S>
std::vector<double> text_only_log_probs(const Model<S>& model, const MultimodalSequence& seq,
                                        std::span<const int> rows);

/// Pure weight computation from the two sets of log-probabilities.
TokenWeights weights_from_log_probs(std::vector<int> rows, std::span<const double> log_p_mm,
                                    std::span<const double> log_p_text, const StwConfig& config, long step);

/// Both passes run on non-recording graphs, so no parameter receives a
/// gradient from the weights. Requires a frozen text branch once past warm-up.
template <typename S>
TokenWeights stw_weights(const Model<S>& model, const MultimodalSequence& seq, const MaskPair& masks,
                         const StwConfig& config, long step, const SalmonOptions& options = {});

/// One scored target. Text targets carry both log-probabilities; ts targets
/// carry the multimodal one per channel.
struct TokenRecord {
  std::string sample;
  int position = 0;
  std::string token;
  Modality modality = Modality::Text;
  int channel = 0;
  double log_p_text = 0.0;
  double log_p_mm = 0.0;
  double ratio = 1.0;
  double weight = 1.0;
};

/// Per-target diagnostics with STW weights computed past warm-up.
template <typename S>
std::vector<TokenRecord> token_diagnostics(const Model<S>& model, const MultimodalSequence& seq,
                                           const Vocabulary& vocab, const std::string& sample_id,
                                           const StwConfig& config = {}, const SalmonOptions& options = {});

/// Columns: sample,position,token,modality,channel,log_p_text,log_p_mm,W,W_tilde.
void write_diagnostics_csv(const std::filesystem::path& path, std::span<const TokenRecord> records);
std::vector<TokenRecord> read_diagnostics_csv(const std::filesystem::path& path);

}  // namespace msitt
