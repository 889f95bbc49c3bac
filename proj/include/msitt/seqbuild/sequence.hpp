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

#include "msitt/corpus/types.hpp"
#include "msitt/numcore/tensor.hpp"
#include "msitt/seqbuild/vocab.hpp"
#include "msitt/tscodec/codec.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace msitt {

enum class Modality : std::uint8_t { Text = 0, Ts = 1 };

/// Interleaved token stream. Text tokens use ids in [0, text_vocab); a ts
/// token's id is text_vocab + its channel-0 bin. Per-channel bins and raw
/// values are stored row-major (length x channels), -1 / NaN at text tokens.
struct MultimodalSequence {
  std::vector<int> ids;
  std::vector<Modality> tags;
  std::vector<int> days;       // trading-day index in the 252-day window
  std::vector<int> positions;
  std::vector<int> article;    // article ordinal for text tokens inside a block, else -1
  std::vector<int> bins;
  std::vector<double> values;
  int text_vocab = 0;
  int channels = 1;

  int length() const { return static_cast<int>(ids.size()); }
  bool is_text(int i) const { return tags[static_cast<std::size_t>(i)] == Modality::Text; }
  int bin(int i, int c) const { return bins[static_cast<std::size_t>(i * channels + c)]; }
  double value(int i, int c) const { return values[static_cast<std::size_t>(i * channels + c)]; }
  bool ends_with_eos() const { return !ids.empty() && ids.back() == Vocabulary::kEos && tags.back() == Modality::Text; }
  int count(Modality m) const;
};

struct SequenceOptions {
  int max_length = 0;  // 0 means unbounded
  bool render_timestamps = true;
  bool append_eos = false;
};

/// Channel 0 of `codecs` encodes the returns; channel c > 0 encodes the
/// sample channel with the same name. Each trading day contributes one ts
/// token followed by that day's article blocks (<boa> tokens <eoa>), ordered
/// by timestamp then source. Articles dated before the window are dropped.
/// Over-long sequences lose whole oldest days.
MultimodalSequence interleave(const CompanySample& sample, const ChannelSet& codecs, const Vocabulary& vocab,
                              const SequenceOptions& options = {});

struct MaskPair {
  Mask lower;  // causal and same-modality
  Mask upper;  // causal
};

MaskPair build_masks(const MultimodalSequence& seq);

/// 0..L-1.
std::vector<int> positions(const MultimodalSequence& seq);

/// A sub-sequence with contiguous positions and the index of every kept
/// token in the source sequence.
struct SequenceView {
  MultimodalSequence seq;
  std::vector<int> source;
};

SequenceView text_only(const MultimodalSequence& seq);
/// ts tokens plus a trailing <eos> when the source has one.
SequenceView ts_only(const MultimodalSequence& seq);

/// Throws ContractError on a violated structural invariant.
void validate(const MultimodalSequence& seq, int max_length = 0);

nlohmann::json to_json(const MultimodalSequence& seq);

}  // namespace msitt
