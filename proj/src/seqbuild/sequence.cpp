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

#include "msitt/seqbuild/sequence.hpp"

#include "msitt/common/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace msitt {

int MultimodalSequence::count(Modality m) const {
  return static_cast<int>(std::count(tags.begin(), tags.end(), m));
}

namespace {

struct Token {
  int id;
  Modality tag;
  int day;
  int article;
};

struct DayBlock {
  std::vector<Token> tokens;
  std::vector<int> bins;
  std::vector<double> values;
};

const std::vector<double>& channel_values(const CompanySample& s, const std::string& name) {
  for (const auto& [n, v] : s.channels)
    if (n == name) return v;
  throw ContractError("sample " + s.id() + " lacks channel '" + name + "'");
}

}  // namespace

MultimodalSequence interleave(const CompanySample& sample, const ChannelSet& codecs, const Vocabulary& vocab,
                              const SequenceOptions& options) {
  if (codecs.size() < 1) throw ContractError("interleave: no codec");
  if (static_cast<int>(sample.returns.size()) != kWindowDays)
    throw DataError("interleave: sample " + sample.id() + " must carry 252 returns");
  const int channels = codecs.size();
  const int vocab_size = vocab.size();

  std::vector<std::vector<double>> series(static_cast<std::size_t>(channels));
  series[0] = sample.returns;
  for (int c = 1; c < channels; ++c) {
    const auto& raw = channel_values(sample, codecs.name(c));
    if (static_cast<int>(raw.size()) != kWindowDays) throw DataError("interleave: channel length mismatch");
    series[static_cast<std::size_t>(c)] = forward_fill(raw);
  }

  const std::vector<Date> window = weekdays_before(sample.date, kWindowDays);
  std::vector<DayBlock> blocks(static_cast<std::size_t>(kWindowDays));
  for (int d = 0; d < kWindowDays; ++d) {
    DayBlock& b = blocks[static_cast<std::size_t>(d)];
    int first_bin = 0;
    for (int c = 0; c < channels; ++c) {
      const BinCodec& codec = codecs[c];
      double v = series[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)];
      int id;
      if (std::isnan(v)) {
        // Before the first observation of a low-frequency channel.
        id = codec.bins / 2;
        v = codec.representatives[static_cast<std::size_t>(id)];
      } else {
        id = encode(codec, v);
      }
      if (c == 0) first_bin = id;
      b.bins.push_back(id);
      b.values.push_back(v);
    }
    b.tokens.push_back({vocab_size + first_bin, Modality::Ts, d, -1});
  }

  std::vector<std::size_t> order(sample.articles.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = sample.articles[a];
    const auto& y = sample.articles[b];
    if (x.ts != y.ts) return x.ts < y.ts;
    return x.source < y.source;
  });
  int ordinal = 0;
  for (std::size_t k : order) {
    const Article& a = sample.articles[k];
    const auto it = std::upper_bound(window.begin(), window.end(), a.ts.date);
    if (it == window.begin()) {
      spdlog::debug("interleave: {} drops article dated {} before the window", sample.id(), a.ts.date.str());
      continue;
    }
    const int d = static_cast<int>(it - window.begin()) - 1;
    DayBlock& b = blocks[static_cast<std::size_t>(d)];
    const int art = ordinal++;
    auto push = [&](int id) {
      b.tokens.push_back({id, Modality::Text, d, art});
      b.bins.insert(b.bins.end(), static_cast<std::size_t>(channels), -1);
      b.values.insert(b.values.end(), static_cast<std::size_t>(channels), std::numeric_limits<double>::quiet_NaN());
    };
    push(Vocabulary::kBoa);
    for (const auto& w : article_tokens(a, options.render_timestamps)) push(vocab.id(w));
    push(Vocabulary::kEoa);
  }

  std::size_t total = options.append_eos ? 1 : 0;
  for (const auto& b : blocks) total += b.tokens.size();
  std::size_t first = 0;
  if (options.max_length > 0) {
    while (total > static_cast<std::size_t>(options.max_length) && first < blocks.size()) {
      total -= blocks[first].tokens.size();
      ++first;
    }
    if (first == blocks.size() && total > 0 && total > static_cast<std::size_t>(options.max_length))
      throw ContractError("interleave: max_length too small for any day");
  }

  MultimodalSequence seq;
  seq.text_vocab = vocab_size;
  seq.channels = channels;
  for (std::size_t d = first; d < blocks.size(); ++d) {
    for (const Token& t : blocks[d].tokens) {
      seq.ids.push_back(t.id);
      seq.tags.push_back(t.tag);
      seq.days.push_back(t.day);
      seq.article.push_back(t.article);
    }
    seq.bins.insert(seq.bins.end(), blocks[d].bins.begin(), blocks[d].bins.end());
    seq.values.insert(seq.values.end(), blocks[d].values.begin(), blocks[d].values.end());
  }
  if (options.append_eos) {
    seq.ids.push_back(Vocabulary::kEos);
    seq.tags.push_back(Modality::Text);
    seq.days.push_back(kWindowDays);
    seq.article.push_back(-1);
    seq.bins.insert(seq.bins.end(), static_cast<std::size_t>(channels), -1);
    seq.values.insert(seq.values.end(), static_cast<std::size_t>(channels), std::numeric_limits<double>::quiet_NaN());
  }
  seq.positions = positions(seq);
  return seq;
}

MaskPair build_masks(const MultimodalSequence& seq) {
  const Eigen::Index n = seq.length();
  MaskPair m{Mask::Zero(n, n), Mask::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      m.upper(i, j) = true;
      m.lower(i, j) = seq.tags[static_cast<std::size_t>(i)] == seq.tags[static_cast<std::size_t>(j)];
    }
  }
  return m;
}

std::vector<int> positions(const MultimodalSequence& seq) {
  std::vector<int> p(static_cast<std::size_t>(seq.length()));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

namespace {

SequenceView select(const MultimodalSequence& seq, bool keep_text, bool keep_ts, bool keep_eos) {
  SequenceView v;
  v.seq.text_vocab = seq.text_vocab;
  v.seq.channels = seq.channels;
  for (int i = 0; i < seq.length(); ++i) {
    const bool eos = i == seq.length() - 1 && seq.ends_with_eos();
    const bool keep = eos ? keep_eos : (seq.is_text(i) ? keep_text : keep_ts);
    if (!keep) continue;
    const auto u = static_cast<std::size_t>(i);
    v.source.push_back(i);
    v.seq.ids.push_back(seq.ids[u]);
    v.seq.tags.push_back(seq.tags[u]);
    v.seq.days.push_back(seq.days[u]);
    v.seq.article.push_back(seq.article[u]);
    for (int c = 0; c < seq.channels; ++c) {
      v.seq.bins.push_back(seq.bin(i, c));
      v.seq.values.push_back(seq.value(i, c));
    }
  }
  v.seq.positions = positions(v.seq);
  return v;
}

}  // namespace

SequenceView text_only(const MultimodalSequence& seq) { return select(seq, true, false, true); }

SequenceView ts_only(const MultimodalSequence& seq) { return select(seq, false, true, true); }

void validate(const MultimodalSequence& seq, int max_length) {
  const auto n = static_cast<std::size_t>(seq.length());
  const auto c = static_cast<std::size_t>(seq.channels);
  if (seq.tags.size() != n || seq.days.size() != n || seq.positions.size() != n || seq.article.size() != n ||
      seq.bins.size() != n * c || seq.values.size() != n * c)
    throw ContractError("sequence arrays have inconsistent lengths");
  if (max_length > 0 && n > static_cast<std::size_t>(max_length)) throw ContractError("sequence exceeds max length");
  int open = -1;
  int last_ts_day = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && seq.days[i] < seq.days[i - 1]) throw ContractError("day stamps decrease");
    if (seq.positions[i] != static_cast<int>(i)) throw ContractError("positions are not 0..L-1");
    const int id = seq.ids[i];
    if (seq.tags[i] == Modality::Ts) {
      if (open >= 0) throw ContractError("ts token inside an article block");
      if (seq.days[i] == last_ts_day) throw ContractError("two ts tokens on one day");
      last_ts_day = seq.days[i];
      if (id != seq.text_vocab + seq.bins[i * c]) throw ContractError("ts id does not match its bin");
      continue;
    }
    if (id < 0 || id >= seq.text_vocab) throw ContractError("text id out of range");
    if (id == Vocabulary::kBoa) {
      if (open >= 0) throw ContractError("nested article block");
      open = seq.article[i];
    } else if (id == Vocabulary::kEoa) {
      if (open < 0 || seq.article[i] != open) throw ContractError("unmatched end of article");
      open = -1;
    } else if (id == Vocabulary::kEos) {
      if (i + 1 != n) throw ContractError("<eos> before the end");
    } else if (open < 0 || seq.article[i] != open) {
      throw ContractError("text token outside an article block");
    }
  }
  if (open >= 0) throw ContractError("unterminated article block");
}

nlohmann::json to_json(const MultimodalSequence& seq) {
  std::vector<std::string> tags;
  for (Modality m : seq.tags) tags.push_back(m == Modality::Text ? "text" : "ts");
  return nlohmann::json{{"ids", seq.ids},
                        {"tags", tags},
                        {"days", seq.days},
                        {"positions", seq.positions},
                        {"text_vocab", seq.text_vocab},
                        {"channels", seq.channels}};
}

}  // namespace msitt
