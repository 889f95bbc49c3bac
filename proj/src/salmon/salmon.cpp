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

#include "msitt/salmon/salmon.hpp"

#include "msitt/common/error.hpp"
#include "msitt/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace msitt {

void StwConfig::validate() const {
  if (!(warm_frac > 0.0 && warm_frac < 1.0)) throw ContractError("stw: warm_frac must lie in (0, 1)");
  if (!(clamp_lo > 0.0 && clamp_lo < 1.0 && clamp_hi > 1.0)) throw ContractError("stw: need 0 < clamp_lo < 1 < clamp_hi");
  if (total_steps < 0) throw ContractError("stw: total_steps must be non-negative");
}

TokenWeights TokenWeights::uniform(std::vector<int> rows) {
  TokenWeights w;
  const std::size_t n = rows.size();
  w.rows = std::move(rows);
  w.log_ratio.assign(n, 0.0);
  w.raw.assign(n, 1.0);
  w.clamped.assign(n, 1.0);
  w.normalized.assign(n, 1.0);
  w.has_baseline.assign(n, 0);
  return w;
}

std::vector<int> text_target_rows(const MultimodalSequence& seq, const SalmonOptions& options) {
  std::vector<int> rows;
  for (int i = 0; i + 1 < seq.length(); ++i) {
    if (!seq.is_text(i + 1)) continue;
    const int id = seq.ids[static_cast<std::size_t>(i + 1)];
    if (!options.score_markers && (id == Vocabulary::kBoa || id == Vocabulary::kEoa)) continue;
    rows.push_back(i);
  }
  return rows;
}

template <typename S>
SalmonLoss<S> salmon_loss(const Model<S>& model, Graph<S>& g, const MultimodalSequence& seq, const MaskPair& masks,
                          const TokenWeights* weights, const SalmonOptions& options, std::mt19937_64* rng) {
  const ModelConfig& cfg = model.config();
  ForwardOptions fo;
  fo.text_rows = weights != nullptr ? weights->rows : text_target_rows(seq, options);
  fo.rng = rng;
  if (weights != nullptr) {
    if (weights->normalized.size() != weights->rows.size()) throw ContractError("salmon: weights and rows disagree");
    if (weights->rows != text_target_rows(seq, options)) throw ContractError("salmon: weights belong to another sequence");
  }
  const auto f = model.forward(g, seq, masks, fo);
  const bool raw_sum = options.normalization == LossNormalization::RawSum;

  SalmonLoss<S> out;
  out.text_count = f.text_rows.size();
  out.ts_count = f.ts_rows.size();
  Var<S> total = g.constant(Matrix<S>::Zero(1, 1));
  if (out.text_count > 0) {
    std::vector<int> targets;
    targets.reserve(out.text_count);
    for (int r : f.text_rows) targets.push_back(seq.ids[static_cast<std::size_t>(r + 1)]);
    std::vector<S> w(out.text_count, S(1));
    if (weights != nullptr)
      for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<S>(weights->normalized[k]);
    Var<S> ce = cross_entropy(f.text_logits, targets, std::span<const S>(w), Reduction::Sum);
    out.text = raw_sum ? ce : scale(ce, S(1) / static_cast<S>(out.text_count));
    total = out.text;
  }
  if (out.ts_count > 0) {
    const auto n = static_cast<S>(out.ts_count);
    Var<S> ts;
    if (cfg.ts_embedding == TsEmbeddingKind::Discrete) {
      const std::vector<S> ones(out.ts_count, S(1));
      for (int c = 0; c < cfg.channels; ++c) {
        std::vector<int> targets;
        targets.reserve(out.ts_count);
        for (int r : f.ts_rows) targets.push_back(seq.bin(r + 1, c));
        Var<S> ce = cross_entropy(f.ts_logits[static_cast<std::size_t>(c)], targets, std::span<const S>(ones),
                                  Reduction::Sum);
        ts = c == 0 ? ce : add(ts, ce);
      }
      const S denom = static_cast<S>(cfg.channels) * (raw_sum ? S(1) : n);
      ts = scale(ts, S(1) / denom);
    } else {
      Matrix<S> target(static_cast<Eigen::Index>(out.ts_count), cfg.channels);
      for (std::size_t k = 0; k < out.ts_count; ++k)
        for (int c = 0; c < cfg.channels; ++c)
          target(static_cast<Eigen::Index>(k), c) = static_cast<S>(
              seq.value(f.ts_rows[k] + 1, c) * model.value_scale()[static_cast<std::size_t>(c)]);
      ts = mse(f.ts_values, target);
      if (raw_sum) ts = scale(ts, n);
    }
    if (options.ts_weight != 1.0) ts = scale(ts, static_cast<S>(options.ts_weight));
    out.ts = ts;
    total = out.text_count > 0 ? add(total, ts) : ts;
  }
  out.total = total;
  out.text_value = out.text_count > 0 ? static_cast<double>(out.text.scalar()) : 0.0;
  out.ts_value = out.ts_count > 0 ? static_cast<double>(out.ts.scalar()) : 0.0;
  out.total_value = static_cast<double>(total.scalar());
  return out;
}

template <typename S>
std::vector<double> multimodal_log_probs(const Model<S>& model, const MultimodalSequence& seq, const MaskPair& masks,
                                         std::span<const int> rows) {
  if (rows.empty()) return {};
  Graph<S> g(false);
  ForwardOptions fo;
  fo.text_rows = std::vector<int>(rows.begin(), rows.end());
  fo.ts_rows = std::vector<int>{};
  const auto f = model.forward(g, seq, masks, fo);
  std::vector<int> targets;
  for (int r : rows) targets.push_back(seq.ids[static_cast<std::size_t>(r + 1)]);
  return token_log_probs(f.text_logits.value(), targets);
}

template <typename S>
std::vector<double> text_only_log_probs(const Model<S>& model, const MultimodalSequence& seq,
                                        std::span<const int> rows) {
  std::vector<double> out(rows.size(), std::numeric_limits<double>::quiet_NaN());
  if (rows.empty()) return out;
  const SequenceView view = text_only(seq);
  std::vector<int> where(static_cast<std::size_t>(seq.length()), -1);
  for (std::size_t k = 0; k < view.source.size(); ++k) where[static_cast<std::size_t>(view.source[k])] = static_cast<int>(k);
  std::vector<int> view_rows, slots, targets;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int target = rows[k] + 1;
    if (target >= seq.length() || !seq.is_text(target)) throw ContractError("stw: row does not precede a text token");
    const int v = where[static_cast<std::size_t>(target)];
    if (v <= 0) continue;
    view_rows.push_back(v - 1);
    slots.push_back(static_cast<int>(k));
    targets.push_back(view.seq.ids[static_cast<std::size_t>(v)]);
  }
  if (view_rows.empty()) return out;
  Graph<S> g(false);
  ForwardOptions fo;
  fo.text_rows = view_rows;
  fo.ts_rows = std::vector<int>{};
  const auto f = model.forward(g, view.seq, build_masks(view.seq), fo);
  const auto lp = token_log_probs(f.text_logits.value(), targets);
  for (std::size_t k = 0; k < slots.size(); ++k) out[static_cast<std::size_t>(slots[k])] = lp[k];
  return out;
}

TokenWeights weights_from_log_probs(std::vector<int> rows, std::span<const double> log_p_mm,
                                    std::span<const double> log_p_text, const StwConfig& config, long step) {
  config.validate();
  const std::size_t n = rows.size();
  TokenWeights w = TokenWeights::uniform(std::move(rows));
  if (config.warm(step)) {
    w.warm = true;
    return w;
  }
  if (log_p_mm.size() != n || log_p_text.size() != n) throw ContractError("stw: log-probability count mismatch");
  const double lo = std::log(config.clamp_lo), hi = std::log(config.clamp_hi);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isnan(log_p_text[k])) {
      w.has_baseline[k] = 1;
      const double lr = log_p_mm[k] - log_p_text[k];
      w.log_ratio[k] = lr;
      w.raw[k] = std::exp(lr);
      // Log space keeps an underflowed probability from producing 0/0.
      w.clamped[k] = std::isnan(lr) ? config.clamp_hi : std::clamp(std::exp(std::clamp(lr, lo, hi)), config.clamp_lo, config.clamp_hi);
    }
    total += w.clamped[k];
  }
  if (n > 0) {
    const double mean = total / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) w.normalized[k] = w.clamped[k] / mean;
  }
  return w;
}

namespace {

template <typename S>
bool text_frozen(const Model<S>& model) {
  const auto& ps = model.params();
  for (int i = 0; i < ps.size(); ++i) {
    const ParamGroup grp = ps.group(i);
    if ((grp == ParamGroup::TextBranch || grp == ParamGroup::TextEmbedding || grp == ParamGroup::TextHead) &&
        ps.trainable(i))
      return false;
  }
  return true;
}

}  // namespace

template <typename S>
TokenWeights stw_weights(const Model<S>& model, const MultimodalSequence& seq, const MaskPair& masks,
                         const StwConfig& config, long step, const SalmonOptions& options) {
  config.validate();
  std::vector<int> rows = text_target_rows(seq, options);
  if (config.warm(step)) return weights_from_log_probs(std::move(rows), {}, {}, config, step);
  if (!text_frozen(model)) throw ContractError("stw: the text-only baseline requires a frozen text branch");
  const auto mm = multimodal_log_probs(model, seq, masks, rows);
  const auto tx = text_only_log_probs(model, seq, rows);
  return weights_from_log_probs(std::move(rows), mm, tx, config, step);
}

template <typename S>
std::vector<TokenRecord> token_diagnostics(const Model<S>& model, const MultimodalSequence& seq,
                                           const Vocabulary& vocab, const std::string& sample_id,
                                           const StwConfig& config, const SalmonOptions& options) {
  StwConfig past = config;
  past.total_steps = 0;
  const MaskPair masks = build_masks(seq);
  const std::vector<int> rows = text_target_rows(seq, options);
  const auto mm = multimodal_log_probs(model, seq, masks, rows);
  const auto tx = text_only_log_probs(model, seq, rows);
  const TokenWeights w = weights_from_log_probs(rows, mm, tx, past, 0);

  std::vector<TokenRecord> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int pos = rows[k] + 1;
    TokenRecord r;
    r.sample = sample_id;
    r.position = pos;
    r.token = vocab.token(seq.ids[static_cast<std::size_t>(pos)]);
    r.modality = Modality::Text;
    r.log_p_text = tx[k];
    r.log_p_mm = mm[k];
    r.ratio = w.has_baseline[k] ? w.raw[k] : nan;
    r.weight = w.normalized[k];
    out.push_back(std::move(r));
  }

  const std::vector<int> ts_rows = successor_rows(seq, Modality::Ts);
  if (!ts_rows.empty() && model.config().ts_embedding == TsEmbeddingKind::Discrete) {
    Graph<S> g(false);
    ForwardOptions fo;
    fo.text_rows = std::vector<int>{};
    fo.ts_rows = ts_rows;
    const auto f = model.forward(g, seq, masks, fo);
    for (int c = 0; c < model.config().channels; ++c) {
      std::vector<int> targets;
      for (int r : ts_rows) targets.push_back(seq.bin(r + 1, c));
      const auto lp = token_log_probs(f.ts_logits[static_cast<std::size_t>(c)].value(), targets);
      for (std::size_t k = 0; k < ts_rows.size(); ++k) {
        TokenRecord r;
        r.sample = sample_id;
        r.position = ts_rows[k] + 1;
        r.token = "bin" + std::to_string(targets[k]);
        r.modality = Modality::Ts;
        r.channel = c;
        r.log_p_text = nan;
        r.log_p_mm = lp[k];
        r.ratio = nan;
        r.weight = 1.0;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

void write_diagnostics_csv(const std::filesystem::path& path, std::span<const TokenRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "sample,position,token,modality,channel,log_p_text,log_p_mm,W,W_tilde\n";
  for (const auto& r : records)
    out << r.sample << ',' << r.position << ',' << r.token << ',' << (r.modality == Modality::Text ? "text" : "ts")
        << ',' << r.channel << ',' << r.log_p_text << ',' << r.log_p_mm << ',' << r.ratio << ',' << r.weight << '\n';
}

namespace {

double parse_number(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

std::vector<TokenRecord> read_diagnostics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("sample,position,token,modality", 0) != 0) throw ParseError(path.string() + ": not a diagnostics file");
  std::vector<TokenRecord> rows;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[9];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw ParseError(path.string() + ":" + std::to_string(no) + ": expected 9 fields");
    TokenRecord r;
    try {
      r.sample = f[0];
      r.position = std::stoi(f[1]);
      r.token = f[2];
      if (f[3] != "text" && f[3] != "ts") throw ParseError("bad modality");
      r.modality = f[3] == "text" ? Modality::Text : Modality::Ts;
      r.channel = std::stoi(f[4]);
      r.log_p_text = parse_number(f[5]);
      r.log_p_mm = parse_number(f[6]);
      r.ratio = parse_number(f[7]);
      r.weight = parse_number(f[8]);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

#define MSITT_SALMON(S)                                                                                               \
  template SalmonLoss<S> salmon_loss(const Model<S>&, Graph<S>&, const MultimodalSequence&, const MaskPair&,       \
                                     const TokenWeights*, const SalmonOptions&, std::mt19937_64*);                     \
  template std::vector<double> multimodal_log_probs(const Model<S>&, const MultimodalSequence&, const MaskPair&,   \
                                                    std::span<const int>);                                             \
  template std::vector<double> text_only_log_probs(const Model<S>&, const MultimodalSequence&, std::span<const int>); \
  template TokenWeights stw_weights(const Model<S>&, const MultimodalSequence&, const MaskPair&, const StwConfig&,  \
                                    long, const SalmonOptions&);                                                       \
  template std::vector<TokenRecord> token_diagnostics(const Model<S>&, const MultimodalSequence&, const Vocabulary&, \
                                                      const std::string&, const StwConfig&, const SalmonOptions&);
MSITT_SALMON(float)
MSITT_SALMON(double)
#undef MSITT_SALMON

}  // namespace msitt
