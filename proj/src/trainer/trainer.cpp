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

#include "msitt/trainer/trainer.hpp"

#include "msitt/common/error.hpp"
#include "msitt/evalkit/evalkit.hpp"
#include "msitt/numcore/ops.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace msitt {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::TextPretrain: return "text_pretrain";
    case Stage::Salmon: return "salmon";
    case Stage::Finetune: return "finetune";
  }
  return "salmon";
}

Stage stage_from_string(std::string_view s) {
  for (Stage st : {Stage::TextPretrain, Stage::Salmon, Stage::Finetune})
    if (to_string(st) == s) return st;
  throw ParseError("unknown stage: " + std::string(s));
}

std::string_view to_string(InputView v) {
  switch (v) {
    case InputView::Full: return "full";
    case InputView::TextOnly: return "text_only";
    case InputView::TsOnly: return "ts_only";
  }
  return "full";
}

InputView input_view_from_string(std::string_view s) {
  for (InputView v : {InputView::Full, InputView::TextOnly, InputView::TsOnly})
    if (to_string(v) == s) return v;
  throw ParseError("unknown input view: " + std::string(s));
}

std::vector<Example> make_examples(std::span<const CompanySample> samples, const ChannelSet& codecs,
                                   const Vocabulary& vocab, int max_length, bool render_timestamps, int horizon) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Example e;
    e.id = s.id();
    e.company = s.company;
    e.date = s.date;
    // The <eos> slot is reserved inside max_length so both forms share a prefix.
    const int body = max_length > 0 ? max_length - 1 : 0;
    e.seq = interleave(s, codecs, vocab, {.max_length = body, .render_timestamps = render_timestamps});
    e.with_eos = interleave(s, codecs, vocab,
                            {.max_length = max_length, .render_timestamps = render_timestamps, .append_eos = true});
    const auto l = s.label(horizon);
    e.label = l ? *l : -1;
    out.push_back(std::move(e));
  }
  return out;
}

MultimodalSequence view_of(const Example& e, InputView view) {
  switch (view) {
    case InputView::Full: return e.with_eos;
    case InputView::TextOnly: return text_only(e.with_eos).seq;
    case InputView::TsOnly: return ts_only(e.with_eos).seq;
  }
  return e.with_eos;
}

void TrainConfig::validate() const {
  optim.validate();
  if (batch < 1 || micro_batch < 1 || batch % micro_batch != 0)
    throw ContractError("train: batch must be a positive multiple of micro_batch");
  if (epochs < 1 && max_steps <= 0) throw ContractError("train: need epochs or max_steps");
  if (max_steps < 0 || checkpoint_every < 0) throw ContractError("train: negative step counts");
  if (!(interleaved_positions >= 0.0 && interleaved_positions <= 1.0))
    throw ContractError("train: interleaved_positions must lie in [0, 1]");
  stw_config.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"stage", std::string(to_string(stage))},
          {"lr", optim.lr},
          {"beta1", optim.beta1},
          {"beta2", optim.beta2},
          {"eps", optim.eps},
          {"weight_decay", optim.weight_decay},
          {"clip_norm", optim.clip_norm},
          {"batch", batch},
          {"micro_batch", micro_batch},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"seed", seed},
          {"stw", stw},
          {"warm_frac", stw_config.warm_frac},
          {"clamp_lo", stw_config.clamp_lo},
          {"clamp_hi", stw_config.clamp_hi},
          {"normalization", salmon.normalization == LossNormalization::RawSum ? "raw_sum" : "per_modality"},
          {"score_markers", salmon.score_markers},
          {"ts_weight", salmon.ts_weight},
          {"interleaved_positions", interleaved_positions},
          {"view", std::string(to_string(view))},
          {"select_by_validation", select_by_validation},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.stage = stage_from_string(j.value("stage", std::string("salmon")));
  c.optim.lr = j.value("lr", c.optim.lr);
  c.optim.beta1 = j.value("beta1", c.optim.beta1);
  c.optim.beta2 = j.value("beta2", c.optim.beta2);
  c.optim.eps = j.value("eps", c.optim.eps);
  c.optim.weight_decay = j.value("weight_decay", c.optim.weight_decay);
  c.optim.clip_norm = j.value("clip_norm", c.optim.clip_norm);
  c.batch = j.value("batch", c.batch);
  c.micro_batch = j.value("micro_batch", c.micro_batch);
  c.epochs = j.value("epochs", c.epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.stw = j.value("stw", c.stw);
  c.stw_config.warm_frac = j.value("warm_frac", c.stw_config.warm_frac);
  c.stw_config.clamp_lo = j.value("clamp_lo", c.stw_config.clamp_lo);
  c.stw_config.clamp_hi = j.value("clamp_hi", c.stw_config.clamp_hi);
  c.salmon.normalization =
      j.value("normalization", std::string("per_modality")) == "raw_sum" ? LossNormalization::RawSum
                                                                         : LossNormalization::PerModality;
  c.salmon.score_markers = j.value("score_markers", c.salmon.score_markers);
  c.salmon.ts_weight = j.value("ts_weight", c.salmon.ts_weight);
  c.interleaved_positions = j.value("interleaved_positions", c.interleaved_positions);
  c.view = input_view_from_string(j.value("view", std::string("full")));
  c.select_by_validation = j.value("select_by_validation", c.select_by_validation);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

namespace {

std::string number(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

/// Deterministic stream for (seed, step, slot, purpose).
std::mt19937_64 stream(std::uint64_t seed, long step, std::size_t slot, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32),
                    static_cast<std::uint32_t>(slot), purpose};
  return std::mt19937_64(seq);
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,stage,epoch,loss,text_loss,ts_loss,bce,val_auc,grad_norm,skipped\n";
  for (const auto& r : rows)
    out << r.step << ',' << to_string(r.stage) << ',' << r.epoch << ',' << number(r.loss) << ',' << number(r.text_loss)
        << ',' << number(r.ts_loss) << ',' << number(r.bce) << ',' << number(r.val_auc) << ',' << number(r.grad_norm)
        << ',' << (r.skipped ? 1 : 0) << '\n';
}

template <typename S>
Trainer<S>::Trainer(Model<S>& model, TrainConfig config) : model_(model), config_(std::move(config)), opt_(config_.optim) {
  config_.validate();
}

template <typename S>
long Trainer<S>::planned_steps(std::size_t train_size) const {
  if (config_.max_steps > 0) return config_.max_steps;
  const long per_epoch = static_cast<long>((train_size + static_cast<std::size_t>(config_.batch) - 1) /
                                           static_cast<std::size_t>(config_.batch));
  return per_epoch * config_.epochs;
}

template <typename S>
typename Trainer<S>::SequenceLoss Trainer<S>::sequence_loss(Graph<S>& g, const Example& e, long step,
                                                            std::size_t slot, long total) const {
  std::mt19937_64 drop = stream(config_.seed, step, slot, 1);
  std::mt19937_64* rng = model_.config().dropout > 0.0 ? &drop : nullptr;
  SequenceLoss out;
  switch (config_.stage) {
    case Stage::TextPretrain: {
      const SequenceView view = text_only(e.seq);
      MultimodalSequence seq = view.seq;
      std::mt19937_64 pick = stream(config_.seed, step, slot, 2);
      if (std::bernoulli_distribution(config_.interleaved_positions)(pick))
        for (std::size_t k = 0; k < view.source.size(); ++k)
          seq.positions[k] = e.seq.positions[static_cast<std::size_t>(view.source[k])];
      const auto l = salmon_loss(model_, g, seq, build_masks(seq), nullptr, config_.salmon, rng);
      out.loss = l.total;
      out.text = l.text_value;
      break;
    }
    case Stage::Salmon: {
      const MaskPair masks = build_masks(e.seq);
      std::optional<TokenWeights> w;
      if (config_.stw) {
        StwConfig sc = config_.stw_config;
        sc.total_steps = total;
        w = stw_weights(model_, e.seq, masks, sc, step, config_.salmon);
      }
      const auto l = salmon_loss(model_, g, e.seq, masks, w ? &*w : nullptr, config_.salmon, rng);
      out.loss = l.total;
      out.text = l.text_value;
      out.ts = l.ts_value;
      break;
    }
    case Stage::Finetune: {
      const MultimodalSequence seq = view_of(e, config_.view);
      ForwardOptions fo;
      fo.heads = false;
      fo.rng = rng;
      const auto f = model_.forward(g, seq, build_masks(seq), fo);
      out.loss = bce_with_logits(model_.classifier_logit(g, f, seq), static_cast<S>(e.label));
      out.bce = static_cast<double>(out.loss.scalar());
      break;
    }
  }
  return out;
}

template <typename S>
TrainResult Trainer<S>::run(std::span<const Example> train, std::span<const Example> validation) {
  if (train.empty()) throw ContractError("train: empty training set");
  if (config_.stage == Stage::Finetune) {
    for (const auto& e : train)
      if (e.label != 0 && e.label != 1) throw ContractError("finetune: example " + e.id + " has no label");
    for (const auto& e : validation)
      if (e.label != 0 && e.label != 1) throw ContractError("finetune: validation example " + e.id + " has no label");
  }
  ParamStore<S>& params = model_.params();
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(config_.batch);
  const long per_epoch = static_cast<long>((n + batch - 1) / batch);
  const long total = planned_steps(n);

  std::vector<std::size_t> order;
  long order_epoch = -1;
  std::vector<Matrix<S>> acc(static_cast<std::size_t>(params.size()));
  std::vector<char> have(acc.size());

  while (step_ < total) {
    const long epoch = step_ / per_epoch;
    const long b = step_ % per_epoch;
    if (epoch != order_epoch) {
      order.resize(n);
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 shuffle = stream(config_.seed, epoch, 0, 3);
      std::shuffle(order.begin(), order.end(), shuffle);
      order_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(b) * batch, end = std::min(n, begin + batch);
    std::fill(have.begin(), have.end(), 0);
    MetricRow row;
    row.step = step_;
    row.stage = config_.stage;
    row.epoch = static_cast<int>(epoch);
    for (std::size_t micro = begin; micro < end; micro += static_cast<std::size_t>(config_.micro_batch)) {
      const std::size_t stop = std::min(end, micro + static_cast<std::size_t>(config_.micro_batch));
      for (std::size_t k = micro; k < stop; ++k) {
        Graph<S> g;
        const SequenceLoss sl = sequence_loss(g, train[order[k]], step_, k - begin, total);
        const double value = static_cast<double>(sl.loss.scalar());
        if (!std::isfinite(value)) {
          if (!config_.checkpoint_dir.empty()) save_checkpoint(config_.checkpoint_dir / "last_good.json");
          throw NumericError("train: non-finite loss at step " + std::to_string(step_) + " on " + train[order[k]].id);
        }
        row.loss += value;
        row.text_loss += sl.text;
        row.ts_loss += sl.ts;
        row.bce += sl.bce;
        g.backward(sl.loss);
        for (auto& [id, grad] : g.parameter_grads()) {
          const auto u = static_cast<std::size_t>(id);
          if (have[u]) {
            acc[u] += grad;
          } else {
            acc[u] = std::move(grad);
            have[u] = 1;
          }
        }
      }
    }
    const double count = static_cast<double>(end - begin);
    row.loss /= count;
    row.text_loss /= count;
    row.ts_loss /= count;
    row.bce /= count;
    std::vector<std::pair<int, Matrix<S>>> grads;
    const S inv = static_cast<S>(1.0 / count);
    for (std::size_t u = 0; u < acc.size(); ++u)
      if (have[u]) grads.emplace_back(static_cast<int>(u), acc[u] * inv);
    const StepInfo info = opt_.step(params, std::move(grads));
    row.grad_norm = info.grad_norm;
    row.skipped = !info.applied;
    ++step_;

    const bool epoch_end = step_ % per_epoch == 0 || step_ == total;
    if (epoch_end && config_.stage == Stage::Finetune && !validation.empty()) {
      const auto scores = predict(model_, validation, config_.view);
      std::vector<int> labels;
      for (const auto& e : validation) labels.push_back(e.label);
      double v = std::numeric_limits<double>::quiet_NaN();
      try {
        v = auc(scores, labels);
      } catch (const UndefinedError&) {
        spdlog::warn("finetune: validation set has a single class");
      }
      row.val_auc = v;
      result_.val_auc.push_back(v);
      if (!std::isnan(v) && (std::isnan(result_.best_val_auc) || v > result_.best_val_auc)) {
        result_.best_val_auc = v;
        result_.best_epoch = static_cast<int>(epoch);
        best_ = model_.to_json();
      }
    }
    result_.metrics.push_back(row);
    spdlog::debug("{} step {} loss {:.5f}", to_string(config_.stage), row.step, row.loss);
    if (config_.checkpoint_every > 0 && !config_.checkpoint_dir.empty() && step_ % config_.checkpoint_every == 0)
      save_checkpoint(config_.checkpoint_dir / ("step_" + std::to_string(step_) + ".json"));
  }

  if (config_.stage == Stage::Finetune && config_.select_by_validation && best_) {
    const Model<S> best = Model<S>::from_json(*best_);
    for (int i = 0; i < params.size(); ++i) params.value(i) = best.params().value(i);
  }
  result_.steps = opt_.steps();
  result_.skipped = opt_.skipped();
  if (!config_.metrics_csv.empty()) write_metrics_csv(config_.metrics_csv, result_.metrics);
  return result_;
}

template <typename S>
void Trainer<S>::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result_.metrics)
    rows.push_back({r.step, r.epoch, r.loss, r.text_loss, r.ts_loss, r.bce,
                    std::isnan(r.val_auc) ? nlohmann::json() : nlohmann::json(r.val_auc), r.grad_norm, r.skipped});
  nlohmann::json val = nlohmann::json::array();
  for (double v : result_.val_auc) val.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  nlohmann::json j{{"format", "msitt-checkpoint"},
                   {"version", 1},
                   {"stage", std::string(to_string(config_.stage))},
                   {"step", step_},
                   {"config", config_.to_json()},
                   {"model", model_.to_json()},
                   {"optimizer", opt_.to_json(model_.params())},
                   {"metrics", std::move(rows)},
                   {"val_auc", std::move(val)},
                   {"best_epoch", result_.best_epoch},
                   {"best_val_auc", std::isnan(result_.best_val_auc) ? nlohmann::json() : nlohmann::json(result_.best_val_auc)},
                   {"best_model", best_ ? *best_ : nlohmann::json()}};
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump();
}

template <typename S>
void Trainer<S>::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", std::string()) != "msitt-checkpoint") throw ParseError(path.string() + ": not a checkpoint");
  if (stage_from_string(j.at("stage").get<std::string>()) != config_.stage)
    throw ContractError("checkpoint stage does not match the trainer");
  const Model<S> saved = Model<S>::from_json(j.at("model"));
  ParamStore<S>& params = model_.params();
  if (saved.params().size() != params.size()) throw ContractError("checkpoint model structure differs");
  for (int i = 0; i < params.size(); ++i) {
    if (saved.params().name(i) != params.name(i)) throw ContractError("checkpoint model structure differs");
    params.value(i) = saved.params().value(i);
    params.set_trainable(i, saved.params().trainable(i));
  }
  opt_.load_json(j.at("optimizer"), params);
  step_ = j.at("step").get<long>();
  result_ = TrainResult{};
  for (const auto& r : j.at("metrics")) {
    MetricRow m;
    m.step = r[0].get<long>();
    m.stage = config_.stage;
    m.epoch = r[1].get<int>();
    m.loss = r[2].get<double>();
    m.text_loss = r[3].get<double>();
    m.ts_loss = r[4].get<double>();
    m.bce = r[5].get<double>();
    m.val_auc = r[6].is_null() ? std::numeric_limits<double>::quiet_NaN() : r[6].get<double>();
    m.grad_norm = r[7].get<double>();
    m.skipped = r[8].get<bool>();
    result_.metrics.push_back(m);
  }
  for (const auto& v : j.at("val_auc"))
    result_.val_auc.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
  result_.best_epoch = j.at("best_epoch").get<int>();
  result_.best_val_auc =
      j.at("best_val_auc").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("best_val_auc").get<double>();
  best_.reset();
  if (!j.at("best_model").is_null()) best_ = j.at("best_model");
}

template class Trainer<float>;
template class Trainer<double>;

template <typename S>
std::vector<double> predict(const Model<S>& model, std::span<const Example> examples, InputView view) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(model.classify(view_of(e, view)));
  return out;
}

template <typename S>
LmLoss evaluate_lm(const Model<S>& model, std::span<const Example> examples, const SalmonOptions& options) {
  LmLoss out;
  double mm_sum = 0.0, tx_sum = 0.0;
  for (const auto& e : examples) {
    const auto rows = text_target_rows(e.seq, options);
    if (rows.empty()) continue;
    const auto mm = multimodal_log_probs(model, e.seq, build_masks(e.seq), rows);
    const auto tx = text_only_log_probs(model, e.seq, rows);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (std::isnan(tx[k])) continue;
      mm_sum -= mm[k];
      tx_sum -= tx[k];
      ++out.tokens;
    }
  }
  if (out.tokens > 0) {
    out.multimodal = mm_sum / static_cast<double>(out.tokens);
    out.text_only = tx_sum / static_cast<double>(out.tokens);
  }
  return out;
}

template std::vector<double> predict(const Model<float>&, std::span<const Example>, InputView);
template std::vector<double> predict(const Model<double>&, std::span<const Example>, InputView);
template LmLoss evaluate_lm(const Model<float>&, std::span<const Example>, const SalmonOptions&);
template LmLoss evaluate_lm(const Model<double>&, std::span<const Example>, const SalmonOptions&);

}  // namespace msitt
