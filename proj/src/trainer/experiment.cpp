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

#include "msitt/trainer/experiment.hpp"

#include "msitt/common/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace msitt {

nlohmann::json DataConfig::to_json() const {
  return {{"horizon", horizon},
          {"max_length", max_length},
          {"render_timestamps", render_timestamps},
          {"bins", bins},
          {"min_count", min_count},
          {"balance_train", balance_train},
          {"max_train", max_train},
          {"train_begin", windows.train_begin.str()},
          {"train_end", windows.train_end.str()},
          {"val_begin", windows.val_begin.str()},
          {"val_end", windows.val_end.str()},
          {"test_begin", windows.test_begin.str()},
          {"test_end", windows.test_end.str()},
          {"seed", seed}};
}

DataConfig DataConfig::from_json(const nlohmann::json& j) {
  DataConfig c;
  c.horizon = j.value("horizon", c.horizon);
  c.max_length = j.value("max_length", c.max_length);
  c.render_timestamps = j.value("render_timestamps", c.render_timestamps);
  c.bins = j.value("bins", c.bins);
  c.min_count = j.value("min_count", c.min_count);
  c.balance_train = j.value("balance_train", c.balance_train);
  c.max_train = j.value("max_train", c.max_train);
  auto date = [&](const char* key, Date fallback) {
    return j.contains(key) ? parse_date(j.at(key).get<std::string>()) : fallback;
  };
  c.windows.train_begin = date("train_begin", c.windows.train_begin);
  c.windows.train_end = date("train_end", c.windows.train_end);
  c.windows.val_begin = date("val_begin", c.windows.val_begin);
  c.windows.val_end = date("val_end", c.windows.val_end);
  c.windows.test_begin = date("test_begin", c.windows.test_begin);
  c.windows.test_end = date("test_end", c.windows.test_end);
  c.seed = j.value("seed", c.seed);
  if (c.horizon != 7 && c.horizon != 30) throw ContractError("data: horizon must be 7 or 30");
  return c;
}

namespace {

std::vector<CompanySample> labeled(std::span<const CompanySample> samples, int horizon) {
  std::vector<CompanySample> out;
  for (const auto& s : samples)
    if (s.label(horizon)) out.push_back(s);
  return out;
}

}  // namespace

ExperimentData prepare_data(std::span<const CompanySample> samples, const DataConfig& config, int d_ts, int d_model) {
  ExperimentData d;
  d.config = config;
  const Partition p = partition(samples, config.windows);
  if (p.train.empty() || p.test.empty()) throw ContractError("data: empty train or test split");
  d.vocab = build_vocabulary(p.train, {.min_count = config.min_count, .timestamp_tokens = config.render_timestamps});

  std::vector<std::pair<std::string, std::vector<double>>> matrix{{"ret", {}}};
  for (const auto& [name, values] : p.train.front().channels) matrix.emplace_back(name, std::vector<double>{});
  for (const auto& s : p.train) {
    matrix[0].second.insert(matrix[0].second.end(), s.returns.begin(), s.returns.end());
    if (s.channels.size() + 1 != matrix.size()) throw DataError("data: samples disagree on channels");
    for (std::size_t c = 0; c < s.channels.size(); ++c) {
      if (s.channels[c].first != matrix[c + 1].first) throw DataError("data: samples disagree on channels");
      matrix[c + 1].second.insert(matrix[c + 1].second.end(), s.channels[c].second.begin(), s.channels[c].second.end());
    }
  }
  d.codecs = fit_channels(matrix, config.bins, {.d_ts = d_ts, .d_model = d_model, .seed = config.seed});

  auto examples = [&](std::span<const CompanySample> s) {
    return make_examples(s, d.codecs, d.vocab, config.max_length, config.render_timestamps, config.horizon);
  };
  d.pretrain = examples(p.train);
  std::vector<CompanySample> train =
      config.balance_train ? balance(p.train, config.horizon, config.seed) : labeled(p.train, config.horizon);
  if (config.max_train > 0 && train.size() > config.max_train) {
    std::vector<CompanySample> kept;
    std::mt19937_64 rng(config.seed ^ 0x7a1d);
    std::sample(train.begin(), train.end(), std::back_inserter(kept), config.max_train, rng);
    train = std::move(kept);
  }
  d.train = examples(train);
  d.validation = examples(labeled(p.validation, config.horizon));
  d.test = examples(labeled(p.test, config.horizon));
  spdlog::info("data: {} pretrain, {} train, {} validation, {} test, vocab {}", d.pretrain.size(), d.train.size(),
               d.validation.size(), d.test.size(), d.vocab.size());
  return d;
}

std::string_view to_string(Alignment a) {
  switch (a) {
    case Alignment::None: return "none";
    case Alignment::Salmon: return "salmon";
    case Alignment::SalmonStw: return "salmon_stw";
  }
  return "salmon_stw";
}

Alignment alignment_from_string(std::string_view s) {
  for (Alignment a : {Alignment::None, Alignment::Salmon, Alignment::SalmonStw})
    if (to_string(a) == s) return a;
  throw ParseError("unknown alignment: " + std::string(s));
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"model", model.to_json()},           {"pretrain", pretrain.to_json()},
          {"align", align.to_json()},           {"finetune", finetune.to_json()},
          {"adapter_rank", adapter_rank},       {"finetune_stage", finetune_stage},
          {"diagnostics", diagnostics}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig p;
  if (j.contains("model")) p.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("pretrain")) p.pretrain = TrainConfig::from_json(j.at("pretrain"));
  if (j.contains("align")) p.align = TrainConfig::from_json(j.at("align"));
  if (j.contains("finetune")) p.finetune = TrainConfig::from_json(j.at("finetune"));
  p.adapter_rank = j.value("adapter_rank", p.adapter_rank);
  p.finetune_stage = j.value("finetune_stage", p.finetune_stage);
  p.diagnostics = j.value("diagnostics", p.diagnostics);
  return p;
}

PipelineConfig toy_pipeline() {
  PipelineConfig p;
  p.model.layers = 4;
  p.model.d_model = 32;
  p.model.heads = 2;
  p.model.mlp_hidden = 64;
  p.model.d_ts = 16;
  p.model.classifier_hidden = 32;
  auto stage = [](TrainConfig& c, Stage s, int epochs, double lr) {
    c.stage = s;
    c.batch = 32;
    c.micro_batch = 32;
    c.epochs = epochs;
    c.optim.lr = lr;
  };
  stage(p.pretrain, Stage::TextPretrain, 3, 3e-3);
  stage(p.align, Stage::Salmon, 2, 1e-3);
  stage(p.finetune, Stage::Finetune, 5, 3e-3);
  return p;
}

namespace {

ModelConfig fitted(ModelConfig c, const ExperimentData& data, std::uint64_t seed) {
  c.vocab = data.vocab.size();
  c.bins = data.config.bins;
  c.channels = data.codecs.size();
  c.seed = seed;
  return c;
}

bool text_side(ParamGroup g) {
  return g == ParamGroup::TextBranch || g == ParamGroup::TextEmbedding || g == ParamGroup::TextHead;
}

nlohmann::json variant_key(const Variant& v, const PipelineConfig& p, const ExperimentData& d, std::uint64_t seed) {
  return {{"model", v.model.to_json()},
          {"alignment", std::string(to_string(v.alignment))},
          {"view", std::string(to_string(v.view))},
          {"adapter_target", v.adapter_target == AdapterTarget::TsBranch ? "ts" : "text"},
          {"adapters", v.adapters},
          {"pipeline", p.to_json()},
          {"data", d.config.to_json()},
          {"panel", d.panel.size()},
          {"seed", seed}};
}

}  // namespace

Model<float> pretrain_text(const ExperimentData& data, const ModelConfig& config, const TrainConfig& train,
                           std::uint64_t seed) {
  Model<float> m(fitted(config, data, seed), &data.codecs);
  TrainConfig t = train;
  t.stage = Stage::TextPretrain;
  t.seed = seed;
  Trainer<float>(m, t).run(data.pretrain);
  return m;
}

template <typename S>
void copy_text_tensors(const Model<S>& from, Model<S>& to) {
  const ParamStore<S>& src = from.params();
  ParamStore<S>& dst = to.params();
  int copied = 0;
  for (int i = 0; i < src.size(); ++i) {
    if (!text_side(src.group(i))) continue;
    const int j = dst.find(src.name(i));
    if (j < 0) continue;
    if (dst.value(j).rows() != src.value(i).rows() || dst.value(j).cols() != src.value(i).cols())
      throw DimensionError("copy_text_tensors: shape mismatch for " + src.name(i));
    dst.value(j) = src.value(i);
    ++copied;
  }
  if (copied == 0) throw ContractError("copy_text_tensors: no text tensors in common");
}

template void copy_text_tensors(const Model<float>&, Model<float>&);
template void copy_text_tensors(const Model<double>&, Model<double>&);

Model<float> init_variant(const ExperimentData& data, const Model<float>& text_model, const Variant& variant,
                          int adapter_rank, std::uint64_t seed) {
  Model<float> m(fitted(variant.model, data, seed), &data.codecs);
  copy_text_tensors(text_model, m);
  m.mirror_text_to_ts();
  m.freeze_text();
  if (variant.adapters) m.apply_adapters(adapter_rank, variant.adapter_target);
  return m;
}

TrainResult align_model(Model<float>& model, const ExperimentData& data, Alignment alignment, TrainConfig config,
                        std::uint64_t seed, const std::filesystem::path& metrics_csv) {
  if (alignment == Alignment::None) return {};
  config.stage = Stage::Salmon;
  config.stw = alignment == Alignment::SalmonStw;
  config.seed = seed;
  config.metrics_csv = metrics_csv;
  return Trainer<float>(model, config).run(data.pretrain);
}

TrainResult finetune_model(Model<float>& model, const ExperimentData& data, InputView view, TrainConfig config,
                           std::uint64_t seed, const std::filesystem::path& metrics_csv) {
  config.stage = Stage::Finetune;
  config.view = view;
  config.seed = seed;
  config.metrics_csv = metrics_csv;
  return Trainer<float>(model, config).run(data.train, data.validation);
}

std::vector<PredictionRecord> score_split(const Model<float>& model, std::span<const Example> split, InputView view,
                                          int horizon) {
  const auto scores = predict(model, split, view);
  std::vector<PredictionRecord> out;
  for (std::size_t k = 0; k < split.size(); ++k)
    out.push_back({split[k].id, split[k].company, split[k].date, horizon, scores[k], split[k].label});
  return out;
}

VariantResult run_variant(const ExperimentData& data, const Model<float>& text_model, const Variant& variant,
                          const PipelineConfig& pipeline, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  auto artifact = [&](const char* name) { return out_dir.empty() ? std::filesystem::path() : out_dir / name; };

  VariantResult r;
  r.variant = variant.name;
  r.seed = seed;
  Model<float> m = init_variant(data, text_model, variant, pipeline.adapter_rank, seed);
  r.parameters = m.params().total_count();
  r.align_metrics =
      align_model(m, data, variant.alignment, pipeline.align, seed, artifact("align_metrics.csv")).metrics;
  r.lm = evaluate_lm(m, std::span<const Example>(data.test), pipeline.align.salmon);
  if (pipeline.diagnostics) {
    for (const auto& e : data.test) {
      auto recs = token_diagnostics(m, e.seq, data.vocab, e.id, pipeline.align.stw_config, pipeline.align.salmon);
      for (auto& t : recs)
        if (t.modality == Modality::Text) r.diagnostics.push_back(std::move(t));
    }
    if (!out_dir.empty()) write_diagnostics_csv(out_dir / "diagnostics.csv", r.diagnostics);
  }

  if (pipeline.finetune_stage) {
    const TrainResult fr =
        finetune_model(m, data, variant.view, pipeline.finetune, seed, artifact("finetune_metrics.csv"));
    r.finetune_metrics = fr.metrics;
    r.best_val_auc = fr.best_val_auc;
    r.records = score_split(m, data.test, variant.view, data.config.horizon);
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& p : r.records) {
      scores.push_back(p.score);
      labels.push_back(p.label);
    }
    r.test_auc = auc(scores, labels);
    if (!out_dir.empty()) write_records_csv(out_dir / "predictions.csv", r.records);
    if (!data.panel.empty()) {
      r.panel_records = score_split(m, data.panel, variant.view, data.config.horizon);
      if (!out_dir.empty()) write_records_csv(out_dir / "panel_predictions.csv", r.panel_records);
    }
  }
  r.trainable = m.params().trainable_count();
  spdlog::info("{} seed {}: auc {:.4f} lm {:.4f}/{:.4f}", variant.name, seed, r.test_auc, r.lm.multimodal,
               r.lm.text_only);
  if (!out_dir.empty()) {
    std::ofstream out(out_dir / "result.json");
    out << nlohmann::json{{"key", variant_key(variant, pipeline, data, seed)}, {"result", to_json(r)}}.dump(1);
  }
  return r;
}

std::vector<Variant> ablation_variants(const ModelConfig& base) {
  auto make = [&](std::string name) {
    Variant v;
    v.name = std::move(name);
    v.model = base;
    return v;
  };
  std::vector<Variant> out;
  out.push_back(make("shared"));
  out.back().model.experts = ExpertMode::Shared;
  out.push_back(make("separate_qkv"));
  out.back().model.experts = ExpertMode::SeparateQkv;
  out.push_back(make("separate_mlp"));
  out.back().model.experts = ExpertMode::SeparateMlp;
  out.push_back(make("cross_lower"));
  out.back().model.cross_begin = 1;
  out.back().model.cross_end = base.layers / 2;
  out.push_back(make("cross_all"));
  out.back().model.cross_begin = 1;
  out.back().model.cross_end = base.layers;
  out.push_back(make("full"));
  for (TsEmbeddingKind k : {TsEmbeddingKind::Discrete, TsEmbeddingKind::Linear, TsEmbeddingKind::Mlp}) {
    out.push_back(make(std::string("embedding_") + std::string(to_string(k))));
    out.back().model.ts_embedding = k;
  }
  return out;
}

std::vector<Variant> baseline_variants(const ModelConfig& base) {
  std::vector<Variant> out(5);
  for (auto& v : out) v.model = base;
  out[0].name = "text_only";
  out[0].alignment = Alignment::None;
  out[0].view = InputView::TextOnly;
  out[0].adapters = false;
  out[1].name = "ts_only";
  out[1].alignment = Alignment::None;
  out[1].view = InputView::TsOnly;
  out[2].name = "no_salmon";
  out[2].alignment = Alignment::None;
  out[3].name = "salmon";
  out[3].alignment = Alignment::Salmon;
  out[4].name = "salmon_stw";
  out[4].alignment = Alignment::SalmonStw;
  return out;
}

Variant variant_by_name(const std::string& name, const ModelConfig& base) {
  for (auto& v : baseline_variants(base))
    if (v.name == name) return v;
  for (auto& v : ablation_variants(base))
    if (v.name == name) return v;
  throw ContractError("unknown variant: " + name);
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double AblationRow::mean_lm() const { return mean_of(lm_loss); }
double AblationRow::mean_auc() const { return mean_of(auc); }

std::vector<AblationRow> run_ablation_suite(const ExperimentData& data, std::span<const Variant> variants,
                                            const PipelineConfig& pipeline, std::span<const std::uint64_t> seeds,
                                            const std::filesystem::path& cache_dir) {
  std::vector<AblationRow> rows(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) rows[v].variant = variants[v].name;
  for (std::uint64_t seed : seeds) {
    std::optional<Model<float>> text_model;
    std::map<std::string, VariantResult> done;  // identical configurations share one run
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const nlohmann::json key = variant_key(variants[v], pipeline, data, seed);
      const std::string k = key.dump();
      std::optional<VariantResult> res;
      if (auto it = done.find(k); it != done.end()) res = it->second;
      const auto dir = cache_dir.empty() ? std::filesystem::path()
                                         : cache_dir / ("seed_" + std::to_string(seed)) / variants[v].name;
      if (!res && !dir.empty() && std::filesystem::exists(dir / "result.json")) {
        std::ifstream in(dir / "result.json");
        const auto j = nlohmann::json::parse(in);
        if (j.at("key") == key) {
          res = variant_result_from_json(j.at("result"));
          spdlog::info("{} seed {}: cached", variants[v].name, seed);
        }
      }
      if (!res) {
        if (!text_model) text_model = pretrain_text(data, pipeline.model, pipeline.pretrain, seed);
        res = run_variant(data, *text_model, variants[v], pipeline, seed, dir);
      }
      done.emplace(k, *res);
      rows[v].parameters = res->parameters;
      rows[v].lm_loss.push_back(res->lm.multimodal);
      rows[v].auc.push_back(res->test_auc);
    }
  }
  return rows;
}

namespace {

std::string num(double x, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

}  // namespace

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "variant,parameters,seed_index,lm_loss,auc\n";
  for (const auto& r : rows)
    for (std::size_t k = 0; k < r.auc.size(); ++k)
      out << r.variant << ',' << r.parameters << ',' << k << ',' << num(r.lm_loss[k], 17) << ','
          << num(r.auc[k], 17) << '\n';
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream s;
  s << std::left << std::setw(22) << "Variant" << std::right << std::setw(12) << "Params" << std::setw(12)
    << "LM Loss" << std::setw(10) << "AUC" << '\n';
  for (const auto& r : rows)
    s << std::left << std::setw(22) << r.variant << std::right << std::setw(12) << r.parameters << std::setw(12)
      << std::fixed << std::setprecision(4) << r.mean_lm() << std::setw(10) << r.mean_auc() << '\n'
      << std::defaultfloat;
  return s.str();
}

nlohmann::json to_json(const VariantResult& r) {
  auto opt = [](double x) { return std::isnan(x) ? nlohmann::json() : nlohmann::json(x); };
  auto rows = [](const std::vector<PredictionRecord>& records) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : records) out.push_back({p.sample_id, p.company, p.date.str(), p.horizon, p.score, p.label});
    return out;
  };
  return {{"variant", r.variant},
          {"seed", r.seed},
          {"parameters", r.parameters},
          {"trainable", r.trainable},
          {"test_auc", opt(r.test_auc)},
          {"best_val_auc", opt(r.best_val_auc)},
          {"lm_text_only", r.lm.text_only},
          {"lm_multimodal", r.lm.multimodal},
          {"lm_tokens", r.lm.tokens},
          {"records", rows(r.records)},
          {"panel_records", rows(r.panel_records)}};
}

VariantResult variant_result_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& x) {
    return x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>();
  };
  VariantResult r;
  r.variant = j.at("variant").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.parameters = j.at("parameters").get<std::size_t>();
  r.trainable = j.at("trainable").get<std::size_t>();
  r.test_auc = opt(j.at("test_auc"));
  r.best_val_auc = opt(j.at("best_val_auc"));
  r.lm.text_only = j.at("lm_text_only").get<double>();
  r.lm.multimodal = j.at("lm_multimodal").get<double>();
  r.lm.tokens = j.at("lm_tokens").get<std::size_t>();
  auto rows = [](const nlohmann::json& a, std::vector<PredictionRecord>& out) {
    for (const auto& p : a)
      out.push_back({p[0].get<std::string>(), p[1].get<std::string>(), parse_date(p[2].get<std::string>()),
                     p[3].get<int>(), p[4].get<double>(), p[5].get<int>()});
  };
  rows(j.at("records"), r.records);
  if (j.contains("panel_records")) rows(j.at("panel_records"), r.panel_records);
  return r;
}

}  // namespace msitt
