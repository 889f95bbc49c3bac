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

#include "msitt/corpus/dataset.hpp"
#include "msitt/evalkit/evalkit.hpp"
#include "msitt/trainer/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace msitt {

struct DataConfig {
  int horizon = 30;
  int max_length = 128;
  bool render_timestamps = true;
  int bins = 16;
  int min_count = 1;
  bool balance_train = true;
  std::size_t max_train = 0;  // 0 keeps every training sample
  SplitWindows windows;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static DataConfig from_json(const nlohmann::json& j);
};

/// Samples split by date, with codecs and vocabulary fitted on the training
/// split. `pretrain` holds every training sample, labeled or not.
struct ExperimentData {
  Vocabulary vocab;
  ChannelSet codecs;
  std::vector<Example> pretrain, train, validation, test;
  /// Optional extra rows scored after finetuning, such as every
  /// company-day of a backtest universe. Labels may be -1.
  std::vector<Example> panel;
  DataConfig config;
};

/// Every channel named in the first sample is fitted; channel 0 is the returns.
ExperimentData prepare_data(std::span<const CompanySample> samples, const DataConfig& config, int d_ts, int d_model);

enum class Alignment { None, Salmon, SalmonStw };
std::string_view to_string(Alignment a);
Alignment alignment_from_string(std::string_view s);

struct Variant {
  std::string name;
  ModelConfig model;  // vocab, bins and channels are filled from the data
  Alignment alignment = Alignment::SalmonStw;
  InputView view = InputView::Full;
  AdapterTarget adapter_target = AdapterTarget::TsBranch;
  bool adapters = true;  // false trains only the classifier on the frozen model
};

struct PipelineConfig {
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig align;
  TrainConfig finetune;
  int adapter_rank = 16;
  bool finetune_stage = true;  // false stops after alignment
  bool diagnostics = false;    // per-token ratios on the test split

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Desk-scale settings: 4 layers of width 32, batches of 32, 3 pretraining,
/// 2 alignment and 5 finetuning epochs.
PipelineConfig toy_pipeline();

struct VariantResult {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  std::size_t trainable = 0;
  double test_auc = std::numeric_limits<double>::quiet_NaN();
  double best_val_auc = std::numeric_limits<double>::quiet_NaN();
  LmLoss lm;
  std::vector<PredictionRecord> records;
  std::vector<PredictionRecord> panel_records;
  std::vector<TokenRecord> diagnostics;
  std::vector<MetricRow> align_metrics;
  std::vector<MetricRow> finetune_metrics;
};

/// Text-only pretraining of a model built from `config`, shared by every
/// variant of one seed.
Model<float> pretrain_text(const ExperimentData& data, const ModelConfig& config, const TrainConfig& train,
                           std::uint64_t seed);

/// Copies text embedding, text branch and U_text tensors by name.
template <typename S>
void copy_text_tensors(const Model<S>& from, Model<S>& to);

/// The variant's model with the pretrained text tensors, mirrored into the ts
/// branch, text side frozen and adapters applied when the variant has them.
Model<float> init_variant(const ExperimentData& data, const Model<float>& text_model, const Variant& variant,
                          int adapter_rank, std::uint64_t seed);

/// SALMON stage on the pretraining split; a no-op for Alignment::None.
TrainResult align_model(Model<float>& model, const ExperimentData& data, Alignment alignment, TrainConfig config,
                        std::uint64_t seed, const std::filesystem::path& metrics_csv = {});

/// BCE finetuning on the training split with validation selection.
TrainResult finetune_model(Model<float>& model, const ExperimentData& data, InputView view, TrainConfig config,
                           std::uint64_t seed, const std::filesystem::path& metrics_csv = {});

/// Test-split predictions at the data horizon.
std::vector<PredictionRecord> score_split(const Model<float>& model, std::span<const Example> split, InputView view,
                                          int horizon);

/// Builds the variant on top of the pretrained text model, then aligns,
/// finetunes and evaluates. With a non-empty `out_dir` the stage metrics,
/// predictions and a result file are written there.
VariantResult run_variant(const ExperimentData& data, const Model<float>& text_model, const Variant& variant,
                          const PipelineConfig& pipeline, std::uint64_t seed,
                          const std::filesystem::path& out_dir = {});

/// Rows: shared parameters, separate QKV, separate MLP, cross-modal lower
/// half, cross-modal in every layer, full model; then discrete, linear and
/// MLP value embeddings.
std::vector<Variant> ablation_variants(const ModelConfig& base);

/// Text-only, ts-only and the three alignment settings.
std::vector<Variant> baseline_variants(const ModelConfig& base);

/// Looks a name up among the baseline and ablation variants; throws
/// ContractError for an unknown name.
Variant variant_by_name(const std::string& name, const ModelConfig& base);

struct AblationRow {
  std::string variant;
  std::size_t parameters = 0;
  std::vector<double> lm_loss;  // per seed, multimodal pass
  std::vector<double> auc;      // per seed
  double mean_lm() const;
  double mean_auc() const;
};

/// Trains every variant for every seed. Finished variants found in
/// `cache_dir` with a matching configuration are read back instead.
std::vector<AblationRow> run_ablation_suite(const ExperimentData& data, std::span<const Variant> variants,
                                            const PipelineConfig& pipeline, std::span<const std::uint64_t> seeds,
                                            const std::filesystem::path& cache_dir = {});

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);
std::string format_ablation_table(std::span<const AblationRow> rows);

nlohmann::json to_json(const VariantResult& r);
VariantResult variant_result_from_json(const nlohmann::json& j);

}  // namespace msitt
