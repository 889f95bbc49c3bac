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
#include "msitt/model/model.hpp"
#include "msitt/salmon/salmon.hpp"
#include "msitt/trainer/optim.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace msitt {

enum class Stage { TextPretrain, Salmon, Finetune };
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// Which tokens of a sample a classifier sees.
enum class InputView { Full, TextOnly, TsOnly };
std::string_view to_string(InputView v);
InputView input_view_from_string(std::string_view s);

/// One prediction sample: the interleaved sequence and the same sequence
/// closed by <eos> for classification.
struct Example {
  std::string id;
  std::string company;
  Date date;
  MultimodalSequence seq;
  MultimodalSequence with_eos;
  int label = -1;  // -1 when the horizon has no label
};

/// Unlabeled samples keep label -1.
std::vector<Example> make_examples(std::span<const CompanySample> samples, const ChannelSet& codecs,
                                   const Vocabulary& vocab, int max_length, bool render_timestamps, int horizon);

/// Classification input for the view, ending with <eos>.
MultimodalSequence view_of(const Example& e, InputView view);

struct TrainConfig {
  Stage stage = Stage::Salmon;
  AdamWConfig optim;
  int batch = 64;        // effective batch
  int micro_batch = 64;  // sequences held per accumulation slice
  int epochs = 3;
  long max_steps = 0;    // 0: epochs * ceil(n / batch)
  std::uint64_t seed = 0;
  // SALMON stage
  bool stw = true;
  StwConfig stw_config;
  SalmonOptions salmon;
  // text pretraining: share of sequences kept at their interleaved positions
  double interleaved_positions = 0.5;
  // finetuning
  InputView view = InputView::Full;
  bool select_by_validation = true;
  // artifacts
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint_dir;
  long checkpoint_every = 0;

  /// Throws ContractError.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct MetricRow {
  long step = 0;
  Stage stage = Stage::Salmon;
  int epoch = 0;
  double loss = 0.0;
  double text_loss = 0.0;
  double ts_loss = 0.0;
  double bce = 0.0;
  double val_auc = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = 0.0;
  bool skipped = false;
};

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows);

struct TrainResult {
  std::vector<MetricRow> metrics;
  long steps = 0;
  long skipped = 0;
  std::vector<double> val_auc;  // per epoch (finetuning)
  int best_epoch = -1;
  double best_val_auc = std::numeric_limits<double>::quiet_NaN();
};

/// Runs one stage on `model`. Per-sequence gradients are summed in batch
/// order and divided by the batch size once, so the update does not depend
/// on the micro-batch size.
template <typename S>
class Trainer {
 public:
  Trainer(Model<S>& model, TrainConfig config);

  TrainResult run(std::span<const Example> train, std::span<const Example> validation = {});

  long step() const { return step_; }
  long planned_steps(std::size_t train_size) const;

  /// Model, optimizer, step and selection state.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores a checkpoint written by a trainer with the same config.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  struct SequenceLoss {
    Var<S> loss;
    double text = 0.0, ts = 0.0, bce = 0.0;
  };
  SequenceLoss sequence_loss(Graph<S>& g, const Example& e, long step, std::size_t slot, long total) const;

  Model<S>& model_;
  TrainConfig config_;
  AdamW<S> opt_;
  long step_ = 0;
  TrainResult result_;
  std::optional<nlohmann::json> best_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

/// Classifier scores for the view.
template <typename S>
std::vector<double> predict(const Model<S>& model, std::span<const Example> examples, InputView view = InputView::Full);

struct LmLoss {
  double text_only = 0.0;   // frozen text pass on the text-only view
  double multimodal = 0.0;  // same targets with the interleaved context
  std::size_t tokens = 0;
};

/// Mean next-token loss over text targets that have a text-only predecessor.
template <typename S>
LmLoss evaluate_lm(const Model<S>& model, std::span<const Example> examples, const SalmonOptions& options = {});

}  // namespace msitt
