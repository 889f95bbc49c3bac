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

#include "msitt/corpus/curate.hpp"
#include "msitt/corpus/synthetic.hpp"
#include "msitt/portfolio/portfolio.hpp"
#include "msitt/trainer/experiment.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msitt {

/// Run configuration. Files hold `key = value` lines; a `[section]` line
/// prefixes the keys below it with `section.`, and '#' starts a comment.
/// Values are JSON literals (numbers, true/false, quoted strings, arrays);
/// anything else is taken as a bare string.
///
/// Keys, with their defaults given by default_config():
///   seed, seeds, variant
///   synthetic.{companies, samples, kappa, filler_vocab, stay_prob, article_rate, words_per_article,
///              salient_prob, event_prob, event_fidelity, reaction_window, reaction_scale,
///              noise_channels}
///   data.{horizon, max_length, render_timestamps, bins, min_count, balance_train, max_train,
///         train_begin, train_end, val_begin, val_end, test_begin, test_end}
///   model.{layers, d_model, heads, mlp_hidden, d_ts, cross_begin, cross_end, rotary_base, dropout,
///          experts, shared_out_proj, ts_embedding, classifier_hidden}
///   adapter_rank
///   pretrain.*, align.*, finetune.*: lr, beta1, beta2, eps, weight_decay, clip_norm, batch,
///          micro_batch, epochs, max_steps, stw, warm_frac, clamp_lo, clamp_hi, normalization,
///          score_markers, ts_weight, interleaved_positions, select_by_validation
///   curate.{max_words, min_chars, max_chars, max_numeric_fraction, max_jaccard, stride}
///   ablate.{suite, diagnostics}
///   backtest.{min_mktcap, min_adv, cost_rate, risk_free}
nlohmann::json default_config();

/// JSON literal when the text parses as one, the text itself otherwise.
nlohmann::json parse_value(std::string_view text);

/// Ordered (key, value) pairs; throws ParseError with the line number.
std::vector<std::pair<std::string, nlohmann::json>> read_config_file(const std::filesystem::path& path);

/// Sets `key` (dotted) in `config`. Throws ContractError for a key that is
/// not in the schema or a value of the wrong kind.
void apply_setting(nlohmann::json& config, const std::string& key, const nlohmann::json& value);

/// `key=value`; throws ContractError when there is no '='.
std::pair<std::string, nlohmann::json> parse_assignment(std::string_view text);

/// Flat `key = value` rendering, sorted by key; reads back to the same config.
std::string format_config(const nlohmann::json& config);

/// Typed views; each validates and throws ContractError.
SyntheticSpec synthetic_spec(const nlohmann::json& config);
std::size_t synthetic_samples(const nlohmann::json& config);
DataConfig data_config(const nlohmann::json& config);
PipelineConfig pipeline_config(const nlohmann::json& config);
CurationRules curation_rules(const nlohmann::json& config);
BacktestConfig backtest_config(const nlohmann::json& config);
std::vector<std::uint64_t> seeds(const nlohmann::json& config);

}  // namespace msitt
