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

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msitt {

/// Daily closes on trading days, ascending by date.
struct PriceSeries {
  std::vector<Date> dates;
  std::vector<double> close;

  /// Close on the first trading day on or after d, if within `max_gap` days.
  std::optional<double> close_on_or_after(Date d, int max_gap = 7) const;
};

/// Sign(P_{t+h} - P_t) with h in calendar days. P_t must be a trading close
/// on t itself; t+h maps to the next trading close. Ties and missing
/// endpoints give no label.
std::optional<int> label(const PriceSeries& prices, Date t, int horizon_days);

/// Labeled samples at `horizon`, majority class downsampled to the minority
/// count with a seeded draw; original order is kept. Unlabeled samples are
/// dropped. Throws BalanceError if either class is empty.
std::vector<CompanySample> balance(std::span<const CompanySample> samples, int horizon, std::uint64_t seed);

enum class Split { Train, Validation, Test, None };
const char* to_string(Split s);

struct SplitWindows {
  Date train_begin = Date::from_ymd(2010, 1, 1);
  Date train_end = Date::from_ymd(2017, 12, 31);
  Date val_begin = Date::from_ymd(2018, 1, 1);
  Date val_end = Date::from_ymd(2019, 12, 31);
  Date test_begin = Date::from_ymd(2020, 1, 1);
  Date test_end = Date::from_ymd(2024, 12, 31);

  Split assign(Date t) const;
};

struct Partition {
  std::vector<CompanySample> train, validation, test;
};

Partition partition(std::span<const CompanySample> samples, const SplitWindows& windows = {});

nlohmann::json to_json(const CompanySample& s);
/// Parses and validates; throws DataError or ParseError.
CompanySample sample_from_json(const nlohmann::json& j);

void write_jsonl(const std::filesystem::path& path, std::span<const CompanySample> samples);
/// Every line is checked against the sample invariants; the first failure
/// throws DataError carrying the line number.
std::vector<CompanySample> read_jsonl(const std::filesystem::path& path);

/// Builds samples for one company from its curated articles and price series:
/// one sample per trading day following an article day, keeping the most
/// recent articles and skipping dates that fail the sample invariants.
std::vector<CompanySample> assemble_samples(const std::string& company, std::span<const Article> articles,
                                            const PriceSeries& prices, int stride = 1);

void write_prices_csv(const std::filesystem::path& path, const std::map<std::string, PriceSeries>& prices);
std::map<std::string, PriceSeries> read_prices_csv(const std::filesystem::path& path);

}  // namespace msitt
