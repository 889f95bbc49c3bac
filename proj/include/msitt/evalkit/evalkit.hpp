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

#include "msitt/common/date.hpp"
#include "msitt/common/error.hpp"
#include "msitt/salmon/salmon.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace msitt {

/// AUC is undefined when one class is absent.
class UndefinedError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct PredictionRecord {
  std::string sample_id;
  std::string company;
  Date date;
  int horizon = 30;
  double score = 0.5;
  int label = 0;
};

/// Columns: sample_id,company,date,horizon,score,label. Label -1 marks an
/// unlabeled row, which the backtest accepts and AUC rejects.
void write_records_csv(const std::filesystem::path& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_records_csv(const std::filesystem::path& path);

/// Mann-Whitney AUC with ties counted one half.
double auc(std::span<const double> scores, std::span<const int> labels);
double auc(std::span<const PredictionRecord> records);

/// DeLong variance of a single AUC.
double auc_variance(std::span<const double> scores, std::span<const int> labels);

struct DeLongResult {
  double auc_a = 0.5;
  double auc_b = 0.5;
  double variance = 0.0;  // of auc_a - auc_b
  double z = 0.0;
  double p = 1.0;         // two-sided
};

/// Paired test on one shared set of labels.
DeLongResult delong(std::span<const double> a, std::span<const double> b, std::span<const int> labels);
/// Records are paired by sample id; both sides must cover the same samples
/// with the same labels.
DeLongResult delong(std::span<const PredictionRecord> a, std::span<const PredictionRecord> b);

/// category -> lowercased words. Categories may overlap.
using Lexicon = std::map<std::string, std::set<std::string>>;

/// `category<TAB>word` lines; blank lines and '#' comments are skipped.
Lexicon read_lexicon(const std::filesystem::path& path);
/// Adds "All-Sentiment" as the union of the sentiment categories present
/// (Positive, Negative, Uncertainty, Litigious, StrongModal, WeakModal,
/// Constraining).
Lexicon with_sentiment_union(Lexicon lexicon);

struct CategoryRatio {
  std::string category;
  double median = 1.0;
  std::size_t tokens = 0;
};

struct RatioTable {
  std::vector<CategoryRatio> rows;
  std::vector<std::string> notes;  // empty categories
};

/// Median raw likelihood ratio for each category over the scored text tokens
/// with a text-only baseline. Markers ("<...>") are skipped; tokens outside
/// every category form the row `other_label` when it is non-empty.
RatioTable likelihood_ratio_by_category(std::span<const TokenRecord> records, const Lexicon& lexicon,
                                        const std::string& other_label = "Other");

void write_ratio_table_csv(const std::filesystem::path& path, const RatioTable& table);
/// Aligned plain-text rendering.
std::string format_ratio_table(const RatioTable& table);

double median(std::vector<double> values);

}  // namespace msitt
