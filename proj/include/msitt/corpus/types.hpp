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

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace msitt {

inline constexpr int kWindowDays = 252;
inline constexpr int kMaxArticles = 10;
inline constexpr int kMinArticlesPerYear = 5;

struct Article {
  std::string company;
  Timestamp ts;
  std::string title;
  std::vector<std::string> words;  // truncated body
  std::string source;

  std::string text() const;
};

struct CompanySample {
  std::string company;
  Date date;                    // prediction date t
  std::vector<double> returns;  // r_{t-252} .. r_{t-1}
  std::vector<Article> articles;
  std::optional<int> label_7d;
  std::optional<int> label_30d;
  /// Extra aligned channels (same 252 days), NaN where unobserved.
  std::vector<std::pair<std::string, std::vector<double>>> channels;

  std::string id() const { return company + "@" + date.str(); }
  std::optional<int> label(int horizon) const;
  void set_label(int horizon, std::optional<int> v);
};

/// Throws DataError describing the first violated sample invariant.
void validate(const CompanySample& s);

/// Throws DataError when article text bounds do not hold.
void validate(const Article& a);

}  // namespace msitt
