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

#include "msitt/corpus/types.hpp"

#include "msitt/common/error.hpp"
#include "msitt/corpus/curate.hpp"

#include <cmath>

namespace msitt {

std::string Article::text() const {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

std::optional<int> CompanySample::label(int horizon) const {
  if (horizon == 7) return label_7d;
  if (horizon == 30) return label_30d;
  throw ContractError("unsupported horizon " + std::to_string(horizon));
}

void CompanySample::set_label(int horizon, std::optional<int> v) {
  if (horizon == 7)
    label_7d = v;
  else if (horizon == 30)
    label_30d = v;
  else
    throw ContractError("unsupported horizon " + std::to_string(horizon));
}

void validate(const Article& a) {
  const CurationRules rules;
  if (a.words.size() > rules.max_words) throw DataError("article exceeds " + std::to_string(rules.max_words) + " words");
  const std::string t = a.text();
  if (t.size() <= rules.min_chars || t.size() >= rules.max_chars)
    throw DataError("article length " + std::to_string(t.size()) + " outside (100, 10000)");
  if (numeric_fraction(t) >= rules.max_numeric_fraction) throw DataError("article numeric fraction too high");
}

void validate(const CompanySample& s) {
  const std::string where = "sample " + s.id() + ": ";
  if (static_cast<int>(s.returns.size()) != kWindowDays)
    throw DataError(where + "expected 252 returns, got " + std::to_string(s.returns.size()));
  for (double r : s.returns)
    if (!std::isfinite(r)) throw DataError(where + "non-finite return");
  if (static_cast<int>(s.articles.size()) > kMaxArticles) throw DataError(where + "more than 10 articles");
  int in_year = 0;
  for (std::size_t i = 0; i < s.articles.size(); ++i) {
    const Article& a = s.articles[i];
    if (i > 0 && a.ts < s.articles[i - 1].ts) throw DataError(where + "articles not sorted by timestamp");
    if (!(a.ts.date < s.date)) throw DataError(where + "article post-dates the prediction date");
    if (s.date - a.ts.date > 365) throw DataError(where + "article older than one year");
    ++in_year;
    try {
      validate(a);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  if (in_year < kMinArticlesPerYear) throw DataError(where + "fewer than 5 articles in the trailing year");
  for (const auto& [name, values] : s.channels)
    if (static_cast<int>(values.size()) != kWindowDays) throw DataError(where + "channel " + name + " has wrong length");
  for (auto l : {s.label_7d, s.label_30d})
    if (l && *l != 0 && *l != 1) throw DataError(where + "label must be 0 or 1");
}

}  // namespace msitt
