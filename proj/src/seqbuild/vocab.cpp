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

#include "msitt/seqbuild/vocab.hpp"

#include "msitt/common/error.hpp"
#include "msitt/corpus/curate.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace msitt {

namespace {

const char* const kMonths[] = {"january", "february", "march",     "april",   "may",      "june",
                               "july",    "august",   "september", "october", "november", "december"};

std::string two_digits(unsigned v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02u", v % 100);
  return buf;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<unk>", "<boa>", "<eoa>", "<eos>"}) add(s);
}

int Vocabulary::add(const std::string& token) {
  const auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocabulary::to_json() const { return tokens_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  const auto tokens = j.get<std::vector<std::string>>();
  Vocabulary v;
  if (tokens.size() < static_cast<std::size_t>(kSpecials)) throw ParseError("vocabulary lacks special tokens");
  for (int i = 0; i < kSpecials; ++i)
    if (tokens[static_cast<std::size_t>(i)] != v.token(i)) throw ParseError("vocabulary special tokens out of order");
  for (std::size_t i = kSpecials; i < tokens.size(); ++i)
    if (v.add(tokens[i]) != static_cast<int>(i)) throw ParseError("duplicate vocabulary token " + tokens[i]);
  return v;
}

std::vector<std::string> timestamp_tokens(const Timestamp& ts) {
  int y;
  unsigned m, d;
  ts.date.to_ymd(y, m, d);
  return {std::to_string(y), kMonths[m - 1], two_digits(d)};
}

std::vector<std::string> article_tokens(const Article& a, bool render_timestamp) {
  std::vector<std::string> out;
  if (render_timestamp) out = timestamp_tokens(a.ts);
  for (const auto& w : a.words) {
    auto parts = split_words(w);
    out.insert(out.end(), parts.begin(), parts.end());
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const CompanySample> samples, const VocabOptions& options) {
  Vocabulary v;
  if (options.timestamp_tokens) {
    for (int y = 1990; y < 2040; ++y) v.add(std::to_string(y));
    for (const char* m : kMonths) v.add(m);
    for (unsigned d = 1; d <= 31; ++d) v.add(two_digits(d));
  }
  std::map<std::string, int> counts;
  for (const auto& s : samples)
    for (const auto& a : s.articles)
      for (const auto& t : article_tokens(a, false)) ++counts[t];
  for (const auto& [t, c] : counts)
    if (c >= options.min_count) v.add(t);
  return v;
}

}  // namespace msitt
