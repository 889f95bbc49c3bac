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

#include <cstddef>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace msitt {

struct RawArticle {
  std::string company;
  std::vector<std::string> tickers;  // tagged companies; empty means {company}
  std::string timestamp;
  std::string title;
  std::string text;
  std::string source;
};

enum class RejectReason { BadTimestamp, MultiCompany, Length, Numeric, Duplicate, Blocklist };
const char* to_string(RejectReason r);

struct CurationRules {
  std::size_t max_words = 128;
  std::size_t min_chars = 100;  // exclusive
  std::size_t max_chars = 10000;  // exclusive
  double max_numeric_fraction = 0.10;  // exclusive
  double max_jaccard = 0.90;  // exclusive
  std::vector<std::string> blocklist;  // case-insensitive regex patterns on title and body
};

struct CurationResult {
  std::vector<Article> accepted;  // chronological
  std::vector<std::pair<std::size_t, RejectReason>> rejected;  // input index, reason
};

/// Lowercased whitespace tokens with surrounding punctuation stripped.
std::vector<std::string> split_words(std::string_view text);
double numeric_fraction(std::string_view text);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

CurationResult curate_detailed(std::span<const RawArticle> raw, const CurationRules& rules = {});
std::vector<Article> curate(std::span<const RawArticle> raw, const CurationRules& rules = {});

RawArticle to_raw(const Article& a);

/// One JSON object per line with company, tickers, timestamp, title, text
/// and source. Malformed lines throw ParseError carrying the line number.
void write_raw_jsonl(const std::filesystem::path& path, std::span<const RawArticle> raw);
std::vector<RawArticle> read_raw_jsonl(const std::filesystem::path& path);

/// One pattern per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_blocklist(const std::filesystem::path& path);

}  // namespace msitt
