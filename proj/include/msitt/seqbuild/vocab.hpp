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

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace msitt {

/// Text vocabulary. Ids 0..4 are the special tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBoa = 2;
  static constexpr int kEoa = 3;
  static constexpr int kEos = 4;
  static constexpr int kSpecials = 5;

  Vocabulary();

  int add(const std::string& token);
  /// kUnk for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct VocabOptions {
  int min_count = 1;
  bool timestamp_tokens = true;
};

/// Timestamp rendered as three tokens: year, month name, two-digit day.
std::vector<std::string> timestamp_tokens(const Timestamp& ts);

/// Lowercased article words, preceded by the timestamp tokens when enabled.
std::vector<std::string> article_tokens(const Article& a, bool render_timestamp);

/// Built from training samples only. With timestamp tokens on, every
/// year 1990..2039, month name and day is present regardless of the data.
Vocabulary build_vocabulary(std::span<const CompanySample> samples, const VocabOptions& options = {});

}  // namespace msitt
