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

#include "msitt/corpus/curate.hpp"

#include "msitt/common/error.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <sstream>

namespace msitt {

namespace {

std::vector<std::string> whitespace_split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& words, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < std::min(n, words.size()); ++i) {
    if (i) s += ' ';
    s += words[i];
  }
  return s;
}

std::size_t joined_length(const std::vector<std::string>& words) {
  if (words.empty()) return 0;
  std::size_t n = words.size() - 1;
  for (const auto& w : words) n += w.size();
  return n;
}

}  // namespace

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::BadTimestamp: return "bad_timestamp";
    case RejectReason::MultiCompany: return "multi_company";
    case RejectReason::Length: return "length";
    case RejectReason::Numeric: return "numeric";
    case RejectReason::Duplicate: return "duplicate";
    case RejectReason::Blocklist: return "blocklist";
  }
  return "unknown";
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  for (std::string w : whitespace_split(text)) {
    std::size_t b = 0, e = w.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
    if (e == b) continue;
    w = w.substr(b, e - b);
    for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(w));
  }
  return out;
}

double numeric_fraction(std::string_view text) {
  if (text.empty()) return 0.0;
  const auto digits = std::count_if(text.begin(), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  return static_cast<double>(digits) / static_cast<double>(text.size());
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : a) inter += b.count(w);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

CurationResult curate_detailed(std::span<const RawArticle> raw, const CurationRules& rules) {
  CurationResult result;
  std::vector<std::regex> patterns;
  patterns.reserve(rules.blocklist.size());
  for (const auto& p : rules.blocklist) patterns.emplace_back(p, std::regex::icase | std::regex::ECMAScript);

  struct Parsed {
    std::size_t index;
    Timestamp ts;
  };
  std::vector<Parsed> order;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    try {
      order.push_back({i, parse_timestamp(raw[i].timestamp)});
    } catch (const ParseError&) {
      spdlog::debug("curate: record {} skipped ({})", i, to_string(RejectReason::BadTimestamp));
      result.rejected.emplace_back(i, RejectReason::BadTimestamp);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](const Parsed& a, const Parsed& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    return raw[a.index].source < raw[b.index].source;
  });

  std::map<std::string, std::vector<std::set<std::string>>> history;
  for (const auto& [i, ts] : order) {
    const RawArticle& r = raw[i];
    auto reject = [&](RejectReason why) {
      spdlog::debug("curate: record {} rejected ({})", i, to_string(why));
      result.rejected.emplace_back(i, why);
    };
    if (r.tickers.size() > 1 || (r.tickers.size() == 1 && r.tickers[0] != r.company)) {
      reject(RejectReason::MultiCompany);
      continue;
    }
    const std::vector<std::string> words = whitespace_split(r.text);
    const std::size_t length = joined_length(words);
    if (length <= rules.min_chars || length >= rules.max_chars) {
      reject(RejectReason::Length);
      continue;
    }
    const std::string body = join(words, rules.max_words);
    if (numeric_fraction(body) >= rules.max_numeric_fraction) {
      reject(RejectReason::Numeric);
      continue;
    }
    const auto tokens = split_words(body);
    std::set<std::string> shingles(tokens.begin(), tokens.end());
    auto& seen = history[r.company];
    if (std::any_of(seen.begin(), seen.end(),
                    [&](const std::set<std::string>& prev) { return jaccard(prev, shingles) >= rules.max_jaccard; })) {
      reject(RejectReason::Duplicate);
      continue;
    }
    if (std::any_of(patterns.begin(), patterns.end(), [&](const std::regex& p) {
          return std::regex_search(r.title, p) || std::regex_search(body, p);
        })) {
      reject(RejectReason::Blocklist);
      continue;
    }
    seen.push_back(std::move(shingles));
    Article a;
    a.company = r.company;
    a.ts = ts;
    a.title = r.title;
    a.words.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(std::min(words.size(), rules.max_words)));
    a.source = r.source;
    result.accepted.push_back(std::move(a));
  }
  return result;
}

std::vector<Article> curate(std::span<const RawArticle> raw, const CurationRules& rules) {
  return curate_detailed(raw, rules).accepted;
}

RawArticle to_raw(const Article& a) {
  return RawArticle{a.company, {}, a.ts.str(), a.title, a.text(), a.source};
}

void write_raw_jsonl(const std::filesystem::path& path, std::span<const RawArticle> raw) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : raw) {
    nlohmann::json j{{"company", r.company}, {"tickers", r.tickers}, {"timestamp", r.timestamp},
                     {"title", r.title},     {"text", r.text},       {"source", r.source}};
    out << j.dump() << '\n';
  }
}

std::vector<RawArticle> read_raw_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<RawArticle> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RawArticle r;
      r.company = j.at("company").get<std::string>();
      r.tickers = j.value("tickers", std::vector<std::string>{});
      r.timestamp = j.at("timestamp").get<std::string>();
      r.title = j.value("title", std::string{});
      r.text = j.at("text").get<std::string>();
      r.source = j.value("source", std::string{});
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> load_blocklist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read blocklist " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

}  // namespace msitt
