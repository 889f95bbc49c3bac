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

#include "msitt/corpus/dataset.hpp"

#include "msitt/common/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace msitt {

std::optional<double> PriceSeries::close_on_or_after(Date d, int max_gap) const {
  const auto it = std::lower_bound(dates.begin(), dates.end(), d);
  if (it == dates.end() || *it - d > max_gap) return std::nullopt;
  const double p = close[static_cast<std::size_t>(it - dates.begin())];
  if (!std::isfinite(p)) return std::nullopt;
  return p;
}

std::optional<int> label(const PriceSeries& prices, Date t, int horizon_days) {
  const auto p0 = prices.close_on_or_after(t, 0);
  const auto p1 = prices.close_on_or_after(t + horizon_days);
  if (!p0 || !p1) return std::nullopt;
  if (*p1 > *p0) return 1;
  if (*p1 < *p0) return 0;
  return std::nullopt;
}

std::vector<CompanySample> balance(std::span<const CompanySample> samples, int horizon, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto l = samples[i].label(horizon);
    if (!l) continue;
    (*l == 1 ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty())
    throw BalanceError("balance: horizon " + std::to_string(horizon) + " has an empty class (" +
                       std::to_string(pos.size()) + " positive, " + std::to_string(neg.size()) + " negative)");
  auto& major = pos.size() > neg.size() ? pos : neg;
  const std::size_t keep = std::min(pos.size(), neg.size());
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `keep` entries become a uniform subset.
  for (std::size_t i = 0; i < keep && keep < major.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, major.size() - 1);
    std::swap(major[i], major[pick(rng)]);
  }
  major.resize(keep);
  std::vector<std::size_t> chosen(pos);
  chosen.insert(chosen.end(), neg.begin(), neg.end());
  std::sort(chosen.begin(), chosen.end());
  std::vector<CompanySample> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(samples[i]);
  return out;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::None: return "none";
  }
  return "none";
}

Split SplitWindows::assign(Date t) const {
  if (t >= train_begin && t <= train_end) return Split::Train;
  if (t >= val_begin && t <= val_end) return Split::Validation;
  if (t >= test_begin && t <= test_end) return Split::Test;
  return Split::None;
}

Partition partition(std::span<const CompanySample> samples, const SplitWindows& windows) {
  Partition p;
  for (const auto& s : samples) {
    switch (windows.assign(s.date)) {
      case Split::Train: p.train.push_back(s); break;
      case Split::Validation: p.validation.push_back(s); break;
      case Split::Test: p.test.push_back(s); break;
      case Split::None: break;
    }
  }
  return p;
}

namespace {

nlohmann::json optional_label(const std::optional<int>& l) { return l ? nlohmann::json(*l) : nlohmann::json(nullptr); }

std::optional<int> label_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<int>();
}

}  // namespace

nlohmann::json to_json(const CompanySample& s) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : s.articles) {
    nlohmann::json ja{{"ts", a.ts.str()}, {"text", a.text()}};
    if (!a.title.empty()) ja["title"] = a.title;
    if (!a.source.empty()) ja["source"] = a.source;
    arts.push_back(std::move(ja));
  }
  nlohmann::json j{{"company", s.company},
                   {"date", s.date.str()},
                   {"returns", s.returns},
                   {"articles", std::move(arts)},
                   {"label_7d", optional_label(s.label_7d)},
                   {"label_30d", optional_label(s.label_30d)}};
  if (!s.channels.empty()) {
    nlohmann::json ch = nlohmann::json::array();
    for (const auto& [name, values] : s.channels) {
      nlohmann::json v = nlohmann::json::array();
      for (double x : values) v.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
      ch.push_back({{"name", name}, {"values", std::move(v)}});
    }
    j["channels"] = std::move(ch);
  }
  return j;
}

CompanySample sample_from_json(const nlohmann::json& j) {
  CompanySample s;
  try {
    s.company = j.at("company").get<std::string>();
    s.date = parse_date(j.at("date").get<std::string>());
    s.returns = j.at("returns").get<std::vector<double>>();
    for (const auto& ja : j.at("articles")) {
      Article a;
      a.company = s.company;
      a.ts = parse_timestamp(ja.at("ts").get<std::string>());
      std::istringstream words(ja.at("text").get<std::string>());
      for (std::string w; words >> w;) a.words.push_back(w);
      a.title = ja.value("title", std::string());
      a.source = ja.value("source", std::string());
      s.articles.push_back(std::move(a));
    }
    s.label_7d = label_from(j, "label_7d");
    s.label_30d = label_from(j, "label_30d");
    if (j.contains("channels")) {
      for (const auto& jc : j.at("channels")) {
        std::vector<double> values;
        for (const auto& v : jc.at("values"))
          values.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
        s.channels.emplace_back(jc.at("name").get<std::string>(), std::move(values));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed sample: ") + e.what());
  }
  validate(s);
  return s;
}

void write_jsonl(const std::filesystem::path& path, std::span<const CompanySample> samples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

std::vector<CompanySample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<CompanySample> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<CompanySample> assemble_samples(const std::string& company, std::span<const Article> articles,
                                            const PriceSeries& prices, int stride) {
  std::vector<CompanySample> out;
  if (articles.empty()) return out;
  std::vector<Date> candidates;
  for (const auto& a : articles) {
    const auto it = std::upper_bound(prices.dates.begin(), prices.dates.end(), a.ts.date);
    if (it != prices.dates.end() && (candidates.empty() || candidates.back() != *it)) candidates.push_back(*it);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (std::size_t c = 0; c < candidates.size(); c += static_cast<std::size_t>(std::max(1, stride))) {
    const Date t = candidates[c];
    const auto idx = static_cast<std::size_t>(std::lower_bound(prices.dates.begin(), prices.dates.end(), t) -
                                              prices.dates.begin());
    if (idx < static_cast<std::size_t>(kWindowDays) + 1) continue;
    CompanySample s;
    s.company = company;
    s.date = t;
    bool finite = true;
    for (std::size_t d = idx - kWindowDays; d < idx; ++d) {
      const double r = prices.close[d] / prices.close[d - 1] - 1.0;
      finite = finite && std::isfinite(r);
      s.returns.push_back(r);
    }
    if (!finite) continue;
    std::vector<Article> window;
    for (const auto& a : articles)
      if (a.ts.date < t && t - a.ts.date <= 365) window.push_back(a);
    if (static_cast<int>(window.size()) < kMinArticlesPerYear) continue;
    if (static_cast<int>(window.size()) > kMaxArticles)
      window.erase(window.begin(), window.end() - kMaxArticles);
    s.articles = std::move(window);
    s.label_7d = label(prices, t, 7);
    s.label_30d = label(prices, t, 30);
    try {
      validate(s);
    } catch (const DataError& e) {
      spdlog::debug("assemble: {} skipped: {}", s.id(), e.what());
      continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_prices_csv(const std::filesystem::path& path, const std::map<std::string, PriceSeries>& prices) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "company,date,close\n";
  out.precision(17);
  for (const auto& [company, series] : prices)
    for (std::size_t i = 0; i < series.dates.size(); ++i)
      out << company << ',' << series.dates[i].str() << ',' << series.close[i] << '\n';
}

std::map<std::string, PriceSeries> read_prices_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::map<std::string, PriceSeries> out;
  std::string line;
  std::getline(in, line);
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(no) + ": expected company,date,close");
    auto& s = out[line.substr(0, c1)];
    const Date d = parse_date(line.substr(c1 + 1, c2 - c1 - 1));
    if (!s.dates.empty() && !(d > s.dates.back()))
      throw DataError(path.string() + ":" + std::to_string(no) + ": dates not ascending");
    s.dates.push_back(d);
    s.close.push_back(std::stod(line.substr(c2 + 1)));
  }
  return out;
}

}  // namespace msitt
