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

#include "msitt/evalkit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace msitt {

void write_records_csv(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "sample_id,company,date,horizon,score,label\n";
  for (const auto& r : records)
    out << r.sample_id << ',' << r.company << ',' << r.date.str() << ',' << r.horizon << ',' << r.score << ','
        << r.label << '\n';
}

std::vector<PredictionRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("sample_id,company,date", 0) != 0) throw ParseError(path.string() + ": not a records file");
  std::vector<PredictionRecord> out;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[6];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw ParseError(path.string() + ":" + std::to_string(no) + ": expected 6 fields");
    PredictionRecord r;
    try {
      r.sample_id = f[0];
      r.company = f[1];
      r.date = parse_date(f[2]);
      r.horizon = std::stoi(f[3]);
      r.score = std::stod(f[4]);
      r.label = std::stoi(f[5]);
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
    if (!std::isfinite(r.score)) throw DataError(path.string() + ":" + std::to_string(no) + ": non-finite score");
    if (r.label < -1 || r.label > 1) throw DataError(path.string() + ":" + std::to_string(no) + ": label not -1/0/1");
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("auc: one label per score required");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError("auc: non-finite score");
    if (labels[i] != 0 && labels[i] != 1) throw DataError("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(labels[i]);
  }
  if (pos == 0 || pos == scores.size()) throw UndefinedError("auc: both classes are required");
}

/// Placement values in sample order: for each positive the share of
/// negatives it beats, for each negative the share of positives that beat it
/// (ties one half).
struct Placements {
  std::vector<double> pos;  // V10
  std::vector<double> neg;  // V01
};

Placements placements(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += static_cast<std::size_t>(l);
  const auto np = static_cast<double>(n_pos), nn = static_cast<double>(n - n_pos);
  std::vector<double> value(n);
  std::size_t below_pos = 0, below_neg = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i, tie_pos = 0, tie_neg = 0;
    for (; j < n && scores[order[j]] == scores[order[i]]; ++j) (labels[order[j]] ? tie_pos : tie_neg) += 1;
    const double beat = (static_cast<double>(below_neg) + 0.5 * static_cast<double>(tie_neg)) / nn;
    const double beaten = (np - static_cast<double>(below_pos + tie_pos) + 0.5 * static_cast<double>(tie_pos)) / np;
    for (std::size_t k = i; k < j; ++k) value[order[k]] = labels[order[k]] ? beat : beaten;
    below_pos += tie_pos;
    below_neg += tie_neg;
    i = j;
  }
  Placements p;
  for (std::size_t k = 0; k < n; ++k) (labels[k] ? p.pos : p.neg).push_back(value[k]);
  return p;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  return mean(placements(scores, labels).pos);
}

double auc(std::span<const PredictionRecord> records) {
  std::vector<double> s;
  std::vector<int> l;
  for (const auto& r : records) {
    s.push_back(r.score);
    l.push_back(r.label);
  }
  return auc(s, l);
}

double auc_variance(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Placements p = placements(scores, labels);
  const double m = static_cast<double>(p.pos.size()), n = static_cast<double>(p.neg.size());
  const double s10 = p.pos.size() > 1 ? covariance(p.pos, p.pos) : 0.0;
  const double s01 = p.neg.size() > 1 ? covariance(p.neg, p.neg) : 0.0;
  return s10 / m + s01 / n;
}

DeLongResult delong(std::span<const double> a, std::span<const double> b, std::span<const int> labels) {
  if (a.size() != b.size()) throw ContractError("delong: both models must score the same samples");
  check_inputs(a, labels);
  check_inputs(b, labels);
  const Placements pa = placements(a, labels), pb = placements(b, labels);
  DeLongResult r;
  r.auc_a = mean(pa.pos);
  r.auc_b = mean(pb.pos);
  const auto& a10 = pa.pos;
  const auto& a01 = pa.neg;
  const auto& b10 = pb.pos;
  const auto& b01 = pb.neg;
  const double m = static_cast<double>(a10.size()), n = static_cast<double>(a01.size());
  auto cov = [](const std::vector<double>& x, const std::vector<double>& y) { return x.size() > 1 ? covariance(x, y) : 0.0; };
  const double s10 = cov(a10, a10) + cov(b10, b10) - 2.0 * cov(a10, b10);
  const double s01 = cov(a01, a01) + cov(b01, b01) - 2.0 * cov(a01, b01);
  r.variance = std::max(0.0, s10 / m + s01 / n);
  const double diff = r.auc_a - r.auc_b;
  if (r.variance <= 0.0) {
    r.z = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.p = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.z = diff / std::sqrt(r.variance);
  r.p = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

DeLongResult delong(std::span<const PredictionRecord> a, std::span<const PredictionRecord> b) {
  if (a.size() != b.size()) throw ContractError("delong: record sets differ in size");
  std::unordered_map<std::string, const PredictionRecord*> index;
  for (const auto& r : b)
    if (!index.emplace(r.sample_id, &r).second) throw ContractError("delong: duplicate sample " + r.sample_id);
  std::vector<double> sa, sb;
  std::vector<int> labels;
  for (const auto& r : a) {
    auto it = index.find(r.sample_id);
    if (it == index.end()) throw ContractError("delong: sample " + r.sample_id + " missing from the second set");
    if (it->second->label != r.label) throw ContractError("delong: labels differ for sample " + r.sample_id);
    sa.push_back(r.score);
    sb.push_back(it->second->score);
    labels.push_back(r.label);
  }
  return delong(sa, sb, labels);
}

Lexicon read_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  Lexicon lex;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw ParseError(path.string() + ":" + std::to_string(no) + ": expected category<TAB>word");
    std::string word = line.substr(tab + 1);
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    lex[line.substr(0, tab)].insert(std::move(word));
  }
  return lex;
}

Lexicon with_sentiment_union(Lexicon lexicon) {
  std::set<std::string> all;
  for (const char* c : {"Positive", "Negative", "Uncertainty", "Litigious", "StrongModal", "WeakModal", "Constraining"}) {
    auto it = lexicon.find(c);
    if (it != lexicon.end()) all.insert(it->second.begin(), it->second.end());
  }
  if (!all.empty()) lexicon["All-Sentiment"] = std::move(all);
  return lexicon;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

RatioTable likelihood_ratio_by_category(std::span<const TokenRecord> records, const Lexicon& lexicon,
                                        const std::string& other_label) {
  std::map<std::string, std::vector<double>> pools;
  std::vector<double> other;
  for (const auto& r : records) {
    if (r.modality != Modality::Text || std::isnan(r.ratio) || r.token.empty() || r.token[0] == '<') continue;
    std::string word = r.token;
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    bool any = false;
    for (const auto& [cat, words] : lexicon)
      if (words.count(word)) {
        pools[cat].push_back(r.ratio);
        any = true;
      }
    if (!any) other.push_back(r.ratio);
  }
  RatioTable t;
  for (const auto& [cat, words] : lexicon) {
    auto it = pools.find(cat);
    if (it == pools.end()) {
      t.notes.push_back("category " + cat + " has no scored tokens");
      continue;
    }
    t.rows.push_back({cat, median(it->second), it->second.size()});
  }
  if (!other_label.empty()) {
    if (other.empty())
      t.notes.push_back("category " + other_label + " has no scored tokens");
    else
      t.rows.push_back({other_label, median(other), other.size()});
  }
  return t;
}

void write_ratio_table_csv(const std::filesystem::path& path, const RatioTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "category,median_ratio,tokens\n";
  for (const auto& r : table.rows) out << r.category << ',' << r.median << ',' << r.tokens << '\n';
}

std::string format_ratio_table(const RatioTable& table) {
  std::size_t w = 8;
  for (const auto& r : table.rows) w = std::max(w, r.category.size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(w)) << "Category" << "  " << std::right << std::setw(12) << "Median LR"
    << std::setw(10) << "Tokens" << '\n';
  for (const auto& r : table.rows)
    s << std::left << std::setw(static_cast<int>(w)) << r.category << "  " << std::right << std::setw(12) << std::fixed
      << std::setprecision(4) << r.median << std::setw(10) << r.tokens << '\n';
  for (const auto& n : table.notes) s << "note: " << n << '\n';
  return s.str();
}

}  // namespace msitt
