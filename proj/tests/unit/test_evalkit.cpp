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

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace msitt;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] != 1 || l[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return wins / pairs;
}

struct Scored {
  std::vector<double> a, b;
  std::vector<int> labels;
};

/// Two correlated noisy scorers of the same labels.
Scored correlated(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Scored s;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 2 == 0 ? 1 : 0;
    const double shared = z(rng);
    s.labels.push_back(y);
    s.a.push_back(0.8 * y + shared + 0.5 * z(rng));
    s.b.push_back(0.4 * y + shared + 0.7 * z(rng));
  }
  return s;
}

std::vector<std::size_t> indices_of(const std::vector<int>& labels, int v) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == v) out.push_back(i);
  return out;
}

/// Stratified bootstrap variance of f over resampled (positives, negatives).
template <typename F>
double bootstrap_variance(const Scored& s, int resamples, std::uint64_t seed, F f) {
  const auto pos = indices_of(s.labels, 1), neg = indices_of(s.labels, 0);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> up(0, pos.size() - 1), un(0, neg.size() - 1);
  std::vector<double> stats;
  Scored r;
  for (int k = 0; k < resamples; ++k) {
    r.a.clear();
    r.b.clear();
    r.labels.clear();
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const std::size_t j = pos[up(rng)];
      r.a.push_back(s.a[j]);
      r.b.push_back(s.b[j]);
      r.labels.push_back(1);
    }
    for (std::size_t i = 0; i < neg.size(); ++i) {
      const std::size_t j = neg[un(rng)];
      r.a.push_back(s.a[j]);
      r.b.push_back(s.b[j]);
      r.labels.push_back(0);
    }
    stats.push_back(f(r));
  }
  double m = 0.0;
  for (double x : stats) m += x;
  m /= static_cast<double>(stats.size());
  double v = 0.0;
  for (double x : stats) v += (x - m) * (x - m);
  return v / static_cast<double>(stats.size() - 1);
}

TokenRecord text_token(const std::string& token, double ratio) {
  TokenRecord r;
  r.sample = "s";
  r.token = token;
  r.ratio = ratio;
  return r;
}

}  // namespace

TEST_CASE("AUC conventions", "[evalkit][auc]") {
  CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0}) == 0.5);
  CHECK_THROWS_AS(auc(std::vector<double>{0.3, 0.4}, std::vector<int>{1, 1}), UndefinedError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.3, NAN}, std::vector<int>{1, 0}), DataError);
}

TEST_CASE("AUC matches all-pairs counting on 200 random records", "[evalkit][auc][oracle]") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < 200; ++i) {
      s.push_back(std::round(u(rng) * 50.0) / 50.0);  // plenty of ties
      l.push_back(u(rng) < 0.45 ? 1 : 0);
    }
    CHECK(std::abs(auc(s, l) - brute_auc(s, l)) < 1e-12);
  }
}

TEST_CASE("AUC is invariant under monotone transforms", "[evalkit][auc][property]") {
  const Scored s = correlated(300, 3);
  std::vector<double> t;
  for (double x : s.a) t.push_back(std::exp(3.0 * x) + 7.0);
  CHECK(auc(t, s.labels) == auc(s.a, s.labels));
}

TEST_CASE("DeLong on identical models", "[evalkit][delong]") {
  const Scored s = correlated(120, 5);
  const auto r = delong(s.a, s.a, s.labels);
  CHECK(r.z == 0.0);
  CHECK(r.p == 1.0);
  CHECK(r.auc_a == r.auc_b);
}

TEST_CASE("DeLong variance tracks a 10000-resample bootstrap", "[evalkit][delong][oracle]") {
  const Scored s = correlated(500, 11);
  const double single = auc_variance(s.a, s.labels);
  const double boot_single = bootstrap_variance(s, 10000, 1, [](const Scored& r) { return auc(r.a, r.labels); });
  CHECK(std::abs(single - boot_single) / boot_single < 0.10);

  const double paired = delong(s.a, s.b, s.labels).variance;
  const double boot_paired =
      bootstrap_variance(s, 10000, 2, [](const Scored& r) { return auc(r.a, r.labels) - auc(r.b, r.labels); });
  CHECK(std::abs(paired - boot_paired) / boot_paired < 0.10);
}

TEST_CASE("a separating scorer beats a random one", "[evalkit][delong][oracle]") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a, b;
  std::vector<int> l;
  for (int i = 0; i < 200; ++i) {
    l.push_back(i % 2);
    a.push_back(l.back() + 0.1 * u(rng));
    b.push_back(u(rng));
  }
  const auto r = delong(a, b, l);
  CHECK(r.auc_a == 1.0);
  CHECK(r.p < 0.01);
  CHECK(r.z > 0.0);
}

TEST_CASE("record pairing by sample id", "[evalkit][delong]") {
  std::vector<PredictionRecord> a, b;
  for (int i = 0; i < 20; ++i) {
    PredictionRecord r;
    r.sample_id = "x" + std::to_string(i);
    r.company = "C";
    r.date = Date::from_ymd(2021, 1, 1 + i);
    r.label = i % 2;
    r.score = 0.1 * (i % 7);
    a.push_back(r);
    r.score = 0.5;
    b.push_back(r);
  }
  std::vector<PredictionRecord> shuffled(b.rbegin(), b.rend());
  const auto r1 = delong(a, b), r2 = delong(a, shuffled);
  CHECK(r1.z == r2.z);
  shuffled.back().sample_id = "other";
  CHECK_THROWS_AS(delong(a, shuffled), ContractError);
  shuffled = b;
  shuffled[0].label = 1 - shuffled[0].label;
  CHECK_THROWS_AS(delong(a, shuffled), ContractError);

  const auto path = std::filesystem::temp_directory_path() / "msitt_records.csv";
  write_records_csv(path, a);
  const auto back = read_records_csv(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].score == a[i].score);
    CHECK(back[i].date == a[i].date);
    CHECK(back[i].sample_id == a[i].sample_id);
  }
}

TEST_CASE("likelihood ratios by category", "[evalkit][lexicon]") {
  const auto path = std::filesystem::temp_directory_path() / "msitt_lexicon.tsv";
  {
    std::ofstream out(path);
    out << "# test lexicon\nPositive\tGain\nPositive\tbeat\nNegative\tloss\nStopWords\tthe\n\n";
  }
  const Lexicon lex = with_sentiment_union(read_lexicon(path));
  std::filesystem::remove(path);
  REQUIRE(lex.count("All-Sentiment"));
  CHECK(lex.at("All-Sentiment") == std::set<std::string>{"gain", "beat", "loss"});

  std::vector<TokenRecord> recs{text_token("gain", 2.0), text_token("beat", 4.0), text_token("gain", 3.0),
                                text_token("loss", 1.5), text_token("the", 0.5),  text_token("the", 0.7),
                                text_token("widget", 1.1), text_token("<eoa>", 9.0), text_token("gain", NAN)};
  TokenRecord ts = text_token("bin3", 5.0);
  ts.modality = Modality::Ts;
  recs.push_back(ts);
  const auto table = likelihood_ratio_by_category(recs, lex);
  std::map<std::string, CategoryRatio> by;
  for (const auto& r : table.rows) by[r.category] = r;
  CHECK(by.at("Positive").median == 3.0);
  CHECK(by.at("Positive").tokens == 3);
  CHECK(by.at("Negative").median == 1.5);
  CHECK(by.at("All-Sentiment").median == 2.5);
  CHECK(by.at("StopWords").median == Catch::Approx(0.6));
  CHECK(by.at("Other").median == 1.1);
  CHECK(by.at("Other").tokens == 1);

  std::vector<TokenRecord> rev(recs.rbegin(), recs.rend());
  const auto t2 = likelihood_ratio_by_category(rev, lex);
  for (std::size_t i = 0; i < table.rows.size(); ++i) CHECK(t2.rows[i].median == table.rows[i].median);

  std::vector<TokenRecord> ones{text_token("gain", 1.0), text_token("the", 1.0), text_token("thing", 1.0)};
  const auto t3 = likelihood_ratio_by_category(ones, lex);
  for (const auto& r : t3.rows) CHECK(r.median == 1.0);
  CHECK_FALSE(t3.notes.empty());  // Negative has no tokens
  CHECK(format_ratio_table(t3).find("Median LR") != std::string::npos);
}
