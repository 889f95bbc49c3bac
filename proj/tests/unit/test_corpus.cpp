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

#include "msitt/common/error.hpp"
#include "msitt/corpus/curate.hpp"
#include "msitt/corpus/dataset.hpp"
#include "msitt/corpus/synthetic.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace msitt;

namespace {

std::string words_text(int n, int salt = 0) {
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += "word" + std::string(1, static_cast<char>('a' + (i + salt) % 26)) + std::string(1, static_cast<char>('a' + (i * 7 + salt) % 26));
  }
  return s;
}

RawArticle raw(const std::string& company, const std::string& ts, const std::string& text) {
  return RawArticle{company, {}, ts, "", text, "wire"};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("msitt_test_corpus_" + name);
}

}  // namespace

TEST_CASE("civil dates and weekdays", "[corpus][date]") {
  CHECK(Date::from_ymd(1970, 1, 1).days == 0);
  CHECK(Date::from_ymd(1970, 1, 1).weekday() == 3);
  CHECK(Date::from_ymd(2024, 2, 29).str() == "2024-02-29");
  CHECK(parse_date("2000-03-01") - parse_date("2000-02-28") == 2);
  CHECK(parse_date("1900-03-01") - parse_date("1900-02-28") == 1);
  CHECK(Date::from_ymd(2025, 3, 17).weekday() == 0);
  CHECK_THROWS_AS(parse_date("2023-02-29"), ParseError);
  CHECK_THROWS_AS(parse_date("2023-1-05"), ParseError);
  CHECK_THROWS_AS(parse_timestamp("2023-01-05T25:00"), ParseError);
  CHECK(parse_timestamp("2023-01-05T09:30").minutes == 570);
  CHECK(parse_timestamp("2023-01-05T09:30").str() == "2023-01-05T09:30");

  const auto w = weekdays_before(parse_date("2024-06-10"), 6);  // a Monday
  REQUIRE(w.size() == 6);
  CHECK(w.back().str() == "2024-06-07");
  CHECK(w.front().str() == "2024-05-31");
  for (Date d : w) CHECK(d.is_weekday());

  std::mt19937 rng(3);
  std::uniform_int_distribution<int> any(-200000, 200000);
  for (int i = 0; i < 1000; ++i) {
    const Date d{any(rng)};
    CHECK(parse_date(d.str()) == d);
  }
}

TEST_CASE("curation filters follow the stated rules", "[corpus][curate]") {
  CurationRules rules;
  SECTION("short article rejected for length") {
    const std::vector<RawArticle> in{raw("AAA", "2020-01-02T10:00", std::string(50, 'x'))};
    auto res = curate_detailed(in, rules);
    CHECK(res.accepted.empty());
    REQUIRE(res.rejected.size() == 1);
    CHECK(res.rejected[0].second == RejectReason::Length);
  }
  SECTION("exact duplicate rejected") {
    const std::string t = words_text(40);
    const std::vector<RawArticle> in{raw("AAA", "2020-01-02T10:00", t), raw("AAA", "2020-01-03T10:00", t),
                                     raw("BBB", "2020-01-03T11:00", t)};
    auto res = curate_detailed(in, rules);
    REQUIRE(res.accepted.size() == 2);  // duplicate scope is per company
    CHECK(res.rejected.at(0).second == RejectReason::Duplicate);
  }
  SECTION("fifteen percent digits rejected") {
    std::string t;
    for (int i = 0; i < 10; ++i) t += std::string(i ? " " : "") + "123abcdefghijklmn";  // 30 of 179 characters
    REQUIRE(std::abs(numeric_fraction(t) - 0.15) < 0.02);
    const std::vector<RawArticle> in{raw("AAA", "2020-01-02T10:00", t)};
    auto res = curate_detailed(in, rules);
    CHECK(res.accepted.empty());
    CHECK(res.rejected.at(0).second == RejectReason::Numeric);
  }
  SECTION("multi-company, blocklist and bad timestamps") {
    RawArticle multi = raw("AAA", "2020-01-02T10:00", words_text(30));
    multi.tickers = {"AAA", "BBB"};
    RawArticle block = raw("AAA", "2020-01-04T10:00", words_text(30, 5));
    block.title = "Top 10 Stocks To Buy";
    RawArticle bad = raw("AAA", "not-a-date", words_text(30, 9));
    rules.blocklist = {"top \\d+ stocks"};
    const std::vector<RawArticle> in{multi, block, bad};
    auto res = curate_detailed(in, rules);
    CHECK(res.accepted.empty());
    std::map<std::size_t, RejectReason> why(res.rejected.begin(), res.rejected.end());
    CHECK(why.at(0) == RejectReason::MultiCompany);
    CHECK(why.at(1) == RejectReason::Blocklist);
    CHECK(why.at(2) == RejectReason::BadTimestamp);
  }
  SECTION("truncation and chronological output") {
    const std::vector<RawArticle> in{raw("AAA", "2020-01-05T10:00", words_text(200, 1)),
                                     raw("AAA", "2020-01-02T10:00", words_text(30, 2))};
    auto res = curate(in, rules);
    REQUIRE(res.size() == 2);
    CHECK(res[0].ts < res[1].ts);
    CHECK(res[1].words.size() == 128);
  }
}

TEST_CASE("near-duplicate threshold on word unigram sets", "[corpus][curate]") {
  std::vector<std::string> base;
  for (int i = 0; i < 40; ++i) base.push_back(std::string("tok") + static_cast<char>('a' + i % 26) + static_cast<char>('a' + i / 26) + "x");
  auto text_of = [](const std::vector<std::string>& w) {
    std::string s;
    for (const auto& x : w) s += x + " ";
    return s;
  };
  // Four of 40 replaced: Jaccard = 36 / 44 < 0.9, kept. One replaced: 39 / 41 >= 0.9, dropped.
  auto four = base;
  for (int i = 0; i < 4; ++i) four[static_cast<std::size_t>(i)] = std::string("new") + static_cast<char>('a' + i) + "word";
  auto one = base;
  one[0] = "changedword";
  CHECK(jaccard(std::set<std::string>(base.begin(), base.end()), std::set<std::string>(four.begin(), four.end())) ==
        Catch::Approx(36.0 / 44.0));
  const std::vector<RawArticle> in{raw("AAA", "2020-01-02T10:00", text_of(base)),
                                   raw("AAA", "2020-01-03T10:00", text_of(four)),
                                   raw("AAA", "2020-01-04T10:00", text_of(one))};
  auto res = curate_detailed(in);
  CHECK(res.accepted.size() == 2);
  CHECK(res.rejected.size() == 1);
}

TEST_CASE("curate is idempotent", "[corpus][curate][property]") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(5, 180), day(1, 28), salt(0, 6), digits(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RawArticle> in;
    for (int i = 0; i < 40; ++i) {
      std::string t = words_text(len(rng), salt(rng));
      for (int k = 0; k < digits(rng) * 8; ++k) t[static_cast<std::size_t>(k) % t.size()] = '5';
      char ts[32];
      std::snprintf(ts, sizeof ts, "2021-03-%02dT%02d:00", day(rng), 8 + i % 10);
      in.push_back(raw(i % 3 == 0 ? "AAA" : "BBB", ts, t));
    }
    const auto once = curate(in);
    std::vector<RawArticle> again;
    for (const auto& a : once) again.push_back(to_raw(a));
    const auto twice = curate(again);
    REQUIRE(twice.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(twice[i].words == once[i].words);
      CHECK(twice[i].ts == once[i].ts);
      CHECK(twice[i].company == once[i].company);
    }
  }
}

TEST_CASE("labels from price series", "[corpus][label]") {
  PriceSeries p;
  const Date t = parse_date("2021-06-01");  // Tuesday
  p.dates = {t, t + 7, t + 30};
  SECTION("up") {
    p.close = {100, 99, 105};
    CHECK(label(p, t, 30) == 1);
    CHECK(label(p, t, 7) == 0);
  }
  SECTION("tie gives no label") {
    p.close = {100, 100, 105};
    CHECK_FALSE(label(p, t, 7).has_value());
  }
  SECTION("horizon lands on a weekend and maps to the next close") {
    PriceSeries q;
    const Date fri = parse_date("2021-06-04");
    q.dates = {fri, parse_date("2021-06-14")};
    q.close = {50, 51};
    CHECK(label(q, fri, 9) == 1);  // Sunday -> Monday
  }
  SECTION("missing endpoint") {
    p.close = {100, 99, 105};
    CHECK_FALSE(label(p, t, 60).has_value());
    CHECK_FALSE(label(p, t + 1, 7).has_value());
  }
}

TEST_CASE("class balancing", "[corpus][balance]") {
  std::vector<CompanySample> s(100);
  for (int i = 0; i < 100; ++i) {
    s[static_cast<std::size_t>(i)].company = "C" + std::to_string(i);
    s[static_cast<std::size_t>(i)].label_30d = i < 60 ? 1 : 0;
  }
  const auto b = balance(s, 30, 5);
  int pos = 0, neg = 0;
  for (const auto& x : b) (*x.label_30d ? pos : neg)++;
  CHECK(pos == 40);
  CHECK(neg == 40);
  const auto b2 = balance(s, 30, 5);
  REQUIRE(b2.size() == b.size());
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i].company == b2[i].company);

  std::vector<CompanySample> even(s.begin() + 20, s.end());
  const auto e = balance(even, 30, 9);
  REQUIRE(e.size() == even.size());
  for (std::size_t i = 0; i < e.size(); ++i) CHECK(e[i].company == even[i].company);

  std::vector<CompanySample> one_class(s.begin(), s.begin() + 60);
  CHECK_THROWS_AS(balance(one_class, 30, 1), BalanceError);
}

namespace {

SyntheticSpec small_spec(double kappa, std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.companies = 6;
  spec.kappa = kappa;
  spec.seed = seed;
  return spec;
}

std::string dump(const SyntheticCorpus& c) {
  std::string s;
  for (const auto& x : c.samples) s += to_json(x).dump() + "\n";
  return s;
}

}  // namespace

TEST_CASE("synthetic corpus determinism and invariants", "[corpus][synthetic]") {
  const auto a = generate_synthetic(small_spec(1.0), 600);
  const auto b = generate_synthetic(small_spec(1.0), 600);
  CHECK(dump(a) == dump(b));
  CHECK(dump(a) != dump(generate_synthetic(small_spec(1.0, 4), 600)));
  CHECK(a.samples.size() >= 500);
  CHECK(a.samples.size() <= 600);
  for (const auto& s : a.samples) {
    CHECK_NOTHROW(validate(s));
    for (const auto& art : s.articles) CHECK(art.ts.date < s.date);
  }

  const auto parts = partition(a.samples);
  const SplitWindows w;
  for (const auto& s : parts.train) CHECK(s.date <= w.train_end);
  for (const auto& s : parts.validation) CHECK((s.date >= w.val_begin && s.date <= w.val_end));
  CHECK(!parts.train.empty());
  CHECK(!parts.validation.empty());
  CHECK(!parts.test.empty());

  SyntheticSpec bad = small_spec(1.5);
  CHECK_THROWS_AS(validate(bad), ContractError);
  for (int s = 0; s < 3; ++s) {
    double total = 0;
    for (double p : event_distribution(small_spec(0.7), s)) total += p;
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("JSONL round trip and validation on load", "[corpus][io]") {
  SyntheticSpec spec = small_spec(1.0);
  spec.noise_channels = 2;
  const auto c = generate_synthetic(spec, 60);
  const auto path = temp_file("rt.jsonl");
  write_jsonl(path, c.samples);
  const auto back = read_jsonl(path);
  REQUIRE(back.size() == c.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].returns == c.samples[i].returns);
    CHECK(to_json(back[i]).dump() == to_json(c.samples[i]).dump());
  }

  auto broken = to_json(c.samples[0]);
  broken["returns"].erase(0);
  {
    std::ofstream out(path);
    out << to_json(c.samples[1]).dump() << "\n" << broken.dump() << "\n";
  }
  try {
    read_jsonl(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::filesystem::remove(path);
}

namespace {

struct PolarityObs {
  double cum = 0;
  bool positive = false;
  std::size_t article = 0;
};

// Every salient token of every distinct article with the trailing cumulative
// return recomputed from the price path.
std::vector<PolarityObs> polarity_observations(const SyntheticCorpus& c, const SyntheticSpec& spec) {
  std::set<std::string> pos(c.lexicon.positive.begin(), c.lexicon.positive.end());
  std::set<std::string> neg(c.lexicon.negative.begin(), c.lexicon.negative.end());
  std::set<std::pair<std::string, Timestamp>> seen;
  std::vector<PolarityObs> out;
  std::size_t article = 0;
  for (const auto& s : c.samples) {
    const auto& prices = c.prices.at(s.company);
    for (const auto& a : s.articles) {
      if (!seen.insert({s.company, a.ts}).second) continue;
      const auto d = static_cast<std::size_t>(std::lower_bound(prices.dates.begin(), prices.dates.end(), a.ts.date) -
                                              prices.dates.begin());
      const double cum = prices.close[d] / prices.close[d - static_cast<std::size_t>(spec.reaction_window)] - 1.0;
      for (const auto& w : a.words) {
        if (pos.count(w)) out.push_back({cum, true, article});
        if (neg.count(w)) out.push_back({cum, false, article});
      }
      ++article;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("kappa zero gives polarity independent of returns", "[corpus][synthetic][oracle]") {
  SyntheticSpec spec = small_spec(0.0, 21);
  spec.companies = 14;
  const auto c = generate_synthetic(spec, 6000);
  const auto obs = polarity_observations(c, spec);
  REQUIRE(obs.size() >= 10000);
  // 4 return bins (sign x magnitude) by 2 polarities.
  double table[4][2] = {};
  for (const auto& o : obs) {
    const int bin = (o.cum > 0 ? 2 : 0) + (std::abs(o.cum) > 0.02 ? 1 : 0);
    table[bin][o.positive ? 1 : 0] += 1;
  }
  double n = 0, rows[4] = {}, cols[2] = {};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) {
      rows[i] += table[i][j];
      cols[j] += table[i][j];
      n += table[i][j];
    }
  double chi2 = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = rows[i] * cols[j] / n;
      chi2 += (table[i][j] - e) * (table[i][j] - e) / e;
    }
  CHECK(chi2 < 11.345);  // chi-square(3) critical value at 0.01
}

TEST_CASE("kappa one: return-aware oracle beats the best text-only predictor", "[corpus][synthetic][oracle]") {
  const SyntheticSpec spec = small_spec(1.0, 22);
  const auto c = generate_synthetic(spec, 1500);
  const auto obs = polarity_observations(c, spec);
  REQUIRE(obs.size() > 2000);
  const double per_word = 1.0 / static_cast<double>(c.lexicon.positive.size());

  // Prior over the polarity probability: its empirical distribution across tokens.
  std::vector<double> prior;
  for (std::size_t i = 0; i < obs.size(); i += 7) prior.push_back(positive_probability(spec, obs[i].cum));

  double oracle = 0, text_only = 0;
  std::size_t current = static_cast<std::size_t>(-1);
  std::vector<double> post;
  for (const auto& o : obs) {
    if (o.article != current) {
      current = o.article;
      post.assign(prior.size(), 1.0 / static_cast<double>(prior.size()));
    }
    // Text-only Bayes predictor: posterior mean of pi given the earlier polarity words of the article.
    double mean = 0;
    for (std::size_t k = 0; k < prior.size(); ++k) mean += post[k] * prior[k];
    const double pi = positive_probability(spec, o.cum);
    oracle -= std::log((o.positive ? pi : 1 - pi) * per_word);
    text_only -= std::log((o.positive ? mean : 1 - mean) * per_word);
    double z = 0;
    for (std::size_t k = 0; k < prior.size(); ++k) {
      post[k] *= o.positive ? prior[k] : 1 - prior[k];
      z += post[k];
    }
    for (double& p : post) p /= z;
  }
  oracle /= static_cast<double>(obs.size());
  text_only /= static_cast<double>(obs.size());
  CHECK(text_only > oracle + 0.02);
}

TEST_CASE("panel samples cover every article day in the window", "[corpus][synthetic]") {
  SyntheticSpec spec;
  spec.companies = 6;
  spec.seed = 4;
  const auto corpus = generate_synthetic(spec, 120);
  const Date begin = Date::from_ymd(2020, 1, 1), end = Date::from_ymd(2020, 12, 31);
  const auto panel = panel_samples(corpus, begin, end);
  std::size_t in_window = 0;
  for (const auto& s : corpus.samples) in_window += s.date >= begin && s.date <= end;
  CHECK(panel.size() > in_window);
  std::set<std::string> ids;
  for (const auto& s : panel) {
    CHECK(s.date >= begin);
    CHECK(s.date <= end);
    CHECK(corpus.prices.count(s.company) == 1);
    CHECK_NOTHROW(validate(s));
    ids.insert(s.id());
  }
  CHECK(ids.size() == panel.size());
  spec.noise_channels = 1;
  CHECK_THROWS_AS(panel_samples(generate_synthetic(spec, 20), begin, end), ContractError);
}
