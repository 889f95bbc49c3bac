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

#include "msitt/corpus/synthetic.hpp"

#include "msitt/common/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace msitt {

namespace {

const std::vector<std::string> kPositive{"outperformed", "skyrocketing", "strengthened", "accelerating",
                                         "breakthrough", "exceptional", "optimistic", "impressive"};
const std::vector<std::string> kNegative{"underperformed", "plummeting", "deteriorated", "disappointing",
                                         "collapsing", "unprofitable", "pessimistic", "weaknesses"};
const std::vector<std::vector<std::string>> kEvents{
    {"investigation", "litigation", "bankruptcy", "resignation"},
    {"conference", "appointment", "relocation", "presentation"},
    {"acquisition", "partnership", "innovation", "collaboration"}};

const char* const kSyllables[] = {"ba", "de", "ko", "lu", "mi", "no", "pa", "re", "si", "tu", "va", "zo"};

std::string pseudo_word(int index, const char* suffix) {
  std::string w;
  int v = index;
  for (int k = 0; k < 4; ++k) {
    w += kSyllables[v % 12];
    v /= 12;
  }
  return w + suffix;
}

struct CompanyPath {
  std::vector<Date> days;
  std::vector<int> states;
  std::vector<double> returns;
  std::vector<double> close;
  std::vector<Article> articles;
  std::vector<std::vector<double>> noise;  // per channel, NaN where unobserved
  double shares = 0.0;
  double turnover = 0.0;
};

std::mt19937_64 company_rng(std::uint64_t seed, int company) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(company), 0x5eedu};
  return std::mt19937_64(seq);
}

std::string company_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "C%03d", c);
  return buf;
}

CompanyPath simulate(const SyntheticSpec& spec, const SyntheticLexicon& lex, int c) {
  std::mt19937_64 rng = company_rng(spec.seed, c);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::poisson_distribution<int> n_articles(spec.article_rate);
  const std::string name = company_name(c);

  CompanyPath p;
  for (Date d = next_weekday_on_or_after(spec.start); d <= spec.end; d = next_weekday_on_or_after(d + 1))
    p.days.push_back(d);
  const std::size_t n = p.days.size();
  p.states.resize(n);
  p.returns.resize(n);
  p.close.resize(n);

  std::uniform_int_distribution<int> any_state(0, spec.states - 1);
  std::uniform_int_distribution<int> other_state(0, spec.states - 2);
  int s = any_state(rng);
  double price = 20.0 + 80.0 * unif(rng);
  const bool small = c % 8 == 7;
  const double target_cap = small ? 1.2e8 * (1.0 + unif(rng)) : std::exp(std::log(1e9) + unif(rng) * std::log(20.0));
  p.shares = target_cap / price;
  p.turnover = small ? 0.002 : 0.004 * (1.0 + unif(rng));

  std::vector<double> event_cdf;
  for (std::size_t d = 0; d < n; ++d) {
    if (d > 0 && unif(rng) >= spec.stay_prob) {
      const int o = other_state(rng);
      s = o >= s ? o + 1 : o;
    }
    p.states[d] = s;
    const auto su = static_cast<std::size_t>(s);
    p.returns[d] = spec.kappa * spec.state_drift[su] + spec.state_vol[su] * gauss(rng);
    price *= 1.0 + p.returns[d];
    p.close[d] = price;
  }

  const auto dist_for = [&](int state) {
    auto probs = event_distribution(spec, state);
    std::partial_sum(probs.begin(), probs.end(), probs.begin());
    return probs;
  };
  std::vector<std::vector<double>> cdfs;
  for (int k = 0; k < spec.states; ++k) cdfs.push_back(dist_for(k));
  std::vector<std::string> events_flat;
  for (const auto& g : lex.events) events_flat.insert(events_flat.end(), g.begin(), g.end());

  std::uniform_int_distribution<int> minute(7 * 60, 20 * 60);
  for (std::size_t d = static_cast<std::size_t>(spec.reaction_window); d < n; ++d) {
    const int count = n_articles(rng);
    double cum = 1.0;
    for (std::size_t j = d + 1 - static_cast<std::size_t>(spec.reaction_window); j <= d; ++j) cum *= 1.0 + p.returns[j];
    const double pi_pos = positive_probability(spec, cum - 1.0);
    const auto& cdf = cdfs[static_cast<std::size_t>(p.states[d])];
    std::vector<Article> today;
    for (int a = 0; a < count; ++a) {
      Article art;
      art.company = name;
      art.ts = Timestamp{p.days[d], minute(rng)};
      art.source = "synth";
      for (int w = 0; w < spec.words_per_article; ++w) {
        const double u = unif(rng);
        if (u < spec.salient_prob) {
          const auto& pool = unif(rng) < pi_pos ? lex.positive : lex.negative;
          art.words.push_back(pool[static_cast<std::size_t>(unif(rng) * static_cast<double>(pool.size()))]);
        } else if (u < spec.salient_prob + spec.event_prob) {
          const double v = unif(rng);
          auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), v) - cdf.begin());
          idx = std::min(idx, events_flat.size() - 1);
          art.words.push_back(events_flat[idx]);
        } else {
          art.words.push_back(lex.filler[static_cast<std::size_t>(unif(rng) * static_cast<double>(lex.filler.size()))]);
        }
      }
      today.push_back(std::move(art));
    }
    std::sort(today.begin(), today.end(), [](const Article& x, const Article& y) { return x.ts < y.ts; });
    for (auto& a : today) p.articles.push_back(std::move(a));
  }

  for (int k = 0; k < spec.noise_channels; ++k) {
    std::vector<double> v(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t d = 0; d < n; ++d) {
      // Odd-numbered channels update monthly to exercise forward filling.
      const bool observed = k % 2 == 0 || d == 0 || p.days[d].month() != p.days[d - 1].month();
      const double x = gauss(rng);
      if (observed) v[d] = x;
    }
    p.noise.push_back(std::move(v));
  }
  return p;
}

}  // namespace

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& m) { throw ContractError("synthetic spec: " + m); };
  if (spec.companies < 1) fail("need at least one company");
  if (spec.states < 2) fail("need at least two latent states");
  if (static_cast<int>(spec.state_drift.size()) != spec.states || static_cast<int>(spec.state_vol.size()) != spec.states)
    fail("per-state return distributions must match the state count");
  for (double v : spec.state_vol)
    if (!(v > 0.0)) fail("state volatility must be positive");
  if (!(spec.kappa >= 0.0 && spec.kappa <= 1.0)) fail("kappa must lie in [0, 1]");
  if (!(spec.stay_prob >= 0.0 && spec.stay_prob <= 1.0)) fail("stay_prob must lie in [0, 1]");
  if (!(spec.salient_prob >= 0.0 && spec.event_prob >= 0.0 && spec.salient_prob + spec.event_prob < 1.0))
    fail("slot probabilities must be non-negative and leave room for filler words");
  if (!(spec.event_fidelity >= 0.0 && spec.event_fidelity <= 1.0)) fail("event_fidelity must lie in [0, 1]");
  if (!(spec.article_rate > 0.0)) fail("article_rate must be positive");
  if (spec.words_per_article < 1 || spec.words_per_article > 128) fail("words_per_article must lie in [1, 128]");
  if (spec.reaction_window < 1) fail("reaction_window must be positive");
  if (!(spec.reaction_scale > 0.0)) fail("reaction_scale must be positive");
  if (spec.filler_vocab < 1 || spec.filler_vocab > 20736) fail("filler_vocab out of range");
  if (spec.noise_channels < 0 || spec.noise_channels > 14) fail("noise_channels must lie in [0, 14]");
  if (!(spec.start < spec.first_prediction && spec.first_prediction <= spec.last_prediction &&
        spec.last_prediction < spec.end))
    fail("date range is inconsistent");
  for (int s = 0; s < spec.states; ++s) {
    const auto d = event_distribution(spec, s);
    const double total = std::accumulate(d.begin(), d.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) fail("event distribution does not normalize");
  }
}

std::vector<std::string> SyntheticLexicon::salient() const {
  std::vector<std::string> out(positive);
  out.insert(out.end(), negative.begin(), negative.end());
  return out;
}

int SyntheticLexicon::vocabulary_size() const {
  std::size_t n = positive.size() + negative.size() + filler.size();
  for (const auto& g : events) n += g.size();
  return static_cast<int>(n);
}

SyntheticLexicon synthetic_lexicon(const SyntheticSpec& spec) {
  SyntheticLexicon lex;
  lex.positive = kPositive;
  lex.negative = kNegative;
  if (spec.states == 3) {
    lex.events = kEvents;
  } else {
    for (int s = 0; s < spec.states; ++s) {
      std::vector<std::string> g;
      for (int k = 0; k < 4; ++k) g.push_back(pseudo_word(s * 4 + k, "event"));
      lex.events.push_back(std::move(g));
    }
  }
  for (int i = 0; i < spec.filler_vocab; ++i) lex.filler.push_back(pseudo_word(i + 1000, "ment"));
  return lex;
}

double positive_probability(const SyntheticSpec& spec, double cumulative_return) {
  return 0.5 + 0.5 * spec.kappa * std::tanh(cumulative_return / spec.reaction_scale);
}

std::vector<double> event_distribution(const SyntheticSpec& spec, int state) {
  const int groups = spec.states;
  const int per_group = 4;
  const double own = spec.kappa * spec.event_fidelity;
  std::vector<double> p(static_cast<std::size_t>(groups * per_group));
  for (int g = 0; g < groups; ++g) {
    const double mass = (1.0 - own) / groups + (g == state ? own : 0.0);
    for (int k = 0; k < per_group; ++k) p[static_cast<std::size_t>(g * per_group + k)] = mass / per_group;
  }
  return p;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::size_t n) {
  validate(spec);
  SyntheticCorpus corpus;
  corpus.lexicon = synthetic_lexicon(spec);
  const std::size_t per_company = (n + static_cast<std::size_t>(spec.companies) - 1) / static_cast<std::size_t>(spec.companies);

  for (int c = 0; c < spec.companies; ++c) {
    const CompanyPath path = simulate(spec, corpus.lexicon, c);
    const std::string name = company_name(c);
    PriceSeries prices{path.days, path.close};

    double traded = 0.0;
    for (std::size_t d = 0; d < path.days.size(); ++d) {
      traded += path.close[d] * path.shares * path.turnover;
      if (d >= 21) traded -= path.close[d - 21] * path.shares * path.turnover;
      const double adv = traded / static_cast<double>(std::min<std::size_t>(d + 1, 21));
      corpus.universe.push_back({path.days[d], name, path.close[d], path.close[d] * path.shares, adv, path.returns[d]});
    }

    std::vector<std::size_t> candidates;  // indices into path.days
    std::size_t next_article = 0;
    for (std::size_t d = static_cast<std::size_t>(kWindowDays) + 1; d < path.days.size(); ++d) {
      const Date t = path.days[d];
      if (t < spec.first_prediction || t > spec.last_prediction) continue;
      // A prediction date follows a day that carried at least one article.
      bool after_article = false;
      while (next_article < path.articles.size() && path.articles[next_article].ts.date < t) {
        after_article = path.articles[next_article].ts.date == path.days[d - 1];
        ++next_article;
      }
      if (after_article) candidates.push_back(d);
    }

    std::vector<std::size_t> picked;
    if (candidates.size() <= per_company) {
      picked = candidates;
    } else {
      for (std::size_t k = 0; k < per_company; ++k) picked.push_back(candidates[k * candidates.size() / per_company]);
    }

    for (std::size_t d : picked) {
      const Date t = path.days[d];
      CompanySample s;
      s.company = name;
      s.date = t;
      s.returns.assign(path.returns.begin() + static_cast<std::ptrdiff_t>(d - kWindowDays),
                       path.returns.begin() + static_cast<std::ptrdiff_t>(d));
      const auto first = std::lower_bound(path.articles.begin(), path.articles.end(), t - 365,
                                          [](const Article& a, Date v) { return a.ts.date < v; });
      const auto last = std::lower_bound(path.articles.begin(), path.articles.end(), t,
                                         [](const Article& a, Date v) { return a.ts.date < v; });
      if (last - first < kMinArticlesPerYear) continue;
      s.articles.assign(std::max(first, last - kMaxArticles), last);
      s.label_7d = label(prices, t, 7);
      s.label_30d = label(prices, t, 30);
      for (int k = 0; k < spec.noise_channels; ++k) {
        const auto& v = path.noise[static_cast<std::size_t>(k)];
        s.channels.emplace_back("noise" + std::to_string(k + 1),
                                std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(d - kWindowDays),
                                                    v.begin() + static_cast<std::ptrdiff_t>(d)));
      }
      validate(s);
      corpus.samples.push_back(std::move(s));
    }
    corpus.prices.emplace(name, std::move(prices));
    corpus.articles.emplace(name, path.articles);
    corpus.states.emplace(name, path.states);
  }
  return corpus;
}

void write_lexicon_tsv(const std::filesystem::path& path, const SyntheticLexicon& lexicon) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& w : lexicon.positive) out << "Positive\t" << w << '\n';
  for (const auto& w : lexicon.negative) out << "Negative\t" << w << '\n';
  for (const auto& g : lexicon.events)
    for (const auto& w : g) out << "Event\t" << w << '\n';
}

void write_universe_csv(const std::filesystem::path& path, const std::vector<UniverseRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "date,company,close,mktcap,adv,ret\n";
  for (const auto& r : rows)
    out << r.date.str() << ',' << r.company << ',' << r.close << ',' << r.mktcap << ',' << r.adv << ',' << r.ret << '\n';
}

std::vector<UniverseRow> read_universe_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<UniverseRow> rows;
  std::string line;
  std::getline(in, line);
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f[6];
    for (auto& x : f)
      if (!std::getline(ss, x, ',')) throw ParseError(path.string() + ":" + std::to_string(no) + ": expected 6 fields");
    try {
      rows.push_back({parse_date(f[0]), f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const std::invalid_argument&) {
      throw ParseError(path.string() + ":" + std::to_string(no) + ": bad number");
    }
  }
  return rows;
}

std::vector<CompanySample> panel_samples(const SyntheticCorpus& corpus, Date begin, Date end) {
  if (!corpus.samples.empty() && !corpus.samples.front().channels.empty())
    throw ContractError("panel_samples: extra channels are not rebuilt");
  std::vector<CompanySample> out;
  for (const auto& [company, prices] : corpus.prices) {
    const auto it = corpus.articles.find(company);
    if (it == corpus.articles.end()) continue;
    for (auto& s : assemble_samples(company, it->second, prices))
      if (s.date >= begin && s.date <= end) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace msitt
