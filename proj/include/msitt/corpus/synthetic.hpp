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

#include "msitt/corpus/dataset.hpp"
#include "msitt/corpus/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace msitt {

/// Generator parameters. A latent sticky Markov state per company drives the
/// daily return drift and the event-word emissions; polarity words react to
/// the trailing cumulative return. kappa scales every coupling, so kappa = 0
/// makes text independent of returns.
struct SyntheticSpec {
  int companies = 40;
  int filler_vocab = 120;
  int states = 3;
  double stay_prob = 0.97;
  std::vector<double> state_drift{-0.004, 0.0, 0.004};
  std::vector<double> state_vol{0.015, 0.015, 0.015};
  double kappa = 1.0;
  double article_rate = 0.08;    // articles per trading day
  int words_per_article = 10;
  double salient_prob = 0.3;     // per word slot
  double event_prob = 0.2;       // per word slot
  double event_fidelity = 1.0;   // share of event words drawn from the state's own group at kappa = 1
  int reaction_window = 5;       // trading days in the cumulative return read by polarity words
  double reaction_scale = 0.03;
  int noise_channels = 0;        // extra pure-noise channels carried by each sample
  Date start = Date::from_ymd(2009, 1, 1);
  Date end = Date::from_ymd(2025, 3, 31);
  Date first_prediction = Date::from_ymd(2010, 1, 1);
  Date last_prediction = Date::from_ymd(2024, 12, 31);
  std::uint64_t seed = 1;
};

/// Throws ContractError if the spec is not a valid generator.
void validate(const SyntheticSpec& spec);

/// Word lists the generator draws from.
struct SyntheticLexicon {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::vector<std::string>> events;  // one group per latent state
  std::vector<std::string> filler;

  std::vector<std::string> salient() const;  // positive then negative
  int vocabulary_size() const;
};

SyntheticLexicon synthetic_lexicon(const SyntheticSpec& spec);

/// Probability that a salient slot draws a positive word given the trailing
/// cumulative return.
double positive_probability(const SyntheticSpec& spec, double cumulative_return);

/// Event-word distribution over the concatenated event groups for a state.
std::vector<double> event_distribution(const SyntheticSpec& spec, int state);

/// One company-day of the investable universe.
struct UniverseRow {
  Date date;
  std::string company;
  double close = 0.0;
  double mktcap = 0.0;
  double adv = 0.0;  // trailing 21-day mean traded value
  double ret = 0.0;  // simple return from the previous close
};

struct SyntheticCorpus {
  std::vector<CompanySample> samples;
  std::map<std::string, PriceSeries> prices;
  std::map<std::string, std::vector<int>> states;  // latent state per trading day, aligned with prices
  std::map<std::string, std::vector<Article>> articles;  // every generated article, chronological
  std::vector<UniverseRow> universe;
  SyntheticLexicon lexicon;
};

/// About `n` samples spread evenly over companies and prediction dates.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::size_t n);

/// Every sample the corpus articles support in [begin, end]: one per
/// company and trading day after an article day. Returns channel only;
/// throws ContractError for a corpus with extra channels.
std::vector<CompanySample> panel_samples(const SyntheticCorpus& corpus, Date begin, Date end);

/// Lexicon TSV ("category<TAB>word"): polarity words under Positive and
/// Negative, event groups under Event.
void write_lexicon_tsv(const std::filesystem::path& path, const SyntheticLexicon& lexicon);
void write_universe_csv(const std::filesystem::path& path, const std::vector<UniverseRow>& rows);
std::vector<UniverseRow> read_universe_csv(const std::filesystem::path& path);

}  // namespace msitt
