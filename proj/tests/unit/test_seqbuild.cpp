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
#include "msitt/corpus/synthetic.hpp"
#include "msitt/seqbuild/sequence.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace msitt;

namespace {

Article make_article(Date d, int minutes, std::vector<std::string> words, std::string source = "wire") {
  Article a;
  a.company = "AAA";
  a.ts = Timestamp{d, minutes};
  a.words = std::move(words);
  a.source = std::move(source);
  return a;
}

CompanySample base_sample(Date t) {
  CompanySample s;
  s.company = "AAA";
  s.date = t;
  for (int i = 0; i < kWindowDays; ++i) s.returns.push_back(0.01 * std::sin(0.37 * i));
  return s;
}

ChannelSet return_codec(int bins = 4) {
  std::vector<double> v;
  for (int i = 0; i < 400; ++i) v.push_back(0.01 * std::sin(0.37 * i));
  return fit_channels({{"ret", v}}, bins, {.d_ts = 4, .d_model = 8});
}

Vocabulary small_vocab() {
  Vocabulary v;
  for (const char* w : {"alpha", "beta", "gamma", "delta"}) v.add(w);
  return v;
}

}  // namespace

TEST_CASE("day layout: return token, then that day's article block", "[seqbuild][interleave]") {
  const Date t = parse_date("2024-06-10");
  const auto window = weekdays_before(t, kWindowDays);
  CompanySample s = base_sample(t);
  s.articles.push_back(make_article(window[kWindowDays - 2], 600, {"alpha", "beta"}));
  const ChannelSet codec = return_codec();
  const Vocabulary vocab = small_vocab();
  const auto seq = interleave(s, codec, vocab, {.max_length = 0, .render_timestamps = false});
  REQUIRE(seq.length() == kWindowDays + 4);
  validate(seq);

  const int n = seq.length();
  const auto tail = [&](int k) { return seq.ids[static_cast<std::size_t>(n - k)]; };
  const int r_last = vocab.size() + encode(codec[0], s.returns[kWindowDays - 1]);
  const int r_prev = vocab.size() + encode(codec[0], s.returns[kWindowDays - 2]);
  CHECK(tail(6) == r_prev);
  CHECK(tail(5) == Vocabulary::kBoa);
  CHECK(tail(4) == vocab.id("alpha"));
  CHECK(tail(3) == vocab.id("beta"));
  CHECK(tail(2) == Vocabulary::kEoa);
  CHECK(tail(1) == r_last);
  std::vector<Modality> expect{Modality::Ts, Modality::Text, Modality::Text, Modality::Text, Modality::Text,
                               Modality::Ts};
  CHECK(std::vector<Modality>(seq.tags.end() - 6, seq.tags.end()) == expect);

  Vocabulary stamped = vocab;
  for (const auto& tok : timestamp_tokens(s.articles[0].ts)) stamped.add(tok);
  const auto with_ts = interleave(s, codec, stamped, {.max_length = 0, .render_timestamps = true});
  CHECK(with_ts.length() == kWindowDays + 7);
  const auto stamp = timestamp_tokens(s.articles[0].ts);
  CHECK(with_ts.ids[static_cast<std::size_t>(with_ts.length() - 8)] == Vocabulary::kBoa);
  for (int k = 0; k < 3; ++k)
    CHECK(with_ts.ids[static_cast<std::size_t>(with_ts.length() - 7 + k)] == stamped.id(stamp[static_cast<std::size_t>(k)]));
}

TEST_CASE("sample without articles is a pure ts sequence", "[seqbuild][interleave]") {
  const auto seq = interleave(base_sample(parse_date("2022-03-01")), return_codec(), small_vocab());
  CHECK(seq.length() == 252);
  CHECK(seq.count(Modality::Ts) == 252);
  validate(seq);
}

TEST_CASE("same-day articles ordered by time, then source", "[seqbuild][interleave]") {
  const Date t = parse_date("2024-06-10");
  const auto window = weekdays_before(t, kWindowDays);
  CompanySample s = base_sample(t);
  const Date d = window[200];
  s.articles.push_back(make_article(d, 900, {"gamma"}, "b"));
  s.articles.push_back(make_article(d, 600, {"alpha"}, "z"));
  s.articles.push_back(make_article(d, 900, {"delta"}, "a"));
  const Vocabulary vocab = small_vocab();
  const auto seq = interleave(s, return_codec(), vocab, {.render_timestamps = false});
  std::vector<int> words;
  for (int i = 0; i < seq.length(); ++i) {
    const int id = seq.ids[static_cast<std::size_t>(i)];
    if (seq.is_text(i) && id >= Vocabulary::kSpecials) words.push_back(id);
  }
  CHECK(words == std::vector<int>{vocab.id("alpha"), vocab.id("delta"), vocab.id("gamma")});
}

TEST_CASE("mask definitions", "[seqbuild][masks]") {
  MultimodalSequence seq;
  seq.ids = {10, 1, 11};
  seq.tags = {Modality::Ts, Modality::Text, Modality::Ts};
  seq.days = {0, 0, 1};
  seq.article = {-1, 0, -1};
  seq.bins = {0, -1, 1};
  seq.values = {0.0, std::nan(""), 0.0};
  seq.text_vocab = 10;
  seq.positions = positions(seq);
  const auto m = build_masks(seq);
  CHECK(m.lower(1, 0) == false);
  CHECK(m.lower(1, 1) == true);
  CHECK(m.lower(2, 0) == true);
  CHECK(m.lower(2, 1) == false);
  CHECK(m.lower(2, 2) == true);
  CHECK(m.upper.count() == 6);

  MultimodalSequence text;
  text.tags.assign(4, Modality::Text);
  text.ids.assign(4, 5);
  const auto mt = build_masks(text);
  CHECK(mt.upper.count() == 10);
  CHECK(mt.lower == mt.upper);
}

TEST_CASE("positions and day spacing", "[seqbuild][positions]") {
  const Date t = parse_date("2024-06-10");
  const auto window = weekdays_before(t, kWindowDays);
  CompanySample s = base_sample(t);
  s.articles.push_back(make_article(window[100], 600, {"alpha"}));
  s.articles.push_back(make_article(window[105], 600, {"beta"}));
  const auto seq = interleave(s, return_codec(), small_vocab(), {.render_timestamps = false});
  CHECK(positions(seq) == seq.positions);
  for (int i = 0; i < seq.length(); ++i) CHECK(seq.positions[static_cast<std::size_t>(i)] == i);
  int first_eoa = -1, second_boa = -1;
  for (int i = 0; i < seq.length(); ++i) {
    if (seq.ids[static_cast<std::size_t>(i)] == Vocabulary::kEoa && first_eoa < 0) first_eoa = i;
    if (seq.ids[static_cast<std::size_t>(i)] == Vocabulary::kBoa) second_boa = i;
  }
  int between = 0;
  for (int i = first_eoa; i < second_boa; ++i) between += !seq.is_text(i);
  CHECK(between >= 5);

  const auto view = text_only(seq);
  CHECK(view.seq.length() == 6);
  for (int i = 0; i < view.seq.length(); ++i) {
    CHECK(view.seq.positions[static_cast<std::size_t>(i)] == i);
    CHECK(view.seq.ids[static_cast<std::size_t>(i)] == seq.ids[static_cast<std::size_t>(view.source[static_cast<std::size_t>(i)])]);
  }
}

TEST_CASE("truncation drops whole oldest days", "[seqbuild][truncate]") {
  const Date t = parse_date("2024-06-10");
  const auto window = weekdays_before(t, kWindowDays);
  CompanySample s = base_sample(t);
  for (int d = 150; d < 252; d += 7) s.articles.push_back(make_article(window[static_cast<std::size_t>(d)], 600, {"alpha", "beta", "gamma"}));
  s.articles.push_back(make_article(window[0] - 3, 600, {"delta"}));  // before the window
  std::sort(s.articles.begin(), s.articles.end(), [](const Article& a, const Article& b) { return a.ts < b.ts; });
  const auto full = interleave(s, return_codec(), small_vocab(), {.render_timestamps = false, .append_eos = true});
  CHECK(full.count(Modality::Text) == 15 * 5 + 1);
  for (int max_len : {40, 57, 64, 100, 251}) {
    const auto cut = interleave(s, return_codec(), small_vocab(), {.max_length = max_len, .render_timestamps = false, .append_eos = true});
    CHECK(cut.length() <= max_len);
    validate(cut, max_len);
    CHECK(cut.ends_with_eos());
    // The kept tokens are a suffix of the full sequence.
    CHECK(std::equal(cut.ids.rbegin(), cut.ids.rend(), full.ids.rbegin()));
    CHECK(!cut.is_text(0));
  }
}

TEST_CASE("structural invariants hold on synthetic samples", "[seqbuild][property]") {
  SyntheticSpec spec;
  spec.companies = 3;
  spec.noise_channels = 2;
  const auto corpus = generate_synthetic(spec, 90);
  const Vocabulary vocab = build_vocabulary(corpus.samples);
  std::vector<double> rets;
  std::vector<std::vector<double>> extra(2);
  for (const auto& s : corpus.samples) {
    rets.insert(rets.end(), s.returns.begin(), s.returns.end());
    for (int c = 0; c < 2; ++c)
      extra[static_cast<std::size_t>(c)].insert(extra[static_cast<std::size_t>(c)].end(), s.channels[static_cast<std::size_t>(c)].second.begin(),
                                                s.channels[static_cast<std::size_t>(c)].second.end());
  }
  const ChannelSet uni = fit_channels({{"ret", rets}}, 16, {.d_ts = 4, .d_model = 8});
  const ChannelSet multi = fit_channels({{"ret", rets}, {"noise1", extra[0]}, {"noise2", extra[1]}}, 16, {.d_ts = 4, .d_model = 8});
  std::mt19937 rng(4);
  for (const auto& s : corpus.samples) {
    for (const ChannelSet* codecs : {&uni, &multi}) {
      const auto seq = interleave(s, *codecs, vocab, {.max_length = 200, .append_eos = true});
      REQUIRE_NOTHROW(validate(seq, 200));
      CHECK(seq.channels == codecs->size());
      bool bins_ok = true;
      for (int i = 0; i < seq.length(); ++i)
        if (!seq.is_text(i))
          for (int c = 0; c < seq.channels; ++c) bins_ok = bins_ok && seq.bin(i, c) >= 0 && seq.bin(i, c) < 16;
      CHECK(bins_ok);
      const auto m = build_masks(seq);
      bool future = false;
      for (Eigen::Index i = 0; i < m.upper.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m.upper.cols(); ++j) future = future || m.upper(i, j) || m.lower(i, j);
      CHECK_FALSE(future);
      // Masks depend on tags alone.
      auto shuffled = seq;
      std::shuffle(shuffled.ids.begin(), shuffled.ids.end(), rng);
      const auto m2 = build_masks(shuffled);
      CHECK(m2.lower == m.lower);
      CHECK(m2.upper == m.upper);
    }
  }
}

TEST_CASE("low-frequency channels forward fill inside the window", "[seqbuild][channels]") {
  const Date t = parse_date("2024-06-10");
  CompanySample s = base_sample(t);
  std::vector<double> slow(kWindowDays, std::numeric_limits<double>::quiet_NaN());
  for (int d = 10; d < kWindowDays; d += 21) slow[static_cast<std::size_t>(d)] = 0.1 * d;
  s.channels.emplace_back("slow", slow);
  std::vector<double> fit_values;
  for (int d = 0; d < 300; ++d) fit_values.push_back(0.1 * d);
  std::vector<double> rets(s.returns);
  const ChannelSet codecs = fit_channels({{"ret", rets}, {"slow", fit_values}}, 8, {.d_ts = 2, .d_model = 4});
  const auto seq = interleave(s, codecs, small_vocab());
  REQUIRE(seq.length() == kWindowDays);
  CHECK(seq.bin(0, 1) == 4);  // before the first observation: middle bin
  CHECK(seq.value(15, 1) == 1.0);
  CHECK(seq.value(29, 1) == seq.value(30, 1));
  CompanySample missing = base_sample(t);
  CHECK_THROWS_AS(interleave(missing, codecs, small_vocab()), ContractError);
}

TEST_CASE("debug dump and vocabulary round trip", "[seqbuild][json]") {
  const Date t = parse_date("2024-06-10");
  const auto window = weekdays_before(t, kWindowDays);
  CompanySample s = base_sample(t);
  s.articles.push_back(make_article(window[251], 600, {"Alpha,", "zeta"}));
  const Vocabulary vocab = small_vocab();
  const auto seq = interleave(s, return_codec(), vocab, {.max_length = 5, .render_timestamps = false});
  const auto j = to_json(seq);
  CHECK(j.at("ids").get<std::vector<int>>() ==
        std::vector<int>{seq.ids[0], Vocabulary::kBoa, vocab.id("alpha"), Vocabulary::kUnk, Vocabulary::kEoa});
  CHECK(j.at("tags").get<std::vector<std::string>>() == std::vector<std::string>{"ts", "text", "text", "text", "text"});
  CHECK(j.at("days").get<std::vector<int>>() == std::vector<int>(5, 251));

  const Vocabulary back = Vocabulary::from_json(nlohmann::json::parse(vocab.to_json().dump()));
  REQUIRE(back.size() == vocab.size());
  for (int i = 0; i < vocab.size(); ++i) CHECK(back.token(i) == vocab.token(i));
  CHECK(back.id("nothing") == Vocabulary::kUnk);
}
