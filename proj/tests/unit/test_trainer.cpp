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
#include "msitt/evalkit/evalkit.hpp"
#include "msitt/trainer/trainer.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace msitt;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  Vocabulary vocab;
  ChannelSet codecs;
  std::vector<Example> examples;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    SyntheticSpec spec;
    spec.companies = 3;
    spec.filler_vocab = 20;
    spec.article_rate = 0.3;
    spec.words_per_article = 10;
    x.corpus = generate_synthetic(spec, 16);
    x.vocab = build_vocabulary(x.corpus.samples, {.min_count = 1, .timestamp_tokens = false});
    std::vector<double> rets;
    for (const auto& s : x.corpus.samples) rets.insert(rets.end(), s.returns.begin(), s.returns.end());
    x.codecs = fit_channels({{"ret", rets}}, 8, {.d_ts = 4, .d_model = 16});
    x.examples = make_examples(x.corpus.samples, x.codecs, x.vocab, 48, false, 7);
    return x;
  }();
  return f;
}

ModelConfig toy(int vocab) {
  ModelConfig c;
  c.layers = 2;
  c.d_model = 16;
  c.heads = 2;
  c.mlp_hidden = 32;
  c.vocab = vocab;
  c.bins = 8;
  c.d_ts = 4;
  c.classifier_hidden = 8;
  c.seed = 3;
  return c;
}

Model<double> aligned_model() {
  const Fixture& fx = fixture();
  Model<double> m(toy(fx.vocab.size()), &fx.codecs);
  m.mirror_text_to_ts();
  m.freeze_text();
  m.apply_adapters(16);
  return m;
}

bool same_values(const ParamStore<double>& a, const ParamStore<double>& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i)
    if (a.value(i) != b.value(i)) return false;
  return true;
}

/// Labels from the last channel-0 bin, so the classifier input determines them.
std::vector<Example> bin_labeled(std::vector<Example> ex) {
  for (auto& e : ex) {
    int last = 0;
    for (int i = 0; i < e.seq.length(); ++i)
      if (!e.seq.is_text(i)) last = e.seq.bin(i, 0);
    e.label = last >= 4 ? 1 : 0;
  }
  return ex;
}

}  // namespace

TEST_CASE("AdamW leaves parameters alone under zero gradients", "[trainer][adamw]") {
  ParamStore<double> p;
  const int id = p.add("w", Matrix<double>::Constant(2, 3, 0.7), ParamGroup::Other);
  AdamW<double> opt;
  for (int k = 0; k < 3; ++k) {
    const auto info = opt.step(p, {{id, Matrix<double>::Zero(2, 3)}});
    CHECK(info.applied);
  }
  CHECK(p.value(id) == Matrix<double>::Constant(2, 3, 0.7));
}

TEST_CASE("AdamW follows the hand recurrence on x^2", "[trainer][adamw][oracle]") {
  ParamStore<double> p;
  const int id = p.add("x", Matrix<double>::Constant(1, 1, 1.0), ParamGroup::Other);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.clip_norm = 0.0;
  AdamW<double> opt(cfg);
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    const double g = 2.0 * x;
    opt.step(p, {{id, Matrix<double>::Constant(1, 1, 2.0 * p.value(id)(0, 0))}});
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.value(id)(0, 0) == Catch::Approx(x).epsilon(1e-14));
  }
  CHECK(x < 0.6);
}

TEST_CASE("AdamW clips the global norm", "[trainer][adamw]") {
  ParamStore<double> p;
  const int a = p.add("a", Matrix<double>::Zero(1, 1), ParamGroup::Other);
  const int b = p.add("b", Matrix<double>::Zero(1, 1), ParamGroup::Other);
  AdamWConfig cfg;
  cfg.clip_norm = 1.0;
  AdamW<double> opt(cfg);
  const auto info = opt.step(p, {{a, Matrix<double>::Constant(1, 1, 6.0)}, {b, Matrix<double>::Constant(1, 1, 8.0)}});
  CHECK(info.grad_norm == Catch::Approx(10.0));
  CHECK(info.clip_scale == Catch::Approx(0.1));
  // the second moment saw the clipped gradient: v = 0.001 * 0.6^2
  const auto state = opt.to_json(p);
  CHECK(state["moments"]["a"]["v"][0].get<double>() == Catch::Approx(0.001 * 0.36));
  CHECK(state["moments"]["b"]["m"][0].get<double>() == Catch::Approx(0.1 * 0.8));
}

TEST_CASE("AdamW skips non-finite steps and refuses frozen tensors", "[trainer][adamw]") {
  ParamStore<double> p;
  const int id = p.add("w", Matrix<double>::Constant(1, 2, 0.5), ParamGroup::Other);
  const int frozen = p.add("f", Matrix<double>::Zero(1, 1), ParamGroup::Other, false);
  AdamW<double> opt;
  Matrix<double> g(1, 2);
  g << 1.0, std::nan("");
  const auto info = opt.step(p, {{id, g}});
  CHECK_FALSE(info.applied);
  CHECK(opt.skipped() == 1);
  CHECK(opt.steps() == 0);
  CHECK(p.value(id) == Matrix<double>::Constant(1, 2, 0.5));
  CHECK_THROWS_AS(opt.step(p, {{frozen, Matrix<double>::Ones(1, 1)}}), ContractError);
  CHECK_THROWS_AS(AdamW<double>(AdamWConfig{.lr = 0.0}), ContractError);
}

TEST_CASE("examples carry an <eos> twin with the same body", "[trainer][data]") {
  const Fixture& fx = fixture();
  REQUIRE(fx.examples.size() == fx.corpus.samples.size());
  for (const auto& e : fx.examples) {
    CHECK_FALSE(e.seq.ends_with_eos());
    CHECK(e.with_eos.ends_with_eos());
    REQUIRE(e.with_eos.length() == e.seq.length() + 1);
    CHECK(std::equal(e.seq.ids.begin(), e.seq.ids.end(), e.with_eos.ids.begin()));
    CHECK(view_of(e, InputView::TextOnly).count(Modality::Ts) == 0);
    CHECK(view_of(e, InputView::TsOnly).count(Modality::Text) == 1);
    CHECK(view_of(e, InputView::TsOnly).ends_with_eos());
  }
}

TEST_CASE("train config validation and JSON", "[trainer][config]") {
  TrainConfig c;
  c.batch = 8;
  c.micro_batch = 3;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.micro_batch = 4;
  c.stage = Stage::Finetune;
  c.view = InputView::TsOnly;
  c.optim.lr = 2e-3;
  c.stw_config.warm_frac = 0.3;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.stage == Stage::Finetune);
  CHECK(back.view == InputView::TsOnly);
  CHECK(back.micro_batch == 4);
  CHECK(back.optim.lr == 2e-3);
  CHECK(back.stw_config.warm_frac == 0.3);
  CHECK_THROWS_AS(stage_from_string("bogus"), ParseError);
}

TEST_CASE("micro-batch size does not change the update", "[trainer][property]") {
  const Fixture& fx = fixture();
  TrainConfig c;
  c.batch = 8;
  c.max_steps = 3;
  c.optim.lr = 1e-2;
  c.stw_config.warm_frac = 0.3;
  Model<double> a = aligned_model(), b = aligned_model();
  c.micro_batch = 8;
  Trainer<double>(a, c).run(fx.examples);
  c.micro_batch = 2;
  Trainer<double>(b, c).run(fx.examples);
  CHECK(same_values(a.params(), b.params()));
}

TEST_CASE("SALMON stage updates only the ts adapters", "[trainer][property]") {
  const Fixture& fx = fixture();
  Model<double> m = aligned_model();
  const Model<double> before = aligned_model();
  TrainConfig c;
  c.batch = 4;
  c.micro_batch = 4;
  c.max_steps = 4;
  c.optim.lr = 1e-2;
  const auto r = Trainer<double>(m, c).run(fx.examples);
  CHECK(r.steps == 4);
  bool adapter_moved = false;
  for (int i = 0; i < m.params().size(); ++i) {
    if (m.params().trainable(i)) {
      if (m.params().value(i) != before.params().value(i)) adapter_moved = true;
      CHECK(m.params().group(i) != ParamGroup::TextBranch);
    } else {
      INFO(m.params().name(i));
      CHECK(m.params().value(i) == before.params().value(i));
    }
  }
  CHECK(adapter_moved);
}

TEST_CASE("without adapters the ts branch moves and the text branch does not", "[trainer][property]") {
  const Fixture& fx = fixture();
  Model<double> m(toy(fx.vocab.size()), &fx.codecs);
  m.mirror_text_to_ts();
  m.freeze_text();
  const Model<double> before = m.cast<double>();
  TrainConfig c;
  c.batch = 4;
  c.micro_batch = 4;
  c.max_steps = 2;
  c.optim.lr = 1e-2;
  const auto r = Trainer<double>(m, c).run(fx.examples);
  REQUIRE(r.metrics.front().ts_loss > 0.0);
  for (int i = 0; i < m.params().size(); ++i) {
    INFO(m.params().name(i));
    const auto grp = m.params().group(i);
    if (grp == ParamGroup::TsBranch) CHECK(m.params().value(i) != before.params().value(i));
    if (grp == ParamGroup::TextBranch || grp == ParamGroup::TextEmbedding)
      CHECK(m.params().value(i) == before.params().value(i));
  }
}

TEST_CASE("text pretraining lowers the loss over 50 steps", "[trainer]") {
  const Fixture& fx = fixture();
  Model<double> m(toy(fx.vocab.size()), &fx.codecs);
  TrainConfig c;
  c.stage = Stage::TextPretrain;
  c.batch = 4;
  c.micro_batch = 4;
  c.max_steps = 50;
  c.optim.lr = 1e-2;
  const auto r = Trainer<double>(m, c).run(fx.examples);
  REQUIRE(r.metrics.size() == 50);
  double head = 0.0, tail = 0.0;
  for (int k = 0; k < 5; ++k) {
    head += r.metrics[static_cast<std::size_t>(k)].loss;
    tail += r.metrics[static_cast<std::size_t>(45 + k)].loss;
  }
  CHECK(tail < 0.8 * head);
  for (const auto& row : r.metrics) CHECK(row.ts_loss == 0.0);
}

TEST_CASE("resume from a step checkpoint is bit-identical", "[trainer][checkpoint]") {
  const Fixture& fx = fixture();
  const auto dir = std::filesystem::temp_directory_path() / "msitt_resume";
  std::filesystem::remove_all(dir);
  TrainConfig c;
  c.batch = 4;
  c.micro_batch = 2;
  c.epochs = 2;
  c.optim.lr = 1e-2;
  c.stw_config.warm_frac = 0.25;
  c.checkpoint_dir = dir;
  c.checkpoint_every = 3;
  Model<double> full = aligned_model();
  const auto r1 = Trainer<double>(full, c).run(fx.examples);
  REQUIRE(std::filesystem::exists(dir / "step_3.json"));

  Model<double> resumed = aligned_model();
  c.checkpoint_every = 0;
  Trainer<double> t(resumed, c);
  t.load_checkpoint(dir / "step_3.json");
  CHECK(t.step() == 3);
  const auto r2 = t.run(fx.examples);
  std::filesystem::remove_all(dir);
  CHECK(same_values(full.params(), resumed.params()));
  REQUIRE(r1.metrics.size() == r2.metrics.size());
  for (std::size_t k = 0; k < r1.metrics.size(); ++k) CHECK(r1.metrics[k].loss == r2.metrics[k].loss);
}

TEST_CASE("finetuning separates a learnable label and reruns exactly", "[trainer][finetune]") {
  const Fixture& fx = fixture();
  const auto ex = bin_labeled(fx.examples);
  int pos = 0;
  for (const auto& e : ex) pos += e.label;
  REQUIRE(pos > 0);
  REQUIRE(pos < static_cast<int>(ex.size()));
  TrainConfig c;
  c.stage = Stage::Finetune;
  c.batch = 4;
  c.micro_batch = 4;
  c.epochs = 40;
  c.optim.lr = 1e-2;
  c.seed = 5;
  const auto metrics = std::filesystem::temp_directory_path() / "msitt_ft_metrics.csv";
  c.metrics_csv = metrics;
  auto train = [&] {
    Model<double> m(toy(fx.vocab.size()), &fx.codecs);
    const auto r = Trainer<double>(m, c).run(ex, ex);
    return std::make_pair(r, predict(m, std::span<const Example>(ex)));
  };
  const auto [r1, s1] = train();
  const auto [r2, s2] = train();
  std::vector<int> labels;
  for (const auto& e : ex) labels.push_back(e.label);
  CHECK(auc(s1, labels) >= 0.95);
  REQUIRE(r1.val_auc.size() == 40);
  CHECK(r1.val_auc == r2.val_auc);
  CHECK(s1 == s2);
  CHECK(r1.best_val_auc == auc(s1, labels));
  std::ifstream in(metrics);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,stage,epoch,loss,text_loss,ts_loss,bce,val_auc,grad_norm,skipped");
  in.close();
  std::filesystem::remove(metrics);

  auto unlabeled = ex;
  unlabeled[0].label = -1;
  Model<double> m(toy(fx.vocab.size()), &fx.codecs);
  CHECK_THROWS_AS(Trainer<double>(m, c).run(unlabeled), ContractError);
}

TEST_CASE("a non-finite loss aborts with the last good state", "[trainer][numeric]") {
  const Fixture& fx = fixture();
  Model<double> m = aligned_model();
  const int id = m.params().find("head.text");
  REQUIRE(id >= 0);
  m.params().value(id)(0, 0) = std::nan("");
  const Model<double> before = m.cast<double>();
  const auto dir = std::filesystem::temp_directory_path() / "msitt_nan";
  std::filesystem::remove_all(dir);
  TrainConfig c;
  c.batch = 4;
  c.micro_batch = 4;
  c.max_steps = 2;
  c.checkpoint_dir = dir;
  CHECK_THROWS_AS(Trainer<double>(m, c).run(fx.examples), NumericError);
  CHECK(std::filesystem::exists(dir / "last_good.json"));
  std::filesystem::remove_all(dir);
  for (int i = 0; i < m.params().size(); ++i)
    if (i != id) CHECK(m.params().value(i) == before.params().value(i));
}

TEST_CASE("LM evaluation compares the two passes on shared targets", "[trainer][lm]") {
  const Fixture& fx = fixture();
  Model<double> m(toy(fx.vocab.size()), &fx.codecs);
  m.mirror_text_to_ts();
  const auto lm = evaluate_lm(m, std::span<const Example>(fx.examples));
  CHECK(lm.tokens > 0);
  CHECK(std::isfinite(lm.text_only));
  CHECK(std::isfinite(lm.multimodal));
  CHECK(lm.text_only > 0.0);
}
