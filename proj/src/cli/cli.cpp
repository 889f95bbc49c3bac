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

#include "msitt/cli/cli.hpp"

#include "msitt/cli/config.hpp"
#include "msitt/cli/manifest.hpp"
#include "msitt/common/error.hpp"
#include "msitt/corpus/curate.hpp"
#include "msitt/corpus/synthetic.hpp"
#include "msitt/evalkit/evalkit.hpp"
#include "msitt/portfolio/portfolio.hpp"
#include "msitt/trainer/experiment.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace msitt {

namespace {

namespace fs = std::filesystem;

enum class Kind {
  Input,    // file or directory read by the command
  OutDir,   // directory receiving outputs and the manifest
  Setting,  // overrides the config key in `target`
};

struct OptionSpec {
  std::string name;
  Kind kind;
  std::string target;  // default path under the data dir, or the config key
  std::string help;
  bool required = true;  // inputs: a missing default is an error
  bool multi = false;
};

struct CommandSpec {
  std::string name;
  std::string help;
  std::vector<OptionSpec> options;
};

const std::vector<CommandSpec>& command_specs() {
  static const std::vector<CommandSpec> specs = {
      {"gen",
       "Generate a synthetic corpus: raw articles, samples, prices, universe and lexicon",
       {{"out", Kind::OutDir, ".", "output directory"},
        {"kappa", Kind::Setting, "synthetic.kappa", "text-return coupling"},
        {"count", Kind::Setting, "synthetic.samples", "approximate number of samples"},
        {"noise-channels", Kind::Setting, "synthetic.noise_channels", "extra pure-noise channels"}}},
      {"curate",
       "Filter raw articles and assemble samples from the survivors",
       {{"raw", Kind::Input, "raw_articles.jsonl", "raw article JSONL"},
        {"prices", Kind::Input, "prices.csv", "daily closes"},
        {"blocklist", Kind::Input, "", "regex blocklist, one pattern per line", false},
        {"out", Kind::OutDir, "curated", "output directory"}}},
      {"pretrain-text",
       "Text-only pretraining of the language model",
       {{"samples", Kind::Input, "samples.jsonl", "sample JSONL"},
        {"out", Kind::OutDir, "runs/pretrain-text", "output directory"},
        {"epochs", Kind::Setting, "pretrain.epochs", "training epochs"},
        {"steps", Kind::Setting, "pretrain.max_steps", "optimizer steps, 0 for whole epochs"}}},
      {"align",
       "SALMON alignment starting from a pretrain-text run",
       {{"samples", Kind::Input, "samples.jsonl", "sample JSONL"},
        {"from", Kind::Input, "runs/pretrain-text", "pretrain-text output directory"},
        {"out", Kind::OutDir, "runs/align", "output directory"},
        {"variant", Kind::Setting, "variant", "model variant"},
        {"steps", Kind::Setting, "align.max_steps", "optimizer steps, 0 for whole epochs"}}},
      {"finetune",
       "Classifier finetuning starting from an align or pretrain-text run",
       {{"samples", Kind::Input, "samples.jsonl", "sample JSONL"},
        {"from", Kind::Input, "runs/align", "align or pretrain-text output directory"},
        {"out", Kind::OutDir, "runs/finetune", "output directory"},
        {"variant", Kind::Setting, "variant", "model variant"},
        {"steps", Kind::Setting, "finetune.max_steps", "optimizer steps, 0 for whole epochs"},
        {"horizon", Kind::Setting, "data.horizon", "label horizon in days (7 or 30)"},
        {"panel", Kind::Input, "", "extra sample JSONL to score, e.g. panel.jsonl from gen", false}}},
      {"eval",
       "AUC of one prediction file, or a DeLong comparison of two",
       {{"a", Kind::Input, "", "prediction CSV"},
        {"b", Kind::Input, "", "second prediction CSV", false},
        {"out", Kind::OutDir, "runs/eval", "output directory"}}},
      {"ablate",
       "Train every variant of a suite for every seed",
       {{"samples", Kind::Input, "samples.jsonl", "sample JSONL"},
        {"out", Kind::OutDir, "runs/ablate", "output directory"},
        {"suite", Kind::Setting, "ablate.suite", "ablation, baselines, all or a comma-separated list of variants"},
        {"seeds", Kind::Setting, "seeds", "comma-separated training seeds"},
        {"horizon", Kind::Setting, "data.horizon", "label horizon in days (7 or 30)"}}},
      {"analyze",
       "Median likelihood ratio by lexicon category on the test split",
       {{"samples", Kind::Input, "samples.jsonl", "sample JSONL", false},
        {"from", Kind::Input, "runs/align", "align or finetune output directory", false},
        {"diagnostics", Kind::Input, "", "token diagnostics CSV, used instead of a model", false},
        {"lexicon", Kind::Input, "lexicon.tsv", "category<TAB>word lexicon"},
        {"out", Kind::OutDir, "runs/analyze", "output directory"}}},
      {"backtest",
       "Monthly long-short quintile backtest with turnover costs",
       {{"preds", Kind::Input, "runs/finetune/predictions.csv", "prediction CSV, optionally NAME=PATH", true, true},
        {"universe", Kind::Input, "universe.csv", "universe CSV"},
        {"out", Kind::OutDir, "runs/backtest", "output directory"}}},
  };
  return specs;
}

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  fs::path config_path;
  nlohmann::json config;
  std::map<std::string, std::vector<std::string>> options;
  std::vector<FileRecord> inputs;

  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }
  bool has(const std::string& name) const { return options.count(name) && !options.at(name).empty(); }
  fs::path path(const std::string& name) const {
    if (!has(name)) throw ContractError("--" + name + " is required");
    return options.at(name).front();
  }
  fs::path out() const { return path("out"); }
  std::string input_sha1(const std::string& role) const {
    for (const auto& r : inputs)
      if (r.role == role) return r.sha1;
    return {};
  }
};

// `name=path` entries keep the name.
std::pair<std::string, std::string> split_named(const std::string& value) {
  const auto eq = value.find('=');
  if (eq == std::string::npos) return {{}, value};
  return {value.substr(0, eq), value.substr(eq + 1)};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(path.string() + ": not JSON");
  return j;
}

// Fields that decide the vocabulary, the codecs and the splits.
nlohmann::json data_key(const Invocation& inv) {
  nlohmann::json d = inv.config.at("data");
  for (const char* k : {"horizon", "balance_train", "max_train"}) d.erase(k);
  return {{"samples", inv.input_sha1("samples")}, {"data", d}, {"model", inv.config.at("model")}};
}

nlohmann::json stage_record(const fs::path& dir, std::initializer_list<const char*> allowed) {
  const fs::path file = dir / "stage.json";
  if (!fs::exists(file)) throw DataError(dir.string() + " holds no stage.json");
  nlohmann::json j = read_json(file);
  const std::string stage = j.value("stage", std::string());
  for (const char* a : allowed)
    if (stage == a) return j;
  throw ContractError(dir.string() + " holds a '" + stage + "' run");
}

void check_same_data(const Invocation& inv, const nlohmann::json& stage, const fs::path& dir) {
  if (stage.at("data_key") != data_key(inv))
    throw ContractError(dir.string() + " was trained on different samples or data and model settings");
}

ExperimentData load_data(const Invocation& inv) {
  const auto samples = read_jsonl(inv.path("samples"));
  if (samples.empty()) throw DataError(inv.path("samples").string() + " holds no samples");
  const PipelineConfig p = pipeline_config(inv.config);
  return prepare_data(samples, data_config(inv.config), p.model.d_ts, p.model.d_model);
}

nlohmann::json lm_json(const LmLoss& lm) {
  return {{"text_only", lm.text_only}, {"multimodal", lm.multimodal}, {"tokens", lm.tokens}};
}

using Outputs = std::vector<fs::path>;

Outputs cmd_gen(const Invocation& inv) {
  const SyntheticSpec spec = synthetic_spec(inv.config);
  const SyntheticCorpus corpus = generate_synthetic(spec, synthetic_samples(inv.config));
  const fs::path out = inv.out();
  std::vector<RawArticle> raw;
  for (const auto& [company, articles] : corpus.articles)
    for (const auto& a : articles) raw.push_back(to_raw(a));
  write_raw_jsonl(out / "raw_articles.jsonl", raw);
  write_jsonl(out / "samples.jsonl", corpus.samples);
  write_prices_csv(out / "prices.csv", corpus.prices);
  write_universe_csv(out / "universe.csv", corpus.universe);
  write_lexicon_tsv(out / "lexicon.tsv", corpus.lexicon);
  Outputs written{out / "raw_articles.jsonl", out / "samples.jsonl", out / "prices.csv", out / "universe.csv",
                  out / "lexicon.tsv"};
  std::cout << "generated " << corpus.samples.size() << " samples and " << raw.size() << " articles for "
            << corpus.prices.size() << " companies\n";
  // Dense test-window samples for backtesting; only the returns channel is rebuilt.
  if (spec.noise_channels == 0) {
    const SplitWindows w = data_config(inv.config).windows;
    const auto panel = panel_samples(corpus, w.test_begin, w.test_end);
    write_jsonl(out / "panel.jsonl", panel);
    written.push_back(out / "panel.jsonl");
    std::cout << "panel: " << panel.size() << " test-window samples\n";
  }
  return written;
}

Outputs cmd_curate(const Invocation& inv) {
  CurationRules rules = curation_rules(inv.config);
  if (inv.has("blocklist")) rules.blocklist = load_blocklist(inv.path("blocklist"));
  const int stride = inv.config.at("curate").at("stride").get<int>();
  const auto prices = read_prices_csv(inv.path("prices"));
  const auto raw = read_raw_jsonl(inv.path("raw"));
  const CurationResult result = curate_detailed(raw, rules);

  std::map<std::string, std::vector<Article>> by_company;
  for (const auto& a : result.accepted) by_company[a.company].push_back(a);
  std::vector<CompanySample> samples;
  for (const auto& [company, articles] : by_company) {
    const auto it = prices.find(company);
    if (it == prices.end()) {
      spdlog::warn("curate: no prices for {}; {} articles dropped", company, articles.size());
      continue;
    }
    auto s = assemble_samples(company, articles, it->second, stride);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  const fs::path out = inv.out();
  write_jsonl(out / "samples.jsonl", samples);
  {
    std::ofstream rej(out / "rejected.csv");
    rej << "index,reason\n";
    for (const auto& [index, reason] : result.rejected) rej << index << ',' << to_string(reason) << '\n';
  }
  std::cout << "kept " << result.accepted.size() << " of " << raw.size() << " articles; " << samples.size()
            << " samples\n";
  return {out / "samples.jsonl", out / "rejected.csv"};
}

Outputs cmd_pretrain(const Invocation& inv) {
  PipelineConfig p = pipeline_config(inv.config);
  const ExperimentData data = load_data(inv);
  const fs::path out = inv.out();
  p.pretrain.metrics_csv = out / "metrics.csv";
  const Model<float> m = pretrain_text(data, p.model, p.pretrain, inv.seed());
  m.save(out / "text_model.json");
  const LmLoss lm = evaluate_lm(m, std::span<const Example>(data.test), p.align.salmon);
  write_json(out / "stage.json", {{"stage", "text_pretrain"},
                                  {"seed", inv.seed()},
                                  {"data_key", data_key(inv)},
                                  {"parameters", m.params().total_count()},
                                  {"text_lm", lm.text_only}});
  std::cout << "text LM loss on the test split: " << lm.text_only << "\n";
  return {out / "metrics.csv", out / "text_model.json", out / "stage.json"};
}

Outputs cmd_align(const Invocation& inv) {
  const PipelineConfig p = pipeline_config(inv.config);
  const Variant variant = variant_by_name(inv.config.at("variant").get<std::string>(), p.model);
  const fs::path from = inv.path("from");
  check_same_data(inv, stage_record(from, {"text_pretrain"}), from);
  const ExperimentData data = load_data(inv);
  const Model<float> text = Model<float>::load(from / "text_model.json");
  Model<float> m = init_variant(data, text, variant, p.adapter_rank, inv.seed());
  const fs::path out = inv.out();
  Outputs written;
  if (variant.alignment != Alignment::None) {
    align_model(m, data, variant.alignment, p.align, inv.seed(), out / "metrics.csv");
    written.push_back(out / "metrics.csv");
  } else {
    spdlog::warn("variant {} has no alignment stage; the initialized model is saved as is", variant.name);
  }
  const LmLoss lm = evaluate_lm(m, std::span<const Example>(data.test), p.align.salmon);
  m.save(out / "model.json");
  write_json(out / "stage.json", {{"stage", "align"},
                                  {"variant", variant.name},
                                  {"seed", inv.seed()},
                                  {"data_key", data_key(inv)},
                                  {"parameters", m.params().total_count()},
                                  {"trainable", m.params().trainable_count()},
                                  {"lm", lm_json(lm)}});
  std::cout << variant.name << " text LM loss: multimodal " << lm.multimodal << ", text-only " << lm.text_only
            << "\n";
  written.push_back(out / "model.json");
  written.push_back(out / "stage.json");
  return written;
}

Outputs cmd_finetune(const Invocation& inv) {
  const PipelineConfig p = pipeline_config(inv.config);
  const fs::path from = inv.path("from");
  const nlohmann::json stage = stage_record(from, {"text_pretrain", "align"});
  check_same_data(inv, stage, from);
  std::string name = inv.config.at("variant").get<std::string>();
  const bool aligned = stage.at("stage") == "align";
  if (aligned && stage.at("variant") != name) {
    if (std::any_of(inv.argv.begin(), inv.argv.end(), [](const std::string& a) { return a.rfind("--variant", 0) == 0; }))
      throw ContractError(from.string() + " was aligned as '" + stage.at("variant").get<std::string>() + "'");
    name = stage.at("variant").get<std::string>();
  }
  const Variant variant = variant_by_name(name, p.model);
  if (!aligned && variant.alignment != Alignment::None)
    throw ContractError("variant '" + name + "' needs an aligned model; run align first");

  const ExperimentData data = load_data(inv);
  Model<float> m = aligned ? Model<float>::load(from / "model.json")
                           : init_variant(data, Model<float>::load(from / "text_model.json"), variant,
                                          p.adapter_rank, inv.seed());
  const fs::path out = inv.out();
  const TrainResult r = finetune_model(m, data, variant.view, p.finetune, inv.seed(), out / "metrics.csv");
  const auto records = score_split(m, data.test, variant.view, data.config.horizon);
  write_records_csv(out / "predictions.csv", records);
  Outputs written{out / "metrics.csv", out / "predictions.csv"};
  if (inv.has("panel")) {
    const auto rows = read_jsonl(inv.path("panel"));
    const auto panel = make_examples(rows, data.codecs, data.vocab, data.config.max_length,
                                     data.config.render_timestamps, data.config.horizon);
    write_records_csv(out / "panel_predictions.csv", score_split(m, panel, variant.view, data.config.horizon));
    written.push_back(out / "panel_predictions.csv");
  }
  m.save(out / "model.json");
  const double test_auc = auc(records);
  write_json(out / "stage.json", {{"stage", "finetune"},
                                  {"variant", variant.name},
                                  {"seed", inv.seed()},
                                  {"horizon", data.config.horizon},
                                  {"data_key", data_key(inv)},
                                  {"parameters", m.params().total_count()},
                                  {"trainable", m.params().trainable_count()},
                                  {"best_epoch", r.best_epoch},
                                  {"best_val_auc", r.best_val_auc},
                                  {"test_auc", test_auc}});
  std::cout << variant.name << " test AUC " << test_auc << " (validation " << r.best_val_auc << ")\n";
  written.push_back(out / "model.json");
  written.push_back(out / "stage.json");
  return written;
}

Outputs cmd_eval(const Invocation& inv) {
  const auto a = read_records_csv(inv.path("a"));
  nlohmann::json result;
  if (inv.has("b")) {
    const auto b = read_records_csv(inv.path("b"));
    const DeLongResult d = delong(a, b);
    result = {{"auc_a", d.auc_a}, {"auc_b", d.auc_b}, {"variance", d.variance}, {"z", d.z}, {"p", d.p}};
    std::cout << "AUC A " << d.auc_a << "\nAUC B " << d.auc_b << "\nz " << d.z << "\np " << d.p << "\n";
  } else {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& r : a) {
      scores.push_back(r.score);
      labels.push_back(r.label);
    }
    const double value = auc(scores, labels);
    const double var = auc_variance(scores, labels);
    const double z = var > 0.0 ? (value - 0.5) / std::sqrt(var) : 0.0;
    const double pv = std::erfc(std::fabs(z) / std::sqrt(2.0));
    result = {{"auc", value}, {"variance", var}, {"z", z}, {"p", pv}};
    std::cout << "AUC " << value << "\nz " << z << " (against 0.5)\np " << pv << "\n";
  }
  const fs::path out = inv.out();
  write_json(out / "eval.json", result);
  return {out / "eval.json"};
}

std::vector<Variant> suite(const std::string& name, const ModelConfig& base) {
  if (name == "ablation") return ablation_variants(base);
  if (name == "baselines") return baseline_variants(base);
  if (name == "all") {
    auto v = baseline_variants(base);
    for (auto& x : ablation_variants(base)) v.push_back(std::move(x));
    return v;
  }
  std::vector<Variant> v;
  std::stringstream ss(name);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) v.push_back(variant_by_name(item, base));
  if (v.empty()) throw ContractError("ablate.suite names no variants");
  return v;
}

Outputs cmd_ablate(const Invocation& inv) {
  const PipelineConfig p = pipeline_config(inv.config);
  const auto variants = suite(inv.config.at("ablate").at("suite").get<std::string>(), p.model);
  const auto seed_list = seeds(inv.config);
  const ExperimentData data = load_data(inv);
  const fs::path out = inv.out();
  const auto rows = run_ablation_suite(data, variants, p, seed_list, out / "variants");
  write_ablation_csv(out / "ablation.csv", rows);
  const std::string table = format_ablation_table(rows);
  std::ofstream(out / "table.txt") << table;
  std::cout << table;
  return {out / "ablation.csv", out / "table.txt"};
}

Outputs cmd_analyze(const Invocation& inv) {
  const Lexicon lexicon = with_sentiment_union(read_lexicon(inv.path("lexicon")));
  const fs::path out = inv.out();
  Outputs written;
  std::vector<TokenRecord> records;
  if (inv.has("diagnostics")) {
    records = read_diagnostics_csv(inv.path("diagnostics"));
  } else {
    if (!inv.has("from")) throw ContractError("analyze needs --from or --diagnostics");
    if (!inv.has("samples")) throw ContractError("analyze --from needs --samples");
    const fs::path from = inv.path("from");
    check_same_data(inv, stage_record(from, {"align", "finetune"}), from);
    const PipelineConfig p = pipeline_config(inv.config);
    const ExperimentData data = load_data(inv);
    const Model<float> m = Model<float>::load(from / "model.json");
    for (const auto& e : data.test)
      for (auto& t : token_diagnostics(m, e.seq, data.vocab, e.id, p.align.stw_config, p.align.salmon))
        if (t.modality == Modality::Text) records.push_back(std::move(t));
    write_diagnostics_csv(out / "diagnostics.csv", records);
    written.push_back(out / "diagnostics.csv");
  }
  const RatioTable table = likelihood_ratio_by_category(records, lexicon);
  write_ratio_table_csv(out / "ratios.csv", table);
  std::cout << format_ratio_table(table);
  written.push_back(out / "ratios.csv");
  return written;
}

Outputs cmd_backtest(const Invocation& inv) {
  const BacktestConfig config = backtest_config(inv.config);
  const Universe universe(read_universe_csv(inv.path("universe")));
  const fs::path out = inv.out();
  Outputs written;
  std::vector<SummaryRow> rows;
  for (const auto& entry : inv.options.at("preds")) {
    auto [name, path] = split_named(entry);
    if (name.empty()) name = fs::path(path).parent_path().filename().string();
    if (name.empty()) name = fs::path(path).stem().string();
    for (const auto& r : rows)
      if (r.model == name) throw ContractError("two prediction files named '" + name + "'; use NAME=PATH");
    const auto records = read_records_csv(path);
    const Backtest bt = run_backtest(records, universe, config);
    const fs::path ledger = out / ("ledger_" + name + ".csv");
    write_ledger_csv(ledger, bt.months);
    written.push_back(ledger);
    rows.push_back({name, bt.stats});
  }
  write_summary_csv(out / "summary.csv", rows);
  written.push_back(out / "summary.csv");
  std::cout << format_summary(rows);
  return written;
}

using Handler = Outputs (*)(const Invocation&);

Handler handler(const std::string& command) {
  static const std::map<std::string, Handler> handlers = {
      {"gen", cmd_gen},           {"curate", cmd_curate},   {"pretrain-text", cmd_pretrain},
      {"align", cmd_align},       {"finetune", cmd_finetune}, {"eval", cmd_eval},
      {"ablate", cmd_ablate},     {"analyze", cmd_analyze}, {"backtest", cmd_backtest},
  };
  return handlers.at(command);
}

const CommandSpec& spec_of(const std::string& command) {
  for (const auto& s : command_specs())
    if (s.name == command) return s;
  throw ContractError("unknown command '" + command + "'");
}

// Every typed view is built once so that a bad setting fails before any work.
void validate_config(const nlohmann::json& config) {
  synthetic_spec(config);
  synthetic_samples(config);
  data_config(config);
  const PipelineConfig p = pipeline_config(config);
  curation_rules(config);
  backtest_config(config);
  seeds(config);
  variant_by_name(config.at("variant").get<std::string>(), p.model);
  suite(config.at("ablate").at("suite").get<std::string>(), p.model);
}

// Checks the inputs and hashes them.
void record_inputs(Invocation& inv) {
  inv.inputs.clear();
  if (!inv.config_path.empty()) inv.inputs.push_back({"config", inv.config_path, git_blob_sha1(inv.config_path)});
  for (const auto& o : spec_of(inv.command).options) {
    if (o.kind != Kind::Input || !inv.has(o.name)) continue;
    for (const auto& entry : inv.options.at(o.name)) {
      const auto [name, path] = split_named(entry);
      if (!fs::exists(path)) throw DataError("--" + o.name + ": " + path + " does not exist");
      inv.inputs.push_back({name.empty() ? o.name : o.name + ":" + name, path, git_blob_sha1(path)});
    }
  }
}

RunManifest execute(Invocation& inv) {
  validate_config(inv.config);
  record_inputs(inv);
  fs::create_directories(inv.out());
  const Outputs written = handler(inv.command)(inv);
  RunManifest m;
  m.command = inv.command;
  m.argv = inv.argv;
  m.config_path = inv.config_path;
  m.config = inv.config;
  m.seed = inv.seed();
  m.options = inv.options;
  m.inputs = inv.inputs;
  for (const auto& p : written) m.outputs.push_back({p.filename().string(), p, git_blob_sha1(p)});
  m.write(inv.out() / "manifest.json");
  return m;
}

struct Parsed {
  std::string config, data, seed;
  std::vector<std::string> sets;
  bool verbose = false, quiet = false;
  std::map<std::string, std::string> single;
  std::map<std::string, std::vector<std::string>> multi;
};

fs::path abs_path(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

Invocation resolve(const CommandSpec& spec, const Parsed& parsed, const CLI::App& sub, std::vector<std::string> argv) {
  Invocation inv;
  inv.command = spec.name;
  inv.argv = std::move(argv);
  inv.config = default_config();
  if (!parsed.config.empty()) {
    inv.config_path = abs_path(parsed.config);
    for (const auto& [key, value] : read_config_file(inv.config_path)) apply_setting(inv.config, key, value);
  }
  for (const auto& s : parsed.sets) {
    const auto [key, value] = parse_assignment(s);
    apply_setting(inv.config, key, value);
  }
  if (sub.count("--seed")) apply_setting(inv.config, "seed", parse_value(parsed.seed));

  fs::path data_dir = parsed.data;
  if (data_dir.empty()) {
    const char* env = std::getenv("MSITT_DATA_DIR");
    data_dir = env && *env ? fs::path(env) : fs::current_path();
  }
  data_dir = abs_path(data_dir);

  for (const auto& o : spec.options) {
    const std::string flag = "--" + o.name;
    const bool given = sub.count(flag) > 0;
    if (o.kind == Kind::Setting) {
      if (given) apply_setting(inv.config, o.target, parse_value(parsed.single.at(o.name)));
      continue;
    }
    std::vector<std::string> values;
    if (given) {
      values = o.multi ? parsed.multi.at(o.name) : std::vector<std::string>{parsed.single.at(o.name)};
      for (auto& v : values) {
        const auto [name, path] = split_named(v);
        v = (name.empty() ? "" : name + "=") + abs_path(path).string();
      }
    } else if (!o.target.empty()) {
      const fs::path fallback = (data_dir / o.target).lexically_normal();
      if (o.kind == Kind::OutDir || o.required || fs::exists(fallback)) values.push_back(fallback.string());
    } else if (o.required) {
      throw ContractError(flag + " is required");
    }
    if (!values.empty()) inv.options[o.name] = std::move(values);
  }
  return inv;
}

Invocation from_manifest(const RunManifest& m) {
  spec_of(m.command);
  Invocation inv;
  inv.command = m.command;
  inv.argv = m.argv;
  inv.config_path = m.config_path;
  inv.config = m.config;
  inv.options = m.options;
  return inv;
}

// Re-executes a recorded run and checks its inputs and outputs byte for byte.
int rerun(const fs::path& manifest_path) {
  const RunManifest recorded = RunManifest::read(manifest_path);
  Invocation inv = from_manifest(recorded);
  for (const auto& r : recorded.inputs)
    if (!fs::exists(r.path) || git_blob_sha1(r.path) != r.sha1)
      throw DataError("input " + r.path.string() + " changed since the recorded run");
  const RunManifest fresh = execute(inv);
  int differing = 0;
  for (const auto& r : recorded.outputs) {
    const auto it = std::find_if(fresh.outputs.begin(), fresh.outputs.end(),
                                 [&](const FileRecord& f) { return f.path == r.path; });
    if (it == fresh.outputs.end() || it->sha1 != r.sha1) {
      spdlog::error("output {} differs from the recorded run", r.path.string());
      ++differing;
    }
  }
  if (differing > 0 || fresh.outputs.size() != recorded.outputs.size())
    throw DataError(std::to_string(differing) + " output(s) differ from the recorded run");
  std::cout << "reproduced " << fresh.outputs.size() << " output(s) byte for byte\n";
  return 0;
}

void set_logging(bool verbose, bool quiet) {
  auto logger = std::make_shared<spdlog::logger>("msitt", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
  logger->set_level(quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_default_logger(logger);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multimodal text and time-series language model toolkit", "msitt"};
  app.require_subcommand(1);
  std::map<std::string, Parsed> parsed;
  std::map<std::string, CLI::App*> subs;

  auto add_common = [](CLI::App* sub, Parsed& p) {
    sub->add_option("--config", p.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", p.sets, "config override KEY=VALUE, repeatable")->allow_extra_args(false);
    sub->add_option("--data", p.data, "data directory for default paths (default: $MSITT_DATA_DIR or .)");
    sub->add_option("--seed", p.seed, "run seed");
    sub->add_flag("-v,--verbose", p.verbose, "debug logging");
    sub->add_flag("-q,--quiet", p.quiet, "warnings and errors only");
  };
  for (const auto& spec : command_specs()) {
    CLI::App* sub = app.add_subcommand(spec.name, spec.help);
    Parsed& p = parsed[spec.name];
    add_common(sub, p);
    for (const auto& o : spec.options) {
      std::string help = o.help;
      if (o.kind == Kind::Setting)
        help += " (config key " + o.target + ")";
      else if (!o.target.empty())
        help += " (default: <data>/" + o.target + ")";
      if (o.multi)
        sub->add_option("--" + o.name, p.multi[o.name], help)->allow_extra_args(false);
      else
        sub->add_option("--" + o.name, p.single[o.name], help);
    }
    subs[spec.name] = sub;
  }
  std::string manifest;
  CLI::App* rerun_cmd = app.add_subcommand("rerun", "Repeat a recorded run and verify its outputs byte for byte");
  rerun_cmd->add_option("manifest", manifest, "manifest.json of the run")->required()->check(CLI::ExistingFile);
  bool rerun_quiet = false;
  rerun_cmd->add_flag("-q,--quiet", rerun_quiet, "warnings and errors only");
  Parsed config_opts;
  CLI::App* config_cmd = app.add_subcommand("config", "Print the resolved configuration as key = value lines");
  add_common(config_cmd, config_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (rerun_cmd->parsed()) {
      set_logging(false, rerun_quiet);
      return rerun(manifest);
    }
    if (config_cmd->parsed()) {
      set_logging(false, true);
      CommandSpec none{"config", "", {}};
      const Invocation inv = resolve(none, config_opts, *config_cmd, args);
      validate_config(inv.config);
      std::cout << format_config(inv.config);
      return 0;
    }
    for (const auto& spec : command_specs()) {
      if (!subs.at(spec.name)->parsed()) continue;
      const Parsed& p = parsed.at(spec.name);
      set_logging(p.verbose, p.quiet);
      Invocation inv = resolve(spec, p, *subs.at(spec.name), args);
      execute(inv);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace msitt
