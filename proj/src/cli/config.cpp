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

#include "msitt/cli/config.hpp"

#include "msitt/common/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace msitt {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Keys derived from the data or fixed by the command are left out of the schema.
nlohmann::json train_section(const TrainConfig& c) {
  nlohmann::json j = c.to_json();
  for (const char* k : {"stage", "seed", "view", "checkpoint_every"}) j.erase(k);
  return j;
}

std::vector<std::string> split_key(const std::string& key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

nlohmann::json coerce(const std::string& key, const nlohmann::json& current, const nlohmann::json& value) {
  auto fail = [&](const char* expected) {
    return ContractError("config key '" + key + "' expects " + expected + ", got " + value.dump());
  };
  if (current.is_boolean()) {
    if (!value.is_boolean()) throw fail("true or false");
    return value;
  }
  if (current.is_number_unsigned()) {
    if (value.is_number_unsigned()) return value;
    throw fail("a non-negative integer");
  }
  if (current.is_number_integer()) {
    if (value.is_number_integer()) return value;
    if (value.is_number_float() && value.get<double>() == static_cast<double>(static_cast<long>(value.get<double>())))
      return static_cast<long>(value.get<double>());
    throw fail("an integer");
  }
  if (current.is_number_float()) {
    if (!value.is_number()) throw fail("a number");
    return value.get<double>();
  }
  if (current.is_string()) {
    if (value.is_string()) return value;
    if (value.is_number() || value.is_boolean()) return value.dump();
    throw fail("a string");
  }
  if (current.is_array()) {
    nlohmann::json list = value;
    if (value.is_string()) {
      list = nlohmann::json::array();
      std::stringstream ss(value.get<std::string>());
      std::string item;
      while (std::getline(ss, item, ',')) list.push_back(parse_value(item));
    } else if (!value.is_array()) {
      list = nlohmann::json::array({value});
    }
    for (const auto& v : list)
      if (!v.is_number_unsigned()) throw fail("a list of non-negative integers");
    if (list.empty()) throw fail("a non-empty list");
    return list;
  }
  throw fail("a section");
}

}  // namespace

nlohmann::json default_config() {
  const SyntheticSpec spec;
  const PipelineConfig p = toy_pipeline();
  DataConfig data;
  data.max_train = 1000;
  nlohmann::json model = p.model.to_json();
  for (const char* k : {"vocab", "bins", "channels", "seed"}) model.erase(k);
  const CurationRules rules;
  const BacktestConfig bt;
  nlohmann::json data_j = data.to_json();
  data_j.erase("seed");
  return {
      {"seed", 1u},
      {"seeds", {1u, 2u, 3u}},
      {"variant", "salmon_stw"},
      {"synthetic",
       {{"companies", spec.companies},
        {"samples", 3000u},
        {"kappa", spec.kappa},
        {"filler_vocab", spec.filler_vocab},
        {"stay_prob", spec.stay_prob},
        {"article_rate", spec.article_rate},
        {"words_per_article", spec.words_per_article},
        {"salient_prob", spec.salient_prob},
        {"event_prob", spec.event_prob},
        {"event_fidelity", spec.event_fidelity},
        {"reaction_window", spec.reaction_window},
        {"reaction_scale", spec.reaction_scale},
        {"noise_channels", spec.noise_channels}}},
      {"data", data_j},
      {"model", model},
      {"adapter_rank", p.adapter_rank},
      {"pretrain", train_section(p.pretrain)},
      {"align", train_section(p.align)},
      {"finetune", train_section(p.finetune)},
      {"curate",
       {{"max_words", rules.max_words},
        {"min_chars", rules.min_chars},
        {"max_chars", rules.max_chars},
        {"max_numeric_fraction", rules.max_numeric_fraction},
        {"max_jaccard", rules.max_jaccard},
        {"stride", 1}}},
      {"ablate", {{"suite", "ablation"}, {"diagnostics", false}}},
      {"backtest",
       {{"min_mktcap", bt.screen.min_mktcap},
        {"min_adv", bt.screen.min_adv},
        {"cost_rate", bt.cost_rate},
        {"risk_free", bt.risk_free}}},
  };
}

nlohmann::json parse_value(std::string_view text) {
  const std::string t = trim(text);
  auto j = nlohmann::json::parse(t, nullptr, false);
  if (!j.is_discarded()) return j;
  return t;
}

std::vector<std::pair<std::string, nlohmann::json>> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config " + path.string());
  std::vector<std::pair<std::string, nlohmann::json>> out;
  std::string line, section;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    // a '#' inside a quoted string is kept
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ParseError(path.string() + ":" + std::to_string(no) + ": unterminated section");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(path.string() + ":" + std::to_string(no) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ParseError(path.string() + ":" + std::to_string(no) + ": empty key");
    out.emplace_back(section.empty() ? key : section + "." + key, parse_value(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

void apply_setting(nlohmann::json& config, const std::string& key, const nlohmann::json& value) {
  nlohmann::json* node = &config;
  for (const auto& part : split_key(key)) {
    if (!node->is_object() || !node->contains(part)) throw ContractError("unknown config key '" + key + "'");
    node = &(*node)[part];
  }
  if (node->is_object()) throw ContractError("config key '" + key + "' is a section");
  *node = coerce(key, *node, value);
}

std::pair<std::string, nlohmann::json> parse_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ContractError("expected key=value, got '" + std::string(text) + "'");
  return {trim(text.substr(0, eq)), parse_value(text.substr(eq + 1))};
}

std::string format_config(const nlohmann::json& config) {
  std::map<std::string, std::string> flat;
  auto walk = [&](auto&& self, const nlohmann::json& j, const std::string& prefix) -> void {
    for (const auto& [k, v] : j.items()) {
      const std::string key = prefix.empty() ? k : prefix + "." + k;
      if (v.is_object())
        self(self, v, key);
      else
        flat[key] = v.dump();
    }
  };
  walk(walk, config, "");
  std::string out;
  for (const auto& [k, v] : flat) out += k + " = " + v + "\n";
  return out;
}

SyntheticSpec synthetic_spec(const nlohmann::json& config) {
  const auto& s = config.at("synthetic");
  SyntheticSpec spec;
  spec.companies = s.at("companies").get<int>();
  spec.kappa = s.at("kappa").get<double>();
  spec.filler_vocab = s.at("filler_vocab").get<int>();
  spec.stay_prob = s.at("stay_prob").get<double>();
  spec.article_rate = s.at("article_rate").get<double>();
  spec.words_per_article = s.at("words_per_article").get<int>();
  spec.salient_prob = s.at("salient_prob").get<double>();
  spec.event_prob = s.at("event_prob").get<double>();
  spec.event_fidelity = s.at("event_fidelity").get<double>();
  spec.reaction_window = s.at("reaction_window").get<int>();
  spec.reaction_scale = s.at("reaction_scale").get<double>();
  spec.noise_channels = s.at("noise_channels").get<int>();
  spec.seed = config.at("seed").get<std::uint64_t>();
  validate(spec);
  return spec;
}

std::size_t synthetic_samples(const nlohmann::json& config) {
  const auto n = config.at("synthetic").at("samples").get<std::size_t>();
  if (n == 0) throw ContractError("synthetic.samples must be positive");
  return n;
}

DataConfig data_config(const nlohmann::json& config) {
  DataConfig d = DataConfig::from_json(config.at("data"));
  d.seed = config.at("seed").get<std::uint64_t>();
  if (d.horizon != 7 && d.horizon != 30) throw ContractError("data.horizon must be 7 or 30");
  if (d.max_length < 8) throw ContractError("data.max_length must be at least 8");
  if (d.bins < 2) throw ContractError("data.bins must be at least 2");
  return d;
}

PipelineConfig pipeline_config(const nlohmann::json& config) {
  PipelineConfig base = toy_pipeline();
  nlohmann::json j = base.to_json();
  j["model"].update(config.at("model"));
  for (const char* stage : {"pretrain", "align", "finetune"}) j[stage].update(config.at(stage));
  j["model"]["vocab"] = 64;  // placeholder for validation; the data sets the real size
  j["adapter_rank"] = config.at("adapter_rank");
  j["diagnostics"] = config.at("ablate").at("diagnostics");
  PipelineConfig p = PipelineConfig::from_json(j);
  p.pretrain.stage = Stage::TextPretrain;
  p.align.stage = Stage::Salmon;
  p.finetune.stage = Stage::Finetune;
  if (p.adapter_rank <= 0) throw ContractError("adapter_rank must be positive");
  for (const TrainConfig* c : {&p.pretrain, &p.align, &p.finetune}) c->validate();
  p.model.vocab = 0;
  return p;
}

CurationRules curation_rules(const nlohmann::json& config) {
  const auto& c = config.at("curate");
  CurationRules r;
  r.max_words = c.at("max_words").get<std::size_t>();
  r.min_chars = c.at("min_chars").get<std::size_t>();
  r.max_chars = c.at("max_chars").get<std::size_t>();
  r.max_numeric_fraction = c.at("max_numeric_fraction").get<double>();
  r.max_jaccard = c.at("max_jaccard").get<double>();
  if (r.max_words == 0 || r.min_chars >= r.max_chars) throw ContractError("curate limits are empty");
  if (c.at("stride").get<int>() < 1) throw ContractError("curate.stride must be at least 1");
  return r;
}

BacktestConfig backtest_config(const nlohmann::json& config) {
  const auto& b = config.at("backtest");
  BacktestConfig c;
  c.screen.min_mktcap = b.at("min_mktcap").get<double>();
  c.screen.min_adv = b.at("min_adv").get<double>();
  c.cost_rate = b.at("cost_rate").get<double>();
  c.risk_free = b.at("risk_free").get<double>();
  c.horizon = config.at("data").at("horizon").get<int>();
  if (c.cost_rate < 0.0) throw ContractError("backtest.cost_rate must be non-negative");
  return c;
}

std::vector<std::uint64_t> seeds(const nlohmann::json& config) {
  return config.at("seeds").get<std::vector<std::uint64_t>>();
}

}  // namespace msitt
