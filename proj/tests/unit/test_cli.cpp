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
#include "msitt/corpus/dataset.hpp"
#include "msitt/evalkit/evalkit.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

using namespace msitt;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "msitt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("msitt_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTiny =
    "[model]\nlayers = 2\nd_model = 16\nheads = 2\nmlp_hidden = 32\nd_ts = 8\nclassifier_hidden = 16\n"
    "[pretrain]\nepochs = 1\n[align]\nepochs = 1\n[finetune]\nepochs = 1\n"
    "[data]\nmax_length = 48\nmax_train = 120\n";

}  // namespace

TEST_CASE("config files: sections, comments, literals", "[cli]") {
  const fs::path dir = scratch("config");
  write(dir / "a.toml",
        "seed = 9  # trailing comment\n"
        "variant = \"salmon\"\n"
        "[model]\n"
        "layers = 2\n"
        "experts = shared\n"
        "[finetune]\n"
        "lr = 1e-4\n"
        "select_by_validation = false\n"
        "seeds = [4, 5]\n");
  const auto pairs = read_config_file(dir / "a.toml");
  REQUIRE(pairs.size() == 7);
  CHECK(pairs[0].first == "seed");
  CHECK(pairs[3].first == "model.experts");
  CHECK(pairs[3].second == "shared");
  CHECK(pairs[6].first == "finetune.seeds");

  nlohmann::json c = default_config();
  for (int i = 0; i < 6; ++i) apply_setting(c, pairs[i].first, pairs[i].second);
  CHECK_THROWS_AS(apply_setting(c, pairs[6].first, pairs[6].second), ContractError);
  const PipelineConfig p = pipeline_config(c);
  CHECK(p.model.layers == 2);
  CHECK(p.model.experts == ExpertMode::Shared);
  CHECK(p.finetune.optim.lr == 1e-4);
  CHECK_FALSE(p.finetune.select_by_validation);
  CHECK(p.finetune.stage == Stage::Finetune);
  CHECK(c.at("seed") == 9);

  write(dir / "bad.toml", "[model\nlayers = 2\n");
  CHECK_THROWS_AS(read_config_file(dir / "bad.toml"), ParseError);
  write(dir / "bad2.toml", "layers 2\n");
  CHECK_THROWS_AS(read_config_file(dir / "bad2.toml"), ParseError);
}

TEST_CASE("config settings are type-checked against the schema", "[cli]") {
  nlohmann::json c = default_config();
  CHECK_THROWS_AS(apply_setting(c, "model.nope", 1), ContractError);
  CHECK_THROWS_AS(apply_setting(c, "model", 1), ContractError);
  CHECK_THROWS_AS(apply_setting(c, "data.horizon", "x"), ContractError);
  CHECK_THROWS_AS(apply_setting(c, "data.horizon", 7.5), ContractError);
  CHECK_THROWS_AS(apply_setting(c, "seed", -1), ContractError);
  CHECK_THROWS_AS(apply_setting(c, "finetune.stw", 1), ContractError);
  apply_setting(c, "synthetic.kappa", 0);
  CHECK(c.at("synthetic").at("kappa").is_number_float());
  apply_setting(c, "seeds", parse_value("4,5,6"));
  CHECK(seeds(c) == std::vector<std::uint64_t>{4, 5, 6});
  apply_setting(c, "data.horizon", 7);
  CHECK(data_config(c).horizon == 7);
  apply_setting(c, "data.horizon", 10);
  CHECK_THROWS_AS(data_config(c), ContractError);

  const auto [key, value] = parse_assignment("align.lr=0.002");
  CHECK(key == "align.lr");
  CHECK(value.get<double>() == 0.002);
  CHECK_THROWS_AS(parse_assignment("align.lr"), ContractError);
}

TEST_CASE("format_config reads back to the same config", "[cli]") {
  nlohmann::json c = default_config();
  apply_setting(c, "model.layers", 6);
  apply_setting(c, "variant", "cross_all");
  const fs::path dir = scratch("format");
  write(dir / "round.toml", format_config(c));
  nlohmann::json back = default_config();
  for (const auto& [k, v] : read_config_file(dir / "round.toml")) apply_setting(back, k, v);
  CHECK(back == c);
}

TEST_CASE("git blob hashes match git hash-object", "[cli]") {
  CHECK(git_blob_sha1_bytes("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1_bytes("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  const fs::path dir = scratch("hash");
  write(dir / "x.txt", "hello\n");
  CHECK(git_blob_sha1(dir / "x.txt") == "ce013625030ba8dba906f756967f9e9ca394464a");
  const std::string before = git_blob_sha1(dir);
  write(dir / "manifest.json", "{}");
  CHECK(git_blob_sha1(dir) == before);
  write(dir / "y.txt", "y");
  CHECK(git_blob_sha1(dir) != before);
}

TEST_CASE("manifest JSON round trip", "[cli]") {
  RunManifest m;
  m.command = "align";
  m.argv = {"align", "--steps", "3"};
  m.config = default_config();
  m.seed = 4;
  m.options["out"] = {"/tmp/o"};
  m.inputs.push_back({"samples", "/tmp/s.jsonl", "abc"});
  m.outputs.push_back({"metrics.csv", "/tmp/o/metrics.csv", "def"});
  const RunManifest back = RunManifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  CHECK_THROWS_AS(RunManifest::from_json(nlohmann::json{{"format", "other"}}), ParseError);
}

TEST_CASE("raw article JSONL round trip", "[cli]") {
  const fs::path dir = scratch("raw");
  std::vector<RawArticle> raw{{"C1", {"C1", "C2"}, "2020-01-02T10:00", "t", "some text", "wire"},
                              {"C2", {}, "2020-01-03", "", "more", ""}};
  write_raw_jsonl(dir / "raw.jsonl", raw);
  const auto back = read_raw_jsonl(dir / "raw.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].tickers == raw[0].tickers);
  CHECK(back[1].text == "more");
  write(dir / "broken.jsonl", "{\"company\":\"C1\"}\n");
  CHECK_THROWS_AS(read_raw_jsonl(dir / "broken.jsonl"), ParseError);
}

TEST_CASE("exit codes", "[cli]") {
  const fs::path dir = scratch("exit");
  CHECK(cli({}) == 2);
  CHECK(cli({"gen", "--bogus"}) == 2);
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({"gen", "--help"}) == 0);
  CHECK(cli({"pretrain-text", "--data", dir.string()}) == 1);  // no samples
  CHECK(cli({"gen", "--data", dir.string(), "--set", "model.nope=3"}) == 1);
  CHECK(cli({"eval", "--data", dir.string()}) == 1);  // --a is required
  CHECK(cli({"config", "--set", "data.horizon=30", "-q"}) == 0);
  CHECK_FALSE(fs::exists(dir / "runs"));
}

TEST_CASE("pipeline through the command line, rerun byte-identical", "[cli]") {
  const fs::path dir = scratch("pipeline");
  write(dir / "tiny.toml", kTiny);
  const std::string data = dir.string();
  const std::string cfg = (dir / "tiny.toml").string();
  REQUIRE(cli({"gen", "--data", data, "--seed", "3", "--count", "300", "-q"}) == 0);
  for (const char* f : {"raw_articles.jsonl", "samples.jsonl", "prices.csv", "universe.csv", "lexicon.tsv",
                        "panel.jsonl"})
    CHECK(fs::exists(dir / f));

  REQUIRE(cli({"curate", "--data", data, "--config", cfg, "-q"}) == 0);
  CHECK(fs::file_size(dir / "curated" / "samples.jsonl") > 0);

  REQUIRE(cli({"pretrain-text", "--data", data, "--config", cfg, "-q"}) == 0);
  // an aligned variant cannot skip alignment
  CHECK(cli({"finetune", "--data", data, "--config", cfg, "--from", (dir / "runs/pretrain-text").string(),
             "--variant", "salmon", "-q"}) == 1);
  REQUIRE(cli({"align", "--data", data, "--config", cfg, "--steps", "2", "-q"}) == 0);
  // different model settings than the checkpoint
  CHECK(cli({"finetune", "--data", data, "--config", cfg, "--set", "model.d_ts=4", "-q"}) == 1);
  REQUIRE(cli({"finetune", "--data", data, "--config", cfg, "--panel", (dir / "panel.jsonl").string(), "-q"}) == 0);
  CHECK(read_records_csv(dir / "runs/finetune/panel_predictions.csv").size() ==
        read_jsonl(dir / "panel.jsonl").size());
  REQUIRE(cli({"eval", "--data", data, "--a", (dir / "runs/finetune/predictions.csv").string(), "-q"}) == 0);
  REQUIRE(cli({"backtest", "--data", data, "-q"}) == 0);
  CHECK(fs::exists(dir / "runs/backtest/ledger_finetune.csv"));
  REQUIRE(cli({"backtest", "--data", data, "--preds",
               "panel=" + (dir / "runs/finetune/panel_predictions.csv").string(), "--out",
               (dir / "runs/backtest-panel").string(), "-q"}) == 0);
  CHECK(fs::exists(dir / "runs/backtest-panel/ledger_panel.csv"));
  REQUIRE(cli({"analyze", "--data", data, "--config", cfg, "-q"}) == 0);
  CHECK(fs::exists(dir / "runs/analyze/ratios.csv"));

  const std::string metrics = slurp(dir / "runs/align/metrics.csv");
  const RunManifest m = RunManifest::read(dir / "runs/align/manifest.json");
  CHECK(m.command == "align");
  CHECK(m.config.at("align").at("max_steps") == 2);
  bool hashed_samples = false;
  for (const auto& r : m.inputs) hashed_samples |= r.role == "samples" && r.sha1 == git_blob_sha1(r.path);
  CHECK(hashed_samples);

  REQUIRE(cli({"rerun", (dir / "runs/align/manifest.json").string(), "-q"}) == 0);
  CHECK(slurp(dir / "runs/align/metrics.csv") == metrics);
  REQUIRE(cli({"rerun", (dir / "runs/finetune/manifest.json").string(), "-q"}) == 0);

  // a changed input refuses to rerun
  std::ofstream(dir / "samples.jsonl", std::ios::app) << "\n";
  CHECK(cli({"rerun", (dir / "runs/align/manifest.json").string(), "-q"}) == 1);
}
