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

#include "msitt/cli/manifest.hpp"

#include "msitt/common/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace msitt {

namespace {

std::string sha1_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
    throw Error("SHA-1 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

nlohmann::json records_json(const std::vector<FileRecord>& records) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : records) out.push_back({{"role", r.role}, {"path", r.path.string()}, {"sha1", r.sha1}});
  return out;
}

std::vector<FileRecord> records_from(const nlohmann::json& j) {
  std::vector<FileRecord> out;
  for (const auto& r : j)
    out.push_back({r.at("role").get<std::string>(), r.at("path").get<std::string>(), r.at("sha1").get<std::string>()});
  return out;
}

}  // namespace

std::string git_blob_sha1_bytes(const std::string& bytes) {
  std::string data = "blob " + std::to_string(bytes.size());
  data.push_back('\0');
  data += bytes;
  return sha1_hex(data);
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) {
    std::vector<std::string> lines;
    for (const auto& entry : std::filesystem::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
        lines.push_back(entry.path().filename().string() + " " + git_blob_sha1(entry.path()));
    std::sort(lines.begin(), lines.end());
    std::string listing;
    for (const auto& l : lines) listing += l + "\n";
    return git_blob_sha1_bytes(listing);
  }
  return git_blob_sha1_bytes(slurp(path));
}

nlohmann::json RunManifest::to_json() const {
  return {{"format", "msitt-manifest"},
          {"version", 1},
          {"command", command},
          {"argv", argv},
          {"config_path", config_path.string()},
          {"config", config},
          {"seed", seed},
          {"options", options},
          {"inputs", records_json(inputs)},
          {"outputs", records_json(outputs)}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "msitt-manifest" || j.value("version", 0) != 1)
    throw ParseError("not a version-1 run manifest");
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.config_path = j.at("config_path").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.options = j.at("options").get<std::map<std::string, std::vector<std::string>>>();
    m.inputs = records_from(j.at("inputs"));
    m.outputs = records_from(j.at("outputs"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

RunManifest RunManifest::read(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(path.string() + ": not JSON");
  return from_json(j);
}

}  // namespace msitt
