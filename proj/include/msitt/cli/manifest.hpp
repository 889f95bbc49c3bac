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

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace msitt {

/// Hex SHA-1 of "blob <size>\0" followed by the file bytes, as git computes
/// object ids. For a directory, the hash of the sorted "name hash" lines of
/// its regular files.
std::string git_blob_sha1(const std::filesystem::path& path);
std::string git_blob_sha1_bytes(const std::string& bytes);

struct FileRecord {
  std::string role;  // option name, or the artifact name for outputs
  std::filesystem::path path;
  std::string sha1;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // as typed, without the program name
  std::filesystem::path config_path;  // empty without --config
  nlohmann::json config;              // resolved snapshot
  std::uint64_t seed = 0;
  std::map<std::string, std::vector<std::string>> options;  // resolved command options, absolute paths
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

}  // namespace msitt
