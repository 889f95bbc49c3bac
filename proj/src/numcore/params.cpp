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

#include "msitt/numcore/params.hpp"

#include <array>
#include <utility>

namespace msitt {

namespace {
constexpr std::array<std::pair<ParamGroup, std::string_view>, 9> kGroupNames{{
    {ParamGroup::TextBranch, "text_branch"},
    {ParamGroup::TsBranch, "ts_branch"},
    {ParamGroup::TextEmbedding, "text_embedding"},
    {ParamGroup::TsEmbedding, "ts_embedding"},
    {ParamGroup::TextHead, "text_head"},
    {ParamGroup::TsHead, "ts_head"},
    {ParamGroup::Classifier, "classifier"},
    {ParamGroup::Adapter, "adapter"},
    {ParamGroup::Other, "other"},
}};
}  // namespace

std::string_view to_string(ParamGroup group) {
  for (const auto& [g, n] : kGroupNames)
    if (g == group) return n;
  return "other";
}

ParamGroup param_group_from_string(std::string_view name) {
  for (const auto& [g, n] : kGroupNames)
    if (n == name) return g;
  throw ParseError("unknown parameter group: " + std::string(name));
}

}  // namespace msitt
