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

#include "msitt/common/error.hpp"
#include "msitt/numcore/tensor.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace msitt {

/// Which partition of the model a tensor belongs to. Freezing and adapter
/// placement are expressed in terms of these groups.
enum class ParamGroup {
  TextBranch,
  TsBranch,
  TextEmbedding,
  TsEmbedding,
  TextHead,
  TsHead,
  Classifier,
  Adapter,
  Other,
};

std::string_view to_string(ParamGroup group);
ParamGroup param_group_from_string(std::string_view name);

/// Named, owned parameter tensors. Graphs reference entries by index and never
/// mutate them; only the optimizer writes values.
template <typename Scalar>
class ParamStore {
 public:
  int add(std::string name, Matrix<Scalar> value, ParamGroup group, bool trainable = true) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    const int id = static_cast<int>(values_.size());
    index_.emplace(name, id);
    values_.push_back(std::move(value));
    entries_.push_back({std::move(name), group, trainable});
    return id;
  }

  int find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? -1 : it->second;
  }

  int at(std::string_view name) const {
    const int id = find(name);
    if (id < 0) throw IndexError("unknown parameter: " + std::string(name));
    return id;
  }

  int size() const { return static_cast<int>(values_.size()); }

  Matrix<Scalar>& value(int id) { return values_.at(static_cast<std::size_t>(id)); }
  const Matrix<Scalar>& value(int id) const { return values_.at(static_cast<std::size_t>(id)); }

  const std::string& name(int id) const { return entries_.at(static_cast<std::size_t>(id)).name; }
  ParamGroup group(int id) const { return entries_.at(static_cast<std::size_t>(id)).group; }
  bool trainable(int id) const { return entries_.at(static_cast<std::size_t>(id)).trainable; }
  void set_trainable(int id, bool on) { entries_.at(static_cast<std::size_t>(id)).trainable = on; }

  void set_group_trainable(ParamGroup group, bool on) {
    for (auto& e : entries_)
      if (e.group == group) e.trainable = on;
  }

  /// Number of scalar entries across trainable tensors.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (int i = 0; i < size(); ++i)
      if (trainable(i)) n += static_cast<std::size_t>(value(i).size());
    return n;
  }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (int i = 0; i < size(); ++i)
      out.add(name(i), value(i).template cast<Other>(), group(i), trainable(i));
    return out;
  }

 private:
  struct Entry {
    std::string name;
    ParamGroup group;
    bool trainable;
  };
  std::vector<Matrix<Scalar>> values_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace msitt
