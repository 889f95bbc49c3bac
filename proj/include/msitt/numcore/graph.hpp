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
#include "msitt/numcore/params.hpp"
#include "msitt/numcore/tensor.hpp"

#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

namespace msitt {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  const Matrix<Scalar>& value() const { return graph_->value(id_); }
  Graph<Scalar>& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

/// Tape of operations recorded in creation order, which is a topological
/// order. backward() walks it once in reverse; leaf gradients accumulate.
///
/// A graph built with record = false keeps values only: no closures, no saved
/// activations, no gradients. Parameters are referenced, never copied.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  /// Receives the graph and the id of the node whose gradient is ready.
  using Backward = std::function<void(Graph&, int)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var<Scalar> constant(Mat value) { return push(std::move(value), nullptr, false, {}); }

  /// Free leaf; requires_grad is honoured only on a recording graph.
  Var<Scalar> leaf(Mat value, bool requires_grad) {
    return push(std::move(value), nullptr, requires_grad && record_, {});
  }

  /// Leaf bound to a ParamStore entry. Repeated uses return the same node, so
  /// every use contributes to one gradient. Frozen entries never get one.
  Var<Scalar> parameter(const ParamStore<Scalar>& store, int id) {
    if (store_ != nullptr && store_ != &store)
      throw ContractError("graph already bound to a different parameter store");
    store_ = &store;
    if (static_cast<int>(param_nodes_.size()) < store.size())
      param_nodes_.resize(static_cast<std::size_t>(store.size()), -1);
    int& slot = param_nodes_[static_cast<std::size_t>(id)];
    if (slot >= 0) return Var<Scalar>(this, slot);
    Var<Scalar> v = push(Mat(), &store.value(id), record_ && store.trainable(id), {});
    nodes_.back().param = id;
    slot = v.id();
    return v;
  }

  /// Records an operation result. The closure is dropped when no parent needs
  /// a gradient.
  Var<Scalar> emit(Mat value, std::initializer_list<Var<Scalar>> parents, Backward backward) {
    bool needs = false;
    if (record_)
      for (const auto& p : parents) needs = needs || nodes_[static_cast<std::size_t>(p.id())].needs_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward());
  }

  Var<Scalar> emit(Mat value, const std::vector<Var<Scalar>>& parents, Backward backward) {
    bool needs = false;
    if (record_)
      for (const auto& p : parents) needs = needs || nodes_[static_cast<std::size_t>(p.id())].needs_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : Backward());
  }

  const Mat& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external != nullptr ? *n.external : n.value;
  }

  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  bool needs_grad(Var<Scalar> v) const { return needs_grad(v.id()); }

  /// Gradient buffer of a node, zero-initialised on first touch.
  Mat& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      const Mat& v = value(id);
      n.grad = Mat::Zero(v.rows(), v.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Accumulates into a parent only if it participates in differentiation.
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    if (!needs_grad(id)) return;
    grad(id).noalias() += g;
  }

  const Mat* grad_of(Var<Scalar> v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    return n.has_grad ? &n.grad : nullptr;
  }

  void backward(Var<Scalar> root) {
    if (!record_) throw ContractError("backward on a non-recording graph");
    const Mat& rv = value(root.id());
    if (rv.size() != 1) throw DimensionError("backward root must be a scalar, got " + shape_string(rv));
    if (!needs_grad(root.id())) return;
    grad(root.id()).setOnes();
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  /// (parameter id, gradient) for every trainable parameter reached by
  /// backward(), in parameter-id order.
  std::vector<std::pair<int, Mat>> parameter_grads() const {
    std::vector<std::pair<int, Mat>> out;
    for (std::size_t pid = 0; pid < param_nodes_.size(); ++pid) {
      const int node = param_nodes_[pid];
      if (node < 0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(node)];
      if (n.has_grad) out.emplace_back(static_cast<int>(pid), n.grad);
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool has_grad = false;
    bool needs_grad = false;
    int param = -1;
    Backward backward;
  };

  Var<Scalar> push(Mat value, const Mat* external, bool needs, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.external = external;
    n.needs_grad = needs;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  bool record_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
  const ParamStore<Scalar>* store_ = nullptr;
};

}  // namespace msitt
