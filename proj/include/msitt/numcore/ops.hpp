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

// Differentiable primitives over Graph. Each op computes its value eagerly and
// records a closure that pushes the output gradient into its inputs.

#include "msitt/common/error.hpp"
#include "msitt/numcore/graph.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace msitt {

enum class Reduction { Mean, Sum };

namespace detail {

template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
}

/// Row-wise softmax restricted to allowed entries. Rows with no allowed entry
/// (or whose allowed entries are all -inf) become zeros.
template <typename S>
void masked_softmax_inplace(Matrix<S>& x, const Mask* mask) {
  const Eigen::Index cols = x.cols();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index c = 0; c < cols; ++c)
      if (mask == nullptr || (*mask)(r, c)) mx = std::max(mx, x(r, c));
    if (mx == -std::numeric_limits<S>::infinity()) {
      x.row(r).setZero();
      continue;
    }
    S total = 0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (mask == nullptr || (*mask)(r, c)) {
        const S e = std::exp(x(r, c) - mx);
        x(r, c) = e;
        total += e;
      } else {
        x(r, c) = 0;
      }
    }
    x.row(r) /= total;
  }
}

/// dX = Y * (dY - rowsum(dY * Y))
template <typename S>
Matrix<S> softmax_backward(const Matrix<S>& y, const Matrix<S>& gy) {
  const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = (gy.array() * y.array()).rowwise().sum();
  return (y.array() * (gy.array().colwise() - dot.array())).matrix();
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner extents differ " + shape_string(a.value()) + " x " +
                         shape_string(b.value()));
  Matrix<S> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.graph().emit(std::move(out), {a, b}, [ia, ib](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib).transpose();
    if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * go;
  });
}

/// a * b^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: inner extents differ " + shape_string(a.value()) + " x " +
                         shape_string(b.value()) + "^T");
  Matrix<S> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  const int ia = a.id(), ib = b.id();
  return a.graph().emit(std::move(out), {a, b}, [ia, ib](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib);
    if (g.needs_grad(ib)) g.grad(ib).noalias() += go.transpose() * g.value(ia);
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value() + b.value(), {a, b}, [ia, ib](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    g.accumulate(ia, go);
    g.accumulate(ib, go);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.graph().emit(a.value() - b.value(), {a, b}, [ia, ib](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    g.accumulate(ia, go);
    if (g.needs_grad(ib)) g.grad(ib) -= go;
  });
}

/// Elementwise product.
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return a.graph().emit(std::move(out), {a, b}, [ia, ib](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia) += go.cwiseProduct(g.value(ib));
    if (g.needs_grad(ib)) g.grad(ib) += go.cwiseProduct(g.value(ia));
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  const int ia = a.id();
  return a.graph().emit(a.value() * factor, {a}, [ia, factor](Graph<S>& g, int self) {
    g.accumulate(ia, g.grad(self) * factor);
  });
}

/// x (n x d) + row (1 x d) broadcast over rows.
template <typename S>
Var<S> add_row(Var<S> x, Var<S> row) {
  if (row.rows() != 1 || row.cols() != x.cols())
    throw DimensionError("add_row: " + shape_string(x.value()) + " + " + shape_string(row.value()));
  const int ix = x.id(), ir = row.id();
  Matrix<S> out = x.value().rowwise() + row.value().row(0);
  return x.graph().emit(std::move(out), {x, row}, [ix, ir](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    g.accumulate(ix, go);
    if (g.needs_grad(ir)) g.grad(ir) += go.colwise().sum();
  });
}

template <typename S>
Var<S> sum(Var<S> x) {
  Matrix<S> out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id();
  return x.graph().emit(std::move(out), {x}, [ix](Graph<S>& g, int self) {
    const S go = g.grad(self)(0, 0);
    if (g.needs_grad(ix)) g.grad(ix).array() += go;
  });
}

template <typename S>
Var<S> silu(Var<S> x) {
  const Matrix<S> sig = (S(1) / (S(1) + (-x.value().array()).exp())).matrix();
  Matrix<S> out = x.value().cwiseProduct(sig);
  const int ix = x.id();
  return x.graph().emit(std::move(out), {x}, [ix, sig](Graph<S>& g, int self) {
    if (!g.needs_grad(ix)) return;
    const auto& xv = g.value(ix).array();
    const auto d = sig.array() * (S(1) + xv * (S(1) - sig.array()));
    g.grad(ix).array() += g.grad(self).array() * d;
  });
}

template <typename S>
Var<S> tanh(Var<S> x) {
  Matrix<S> out = x.value().array().tanh().matrix();
  const int ix = x.id();
  return x.graph().emit(out, {x}, [ix, out](Graph<S>& g, int self) {
    if (!g.needs_grad(ix)) return;
    g.grad(ix).array() += g.grad(self).array() * (S(1) - out.array().square());
  });
}

/// Selects rows idx[k] of x into row k of the result.
template <typename S>
Var<S> gather_rows(Var<S> x, std::span<const int> idx) {
  Matrix<S> out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= x.rows())
      throw IndexError("gather_rows: row " + std::to_string(idx[k]) + " outside " + shape_string(x.value()));
    out.row(static_cast<Eigen::Index>(k)) = x.value().row(idx[k]);
  }
  const int ix = x.id();
  std::vector<int> rows(idx.begin(), idx.end());
  return x.graph().emit(std::move(out), {x}, [ix, rows = std::move(rows)](Graph<S>& g, int self) {
    if (!g.needs_grad(ix)) return;
    const Matrix<S>& go = g.grad(self);
    Matrix<S>& gx = g.grad(ix);
    for (std::size_t k = 0; k < rows.size(); ++k) gx.row(rows[k]) += go.row(static_cast<Eigen::Index>(k));
  });
}

/// Inverse of two gathers: row k of a goes to out row ia[k], row k of b to
/// out row ib[k]. The index sets must partition [0, rows).
template <typename S>
Var<S> merge_rows(Var<S> a, std::span<const int> ia, Var<S> b, std::span<const int> ib, Eigen::Index rows) {
  if (static_cast<Eigen::Index>(ia.size()) != a.rows() || static_cast<Eigen::Index>(ib.size()) != b.rows())
    throw DimensionError("merge_rows: index count does not match row count");
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols())
    throw DimensionError("merge_rows: column mismatch");
  if (static_cast<Eigen::Index>(ia.size() + ib.size()) != rows)
    throw DimensionError("merge_rows: indices do not cover the output");
  const Eigen::Index cols = a.rows() > 0 ? a.cols() : b.cols();
  Matrix<S> out(rows, cols);
  for (std::size_t k = 0; k < ia.size(); ++k) out.row(ia[k]) = a.value().row(static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < ib.size(); ++k) out.row(ib[k]) = b.value().row(static_cast<Eigen::Index>(k));
  const int xa = a.id(), xb = b.id();
  std::vector<int> ra(ia.begin(), ia.end()), rb(ib.begin(), ib.end());
  return a.graph().emit(std::move(out), {a, b},
                        [xa, xb, ra = std::move(ra), rb = std::move(rb)](Graph<S>& g, int self) {
                          const Matrix<S>& go = g.grad(self);
                          if (g.needs_grad(xa)) {
                            Matrix<S>& ga = g.grad(xa);
                            for (std::size_t k = 0; k < ra.size(); ++k)
                              ga.row(static_cast<Eigen::Index>(k)) += go.row(ra[k]);
                          }
                          if (g.needs_grad(xb)) {
                            Matrix<S>& gb = g.grad(xb);
                            for (std::size_t k = 0; k < rb.size(); ++k)
                              gb.row(static_cast<Eigen::Index>(k)) += go.row(rb[k]);
                          }
                        });
}

template <typename S>
Var<S> slice_cols(Var<S> x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols())
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_string(x.value()));
  Matrix<S> out = x.value().middleCols(start, count);
  const int ix = x.id();
  return x.graph().emit(std::move(out), {x}, [ix, start, count](Graph<S>& g, int self) {
    if (g.needs_grad(ix)) g.grad(ix).middleCols(start, count) += g.grad(self);
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts.front().rows()) throw DimensionError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<S> out(parts.front().rows(), cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts.front().graph().emit(std::move(out), parts, [ids, offsets](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k)
      if (g.needs_grad(ids[k])) g.grad(ids[k]) += go.middleCols(offsets[k], g.value(ids[k]).cols());
  });
}

/// Row-wise normalization over the last axis with affine gain/bias (1 x d).
template <typename S>
Var<S> layernorm(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw DimensionError("layernorm: affine parameters must be 1 x " + std::to_string(d));
  Matrix<S> xhat(n, d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mean = x.value().row(r).mean();
    const auto centered = x.value().row(r).array() - mean;
    const S var = centered.square().mean();
    inv_std(r) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix<S> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().emit(std::move(out), {x, gain, bias},
                        [ix, ig, ib, xhat, inv_std](Graph<S>& g, int self) {
                          const Matrix<S>& go = g.grad(self);
                          if (g.needs_grad(ig)) g.grad(ig) += go.cwiseProduct(xhat).colwise().sum();
                          if (g.needs_grad(ib)) g.grad(ib) += go.colwise().sum();
                          if (!g.needs_grad(ix)) return;
                          const Matrix<S> gxhat = (go.array().rowwise() * g.value(ig).row(0).array()).matrix();
                          const S d = static_cast<S>(gxhat.cols());
                          Matrix<S>& gx = g.grad(ix);
                          for (Eigen::Index r = 0; r < gxhat.rows(); ++r) {
                            const S m1 = gxhat.row(r).mean();
                            const S m2 = gxhat.row(r).dot(xhat.row(r)) / d;
                            gx.row(r).array() +=
                                inv_std(r) * (gxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                          }
                        });
}

/// Row softmax where mask(i, j) == false means the entry is -inf before
/// normalization. A fully masked row yields zeros.
template <typename S>
Var<S> softmax_rows(Var<S> x, const Mask& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols())
    throw DimensionError("softmax_rows: mask " + shape_string(mask) + " vs input " + shape_string(x.value()));
  Matrix<S> y = x.value();
  detail::masked_softmax_inplace(y, &mask);
  const int ix = x.id();
  return x.graph().emit(y, {x}, [ix, y](Graph<S>& g, int self) {
    if (g.needs_grad(ix)) g.grad(ix) += detail::softmax_backward(y, g.grad(self));
  });
}

template <typename S>
Var<S> softmax_rows(Var<S> x) {
  Matrix<S> y = x.value();
  detail::masked_softmax_inplace<S>(y, nullptr);
  const int ix = x.id();
  return x.graph().emit(y, {x}, [ix, y](Graph<S>& g, int self) {
    if (g.needs_grad(ix)) g.grad(ix) += detail::softmax_backward(y, g.grad(self));
  });
}

/// Multi-head scaled dot-product attention over L x (heads * head_dim)
/// query/key/value matrices under one L x L boolean mask.
template <typename S>
Var<S> attention(Var<S> q, Var<S> k, Var<S> v, const Mask& mask, int heads) {
  detail::require_same_shape(q, k, "attention");
  detail::require_same_shape(q, v, "attention");
  const Eigen::Index L = q.rows();
  if (heads <= 0 || q.cols() % heads != 0) throw DimensionError("attention: width not divisible by heads");
  if (mask.rows() != L || mask.cols() != L) throw DimensionError("attention: mask " + shape_string(mask));
  const Eigen::Index hd = q.cols() / heads;
  const S scl = S(1) / std::sqrt(static_cast<S>(hd));
  auto probs = std::make_shared<std::vector<Matrix<S>>>(static_cast<std::size_t>(heads));
  Matrix<S> out(L, q.cols());
  for (int h = 0; h < heads; ++h) {
    Matrix<S>& p = (*probs)[static_cast<std::size_t>(h)];
    p.noalias() = q.value().middleCols(h * hd, hd) * k.value().middleCols(h * hd, hd).transpose();
    p *= scl;
    detail::masked_softmax_inplace(p, &mask);
    out.middleCols(h * hd, hd).noalias() = p * v.value().middleCols(h * hd, hd);
  }
  if (!q.graph().recording()) probs.reset();
  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph().emit(std::move(out), {q, k, v}, [iq, ik, iv, probs, heads, hd, scl](Graph<S>& g, int self) {
    const Matrix<S>& go = g.grad(self);
    for (int h = 0; h < heads; ++h) {
      const Matrix<S>& p = (*probs)[static_cast<std::size_t>(h)];
      const auto gout = go.middleCols(h * hd, hd);
      if (g.needs_grad(iv)) g.grad(iv).middleCols(h * hd, hd).noalias() += p.transpose() * gout;
      if (!g.needs_grad(iq) && !g.needs_grad(ik)) continue;
      Matrix<S> gp(p.rows(), p.cols());
      gp.noalias() = gout * g.value(iv).middleCols(h * hd, hd).transpose();
      Matrix<S> gs = detail::softmax_backward(p, gp);
      gs *= scl;
      if (g.needs_grad(iq)) g.grad(iq).middleCols(h * hd, hd).noalias() += gs * g.value(ik).middleCols(h * hd, hd);
      if (g.needs_grad(ik))
        g.grad(ik).middleCols(h * hd, hd).noalias() += gs.transpose() * g.value(iq).middleCols(h * hd, hd);
    }
  });
}

/// Rotary position rotation of consecutive dimension pairs within each head.
template <typename S>
Var<S> rope(Var<S> x, std::span<const int> positions, int heads, double base) {
  const Eigen::Index L = x.rows();
  if (static_cast<Eigen::Index>(positions.size()) != L) throw DimensionError("rope: one position per row required");
  if (heads <= 0 || x.cols() % heads != 0) throw DimensionError("rope: width not divisible by heads");
  const Eigen::Index hd = x.cols() / heads;
  if (hd % 2 != 0) throw DimensionError("rope: head dimension must be even");
  const Eigen::Index half = hd / 2;
  auto cosv = std::make_shared<Matrix<S>>(L, half);
  auto sinv = std::make_shared<Matrix<S>>(L, half);
  for (Eigen::Index r = 0; r < L; ++r)
    for (Eigen::Index i = 0; i < half; ++i) {
      const double theta =
          static_cast<double>(positions[static_cast<std::size_t>(r)]) *
          std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      (*cosv)(r, i) = static_cast<S>(std::cos(theta));
      (*sinv)(r, i) = static_cast<S>(std::sin(theta));
    }
  const Matrix<S>& xv = x.value();
  Matrix<S> out(L, x.cols());
  for (Eigen::Index r = 0; r < L; ++r)
    for (int h = 0; h < heads; ++h)
      for (Eigen::Index i = 0; i < half; ++i) {
        const Eigen::Index c = h * hd + 2 * i;
        const S c0 = (*cosv)(r, i), s0 = (*sinv)(r, i);
        out(r, c) = xv(r, c) * c0 - xv(r, c + 1) * s0;
        out(r, c + 1) = xv(r, c) * s0 + xv(r, c + 1) * c0;
      }
  const int ix = x.id();
  return x.graph().emit(std::move(out), {x}, [ix, cosv, sinv, heads, hd, half](Graph<S>& g, int self) {
    if (!g.needs_grad(ix)) return;
    const Matrix<S>& go = g.grad(self);
    Matrix<S>& gx = g.grad(ix);
    for (Eigen::Index r = 0; r < go.rows(); ++r)
      for (int h = 0; h < heads; ++h)
        for (Eigen::Index i = 0; i < half; ++i) {
          const Eigen::Index c = h * hd + 2 * i;
          const S c0 = (*cosv)(r, i), s0 = (*sinv)(r, i);
          gx(r, c) += go(r, c) * c0 + go(r, c + 1) * s0;
          gx(r, c + 1) += -go(r, c) * s0 + go(r, c + 1) * c0;
        }
  });
}

/// Row-wise log-softmax of a plain matrix (no graph).
template <typename S>
Matrix<S> log_softmax_rows(const Matrix<S>& logits) {
  Matrix<S> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const S mx = logits.row(r).maxCoeff();
    const S lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

/// log softmax(logits_i)[target_i] for each row.
template <typename S>
std::vector<double> token_log_probs(const Matrix<S>& logits, std::span<const int> targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    throw DimensionError("token_log_probs: one target per row required");
  std::vector<double> out(targets.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols())
      throw IndexError("target id " + std::to_string(t) + " outside vocabulary of " + std::to_string(logits.cols()));
    const S mx = logits.row(r).maxCoeff();
    const S lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out[static_cast<std::size_t>(r)] = static_cast<double>(logits(r, t) - lse);
  }
  return out;
}

/// Weighted token cross-entropy: -sum_i w_i log softmax(logits_i)[t_i],
/// divided by sum_i w_i under Reduction::Mean (0 when all weights are 0).
template <typename S>
Var<S> cross_entropy(Var<S> logits, std::span<const int> targets, std::span<const S> weights,
                     Reduction reduction = Reduction::Mean) {
  const Eigen::Index n = logits.rows(), V = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n || static_cast<Eigen::Index>(weights.size()) != n)
    throw DimensionError("cross_entropy: targets/weights must have one entry per logits row");
  Matrix<S> probs(n, V);
  S total = 0, wsum = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= V)
      throw IndexError("cross_entropy: target id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(V));
    const S mx = logits.value().row(r).maxCoeff();
    probs.row(r) = (logits.value().row(r).array() - mx).exp();
    const S z = probs.row(r).sum();
    probs.row(r) /= z;
    const S w = weights[static_cast<std::size_t>(r)];
    total += w * (mx + std::log(z) - logits.value()(r, t));
    wsum += w;
  }
  const S norm = reduction == Reduction::Sum ? S(1) : (wsum > S(0) ? wsum : S(0));
  Matrix<S> out(1, 1);
  out(0, 0) = norm > S(0) ? total / norm : S(0);
  const int il = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<S> wt(weights.begin(), weights.end());
  return logits.graph().emit(std::move(out), {logits},
                             [il, probs = std::move(probs), tg = std::move(tg), wt = std::move(wt), norm](
                                 Graph<S>& g, int self) {
                               if (!g.needs_grad(il) || norm == S(0)) return;
                               const S go = g.grad(self)(0, 0);
                               Matrix<S>& gl = g.grad(il);
                               for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                                 const S c = go * wt[static_cast<std::size_t>(r)] / norm;
                                 if (c == S(0)) continue;
                                 gl.row(r) += c * probs.row(r);
                                 gl(r, tg[static_cast<std::size_t>(r)]) -= c;
                               }
                             });
}

/// Binary cross-entropy on a 1 x 1 logit against a {0, 1} label.
template <typename S>
Var<S> bce_with_logits(Var<S> z, S label) {
  if (z.value().size() != 1) throw DimensionError("bce_with_logits: expects a 1 x 1 logit");
  const S x = z.scalar();
  Matrix<S> out(1, 1);
  out(0, 0) = std::max(x, S(0)) - x * label + std::log1p(std::exp(-std::abs(x)));
  const S sig = S(1) / (S(1) + std::exp(-x));
  const int iz = z.id();
  return z.graph().emit(std::move(out), {z}, [iz, sig, label](Graph<S>& g, int self) {
    if (g.needs_grad(iz)) g.grad(iz)(0, 0) += g.grad(self)(0, 0) * (sig - label);
  });
}

/// mean over entries of (pred - target)^2.
template <typename S>
Var<S> mse(Var<S> pred, const Matrix<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("mse: shape mismatch " + shape_string(pred.value()) + " vs " + shape_string(target));
  const S count = static_cast<S>(std::max<Eigen::Index>(1, target.size()));
  Matrix<S> diff = pred.value() - target;
  Matrix<S> out(1, 1);
  out(0, 0) = diff.squaredNorm() / count;
  const int ip = pred.id();
  return pred.graph().emit(std::move(out), {pred}, [ip, diff, count](Graph<S>& g, int self) {
    if (g.needs_grad(ip)) g.grad(ip) += (S(2) * g.grad(self)(0, 0) / count) * diff;
  });
}

/// Inverted dropout; identity when p == 0.
template <typename S>
Var<S> dropout(Var<S> x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix<S> m(x.rows(), x.cols());
  const S s = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? s : S(0);
  const int ix = x.id();
  return x.graph().emit(x.value().cwiseProduct(m), {x}, [ix, m](Graph<S>& g, int self) {
    if (g.needs_grad(ix)) g.grad(ix) += g.grad(self).cwiseProduct(m);
  });
}

}  // namespace msitt
