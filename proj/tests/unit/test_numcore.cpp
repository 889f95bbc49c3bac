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

#include "msitt/numcore/grad_check.hpp"
#include "msitt/numcore/ops.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace msitt;
using Catch::Approx;

namespace {

Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Central differences of f at x, entry by entry. Independent of Graph.
Matrix<double> finite_diff(const std::function<double(const Matrix<double>&)>& f, Matrix<double> x,
                           double h = 1e-5) {
  Matrix<double> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f(x);
    x.data()[i] = saved - h;
    const double down = f(x);
    x.data()[i] = saved;
    out.data()[i] = (up - down) / (2 * h);
  }
  return out;
}

double max_rel(const Matrix<double>& a, const Matrix<double>& b) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), 1e-8});
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / d);
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic", "[numcore][matmul]") {
  Graph<double> g(false);
  Matrix<double> eye(2, 2), m(2, 2);
  eye << 1, 0, 0, 1;
  m << 2, 3, 4, 5;
  auto out = matmul(g.constant(eye), g.constant(m));
  CHECK(out.value() == m);

  Matrix<double> a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  CHECK(matmul(g.constant(a), g.constant(b)).scalar() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes", "[numcore][matmul]") {
  Graph<double> g(false);
  auto a = g.constant(Matrix<double>::Zero(2, 3));
  auto b = g.constant(Matrix<double>::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3) x (2, 3)") != std::string::npos);
  }
}

TEST_CASE("matmul gradient agrees with finite differences", "[numcore][matmul][oracle]") {
  std::mt19937_64 rng(11);
  const Matrix<double> a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), w = random_matrix(3, 2, rng);
  Graph<double> g;
  auto va = g.leaf(a, true), vb = g.leaf(b, true);
  auto loss = sum(mul(matmul(va, vb), g.constant(w)));
  g.backward(loss);
  auto fa = [&](const Matrix<double>& x) { return ((x * b).cwiseProduct(w)).sum(); };
  auto fb = [&](const Matrix<double>& x) { return ((a * x).cwiseProduct(w)).sum(); };
  CHECK(max_rel(*g.grad_of(va), finite_diff(fa, a)) < 1e-6);
  CHECK(max_rel(*g.grad_of(vb), finite_diff(fb, b)) < 1e-6);
}

TEST_CASE("softmax_rows conventions", "[numcore][softmax]") {
  Graph<double> g(false);
  Matrix<double> x(3, 2);
  const double inf = std::numeric_limits<double>::infinity();
  x << 0, 0, 5, -inf, 1000, 1001;
  Mask all = Mask::Constant(3, 2, true);
  auto y = softmax_rows(g.constant(x), all).value();
  CHECK(y(0, 0) == Approx(0.5));
  CHECK(y(0, 1) == Approx(0.5));
  CHECK(y(1, 0) == 1.0);
  CHECK(y(1, 1) == 0.0);
  // 1/(1+e) evaluated in long double as the reference.
  const long double hi = 1.0L / (1.0L + std::exp(-1.0L));
  CHECK(std::abs(y(2, 1) - static_cast<double>(hi)) < 1e-4);
  CHECK(std::abs(y(2, 0) - static_cast<double>(1.0L - hi)) < 1e-4);
  CHECK(std::isfinite(y(2, 0)));

  Mask m = Mask::Constant(3, 2, true);
  m(0, 0) = m(0, 1) = false;
  auto z = softmax_rows(g.constant(x), m).value();
  CHECK(z.row(0).isZero());
}

TEST_CASE("softmax_rows rows sum to one over unmasked entries", "[numcore][softmax][property]") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index r = 1 + rng() % 6, c = 1 + rng() % 9;
    Matrix<double> x = random_matrix(r, c, rng, 20.0);
    Mask mask(r, c);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = coin(rng);
    Graph<double> g(false);
    auto y = softmax_rows(g.constant(x), mask).value();
    for (Eigen::Index i = 0; i < r; ++i) {
      if (!mask.row(i).any()) {
        CHECK(y.row(i).isZero());
        continue;
      }
      CHECK(std::abs(y.row(i).sum() - 1.0) < 1e-6);
      for (Eigen::Index j = 0; j < c; ++j)
        if (!mask(i, j)) CHECK(y(i, j) == 0.0);
    }
  }
}

TEST_CASE("layernorm values and gradient", "[numcore][layernorm]") {
  Graph<double> g(false);
  Matrix<double> ones = Matrix<double>::Ones(1, 3), zeros = Matrix<double>::Zero(1, 3);
  Matrix<double> c(1, 3);
  c << 3, 3, 3;
  auto y = layernorm(g.constant(c), g.constant(ones), g.constant(zeros)).value();
  CHECK(y.isZero());

  Matrix<double> x(1, 2);
  x << 1, -1;
  auto y2 = layernorm(g.constant(x), g.constant(Matrix<double>::Ones(1, 2)), g.constant(Matrix<double>::Zero(1, 2)))
                .value();
  CHECK(y2(0, 0) == Approx(1.0).epsilon(1e-5));
  CHECK(y2(0, 1) == Approx(-1.0).epsilon(1e-5));

  std::mt19937_64 rng(5);
  ParamStore<double> ps;
  const int ix = ps.add("x", random_matrix(4, 5, rng), ParamGroup::Other);
  const int ig = ps.add("gain", random_matrix(1, 5, rng), ParamGroup::Other);
  const int ib = ps.add("bias", random_matrix(1, 5, rng), ParamGroup::Other);
  const Matrix<double> w = random_matrix(4, 5, rng);
  auto report = grad_check(ps, [&](Graph<double>& gr) {
    auto out = layernorm(gr.parameter(ps, ix), gr.parameter(ps, ig), gr.parameter(ps, ib));
    return sum(mul(out, gr.constant(w)));
  });
  CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("cross_entropy reductions", "[numcore][cross_entropy]") {
  Graph<double> g(false);
  Matrix<double> l(1, 2);
  l << 0, 0;
  std::vector<int> t{0};
  std::vector<double> w{1.0};
  CHECK(cross_entropy(g.constant(l), t, std::span<const double>(w)).scalar() == Approx(std::log(2.0)));

  Matrix<double> sharp(1, 2);
  sharp << 60, 0;
  CHECK(cross_entropy(g.constant(sharp), t, std::span<const double>(w)).scalar() < 1e-20);

  Matrix<double> two(2, 3);
  two << 0.3, -1.2, 2.0, 1.0, 0.5, -0.5;
  std::vector<int> t2{2, 1};
  std::vector<double> w2{2.0, 0.0};
  const double both = cross_entropy(g.constant(two), t2, std::span<const double>(w2)).scalar();
  Matrix<double> first = two.topRows(1);
  std::vector<int> t1{2};
  CHECK(both == Approx(cross_entropy(g.constant(first), t1, std::span<const double>(w)).scalar()).epsilon(1e-14));

  std::vector<int> bad{3};
  CHECK_THROWS_AS(cross_entropy(g.constant(l), bad, std::span<const double>(w)), IndexError);
}

TEST_CASE("grad_check on x^2 and the freeze contract", "[numcore][grad_check]") {
  ParamStore<double> ps;
  Matrix<double> three(1, 1);
  three << 3.0;
  const int ix = ps.add("x", three, ParamGroup::Other);
  const int iy = ps.add("frozen", three, ParamGroup::Other, false);
  Graph<double> g;
  auto x = g.parameter(ps, ix);
  auto y = g.parameter(ps, iy);
  auto loss = add(mul(x, x), mul(y, y));
  g.backward(loss);
  CHECK((*g.grad_of(x))(0, 0) == 6.0);
  CHECK(g.grad_of(y) == nullptr);

  auto report = grad_check(ps, [&](Graph<double>& gr) {
    auto xv = gr.parameter(ps, ix);
    auto yv = gr.parameter(ps, iy);
    return add(mul(xv, xv), mul(yv, yv));
  });
  CHECK(report.passed());
  CHECK(report.max_rel_error < 1e-7);
  REQUIRE(report.frozen.size() == 1);
  CHECK(report.frozen[0] == "frozen");
}

TEST_CASE("shared subexpressions accumulate additively", "[numcore][graph]") {
  std::mt19937_64 rng(9);
  const Matrix<double> a = random_matrix(3, 3, rng), b = random_matrix(3, 3, rng);
  // Shared: h = tanh(a b) used twice.
  Graph<double> g1;
  auto la = g1.leaf(a, true);
  auto h = tanh(matmul(la, g1.constant(b)));
  g1.backward(sum(add(mul(h, h), h)));
  // Oracle: the same expression with the subgraph rebuilt for each use.
  Graph<double> g2;
  auto la2 = g2.leaf(a, true);
  auto h1 = tanh(matmul(la2, g2.constant(b)));
  auto h2 = tanh(matmul(la2, g2.constant(b)));
  auto h3 = tanh(matmul(la2, g2.constant(b)));
  g2.backward(sum(add(mul(h1, h2), h3)));
  CHECK(max_rel(*g1.grad_of(la), *g2.grad_of(la2)) < 1e-12);
}

TEST_CASE("every differentiable primitive passes grad_check", "[numcore][grad_check][oracle]") {
  std::mt19937_64 rng(21);
  ParamStore<double> ps;
  const int L = 5, d = 8, heads = 2;
  const int iq = ps.add("q", random_matrix(L, d, rng), ParamGroup::Other);
  const int ik = ps.add("k", random_matrix(L, d, rng), ParamGroup::Other);
  const int iv = ps.add("v", random_matrix(L, d, rng), ParamGroup::Other);
  const int iw = ps.add("w", random_matrix(d, 6, rng), ParamGroup::Other);
  const int ir = ps.add("row", random_matrix(1, 6, rng), ParamGroup::Other);
  Mask causal(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) causal(i, j) = j <= i && (i != 3 || j == 3);
  std::vector<int> pos{0, 1, 2, 4, 7};
  std::vector<int> ia{0, 2, 4}, ib{1, 3};
  std::vector<int> targets{1, 0, 5, 2, 3};
  std::vector<double> weights{1.0, 0.5, 2.0, 0.0, 1.5};
  const Matrix<double> tgt = random_matrix(L, 6, rng);

  auto build = [&](Graph<double>& g) {
    auto q = rope(g.parameter(ps, iq), pos, heads, 10000.0);
    auto k = rope(g.parameter(ps, ik), pos, heads, 10000.0);
    auto att = attention(q, k, g.parameter(ps, iv), causal, heads);
    auto left = gather_rows(att, ia);
    auto right = silu(gather_rows(att, ib));
    auto merged = merge_rows(left, ia, right, ib, L);
    auto proj = add_row(matmul(merged, g.parameter(ps, iw)), g.parameter(ps, ir));
    auto extra = matmul_nt(slice_cols(merged, 0, 4), slice_cols(g.parameter(ps, iq), 2, 4));
    auto ce = cross_entropy(concat_cols<double>({proj, tanh(extra)}), targets, std::span<const double>(weights));
    auto sm = sum(mul(softmax_rows(extra, causal), extra));
    auto z = slice_cols(gather_rows(proj, std::vector<int>{4}), 0, 1);
    return add(add(ce, scale(sm, 0.3)), add(bce_with_logits(z, 1.0), scale(mse(proj, tgt), 0.1)));
  };
  auto report = grad_check(ps, build);
  INFO("worst " << report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
  CHECK(report.absent.empty());
}

TEST_CASE("non-recording graph keeps no gradients", "[numcore][graph]") {
  Graph<double> g(false);
  auto x = g.leaf(Matrix<double>::Ones(2, 2), true);
  CHECK_FALSE(g.needs_grad(x));
  CHECK_THROWS_AS(g.backward(sum(x)), ContractError);
}
