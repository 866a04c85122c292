// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The copsd-lab Authors

#include <cmath>
#include <numbers>

#include "copsd/diffcore/adamw.hpp"
#include "copsd/diffcore/graph.hpp"
#include "copsd/diffcore/rng.hpp"
#include "copsd/errors.hpp"
#include "doctest.h"
#include "fd_checks.hpp"
#include "oracles.hpp"

using namespace copsd;

namespace {

Array mat(std::size_t r, std::size_t c, std::vector<double> v) { return Array({r, c}, std::move(v)); }

double row_sum(const Array& a, std::size_t r, bool exponentiate) {
  double s = 0.0;
  for (double v : a.row(r)) s += exponentiate ? std::exp(v) : v;
  return s;
}

}  // namespace

TEST_CASE("array shape invariants") {
  Array a({2, 3}, 1.5);
  CHECK(a.size() == shape_size(a.shape()));
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
  CHECK_THROWS_AS(Array({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Array({0, 2}), DimensionError);
  CHECK_THROWS_AS(a.item(), ContractError);
}

TEST_CASE("matmul hand cases") {
  Graph g;
  auto a = g.leaf(mat(2, 2, {1, 2, 3, 4}));
  auto ones = g.leaf(mat(2, 1, {1, 1}));
  CHECK(matmul(a, ones).value() == mat(2, 1, {3, 7}));
  auto eye = g.leaf(mat(2, 2, {1, 0, 0, 1}));
  CHECK(matmul(a, eye).value() == a.value());
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  auto a = g.leaf(Array({2, 3}));
  auto b = g.leaf(Array({2, 2}));
  try {
    matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(3);
  std::vector<Array> xs = {fd::random_array(rng, {3, 4}), fd::random_array(rng, {4, 2})};
  Graph g;
  auto a = g.leaf_ref(xs[0]);
  auto b = g.leaf_ref(xs[1]);
  g.backward(sum(matmul(a, b)));
  const auto numeric = oracle::numeric_grads(xs, [&] {
    Graph h;
    return sum(matmul(h.leaf_ref(xs[0]), h.leaf_ref(xs[1]))).value().item();
  });
  CHECK(oracle::max_rel_err(g.grad(a), numeric[0]) <= 1e-6);
  CHECK(oracle::max_rel_err(g.grad(b), numeric[1]) <= 1e-6);
}

TEST_CASE("softmax closed forms") {
  auto s = softmax(mat(1, 2, {0, 0}));
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-15));
  s = softmax(mat(1, 2, {std::log(2.0), 0}));
  CHECK(std::abs(s[0] - 2.0 / 3.0) <= 1e-15);
  CHECK(std::abs(s[1] - 1.0 / 3.0) <= 1e-15);
  s = softmax(mat(1, 2, {10, 0}), 1e6);
  CHECK(std::abs(s[0] - 0.5) <= 1e-5);
  CHECK(std::abs(s[1] - 0.5) <= 1e-5);
  CHECK_THROWS_AS(softmax(mat(1, 2, {0, 0}), 0.0), ParameterError);
  CHECK_THROWS_AS(log_softmax(mat(1, 2, {0, 0}), -1.0), ParameterError);
}

TEST_CASE("log_softmax closed forms") {
  auto l = log_softmax(mat(1, 2, {0, 0}));
  CHECK(std::abs(l[0] + std::numbers::ln2) <= 1e-15);
  CHECK(std::abs(l[1] + std::numbers::ln2) <= 1e-15);
  l = log_softmax(mat(1, 2, {std::log(2.0), 0}));
  CHECK(std::abs(l[0] - std::log(2.0 / 3.0)) <= 1e-15);
  CHECK(std::abs(l[1] - std::log(1.0 / 3.0)) <= 1e-15);
}

TEST_CASE("property: softmax slices normalize and agree with log_softmax") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const double spread = 1.0 + 30.0 * rng.uniform();
    const double temp = 0.1 + 3.0 * rng.uniform();
    auto x = fd::random_array(rng, {5, 1 + rng.below(40)}, spread);
    const auto s = softmax(x, temp);
    const auto l = log_softmax(x, temp);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      CHECK(std::abs(row_sum(s, r, false) - 1.0) <= 1e-12);
      CHECK(std::abs(row_sum(l, r, true) - 1.0) <= 1e-12);
    }
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(std::exp(l[i]) - s[i]) <= 1e-12);
  }
}

TEST_CASE("backward linear case") {
  Graph g;
  auto x = g.leaf(Array({2}, {1, 2}));
  g.backward(sum(scale(x, 2.0)));
  CHECK(g.grad(x) == Array({2}, {2, 2}));
}

TEST_CASE("backward contract errors") {
  Graph g;
  auto x = g.leaf(Array({2}, {1, 2}));
  CHECK_THROWS_AS(g.backward(scale(x, 2.0)), ContractError);

  Graph c;
  auto a = c.leaf(Array::scalar(1.0));
  auto b = scale(a, 2.0);
  auto d = scale(b, 3.0);
  const Var loop[] = {d};
  c.reparent(b, loop);
  CHECK_THROWS_AS(c.backward(d), GraphError);
}

TEST_CASE("property: stop_gradient blocks gradient into the teacher side") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    auto s = g.leaf(fd::random_array(rng, {3, 6}));
    auto t = g.leaf(fd::random_array(rng, {3, 6}));
    g.backward(sum(kl_rows(softmax(s), stop_gradient(softmax(t)))));
    const auto gt = g.grad(t);
    for (std::size_t i = 0; i < gt.size(); ++i) CHECK(gt[i] == 0.0);
    double mass = 0.0;
    for (double v : g.grad(s).values()) mass += std::abs(v);
    CHECK(mass > 0.0);
  }
}

TEST_CASE("frozen leaves receive no gradient") {
  Graph g;
  auto w = g.leaf(mat(2, 2, {1, 2, 3, 4}), false);
  auto x = g.leaf(mat(1, 2, {1, -1}));
  g.backward(sum(matmul(x, w)));
  CHECK_FALSE(g.has_grad(w));
  CHECK_FALSE(g.requires_grad(w));
  CHECK(g.grad(x) == mat(1, 2, {3, 7}));
}

TEST_CASE("kl_rows matches the closed form") {
  Rng rng(8);
  auto a = fd::random_array(rng, {4, 5}, 2.0);
  auto b = fd::random_array(rng, {4, 5}, 2.0);
  Graph g;
  const auto kl = kl_rows(g.leaf(a), g.leaf(b)).value();
  const auto pa = softmax(a), pb = softmax(b);
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> p(pa.row(r).begin(), pa.row(r).end()), q(pb.row(r).begin(), pb.row(r).end());
    CHECK(std::abs(kl[r] - oracle::kl(p, q)) <= 1e-12);
  }
}

TEST_CASE("random three-layer MLP gradients match finite differences") {
  Rng rng(21);
  std::vector<Array> xs = {fd::random_array(rng, {5, 4}),  fd::random_array(rng, {4, 6}, 0.7),
                           fd::random_array(rng, {6}),     fd::random_array(rng, {6, 6}, 0.5),
                           fd::random_array(rng, {6, 3}, 0.7)};
  const int targets[] = {0, 2, 1, 1, 0};
  auto loss = [&](Graph& g, std::vector<Var>& in) {
    for (const auto& x : xs) in.push_back(g.leaf_ref(x));
    auto h = gelu(add_row(matmul(in[0], in[1]), in[2]));
    h = gelu(matmul(h, in[3]));
    return scale(mean(pick(log_softmax(matmul(h, in[4])), targets)), -1.0);
  };
  Graph g;
  std::vector<Var> in;
  g.backward(loss(g, in));
  const auto numeric = oracle::numeric_grads(xs, [&] {
    Graph h;
    std::vector<Var> v;
    return loss(h, v).value().item();
  });
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(oracle::max_rel_err(g.grad(in[i]), numeric[i], fd::kFloor) <= 1e-4);
}

TEST_CASE("property: random graphs match finite differences") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    CAPTURE(seed);
    CHECK(fd::random_graph_error(seed) <= 1e-4);
  }
}

TEST_CASE("two-layer transformer loss gradients match finite differences") {
  CHECK(fd::transformer_error(4, true) <= 1e-4);
  CHECK(fd::transformer_error(9, false) <= 1e-4);
}

namespace {

struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double w, double g, const AdamWConfig& c) {
    ++t;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, t));
    const double vh = v / (1 - std::pow(c.beta2, t));
    return w - c.lr * (mh / (std::sqrt(vh) + c.eps) + c.weight_decay * w);
  }
};

}  // namespace

TEST_CASE("adamw first step closed form") {
  AdamWConfig c{0.1, 0.9, 0.999, 1e-8, 0.01};
  AdamW opt(c);
  ParameterSet p = {{"w", Array::scalar(1.0)}};
  opt.step(p, {Array::scalar(0.5)});
  CHECK(std::abs(p[0].value[0] - 0.899) <= 1e-6);
  CHECK(opt.state().step == 1);
}

TEST_CASE("adamw consecutive steps follow the scalar reference") {
  AdamWConfig c{0.1, 0.9, 0.999, 1e-8, 0.01};
  AdamW opt(c);
  ParameterSet p = {{"w", Array::scalar(1.0)}};
  ScalarAdam ref;
  double w = 1.0;
  opt.step(p, {Array::scalar(0.5)});
  w = ref.step(w, 0.5, c);
  const double after_first = p[0].value[0];
  CHECK(opt.state().step == 1);
  opt.step(p, {Array::scalar(0.5)});
  w = ref.step(w, 0.5, c);
  CHECK(opt.state().step == 2);
  CHECK(std::abs(p[0].value[0] - w) <= 1e-12);
  CHECK(std::abs((after_first - p[0].value[0]) - (1.0 - after_first)) > 1e-6);
}

TEST_CASE("property: adamw with zero gradient and no decay is the identity") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    AdamW opt(AdamWConfig{1e-2, 0.9, 0.999, 1e-8, 0.0});
    ParameterSet p = {{"a", fd::random_array(rng, {3, 2})}, {"b", fd::random_array(rng, {4})}};
    const auto before = p;
    for (int s = 0; s < 3; ++s) opt.step(p, {Array({3, 2}), Array({4})});
    CHECK(p[0].value == before[0].value);
    CHECK(p[1].value == before[1].value);
  }
}

TEST_CASE("adamw rejects non-finite gradients and names the parameter") {
  AdamW opt(AdamWConfig{});
  ParameterSet p = {{"h0.attn", Array::scalar(1.0)}};
  try {
    opt.step(p, {Array::scalar(std::nan(""))});
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("h0.attn") != std::string::npos);
  }
  CHECK(p[0].value[0] == 1.0);
  CHECK_THROWS_AS(opt.step(p, {Array({2})}), DimensionError);
}

TEST_CASE("rng follows the reference xoshiro256** stream") {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
    Rng rng(seed);
    oracle::Xoshiro ref(seed);
    for (int i = 0; i < 1000; ++i) REQUIRE(rng.next_u64() == ref.next());
  }
  Rng u(9);
  oracle::Xoshiro ref(9);
  for (int i = 0; i < 100; ++i) CHECK(u.uniform() == static_cast<double>(ref.next() >> 11) / 9007199254740992.0);
}

TEST_CASE("rng determinism and seed sensitivity") {
  Rng a(0), b(0);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.uniform() == b.uniform());
  CHECK(Rng(0).next_u64() != Rng(1).next_u64());
  Rng r(123);
  double s = 0.0;
  for (int i = 0; i < 100000; ++i) s += r.uniform();
  CHECK(std::abs(s / 100000 - 0.5) <= 0.01);
  CHECK(derive_seed(5, {1, 2}) == derive_seed(5, {1, 2}));
  CHECK(derive_seed(5, {1, 2}) != derive_seed(5, {2, 1}));
}

TEST_CASE("rng shuffle is a permutation") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  Rng r(4);
  r.shuffle(v.begin(), v.end());
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(v != sorted);
}
