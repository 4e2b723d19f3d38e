#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fnr/gradcheck.hpp"
#include "fnr/graph.hpp"

using fnr::Graph;
using fnr::NodeId;
using fnr::Tensor2;

namespace {

template <typename T>
Tensor2<T> random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng,
                         T lo = T(-1), T hi = T(1)) {
  Tensor2<T> t(r, c);
  for (auto& x : t.data) {
    T u = T((rng() >> 11) * 0x1.0p-53);
    x = lo + (hi - lo) * u;
  }
  return t;
}

}  // namespace

TEST_CASE("matmul forward") {
  Graph<double> g;
  SECTION("identity times M is M") {
    Tensor2<double> m(2, 2, {3.0, -1.0, 0.5, 7.0});
    NodeId id = g.matmul(g.leaf(Tensor2<double>::identity(2)), g.leaf(m));
    CHECK(g.value(id) == m);
  }
  SECTION("hand multiplication") {
    NodeId c = g.matmul(g.leaf(Tensor2<double>(2, 2, {1, 2, 3, 4})),
                        g.leaf(Tensor2<double>(2, 1, {1, 1})));
    CHECK(g.value(c).at(0, 0) == 3.0);
    CHECK(g.value(c).at(1, 0) == 7.0);
  }
  SECTION("dimension mismatch names both shapes") {
    NodeId a = g.leaf(Tensor2<double>(2, 3));
    NodeId b = g.leaf(Tensor2<double>(2, 3));
    CHECK_THROWS_WITH(g.matmul(a, b),
                      Catch::Matchers::ContainsSubstring("2x3"));
  }
}

TEST_CASE("matmul gradient of sum(A*B) w.r.t. A is ones*B^T") {
  std::mt19937_64 rng(7);
  Graph<double> g;
  auto A = random_tensor<double>(3, 4, rng);
  auto B = random_tensor<double>(4, 2, rng);
  NodeId a = g.leaf(A, true);
  NodeId b = g.leaf(B, true);
  g.backward(g.sum(g.matmul(a, b)));
  // expected: ones(3x2) * B^T
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      double expect = 0;
      for (std::size_t j = 0; j < 2; ++j) expect += B.at(k, j);
      CHECK_THAT(g.grad(a).at(i, k),
                 Catch::Matchers::WithinAbs(expect, 1e-12));
    }
}

TEST_CASE("matmul associativity on random conformable triples") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + rng() % 5, n = 1 + rng() % 5, p = 1 + rng() % 5,
                q = 1 + rng() % 5;
    Graph<double> g;
    NodeId a = g.leaf(random_tensor<double>(m, n, rng));
    NodeId b = g.leaf(random_tensor<double>(n, p, rng));
    NodeId c = g.leaf(random_tensor<double>(p, q, rng));
    auto left = g.value(g.matmul(g.matmul(a, b), c));
    auto right = g.value(g.matmul(a, g.matmul(b, c)));
    CHECK(fnr::rel_frobenius_diff(left, right) < 1e-6);
  }
}

TEST_CASE("gelu point values") {
  Graph<double> g;
  NodeId x = g.leaf(Tensor2<double>(1, 3, {0.0, 1.0, -1.0}));
  const auto& y = g.value(g.gelu(x));
  CHECK(y.at(0, 0) == 0.0);
  CHECK_THAT(y.at(0, 1), Catch::Matchers::WithinAbs(0.841345, 1e-5));
  CHECK_THAT(y.at(0, 2), Catch::Matchers::WithinAbs(-0.158655, 1e-5));
}

TEST_CASE("gelu equals x*Phi(x) against independent erf oracle") {
  std::mt19937_64 rng(3);
  Graph<double> g;
  auto x = random_tensor<double>(4, 4, rng, -6.0, 6.0);
  const auto& y = g.value(g.gelu(g.leaf(x)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double phi = 0.5 * (1.0 + std::erf(x.data[i] / std::sqrt(2.0)));
    CHECK_THAT(y.data[i] - x.data[i] * phi,
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
}

TEST_CASE("softmax_rows") {
  Graph<double> g;
  SECTION("uniform row") {
    const auto& y = g.value(g.softmax_rows(g.leaf(Tensor2<double>(1, 2))));
    CHECK(y.at(0, 0) == 0.5);
    CHECK(y.at(0, 1) == 0.5);
  }
  SECTION("analytic e/(e+1)") {
    const auto& y =
        g.value(g.softmax_rows(g.leaf(Tensor2<double>(1, 2, {1.0, 0.0}))));
    CHECK_THAT(y.at(0, 0), Catch::Matchers::WithinAbs(0.731059, 1e-6));
    CHECK_THAT(y.at(0, 1), Catch::Matchers::WithinAbs(0.268941, 1e-6));
  }
  SECTION("shift invariance") {
    std::mt19937_64 rng(5);
    auto x = random_tensor<double>(3, 4, rng, -50.0, 50.0);
    auto shifted = x;
    for (auto& v : shifted.data) v += 123.25;
    auto a = g.value(g.softmax_rows(g.leaf(x)));
    auto b = g.value(g.softmax_rows(g.leaf(shifted)));
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK_THAT(a.data[i], Catch::Matchers::WithinAbs(b.data[i], 1e-12));
  }
  SECTION("rows sum to 1 for random inputs in [-50, 50]") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::size_t r = 1 + rng() % 6, c = 1 + rng() % 6;
      auto y = g.value(
          g.softmax_rows(g.leaf(random_tensor<double>(r, c, rng, -50.0, 50.0))));
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < c; ++j) s += y.at(i, j);
        CHECK_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-9));
      }
    }
  }
}

TEST_CASE("bce_mean values") {
  Graph<double> g;
  SECTION("symmetric entropy at 0.5") {
    NodeId t = g.leaf(Tensor2<double>(2, 2, 0.5));
    NodeId p = g.leaf(Tensor2<double>(2, 2, 0.5));
    CHECK_THAT(g.value(g.bce_mean(t, p)).data[0],
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  }
  SECTION("binary entropy of 0.731059") {
    Tensor2<double> m(2, 2, {0.731059, 0.268941, 0.268941, 0.731059});
    CHECK_THAT(g.value(g.bce_mean(g.leaf(m), g.leaf(m))).data[0],
               Catch::Matchers::WithinAbs(0.582208, 1e-4));
  }
  SECTION("near-perfect prediction") {
    NodeId t = g.leaf(Tensor2<double>(1, 4, 1.0));
    NodeId p = g.leaf(Tensor2<double>(1, 4, 1.0 - 1e-7));
    CHECK_THAT(g.value(g.bce_mean(t, p)).data[0],
               Catch::Matchers::WithinAbs(1e-7, 1e-9));
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(
        g.bce_mean(g.leaf(Tensor2<double>(1, 2)), g.leaf(Tensor2<double>(2, 1))),
        fnr::ShapeError);
  }
}

TEST_CASE("backward basics") {
  SECTION("loss = sum(x) gives all ones") {
    Graph<double> g;
    NodeId x = g.leaf(Tensor2<double>(2, 3, 1.5), true);
    g.backward(g.sum(x));
    for (double v : g.grad(x).data) CHECK(v == 1.0);
  }
  SECTION("loss = sum(x.x) gives 2x") {
    Graph<double> g;
    NodeId x = g.leaf(Tensor2<double>(1, 2, {2.0, 3.0}), true);
    g.backward(g.sum(g.mul(x, x)));
    CHECK(g.grad(x).at(0, 0) == 4.0);
    CHECK(g.grad(x).at(0, 1) == 6.0);
  }
  SECTION("non-scalar loss is a contract error") {
    Graph<double> g;
    NodeId x = g.leaf(Tensor2<double>(2, 2), true);
    CHECK_THROWS_AS(g.backward(x), fnr::ContractError);
  }
  SECTION("unreachable trainable leaf keeps zero gradient") {
    Graph<double> g;
    NodeId x = g.leaf(Tensor2<double>(1, 2, {1.0, 2.0}), true);
    NodeId unused = g.leaf(Tensor2<double>(3, 3, 5.0), true);
    g.backward(g.sum(x));
    for (double v : g.grad(unused).data) CHECK(v == 0.0);
  }
}

TEST_CASE("backward matches finite differences on random composed graphs") {
  using T = long double;
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t b = 2 + rng() % 3, d = 2 + rng() % 3, k = 2 + rng() % 3;
    Tensor2<T> X = random_tensor<T>(b, d, rng);
    Tensor2<T> W = random_tensor<T>(d, k, rng);
    Tensor2<T> V = random_tensor<T>(1, k, rng);
    Tensor2<T> Tg = random_tensor<T>(b, k, rng, T(0.1), T(0.9));

    auto loss_value = [&](Tensor2<T>* grad_w, Tensor2<T>* grad_v) -> T {
      Graph<T> g;
      NodeId w = g.leaf(W, true);
      NodeId v = g.leaf(V, true);
      NodeId z = g.add_rowvec(g.matmul(g.leaf(X), w), v);
      NodeId s = g.softmax_rows(g.gelu(z));
      NodeId loss =
          g.add(g.bce_mean(g.leaf(Tg), s), g.scale(g.mean(g.mul(z, z)), T(0.1)));
      if (grad_w) {
        g.backward(loss);
        *grad_w = g.grad(w);
        *grad_v = g.grad(v);
      }
      return g.value(loss).data[0];
    };

    Tensor2<T> gw, gv;
    loss_value(&gw, &gv);
    auto report = fnr::finite_diff_check<T>(
        [&] { return loss_value(nullptr, nullptr); },
        {{"W", &W, gw}, {"V", &V, gv}}, T(1e-6), T(1e-5));
    INFO("trial " << trial << " worst " << double(report.worst.rel_err)
                  << " at " << report.worst.name);
    CHECK(report.passed());
  }
}

TEST_CASE("finite_diff_check behavior") {
  using T = long double;
  Tensor2<T> theta(1, 3, {T(0.5), T(-1.25), T(2.0)});
  auto quad = [&]() -> T {
    T s = 0;
    for (T v : theta.data) s += v * v;
    return s;
  };
  Tensor2<T> analytic(1, 3);
  for (std::size_t i = 0; i < 3; ++i) analytic.data[i] = 2 * theta.data[i];

  SECTION("quadratic loss is exact up to roundoff") {
    auto report = fnr::finite_diff_check<T>(quad, {{"theta", &theta, analytic}},
                                            T(1e-6), T(1e-9));
    CHECK(report.worst.rel_err < 1e-9);
  }
  SECTION("a corrupted gradient is flagged with its parameter") {
    Tensor2<T> bad = analytic;
    bad.data[1] *= T(1.1);
    auto report = fnr::finite_diff_check<T>(quad, {{"theta", &theta, bad}},
                                            T(1e-6), T(1e-5));
    CHECK_FALSE(report.passed());
    CHECK(report.worst.name == "theta");
    CHECK(report.worst.index == 1);
  }
  SECTION("non-deterministic loss_fn is rejected") {
    int calls = 0;
    auto flaky = [&]() -> T { return T(calls++); };
    CHECK_THROWS_AS(fnr::finite_diff_check<T>(
                        flaky, {{"theta", &theta, analytic}}, T(1e-6), T(1e-5)),
                    fnr::ContractError);
  }
}

TEST_CASE("published operations reject non-finite results") {
  Graph<double> g;
  Tensor2<double> inf_t(1, 1, {std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(g.leaf(inf_t), fnr::NumericError);
}

TEST_CASE("dropout mask scales by 1/(1-rate) and backward routes through it") {
  Graph<double> g;
  NodeId x = g.leaf(Tensor2<double>(1, 4, {1.0, 2.0, 3.0, 4.0}), true);
  Tensor2<double> mask(1, 4, {0.0, 1.0 / 0.7, 0.0, 1.0 / 0.7});
  NodeId d = g.dropout(x, mask);
  CHECK(g.value(d).at(0, 0) == 0.0);
  CHECK_THAT(g.value(d).at(0, 1), Catch::Matchers::WithinAbs(2.0 / 0.7, 1e-12));
  g.backward(g.sum(d));
  CHECK(g.grad(x).at(0, 0) == 0.0);
  CHECK_THAT(g.grad(x).at(0, 3), Catch::Matchers::WithinAbs(1.0 / 0.7, 1e-12));
}
