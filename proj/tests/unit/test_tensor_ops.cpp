#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "statt/grad_check.hpp"
#include "statt/ops.hpp"
#include "statt/simd.hpp"
#include "test_util.hpp"

using namespace statt;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::tensor;

TEST_CASE("conv2d examples") {
  Graph<double> g;
  auto ones = g.constant(Tensor<double>({1, 3, 3}, 1.0));
  auto k = g.constant(Tensor<double>({1, 1, 3, 3}, 1.0));
  auto b = g.constant(Tensor<double>({1}, 0.0));
  auto out = ops::conv2d(ones, k, b, ops::Padding::valid);
  CHECK(out.shape() == Shape{1, 1, 1});
  CHECK(out.value()[0] == 9.0);

  std::mt19937_64 rng(3);
  auto x = g.constant(random_tensor<double>({3, 5, 7}, rng));
  Tensor<double> ident({3, 3, 1, 1}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) ident.at({c, c, 0, 0}) = 1.0;
  auto same = ops::conv2d(x, g.constant(ident), g.constant(Tensor<double>({3})), ops::Padding::same);
  CHECK(same.value() == x.value());

  CHECK_THROWS_AS(ops::conv2d(x, g.constant(Tensor<double>({2, 4, 3, 3})), g.constant(Tensor<double>({2})),
                              ops::Padding::same),
                  DimensionError);
  CHECK_THROWS_AS(ops::conv2d(x, g.constant(Tensor<double>({2, 3, 2, 2})), g.constant(Tensor<double>({2})),
                              ops::Padding::same),
                  DimensionError);
}

TEST_CASE_TEMPLATE("conv2d matches sliding-window oracle", T, float, double) {
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-10;
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 3, h = 3 + rng() % 6, w = 3 + rng() % 6;
    const std::size_t ks = (rng() % 2) ? 3 : 1;
    const bool same = rng() % 2;
    auto xin = oracle::random_vec(cin * h * w, rng);
    auto kv = oracle::random_vec(cout * cin * ks * ks, rng);
    auto bv = oracle::random_vec(cout, rng);
    std::size_t ho = 0, wo = 0;
    auto expect = oracle::conv2d(xin, cin, h, w, kv, cout, ks, bv, same, ho, wo);
    Graph<T> g;
    auto out = ops::conv2d(g.constant(tensor<T>({cin, h, w}, xin)), g.constant(tensor<T>({cout, cin, ks, ks}, kv)),
                           g.constant(tensor<T>({cout}, bv)), same ? ops::Padding::same : ops::Padding::valid);
    REQUIRE(out.shape() == Shape{cout, ho, wo});
    CHECK(max_abs_diff(out.value(), expect) < tol);
  }
}

TEST_CASE("transposed_conv2d examples and oracle") {
  Graph<double> g;
  auto v = g.constant(Tensor<double>({1, 1, 1}, 2.5));
  auto out = ops::transposed_conv2d(v, g.constant(Tensor<double>({1, 1, 2, 2}, 1.0)));
  CHECK(out.value() == Tensor<double>({1, 2, 2}, 2.5));
  auto zero = ops::transposed_conv2d(g.constant(Tensor<double>({2, 3, 3})), g.constant(Tensor<double>({2, 4, 2, 2}, 0.7)));
  CHECK(zero.value() == Tensor<double>({4, 6, 6}));
  CHECK_THROWS_AS(ops::transposed_conv2d(v, g.constant(Tensor<double>({1, 1, 2, 2})), 3), ContractError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 3, h = 1 + rng() % 5, w = 1 + rng() % 5;
    auto xin = oracle::random_vec(cin * h * w, rng);
    auto kv = oracle::random_vec(cin * cout * 4, rng);
    auto expect = oracle::transposed_conv2d(xin, cin, h, w, kv, cout);
    Graph<float> gf;
    auto of = ops::transposed_conv2d(gf.constant(tensor<float>({cin, h, w}, xin)),
                                     gf.constant(tensor<float>({cin, cout, 2, 2}, kv)));
    CHECK(of.shape() == Shape{cout, 2 * h, 2 * w});
    CHECK(max_abs_diff(of.value(), expect) < 1e-5);
  }
}

TEST_CASE("maxpool2d values, ties and gradient routing") {
  Graph<double> g;
  auto x = g.parameter("x", tensor<double>({1, 2, 2}, {1, 2, 3, 4}));
  auto y = ops::maxpool2d(x);
  CHECK(y.value()[0] == 4.0);
  g.backward(ops::sum(y));
  CHECK(testutil::to_vec(g.grad(x)) == std::vector<double>{0, 0, 0, 1});

  Graph<double> g2;
  auto tie = g2.parameter("x", Tensor<double>({1, 2, 2}, 5.0));
  g2.backward(ops::sum(ops::maxpool2d(tie)));
  CHECK(testutil::to_vec(g2.grad(tie)) == std::vector<double>{1, 0, 0, 0});

  Graph<double> g3;
  auto c = ops::maxpool2d(g3.constant(Tensor<double>({2, 4, 6}, -1.5)));
  CHECK(c.value() == Tensor<double>({2, 2, 3}, -1.5));
  CHECK_THROWS_AS(ops::maxpool2d(g3.constant(Tensor<double>({1, 3, 4}))), DimensionError);
}

TEST_CASE("maxpool2d backward conserves gradient mass") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + rng() % 3, h = 2 * (1 + rng() % 4), w = 2 * (1 + rng() % 4);
    // Coarse values force plenty of ties.
    Tensor<double> xt({c, h, w});
    for (double& v : xt.values()) v = static_cast<double>(rng() % 3);
    const Tensor<double> upstream = random_tensor<double>({c, h / 2, w / 2}, rng);
    Graph<double> g;
    auto x = g.parameter("x", xt);
    g.backward(ops::sum(ops::hadamard(ops::maxpool2d(x), g.constant(upstream))));
    const auto dx = g.grad(x);
    const double in_mass = std::accumulate(dx.values().begin(), dx.values().end(), 0.0);
    const double out_mass = std::accumulate(upstream.values().begin(), upstream.values().end(), 0.0);
    CHECK(in_mass == doctest::Approx(out_mass).epsilon(1e-12));
  }
}

TEST_CASE_TEMPLATE("affine matches dot-product oracle", T, float, double) {
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-10;
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 1 + rng() % 5, n = 1 + rng() % 20, m = 1 + rng() % 20;
    auto xv = oracle::random_vec(rows * n, rng);
    auto wv = oracle::random_vec(m * n, rng);
    auto bv = oracle::random_vec(m, rng);
    Graph<T> g;
    auto y = ops::affine(g.constant(tensor<T>({rows, n}, xv)), g.constant(tensor<T>({m, n}, wv)),
                         g.constant(tensor<T>({m}, bv)));
    CHECK(max_abs_diff(y.value(), oracle::affine(xv, rows, n, wv, m, bv)) < tol);
  }
  Graph<T> g;
  Tensor<T> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at({i, i}) = 1;
  auto x = g.constant(tensor<T>({3}, {1, -2, 3}));
  auto b = g.constant(tensor<T>({3}, {4, 5, 6}));
  CHECK(ops::affine(x, g.constant(eye), g.constant(Tensor<T>({3}))).value() == x.value());
  CHECK(ops::affine(g.constant(Tensor<T>({3})), g.constant(eye), b).value() == b.value());
  CHECK_THROWS_AS(ops::affine(x, g.constant(Tensor<T>({3, 4})), b), DimensionError);
}

TEST_CASE("activations") {
  Graph<double> g;
  auto z = g.constant(Tensor<double>({1}, 0.0));
  CHECK(ops::sigmoid(z).value()[0] == 0.5);
  CHECK(ops::tanh(z).value()[0] == 0.0);
  CHECK(ops::relu(z).value()[0] == 0.0);

  // d sigmoid / dx at 0 by central differences.
  const double eps = 1e-6;
  auto s = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double numeric = (s(eps) - s(-eps)) / (2 * eps);
  Graph<double> g2;
  auto x = g2.parameter("x", Tensor<double>({1}, 0.0));
  g2.backward(ops::sigmoid(x));
  CHECK(numeric == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(g2.grad(x)[0] == doctest::Approx(numeric).epsilon(1e-9));
}

TEST_CASE("softmax examples and invariants") {
  Graph<double> g;
  auto a = ops::softmax(g.constant(tensor<double>({2}, {0, 0})), 0);
  CHECK(a.value()[0] == doctest::Approx(0.5));
  auto b = ops::softmax(g.constant(tensor<double>({2}, {std::log(2.0), 0})), 0);
  CHECK(b.value()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(b.value()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  auto c = ops::softmax(g.constant(tensor<double>({2}, {1000, 0})), 0);
  CHECK(c.value()[0] == doctest::Approx(1.0));
  CHECK(c.value()[1] < 1e-300);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    auto xv = oracle::random_vec(n, rng, -20, 20);
    Graph<float> gf;
    auto y = ops::softmax(gf.constant(tensor<float>({n}, xv)), 0);
    double total = 0;
    for (float v : y.value().values()) {
      CHECK(v > 0.0f);
      CHECK(v <= 1.0f);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
    CHECK(max_abs_diff(y.value(), oracle::softmax(xv)) < 1e-6);
    auto shifted = xv;
    for (double& v : shifted) v += 3.75;
    auto ys = ops::softmax(gf.constant(tensor<float>({n}, shifted)), 0);
    CHECK(max_abs_diff(ys.value(), testutil::to_vec(y.value().cast<double>())) < 1e-6);
  }
}

TEST_CASE("elementwise, concat, slice") {
  Graph<double> g;
  auto x = g.constant(tensor<double>({2}, {2, 3}));
  auto y = g.constant(tensor<double>({2}, {4, 5}));
  CHECK(testutil::to_vec(ops::hadamard(x, y).value()) == std::vector<double>{8, 15});
  CHECK(ops::hadamard(x, g.constant(Tensor<double>({2}, 1.0))).value() == x.value());
  CHECK(ops::add(x, g.constant(Tensor<double>({2}))).value() == x.value());
  CHECK_THROWS_AS(ops::add(x, g.constant(Tensor<double>({3}))), DimensionError);

  std::mt19937_64 rng(9);
  auto a = g.constant(random_tensor<double>({2, 3, 4}, rng));
  auto b = g.constant(random_tensor<double>({3, 3, 4}, rng));
  CHECK(ops::concat({a}, 0).value() == a.value());
  auto ab = ops::concat({a, b}, 0);
  CHECK(ab.shape() == Shape{5, 3, 4});
  CHECK(ops::slice(ab, 0, 0, 2).value() == a.value());
  CHECK(ops::slice(ab, 0, 2, 3).value() == b.value());
  auto c = g.constant(random_tensor<double>({2, 5, 4}, rng));
  auto ac = ops::concat({a, c}, 1);
  CHECK(ops::slice(ac, 1, 0, 3).value() == a.value());
  CHECK(ops::slice(ac, 1, 3, 5).value() == c.value());
  CHECK_THROWS_AS(ops::concat({a, c}, 0), DimensionError);
}

TEST_CASE("mean") {
  Graph<double> g;
  CHECK(ops::mean(g.constant(Tensor<double>({2, 3}, 4.5)), {0, 1}).value()[0] == 4.5);
  CHECK(ops::mean(g.constant(tensor<double>({4}, {1, 2, 3, 4})), {0}).value()[0] == 2.5);
  auto m = ops::mean(g.constant(tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6})), {1});
  CHECK(testutil::to_vec(m.value()) == std::vector<double>{2, 5});
  CHECK_THROWS_AS(ops::mean(g.constant(Tensor<double>({2})), {1}), DimensionError);
  CHECK_THROWS_AS(ops::mean(g.constant(Tensor<double>({2, 2})), {0, 0}), DimensionError);

  // Gradient is 1/count broadcast.
  Graph<double> g2;
  auto x = g2.parameter("x", Tensor<double>({2, 3, 4}, 1.0));
  g2.backward(ops::sum(ops::mean(x, {0, 2})));
  const Tensor<double> dx = g2.grad(x);
  for (double v : dx.values()) CHECK(v == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("backward contract") {
  Graph<double> g;
  auto x = g.parameter("x", Tensor<double>({3}, 2.0));
  g.backward(ops::sum(x));
  CHECK(g.grad(x) == Tensor<double>({3}, 1.0));
  CHECK_THROWS_AS(g.backward(x), ContractError);

  Graph<double> g2;
  auto p = g2.parameter("p", Tensor<double>({2}, 1.0));
  auto c = g2.constant(Tensor<double>({1}, 3.0));
  g2.backward(c);
  CHECK(g2.grad(p) == Tensor<double>({2}, 0.0));

  // Fan-out accumulates.
  Graph<double> g3;
  auto q = g3.parameter("q", tensor<double>({2}, {1, 2}));
  g3.backward(ops::sum(ops::add(q, ops::hadamard(q, q))));
  CHECK(testutil::to_vec(g3.grad(q)) == std::vector<double>{3, 5});
}

TEST_CASE("every op's backward matches central differences") {
  std::mt19937_64 rng(42);
  using testutil::fd_max_error;
  using testutil::probe_sum;
  const double tol = 1e-7;
  auto R = [&](const Shape& s) { return random_tensor<double>(s, rng); };

  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::conv2d(v[0], v[1], v[2], ops::Padding::same), 1); },
                     {R({2, 5, 4}), R({3, 2, 3, 3}), R({3})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::conv2d(v[0], v[1], v[2], ops::Padding::valid), 2); },
                     {R({2, 5, 4}), R({1, 2, 3, 3}), R({1})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::conv2d(v[0], v[1], v[2], ops::Padding::same), 3); },
                     {R({3, 4, 4}), R({2, 3, 1, 1}), R({2})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::transposed_conv2d(v[0], v[1]), 4); },
                     {R({2, 3, 2}), R({2, 3, 2, 2})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::maxpool2d(v[0]), 5); },
                     {R({2, 4, 6})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::affine(v[0], v[1], v[2]), 6); },
                     {R({3, 2, 5}), R({4, 5}), R({4})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::affine(v[0], v[1], Var<double>()), 6); },
                     {R({5}), R({4, 5})}) < tol);
  for (auto kind : {ops::Activation::sigmoid, ops::Activation::tanh, ops::Activation::relu}) {
    CHECK(fd_max_error([kind](Graph<double>& g, const auto& v) { return probe_sum(g, ops::activation(v[0], kind), 7); },
                       {R({3, 4})}) < tol);
  }
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::softmax(v[0], 1), 8); },
                     {R({3, 4, 2})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::hadamard(v[0], v[1]), 9); },
                     {R({3, 4}), R({3, 4})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::concat({v[0], v[1]}, 1), 10); },
                     {R({2, 3, 2}), R({2, 1, 2})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::slice(v[0], 1, 1, 2), 11); },
                     {R({2, 4, 3})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) {
          std::vector<Var<double>> xs{v[0], v[1], v[2]};
          return probe_sum(g, ops::stack(std::span<const Var<double>>(xs)), 12);
        },
                     {R({2, 3}), R({2, 3}), R({2, 3})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::transpose_last2(v[0]), 13); },
                     {R({2, 3, 4})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::mean(v[0], {0, 2}), 14); },
                     {R({2, 3, 4})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::weighted_sum(v[0], v[1]), 15); },
                     {R({3, 2, 4}), R({3})}) < tol);
  CHECK(fd_max_error([](Graph<double>& g, const auto& v) { return probe_sum(g, ops::center_crop(v[0], 2, 3), 16); },
                     {R({2, 5, 6})}) < tol);
  std::vector<std::uint8_t> labels{0, 2, 255, 1, 1, 0};
  CHECK(fd_max_error([&](Graph<double>&, const auto& v) { return ops::cross_entropy(ops::softmax(v[0], 0), labels, 5.0); },
                     {R({3, 2, 3})}) < tol);
}

TEST_CASE("backward is linear in the root") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto wt = random_tensor<double>({4, 3}, rng);
    auto xt = random_tensor<double>({2, 3}, rng);
    const double a = oracle::random_vec(1, rng)[0] * 3, b = oracle::random_vec(1, rng)[0] * 3;
    auto f = [](Var<double> w, Var<double> x) { return ops::sum(ops::tanh(ops::affine(x, w, Var<double>()))); };
    auto h = [](Var<double> w, Var<double> x) {
      auto y = ops::affine(x, w, Var<double>());
      return ops::sum(ops::hadamard(y, ops::sigmoid(y)));
    };
    auto grad_of = [&](int which) {
      Graph<double> g;
      auto w = g.parameter("w", wt);
      auto x = g.constant(xt);
      Var<double> root;
      if (which == 0) root = f(w, x);
      if (which == 1) root = h(w, x);
      if (which == 2) root = ops::add(ops::scale(f(w, x), a), ops::scale(h(w, x), b));
      g.backward(root);
      return g.grad(w);
    };
    auto gf = grad_of(0), gh = grad_of(1), gc = grad_of(2);
    for (std::size_t i = 0; i < gc.size(); ++i) CHECK(gc[i] == doctest::Approx(a * gf[i] + b * gh[i]).epsilon(1e-12));
  }
}

TEST_CASE("non-finite op output is an error") {
  Graph<double> g;
  auto x = g.constant(tensor<double>({1}, {INFINITY}));
  CHECK_THROWS_AS(ops::scale(x, 0.0), NumericalError);
}

TEST_CASE("grad_check on simple objectives") {
  ParamSet<double> p;
  std::mt19937_64 rng(1);
  p.add("a.w", random_tensor<double>({4, 3}, rng));
  p.add("b.w", random_tensor<double>({5}, rng));
  Objective quad = [](const ParamSet<double>& params, ParamSet<double>* grads) {
    double f = 0;
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i].value.size(); ++j) {
        const double v = params[i].value[j];
        f += 0.5 * v * v;
        if (grads) (*grads)[i].value[j] = v;
      }
    return f;
  };
  auto r = grad_check(quad, p, 1e-3, 50, 7);
  CHECK(r.max_relative_error < 1e-9);
  CHECK(r.group_max.size() == 2);
  Objective constant = [](const ParamSet<double>&, ParamSet<double>*) { return 3.0; };
  CHECK(grad_check(constant, p, 1e-3, 20, 7).max_relative_error < 1e-8);
  CHECK_THROWS_AS(grad_check([](const ParamSet<double>& params, ParamSet<double>*) {
                    return std::log(std::abs(params[1].value[0]) - 1e9);
                  },
                             p, 1e-3, 5, 1),
                  NumericalError);
  CHECK_THROWS_AS(grad_check(quad, p, 0.0, 5, 1), ContractError);
}

TEST_CASE("SIMD kernels agree with scalar reference") {
  if (simd::detected_isa() != simd::Isa::avx2) {
    MESSAGE("AVX2 not available; only the scalar path is exercised");
    return;
  }
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    // Odd trials use a long shared dimension to reach the row-dot path.
    const std::size_t m = 1 + rng() % 23, n = 1 + rng() % 41, k = 1 + rng() % (trial % 2 ? 150 : 19);
    const bool ta = rng() % 2, tb = rng() % 2, acc = rng() % 2;
    auto a = oracle::random_vec(m * k, rng);
    auto b = oracle::random_vec(k * n, rng);
    auto c0 = oracle::random_vec(m * n, rng);
    std::vector<float> af(a.begin(), a.end()), bf(b.begin(), b.end()), cs(c0.begin(), c0.end()), cv = cs;
    std::vector<double> cds = c0, cdv = c0;
    const std::size_t lda = ta ? m : k, ldb = tb ? k : n;
    {
      simd::ScopedIsa s(simd::Isa::scalar);
      simd::gemm<float>(ta, tb, m, n, k, af.data(), lda, bf.data(), ldb, cs.data(), n, acc);
      simd::gemm<double>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, cds.data(), n, acc);
    }
    {
      simd::ScopedIsa s(simd::Isa::avx2);
      simd::gemm<float>(ta, tb, m, n, k, af.data(), lda, bf.data(), ldb, cv.data(), n, acc);
      simd::gemm<double>(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, cdv.data(), n, acc);
    }
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(std::abs(cs[i] - cv[i]) < 1e-5f + 1e-6f * static_cast<float>(k));
      CHECK(std::abs(cds[i] - cdv[i]) < 1e-12);
    }
    const std::size_t len = 1 + rng() % 50;
    std::vector<double> x = oracle::random_vec(len, rng), y1 = oracle::random_vec(len, rng), y2 = y1;
    double d1, d2;
    {
      simd::ScopedIsa s(simd::Isa::scalar);
      simd::axpy<double>(len, 0.3, x.data(), y1.data());
      d1 = simd::dot<double>(len, x.data(), y1.data());
    }
    {
      simd::ScopedIsa s(simd::Isa::avx2);
      simd::axpy<double>(len, 0.3, x.data(), y2.data());
      d2 = simd::dot<double>(len, x.data(), y2.data());
    }
    for (std::size_t i = 0; i < len; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-12));
  }
}

TEST_CASE("all_finite kernels agree on every position and kind of bad value") {
  const float bad[] = {NAN, INFINITY, -INFINITY};
  for (std::size_t n : {1u, 7u, 8u, 9u, 33u}) {
    std::vector<float> xf(n, 1.5f);
    std::vector<double> xd(n, -2.0);
    for (simd::Isa isa : {simd::Isa::scalar, simd::detected_isa()}) {
      simd::ScopedIsa s(isa);
      CHECK(simd::all_finite<float>(n, xf.data()));
      CHECK(simd::all_finite<double>(n, xd.data()));
      for (std::size_t i = 0; i < n; ++i) {
        for (float b : bad) {
          xf[i] = b;
          xd[i] = b;
          CHECK_FALSE(simd::all_finite<float>(n, xf.data()));
          CHECK_FALSE(simd::all_finite<double>(n, xd.data()));
          xf[i] = 1.5f;
          xd[i] = -2.0;
        }
      }
    }
  }
  std::vector<float> big{3e38f, -3e38f, 1e-45f, 0.0f, -0.0f};
  CHECK(simd::all_finite<float>(big.size(), big.data()));
}

TEST_CASE("ops agree across kernel variants") {
  if (simd::detected_isa() != simd::Isa::avx2) return;
  std::mt19937_64 rng(3);
  auto xt = random_tensor<float>({4, 12, 12}, rng);
  auto kt = random_tensor<float>({6, 4, 3, 3}, rng);
  auto bt = random_tensor<float>({6}, rng);
  auto run = [&](simd::Isa isa) {
    simd::ScopedIsa s(isa);
    Graph<float> g;
    auto x = g.parameter("x", xt);
    auto k = g.parameter("k", kt);
    auto y = ops::conv2d(x, k, g.parameter("b", bt), ops::Padding::same);
    g.backward(ops::sum(ops::hadamard(y, y)));
    return std::make_pair(g.grad(x), g.grad(k));
  };
  auto [xs, ks] = run(simd::Isa::scalar);
  auto [xv, kv] = run(simd::Isa::avx2);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(xs[i] == doctest::Approx(xv[i]).epsilon(1e-4));
  for (std::size_t i = 0; i < ks.size(); ++i) CHECK(ks[i] == doctest::Approx(kv[i]).epsilon(1e-4));
}
