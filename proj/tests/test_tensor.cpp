#include <doctest.h>

#include <cmath>
#include <random>

#include "byolim/gemm.hpp"
#include "byolim/ops.hpp"
#include "test_support.hpp"

using namespace byolim;
using byolim::testing::check_gradients;
using byolim::testing::random_tensor;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io_error;
}

TensorD eval_binary(Var<double> (*op)(Var<double>, Var<double>), const TensorD& a, const TensorD& b) {
  Tape<double> tape;
  return op(tape.constant(a), tape.constant(b)).value();
}

}  // namespace

TEST_CASE("tensor_new fills, copies data and rejects length mismatches") {
  const TensorD zeros = tensor_new<double>({2, 2}, 0.0);
  CHECK(zeros.shape() == Shape{2, 2});
  for (double v : zeros.data()) CHECK(v == 0.0);

  const TensorD v = tensor_new<double>({3}, std::vector<double>{1, 2, 3});
  CHECK(v[0] == 1.0);
  CHECK(v[2] == 3.0);

  CHECK(code_of([] { tensor_new<double>({2}, std::vector<double>{1, 2, 3}); }) == ErrorCode::shape_mismatch);
  CHECK(code_of([] { TensorD({2, 0}); }) == ErrorCode::shape_mismatch);
  CHECK(code_of([] { TensorD({2}).item(); }) == ErrorCode::not_scalar);
}

TEST_CASE("matmul hand examples and shape errors") {
  const TensorD eye({2, 2}, {1, 0, 0, 1});
  const TensorD m({2, 2}, {1, 2, 3, 4});
  CHECK(eval_binary(matmul<double>, eye, m) == m);
  const TensorD r = eval_binary(matmul<double>, TensorD({1, 2}, {1, 2}), TensorD({2, 1}, {3, 4}));
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r[0] == 11.0);
  CHECK(code_of([&] { eval_binary(matmul<double>, m, TensorD({3, 1})); }) == ErrorCode::shape_mismatch);
  CHECK(code_of([&] { eval_binary(matmul<double>, TensorD({4}), m); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("gemm agrees with a naive triple loop for every transpose combination") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> dim(1, 37);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
    const bool ta = trial & 1, tb = trial & 2;
    const TensorD a = random_tensor(ta ? Shape{k, m} : Shape{m, k}, rng);
    const TensorD b = random_tensor(tb ? Shape{n, k} : Shape{k, n}, rng);
    TensorD c = random_tensor({m, n}, rng);
    TensorD expect = c;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ta ? a[p * m + i] : a[i * k + p];
          const double bv = tb ? b[j * k + p] : b[p * n + j];
          s += av * bv;
        }
        expect[i * n + j] = 0.5 * s + 0.25 * expect[i * n + j];
      }
    gemm<double>(ta, tb, m, n, k, 0.5, a.raw(), ta ? m : k, b.raw(), tb ? k : n, 0.25, c.raw(), n);
    for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("elementwise examples") {
  CHECK(eval_binary(add<double>, TensorD({2}, {1, 2}), TensorD({2}, {3, 4})) == TensorD({2}, {4, 6}));
  CHECK(eval_binary(mul<double>, TensorD({2}, {1, 2}), TensorD({2}, {0, 0})) == TensorD({2}, {0, 0}));
  CHECK(eval_binary(sub<double>, TensorD({2}, {1, 2}), TensorD({2}, {3, 5})) == TensorD({2}, {-2, -3}));
  Tape<double> tape;
  CHECK(scalar_mul(tape.constant(TensorD({3}, {1, 2, 3})), 2.0).value() == TensorD({3}, {2, 4, 6}));
  CHECK(add_scalar(tape.constant(TensorD({2}, {1, 2})), 0.5).value() == TensorD({2}, {1.5, 2.5}));
  CHECK(code_of([] { eval_binary(add<double>, TensorD({2}), TensorD({3})); }) == ErrorCode::shape_mismatch);
}

TEST_CASE("reductions") {
  Tape<double> tape;
  const Var<double> v = tape.constant(TensorD({4}, {1, 2, 3, 4}));
  CHECK(mean(v).value().rank() == 0);
  CHECK(mean(v).value().item() == 2.5);
  const Var<double> m = tape.constant(TensorD({2, 2}, {1, 2, 3, 4}));
  CHECK(sum(m, {0}).value() == TensorD({2}, {4, 6}));
  CHECK(sum(m, {1}).value() == TensorD({2}, {3, 7}));
  CHECK(mean(m, {0, 1}).value().item() == 2.5);
  CHECK(code_of([&] { sum(m, {2}); }) == ErrorCode::invalid_axis);
}

TEST_CASE("l2_normalize examples") {
  Tape<double> tape;
  const TensorD a = l2_normalize(tape.constant(TensorD({2}, {3, 4}))).value();
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(a[1] == doctest::Approx(0.8));
  CHECK(l2_normalize(tape.constant(TensorD({3}, {5, 0, 0}))).value() == TensorD({3}, {1, 0, 0}));
  CHECK(code_of([&] { l2_normalize(tape.constant(TensorD({2}, {0, 0}))); }) == ErrorCode::degenerate_vector);
  CHECK(code_of([&] { l2_normalize_rows(tape.constant(TensorD({2, 2}, {1, 0, 0, 0}))); }) ==
        ErrorCode::degenerate_vector);
}

TEST_CASE("backward routes gradients only to trainable parameters") {
  Parameter<double> p("p", TensorD({3}, {1, 2, 3}));
  Parameter<double> q("q", TensorD({3}, {1, 2, 3}), false);
  {
    Tape<double> tape;
    const GradMap<double> g = tape.backward(sum(tape.parameter(p)));
    REQUIRE(g.count(p.id()) == 1);
    CHECK(g.at(p.id()) == TensorD({3}, 1.0));
  }
  {
    Tape<double> tape;
    CHECK(tape.backward(sum(tape.parameter(q))).empty());
  }
  {
    Tape<double> tape;
    CHECK(tape.backward(sum(tape.detached(p))).empty());
  }
  {
    Tape<double> tape;
    const Var<double> x = tape.parameter(p);
    CHECK(code_of([&] { tape.backward(x); }) == ErrorCode::not_scalar);
  }
  {
    // A parameter used twice accumulates both contributions.
    Tape<double> tape;
    const Var<double> x = tape.parameter(p);
    const GradMap<double> g = tape.backward(sum(mul(x, x)));
    CHECK(g.at(p.id()) == TensorD({3}, {2, 4, 6}));
  }
}

TEST_CASE("finite_difference_grad examples") {
  const TensorD sq = finite_difference_grad<double>(
      [](const TensorD& x) { return x[0] * x[0] + x[1] * x[1]; }, TensorD({2}, {1, 2}), 1e-4);
  CHECK(sq[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(sq[1] == doctest::Approx(4.0).epsilon(1e-8));
  const TensorD c = finite_difference_grad<double>([](const TensorD&) { return 3.0; }, TensorD({4}, 1.0), 1e-4);
  for (double v : c.data()) CHECK(v == 0.0);
  const TensorD m = finite_difference_grad<double>(
      [](const TensorD& x) {
        double s = 0;
        for (double v : x.data()) s += v;
        return s / static_cast<double>(x.size());
      },
      TensorD({5}, {0.1, -3, 2, 7, 1}), 1e-4);
  for (double v : m.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-8));
}

TEST_CASE("gradient check: matmul") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  for (int i = 0; i < 20; ++i) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const TensorD w = random_tensor({m, n}, rng);
    auto r = check_gradients(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) {
          return sum(mul(matmul(in[0], in[1]), t.constant(w)));
        },
        {random_tensor({m, k}, rng), random_tensor({k, n}, rng)}, 1e-3);
    INFO(r.where);
    CHECK(r.ok);
  }
}

TEST_CASE("gradient check: elementwise, reductions and reshape") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const TensorD w = random_tensor({3, 4}, rng);
    auto r = check_gradients(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) {
          Var<double> x = add(mul(in[0], in[1]), scalar_mul(sub(in[0], in[1]), 1.7));
          x = add_scalar(x, 0.3);
          Var<double> rows = sum(mul(x, t.constant(w)), {1});
          Var<double> cols = mean(reshape(x, {4, 3}), {0});
          return add(mean(mul(rows, rows)), sum(mul(cols, cols)));
        },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
    INFO(r.where);
    CHECK(r.ok);
  }
}

TEST_CASE("gradient check: l2_normalize and l2_normalize_rows") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const TensorD w = random_tensor({6}, rng);
    const TensorD w2 = random_tensor({3, 5}, rng);
    auto r = check_gradients(
        [&](Tape<double>& t, const std::vector<Var<double>>& in) {
          return add(sum(mul(l2_normalize(in[0]), t.constant(w))),
                     sum(mul(l2_normalize_rows(in[1]), t.constant(w2))));
        },
        {random_tensor({6}, rng), random_tensor({3, 5}, rng)});
    INFO(r.where);
    CHECK(r.ok);
  }
}
