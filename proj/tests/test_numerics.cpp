#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "issnode/numerics.hpp"
#include "issnode/rng.hpp"

using namespace issnode;

namespace {

Matrix random_symmetric(std::size_t n, Rng& rng, double scale = 1.0) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = rng.uniform(-scale, scale);
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

}  // namespace

TEST_CASE("largest eigenvalue of small matrices") {
  CHECK(sym_lambda_max(Matrix::identity(2)) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix d(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = -1.0;
  CHECK(sym_lambda_max(d) == doctest::Approx(3.0).epsilon(1e-12));

  Matrix offdiag(2, 2);
  offdiag(0, 1) = 1.0;
  offdiag(1, 0) = 1.0;
  CHECK(sym_lambda_max(offdiag) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("largest eigenvalue rejects non-finite input") {
  Matrix m(2, 2);
  m(0, 0) = std::nan("");
  CHECK_THROWS_AS(sym_lambda_max(m), InvalidInputError);
}

TEST_CASE("Rayleigh quotient never exceeds the largest eigenvalue") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(8);
    const Matrix m = random_symmetric(n, rng);
    const double lmax = sym_lambda_max(m);
    for (int probe = 0; probe < 10; ++probe) {
      Vec v(n);
      for (double& vi : v) vi = rng.uniform(-1.0, 1.0);
      const double vv = dot(v, v);
      if (vv < 1e-12) continue;
      CHECK(dot(v, matvec(m, v)) / vv <= lmax + 1e-9);
    }
  }
}

TEST_CASE("shift property lambda_max(M + cI) = lambda_max(M) + c") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(6);
    const Matrix m = random_symmetric(n, rng);
    const double c = rng.uniform(-5.0, 5.0);
    const Matrix shifted = m + c * Matrix::identity(n);
    CHECK(sym_lambda_max(shifted) ==
          doctest::Approx(sym_lambda_max(m) + c).epsilon(1e-8));
  }
}

TEST_CASE("eigensystem reconstructs the matrix") {
  Rng rng(13);
  const Matrix m = random_symmetric(5, rng);
  const EigenSystem es = jacobi_eigensystem(m);
  for (std::size_t k = 0; k < 5; ++k) {
    Vec v(5);
    for (std::size_t i = 0; i < 5; ++i) v[i] = es.vectors(i, k);
    const Vec mv = matvec(m, v);
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(mv[i] == doctest::Approx(es.values[k] * v[i]).epsilon(1e-8));
  }
}

TEST_CASE("dominant eigenvector has deterministic sign") {
  Rng rng(17);
  const Matrix m = random_symmetric(6, rng);
  const auto [l1, v1] = sym_lambda_max_vec(m);
  const auto [l2, v2] = sym_lambda_max_vec(m);
  CHECK(l1 == l2);
  for (std::size_t i = 0; i < 6; ++i) CHECK(v1[i] == v2[i]);
  CHECK(norm2(v1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("negative definiteness test") {
  const Matrix neg_i = -1.0 * Matrix::identity(2);
  CHECK(is_negative_definite(neg_i, 1e-12));
  CHECK_FALSE(is_negative_definite(Matrix(2, 2), 1e-12));
  Matrix mixed(2, 2);
  mixed(0, 0) = -2.0;
  mixed(1, 1) = 1.0;
  CHECK_FALSE(is_negative_definite(mixed, 1e-12));
}

TEST_CASE("linear solve on hand cases") {
  {
    const Vec x = solve_linear(Matrix::identity(2), {1.0, 2.0});
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(2.0));
  }
  {
    Matrix d(2, 2);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    const Vec x = solve_linear(d, {2.0, 4.0});
    CHECK(x[0] == doctest::Approx(1.0));
    CHECK(x[1] == doctest::Approx(1.0));
  }
  {
    Matrix u(2, 2);
    u(0, 0) = 1.0;
    u(0, 1) = 1.0;
    u(1, 1) = 1.0;
    const Vec x = solve_linear(u, {3.0, 1.0});
    CHECK(x[0] == doctest::Approx(2.0));
    CHECK(x[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("linear solve residual bound on random well-conditioned systems") {
  Rng rng(19);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(7);
    // Diagonally dominant, hence well conditioned.
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        a(i, j) = rng.uniform(-1.0, 1.0);
        row += std::abs(a(i, j));
      }
      a(i, i) = row + 1.0 + rng.uniform(0.0, 1.0);
    }
    Vec b(n);
    for (double& bi : b) bi = rng.uniform(-10.0, 10.0);
    const Vec x = solve_linear(a, b);
    const Vec ax = matvec(a, x);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res = std::max(res, std::abs(ax[i] - b[i]));
    CHECK(res <= 1e-9 * (1.0 + norm2(b)));
  }
}

TEST_CASE("singular matrix raises with a condition estimate") {
  Matrix s(2, 2);
  s(0, 0) = 1.0;
  s(0, 1) = 2.0;
  s(1, 0) = 2.0;
  s(1, 1) = 4.0;
  CHECK_THROWS_AS(solve_linear(s, {1.0, 1.0}), SingularMatrixError);
  try {
    solve_linear(s, {1.0, 1.0});
  } catch (const SingularMatrixError& e) {
    CHECK(e.cond_estimate > 1e9);
  }
}

TEST_CASE("deterministic rng streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
  }
  Rng c(Rng::derive_seed(42, 1)), d(Rng::derive_seed(42, 2));
  CHECK(c.uniform() != d.uniform());
}
