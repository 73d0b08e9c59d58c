#include "issnode/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace issnode {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix r = a;
  for (std::size_t i = 0; i < r.data().size(); ++i) r.data()[i] += b.data()[i];
  return r;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix r = a;
  for (std::size_t i = 0; i < r.data().size(); ++i) r.data()[i] -= b.data()[i];
  return r;
}

Matrix operator*(double c, const Matrix& a) {
  Matrix r = a;
  for (double& v : r.data()) v *= c;
  return r;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix r(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) r(i, j) += aik * b(k, j);
    }
  return r;
}

Matrix transpose(const Matrix& a) {
  Matrix r(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) r(j, i) = a(i, j);
  return r;
}

Vec matvec(const Matrix& a, const Vec& x) {
  Vec r(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    r[i] = s;
  }
  return r;
}

Vec matvec_t(const Matrix& a, const Vec& x) {
  Vec r(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += a(i, j) * xi;
  }
  return r;
}

Matrix outer(const Vec& u, const Vec& v) {
  Matrix r(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) r(i, j) = u[i] * v[j];
  return r;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const Vec& a) {
  double s = 0.0;
  for (double v : a) s = std::max(s, std::fabs(v));
  return s;
}

Vec axpy(double alpha, const Vec& x, const Vec& y) {
  Vec r = y;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += alpha * x[i];
  return r;
}

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

namespace {

double off_diag_frobenius2(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return s;
}

}  // namespace

EigenSystem jacobi_eigensystem(const Matrix& m) {
  if (!m.square()) throw InvalidInputError("jacobi_eigensystem: matrix not square");
  if (!m.all_finite()) throw InvalidInputError("jacobi_eigensystem: non-finite entries");

  const std::size_t n = m.rows();
  // Work on the symmetric part.
  Matrix a(n, n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = 0.5 * (m(i, j) + m(j, i));
      scale = std::max(scale, std::fabs(a(i, j)));
    }
  Matrix v = Matrix::identity(n);

  const double tol2 = 1e-24 * std::max(1.0, scale * scale) * double(n * n);
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diag_frobenius2(a) < tol2) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double app = a(p, p), aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EigenSystem es;
  es.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) es.values[i] = a(i, i);
  es.vectors = std::move(v);
  return es;
}

double sym_lambda_max(const Matrix& m) {
  const EigenSystem es = jacobi_eigensystem(m);
  return *std::max_element(es.values.begin(), es.values.end());
}

double sym_lambda_min(const Matrix& m) {
  const EigenSystem es = jacobi_eigensystem(m);
  return *std::min_element(es.values.begin(), es.values.end());
}

std::pair<double, Vec> sym_lambda_max_vec(const Matrix& m) {
  const EigenSystem es = jacobi_eigensystem(m);
  std::size_t best = 0;
  for (std::size_t i = 1; i < es.values.size(); ++i)
    if (es.values[i] > es.values[best]) best = i;
  Vec v(m.rows());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = es.vectors(i, best);
  // Fix the sign on the largest-magnitude component.
  std::size_t imax = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::fabs(v[i]) > std::fabs(v[imax])) imax = i;
  if (v[imax] < 0.0)
    for (double& x : v) x = -x;
  const double nrm = norm2(v);
  if (nrm > 0.0)
    for (double& x : v) x /= nrm;
  return {es.values[best], v};
}

bool is_negative_definite(const Matrix& m, double tol) {
  return sym_lambda_max(m) < -tol;
}

Vec solve_linear(const Matrix& a, const Vec& b) {
  if (!a.square() || a.rows() != b.size())
    throw InvalidInputError("solve_linear: dimension mismatch");
  if (!a.all_finite() || !all_finite(b))
    throw InvalidInputError("solve_linear: non-finite entries");

  const std::size_t n = a.rows();
  Matrix lu = a;
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  double max_abs = 0.0;
  for (double v : lu.data()) max_abs = std::max(max_abs, std::fabs(v));
  const double pivot_tol = 1e-14 * std::max(1.0, max_abs);

  double max_pivot = 0.0, min_pivot = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(lu(i, k)) > std::fabs(lu(piv, k))) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      std::swap(perm[k], perm[piv]);
    }
    const double p = lu(k, k);
    const double ap = std::fabs(p);
    max_pivot = (k == 0) ? ap : std::max(max_pivot, ap);
    min_pivot = (k == 0) ? ap : std::min(min_pivot, ap);
    if (ap <= pivot_tol) {
      const double cond = (min_pivot > 0.0) ? max_pivot / min_pivot
                                            : std::numeric_limits<double>::infinity();
      throw SingularMatrixError("solve_linear: singular to tolerance", cond);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      lu(i, k) /= p;
      const double lik = lu(i, k);
      if (lik == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= lik * lu(k, j);
    }
  }

  Vec x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) x[i] -= lu(i, j) * x[j];
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu(i, j) * x[j];
    x[i] /= lu(i, i);
  }
  return x;
}

}  // namespace issnode
