#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace issnode {

using Vec = std::vector<double>;

struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularMatrixError : std::runtime_error {
  SingularMatrixError(const std::string& msg, double cond)
      : std::runtime_error(msg), cond_estimate(cond) {}
  double cond_estimate;
};

// Dense row-major matrix. Sizes in this project are tiny (<= ~60).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double c, const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Vec matvec(const Matrix& a, const Vec& x);
// a^T * x without forming the transpose
Vec matvec_t(const Matrix& a, const Vec& x);
Matrix outer(const Vec& u, const Vec& v);

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
double norm_inf(const Vec& a);
Vec axpy(double alpha, const Vec& x, const Vec& y);  // alpha*x + y
bool all_finite(const Vec& v);

struct EigenSystem {
  Vec values;       // unsorted, as produced by the sweep
  Matrix vectors;   // columns are eigenvectors, matching `values`
};

// Cyclic Jacobi sweep on the symmetrized matrix (M + M^T)/2.
EigenSystem jacobi_eigensystem(const Matrix& m);

double sym_lambda_max(const Matrix& m);
double sym_lambda_min(const Matrix& m);
// Largest eigenvalue and a deterministic unit eigenvector for it.
std::pair<double, Vec> sym_lambda_max_vec(const Matrix& m);

bool is_negative_definite(const Matrix& m, double tol);

// LU solve with partial pivoting. Throws SingularMatrixError when a pivot
// falls below tolerance, carrying a crude condition estimate.
Vec solve_linear(const Matrix& a, const Vec& b);

}  // namespace issnode
