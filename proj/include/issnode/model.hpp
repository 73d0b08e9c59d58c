#pragma once

#include <cmath>
#include <string>

#include "issnode/numerics.hpp"

namespace issnode {

enum class Nonlinearity { relu, tanh_fn };

Vec sigma(const Vec& w, Nonlinearity kind);
// Element-wise slope; ReLU at exactly 0 returns 0.
Vec sigma_slope(const Vec& w, Nonlinearity kind);
// Antiderivative with sigma_int(0) = 0: relu -> 0.5*relu(s)^2, tanh -> log cosh(s).
double sigma_int(double s, Nonlinearity kind);

// All learnable parameters of the CTRNN
//   x' = -x/tau + W sigma(A x + B u + mu) + nu,   y = H x + b,
// with A derived from A_theta by the stability scaling when `constrained`.
// tau and the diagonal Omega live in log space so positivity is structural.
struct CtrnnParams {
  std::size_t n = 0;  // state dim
  std::size_t l = 0;  // hidden dim, l >= n
  std::size_t m = 0;  // input dim
  std::size_t p = 0;  // output dim

  double log_tau = 0.0;
  Matrix W;        // n x l
  Matrix A_theta;  // l x n
  Matrix B;        // l x m
  Vec mu;          // l
  Vec nu;          // n
  Matrix H;        // p x n
  Vec b;           // p
  Vec log_omega;   // l

  bool omega_learned = true;
  double delta = 1e-3;
  bool constrained = true;
  Nonlinearity kind = Nonlinearity::relu;

  double tau() const { return std::exp(log_tau); }
  Vec omega() const;
  void validate() const;  // throws InvalidInputError on bad shape/values
};

// rho evaluation with the intermediates its gradient needs.
struct RhoDetail {
  double rho = 0.0;
  double lambda_max = 0.0;
  Vec eigvec;   // dominant unit eigenvector of the symmetrized matrix
  bool active = false;  // ReLU argument > 0
  Matrix t1;    // Omega^1/2 A_theta W Omega^-1/2
};

RhoDetail rho_detail(const CtrnnParams& params);
double rho(const CtrnnParams& params);

// A_theta / (rho + 1) when constrained; A_theta itself in baseline mode.
Matrix effective_A(const CtrnnParams& params);

// Gradient accumulator. A and tau are tracked in realized space during
// backprop; finalize() chains them through the rho reparametrization and the
// log-space variables.
struct ParamGrads {
  double tau = 0.0;  // raw d/dtau from dynamics uses
  Matrix A;          // realized A, l x n
  Matrix W;
  Matrix B;
  Vec mu, nu;
  Matrix H;
  Vec b;

  // Filled by finalize():
  double log_tau = 0.0;
  Matrix A_theta;
  Vec log_omega;

  explicit ParamGrads(const CtrnnParams& params);
  void accumulate(const ParamGrads& other, double scale = 1.0);
  void finalize(const CtrnnParams& params, const RhoDetail& rd);
  bool finite() const;
};

// Immutable per-evaluation snapshot: realized A and tau, cached rho detail.
class RealizedModel {
 public:
  explicit RealizedModel(const CtrnnParams& params);

  const CtrnnParams& params() const { return *params_; }
  const Matrix& A() const { return A_; }
  double tau() const { return tau_; }
  const RhoDetail& rho() const { return rho_; }

  Vec dynamics(const Vec& x, const Vec& u) const;
  Vec output(const Vec& x) const;
  Matrix dfdx(const Vec& x, const Vec& u) const;
  Matrix dfdu(const Vec& x, const Vec& u) const;

  // Reverse-mode pullback of w^T f(x, u): accumulates into `grads` (realized
  // space) and `x_bar`; u is treated as data.
  void vjp(const Vec& x, const Vec& u, const Vec& w, ParamGrads& grads,
           Vec& x_bar) const;

 private:
  const CtrnnParams* params_;
  Matrix A_;
  double tau_;
  RhoDetail rho_;
};

// JSON (de)serialization, schema "iss-node-params-v1".
std::string params_to_json(const CtrnnParams& params);
CtrnnParams params_from_json(const std::string& text);
void save_params(const CtrnnParams& params, const std::string& path);
CtrnnParams load_params(const std::string& path);

}  // namespace issnode
