#pragma once

#include "issnode/model.hpp"
#include "issnode/solver.hpp"

namespace issnode {

struct StabilityReport {
  double lds_margin = 0.0;      // lambda_max of the LDS matrix
  double rho = 0.0;
  double theorem2_bound = 0.0;  // -2 delta / (tau (rho+1)) * min_i omega_i
  bool satisfied = false;
  bool rank_A_full = false;
};

// lambda_max of Omega (A W - I/tau) + (W^T A^T - I/tau) Omega. Negative
// certifies Lyapunov diagonal stability.
double lds_margin(const Matrix& A, const Matrix& W, double tau, const Vec& omega);

StabilityReport certify(const CtrnnParams& params);
std::string report_to_json(const StabilityReport& report);

// Lur'e-Postnikov function x^T P x + 2 sum_i omega_i * Int_0^{(Ax)_i} sigma.
double lyapunov_V(const Vec& x, const Matrix& A, const Vec& omega,
                  const Matrix& P, Nonlinearity kind);

struct DissipationReport {
  bool pass = false;
  double p_scale = 0.0;          // accepted P = p*I scale, 0 if none accepted
  double max_violation = 0.0;    // max upward jump between V samples
  Vec sample_times;
  Vec v_values;
};

// Simulates the unforced model from x0 and samples V along the trajectory.
// P is searched over p*I, p in {1e-2 .. 1e2}, accepting the first p with
// sampled Vdot < 0 along the trajectory.
DissipationReport dissipation_probe(const CtrnnParams& params, const Vec& x0,
                                    double horizon, const SolverConfig& cfg);

struct IssProbeReport {
  bool pass = false;
  double max_state_norm = 0.0;
  double cap = 0.0;
  std::size_t trials = 0;
};

// Simulates random bounded piecewise-linear inputs from the DC point and
// checks trajectories stay below `cap`. Diagnostic, sufficient-only evidence.
IssProbeReport iss_probe(const CtrnnParams& params, double input_bound,
                         std::size_t trials, double horizon, std::uint64_t seed,
                         double cap = 1e3);

}  // namespace issnode
