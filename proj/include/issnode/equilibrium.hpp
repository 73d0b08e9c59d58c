#pragma once

#include <cstdint>

#include "issnode/model.hpp"
#include "issnode/solver.hpp"

namespace issnode {

struct DcFailure : std::runtime_error {
  DcFailure(const std::string& msg, Vec best, double residual)
      : std::runtime_error(msg), best_iterate(std::move(best)), residual_norm(residual) {}
  Vec best_iterate;
  double residual_norm;
};

enum class DcMethod { newton, integrate_fallback };

struct DcResult {
  Vec x0;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  DcMethod method = DcMethod::newton;
};

// Damped Newton on 0 = f(x, u0) from `guess`; on stagnation with constrained
// params, falls back to integrating toward the (unique, GAS) equilibrium.
DcResult solve_dc(const RealizedModel& model, const Vec& u0, const Vec& guess,
                  double tol = 1e-9, std::size_t max_iter = 50);
DcResult solve_dc(const CtrnnParams& params, const Vec& u0, const Vec& guess,
                  double tol = 1e-9, std::size_t max_iter = 50);

struct UniquenessReport {
  bool pass = false;
  double max_spread = 0.0;  // infinity-norm spread across starts
  std::size_t failures = 0;
};

UniquenessReport dc_uniqueness_probe(const CtrnnParams& params, const Vec& u0,
                                     std::size_t starts, std::uint64_t seed,
                                     double agree_tol = 1e-6);

// Implicit-function-theorem pullback: given dL/dx0, accumulates dL/dtheta
// into `grads` (realized space; callers finalize once at the end).
// Throws SingularMatrixError when df/dx is singular at (x0, u0).
void dc_sensitivity(const RealizedModel& model, const Vec& u0, const Vec& x0,
                    const Vec& x0_bar, ParamGrads& grads);

// Generic damped Newton for small dense residuals with finite-difference
// Jacobian; used for joint circuit+load DC points.
using ResidualFn = std::function<Vec(const Vec&)>;
Vec newton_fd(const ResidualFn& f, Vec guess, double tol = 1e-9,
              std::size_t max_iter = 100);

}  // namespace issnode
