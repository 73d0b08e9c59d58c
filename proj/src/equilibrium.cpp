#include "issnode/equilibrium.hpp"

#include <algorithm>
#include <cmath>

#include "issnode/rng.hpp"

namespace issnode {

namespace {

DcResult newton_dc(const RealizedModel& model, const Vec& u0, const Vec& guess,
                   double tol, std::size_t max_iter, bool& stagnated) {
  DcResult res;
  Vec x = guess;
  Vec f = model.dynamics(x, u0);
  double fnorm = norm_inf(f);
  stagnated = false;
  for (std::size_t it = 0; it < max_iter && fnorm > tol; ++it) {
    ++res.iterations;
    const Matrix J = model.dfdx(x, u0);
    Vec step;
    try {
      Vec rhs = f;
      for (double& v : rhs) v = -v;
      step = solve_linear(J, rhs);
    } catch (const SingularMatrixError&) {
      stagnated = true;
      break;
    }
    // Backtracking: halve until the residual decreases (at most 20 halvings).
    double alpha = 1.0;
    bool improved = false;
    for (int half = 0; half <= 20; ++half) {
      const Vec x_try = axpy(alpha, step, x);
      const Vec f_try = model.dynamics(x_try, u0);
      const double fn_try = norm_inf(f_try);
      if (fn_try < fnorm) {
        x = x_try;
        f = f_try;
        fnorm = fn_try;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) {
      stagnated = true;
      break;
    }
  }
  if (fnorm > tol) stagnated = true;
  res.x0 = std::move(x);
  res.residual_norm = fnorm;
  res.method = DcMethod::newton;
  return res;
}

}  // namespace

DcResult solve_dc(const RealizedModel& model, const Vec& u0, const Vec& guess,
                  double tol, std::size_t max_iter) {
  bool stagnated = false;
  DcResult res = newton_dc(model, u0, guess, tol, max_iter, stagnated);
  if (!stagnated) return res;

  if (model.params().constrained) {
    // GAS for constant input: integrating long enough lands at the equilibrium.
    SolverConfig cfg;
    cfg.rtol = 1e-10;
    cfg.atol = 1e-12;
    cfg.h_max = 5.0 * model.tau();
    const double horizon = 50.0 * model.tau();
    Vec x = res.x0;
    try {
      const IntegrateResult sol = integrate(
          [&](double, const Vec& xs, Vec& dx) { dx = model.dynamics(xs, u0); }, x,
          0.0, horizon, cfg);
      x = sol.traj.values.back();
    } catch (const SolverError&) {
      throw DcFailure("solve_dc: Newton stagnated and fallback integration failed",
                      res.x0, res.residual_norm);
    }
    // Polish with Newton from the integrated point.
    bool stag2 = false;
    DcResult res2 = newton_dc(model, u0, x, tol, max_iter, stag2);
    res2.iterations += res.iterations;
    res2.method = DcMethod::integrate_fallback;
    if (!stag2) return res2;
    if (norm_inf(model.dynamics(x, u0)) <= tol) {
      res2.x0 = x;
      res2.residual_norm = norm_inf(model.dynamics(x, u0));
      return res2;
    }
    throw DcFailure("solve_dc: no convergence", res2.x0, res2.residual_norm);
  }
  throw DcFailure("solve_dc: Newton did not converge", res.x0, res.residual_norm);
}

DcResult solve_dc(const CtrnnParams& params, const Vec& u0, const Vec& guess,
                  double tol, std::size_t max_iter) {
  const RealizedModel model(params);
  return solve_dc(model, u0, guess, tol, max_iter);
}

UniquenessReport dc_uniqueness_probe(const CtrnnParams& params, const Vec& u0,
                                     std::size_t starts, std::uint64_t seed,
                                     double agree_tol) {
  const RealizedModel model(params);
  UniquenessReport rep;
  std::vector<Vec> solutions;
  Rng rng(seed);
  for (std::size_t s = 0; s < starts; ++s) {
    Vec guess(params.n);
    if (s > 0)
      for (double& g : guess) g = rng.uniform(-2.0, 2.0);
    try {
      solutions.push_back(solve_dc(model, u0, guess).x0);
    } catch (const DcFailure&) {
      ++rep.failures;
    }
  }
  for (std::size_t i = 1; i < solutions.size(); ++i) {
    double spread = 0.0;
    for (std::size_t k = 0; k < params.n; ++k)
      spread = std::max(spread, std::fabs(solutions[i][k] - solutions[0][k]));
    rep.max_spread = std::max(rep.max_spread, spread);
  }
  rep.pass = rep.failures == 0 && rep.max_spread <= agree_tol;
  return rep;
}

void dc_sensitivity(const RealizedModel& model, const Vec& u0, const Vec& x0,
                    const Vec& x0_bar, ParamGrads& grads) {
  // x0(theta) solves f(x0, theta) = 0, so dL/dtheta = -lambda^T df/dtheta
  // with (df/dx)^T lambda = dL/dx0.
  const Matrix Jt = transpose(model.dfdx(x0, u0));
  const Vec lambda = solve_linear(Jt, x0_bar);
  Vec neg_lambda = lambda;
  for (double& v : neg_lambda) v = -v;
  Vec unused(x0.size(), 0.0);
  model.vjp(x0, u0, neg_lambda, grads, unused);
}

Vec newton_fd(const ResidualFn& f, Vec guess, double tol, std::size_t max_iter) {
  const std::size_t n = guess.size();
  Vec r = f(guess);
  double rnorm = norm_inf(r);
  for (std::size_t it = 0; it < max_iter && rnorm > tol; ++it) {
    Matrix J(n, n);
    const double h = 1e-7;
    for (std::size_t j = 0; j < n; ++j) {
      Vec xp = guess, xm = guess;
      xp[j] += h;
      xm[j] -= h;
      const Vec rp = f(xp), rm = f(xm);
      for (std::size_t i = 0; i < n; ++i) J(i, j) = (rp[i] - rm[i]) / (2.0 * h);
    }
    Vec rhs = r;
    for (double& v : rhs) v = -v;
    Vec step = solve_linear(J, rhs);
    double alpha = 1.0;
    bool improved = false;
    for (int half = 0; half <= 20; ++half) {
      const Vec x_try = axpy(alpha, step, guess);
      const Vec r_try = f(x_try);
      if (norm_inf(r_try) < rnorm) {
        guess = x_try;
        r = r_try;
        rnorm = norm_inf(r);
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;
  }
  if (rnorm > tol) throw DcFailure("newton_fd: no convergence", guess, rnorm);
  return guess;
}

}  // namespace issnode
