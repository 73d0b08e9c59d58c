#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "issnode/numerics.hpp"

namespace issnode {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StiffnessError : SolverError {
  using SolverError::SolverError;
};
struct StepBudgetError : SolverError {
  using SolverError::SolverError;
};

enum class SolverMode { adaptive, fixed_grid };

struct SolverConfig {
  double rtol = 1e-6;
  double atol = 1e-9;
  double h_init = 1e-3;
  double h_min = 1e-12;
  double h_max = 1.0;
  std::size_t max_steps = 1000000;
  SolverMode mode = SolverMode::adaptive;
  std::size_t grid_steps = 200;  // fixed_grid mode
};

// Time-stamped multichannel signal. Piecewise-linear between samples,
// constant beyond the ends.
struct Trajectory {
  Vec times;
  std::vector<Vec> values;
  std::vector<std::string> labels;

  std::size_t dim() const { return values.empty() ? 0 : values.front().size(); }
  std::size_t size() const { return times.size(); }
};

Vec interp(const Trajectory& traj, double t);
// Single-channel convenience.
double interp1(const Trajectory& traj, double t, std::size_t channel);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is);

using OdeFn = std::function<void(double t, const Vec& x, Vec& dx)>;

struct IntegrateResult {
  Trajectory traj;  // states at accepted steps (adaptive) or grid points (fixed)
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

// Bogacki-Shampine 3(2) with FSAL. Adaptive mode controls the embedded
// second-order error estimate; fixed_grid mode takes cfg.grid_steps uniform
// steps and stores every grid state (the record backprop consumes).
IntegrateResult integrate(const OdeFn& f, const Vec& x0, double t0, double t1,
                          const SolverConfig& cfg);

// States at the uniform grid points t0 + k*(t1-t0)/steps, k = 0..steps.
std::vector<Vec> integrate_fixed_grid(const OdeFn& f, const Vec& x0, double t0,
                                      double t1, std::size_t steps);

// Least-squares slope of log error vs log h on a fixed-grid run against an
// exact solution.
double convergence_order(const OdeFn& f, const Vec& x0, double t0, double t1,
                         const std::function<Vec(double)>& exact,
                         const std::vector<double>& h_list);

}  // namespace issnode
