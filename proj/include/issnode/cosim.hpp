#pragma once

#include "issnode/data.hpp"
#include "issnode/model.hpp"

namespace issnode {

struct ConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Load-side ODE block. Port voltages seen by the circuit depend only on the
// load state and the external drive, never directly on the circuit's output
// currents; that keeps the interconnection an ODE (no algebraic loop).
struct LoadModel {
  std::size_t state_dim = 0;
  std::function<Vec(const Vec& x_load, double u_ext)> port_voltages;
  std::function<void(const Vec& x_load, const Vec& y_currents, double u_ext, Vec& dx)>
      dynamics;
  // DC initial guess for the load states given the initial drive.
  std::function<Vec(double u_ext)> dc_guess;
};

// The RC load structure used for oracle data generation, as a LoadModel.
LoadModel make_rc_load_model(const RcLoad& load);

// Joint ODE of [model state; load state] for a learned model operating in
// normalized units against a physical load.
struct Interconnection {
  CtrnnParams model;
  std::vector<NormRecord> u_norm, y_norm;  // model port normalization
  LoadModel load;
  Trajectory source;  // u_ext
};

struct ClosedLoopResult {
  Trajectory u;  // physical port voltages at sample times
  Trajectory y;  // physical port currents predicted by the model
};

// Solves the stacked DC point by Newton on the joint residual, then
// integrates the interconnection monolithically.
ClosedLoopResult simulate_closed_loop(const Interconnection& ic, double T,
                                      const SolverConfig& cfg,
                                      std::size_t samples = 201);

struct CosimRun {
  double mse = 0.0;  // normalized scale, mean over channels and time
  bool ok = false;
};

struct CosimReport {
  std::vector<CosimRun> runs;
  double mean_mse = 0.0;
  std::size_t runs_ok = 0, runs_failed = 0;
};

// Closed-loop test against the ground-truth oracle: each run draws a fresh
// load and source (deterministic per-run seed), simulates both the oracle and
// the model against the identical load/source, and reports normalized MSE.
CosimReport test_mse(const CtrnnParams& model, const std::vector<NormRecord>& u_norm,
                     const std::vector<NormRecord>& y_norm, OracleKind oracle,
                     std::size_t runs, std::uint64_t seed, double T,
                     const SolverConfig& cfg, std::size_t jobs = 1);

std::string cosim_report_to_json(const CosimReport& rep);

}  // namespace issnode
