#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "issnode/rng.hpp"
#include "issnode/solver.hpp"

namespace issnode {

// --- normalization -----------------------------------------------------------

struct NormRecord {
  double min = -1.0;
  double max = 1.0;
  bool constant = false;  // max == min; channel maps to 0
};

double normalize(double v, const NormRecord& rec);
double denormalize(double v, const NormRecord& rec);
Trajectory normalize(const Trajectory& traj, const std::vector<NormRecord>& recs);
Trajectory denormalize(const Trajectory& traj, const std::vector<NormRecord>& recs);

// --- sources -----------------------------------------------------------------

struct PwlSource {
  std::vector<std::pair<double, double>> breakpoints;  // (time, level)
  double v_lo = -1.0, v_hi = 1.0;
  double eval(double t) const;
  Trajectory to_trajectory() const;
};

PwlSource gen_pwl(std::uint64_t seed, double T, std::size_t segments, double v_lo,
                  double v_hi);

struct PrbsSource {
  std::size_t register_bits = 7;
  std::vector<std::size_t> taps = {7, 6};  // 1-based, Fibonacci LFSR
  double bit_period = 0.1;
  double rise_time = 0.01;
  double low = 0.0, high = 1.0;
};

// Trapezoidal waveform of the LFSR bit stream; `seed` is the initial register
// state (must be nonzero).
Trajectory gen_prbs(std::uint64_t seed, const PrbsSource& cfg, std::size_t periods);

// --- oracles -----------------------------------------------------------------

enum class OracleKind { common_source_surrogate, inverter_chain_surrogate, linear_2port };

OracleKind oracle_kind_from_string(const std::string& name);
std::string to_string(OracleKind kind);

// Synthetic ground-truth circuit. Two ports: port voltages u = (v_in, v_out)
// are the model inputs, port currents y (injected by the circuit into each
// port node) are the model outputs. ISS by construction: stable linear part
// plus bounded nonlinearities.
class CircuitOracle {
 public:
  static CircuitOracle make(OracleKind kind);

  OracleKind kind() const { return kind_; }
  std::size_t state_dim() const;
  std::size_t num_ports() const { return 2; }

  void dynamics(const Vec& x, const Vec& u_ports, Vec& dx) const;
  Vec port_currents(const Vec& x, const Vec& u_ports) const;

  // Aging hook: multiplies internal time constants (inverter chain stages).
  double aging_factor = 1.0;
  static double compute_aging_factor(double duty, double t_op_years,
                                     double kappa = 0.3, double t0_years = 0.001);

  // Source level range appropriate for this oracle's signal convention.
  double source_lo() const;
  double source_hi() const;

  // linear_2port constants, exposed for closed-form solver validation
  static constexpr double kLinR1 = 1.0, kLinC1 = 0.1;
  static constexpr double kLinR2 = 1.0, kLinC2 = 0.2;

 private:
  explicit CircuitOracle(OracleKind kind) : kind_(kind) {}
  OracleKind kind_;
};

// Fraction of time a single-channel waveform spends above the midpoint of its
// observed range.
double duty_cycle(const Trajectory& waveform);

// --- loads -------------------------------------------------------------------

// Input port: series r_in from the source node with shunt c_in to ground.
// Output port: parallel RC to ground.
struct RcLoad {
  double r_in = 0.2, c_in = 0.1;
  double r_out = 1.0, c_out = 0.1;
};

RcLoad gen_load(Rng& rng);

// --- oracle simulation -------------------------------------------------------

struct OraclePair {
  Trajectory u;  // port voltages
  Trajectory y;  // port currents
};

// Integrates the joint oracle+load ODE from its DC point and samples the
// model-port input/response on a uniform grid.
OraclePair simulate_oracle(const CircuitOracle& oracle, const RcLoad& load,
                           const Trajectory& source, double T,
                           const SolverConfig& cfg, std::size_t samples = 201);

// --- dataset -----------------------------------------------------------------

struct Dataset {
  std::vector<OraclePair> pairs;  // raw (unnormalized)
  std::vector<NormRecord> u_norm, y_norm;
  double time_scale = 1.0;
  std::uint64_t seed = 0;
  std::string oracle_kind;
  std::size_t train_count = 0;  // pairs [0, train_count) are the training split

  Trajectory normalized_u(std::size_t i) const { return normalize(pairs[i].u, u_norm); }
  Trajectory normalized_y(std::size_t i) const { return normalize(pairs[i].y, y_norm); }
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> valid_indices() const;
};

Dataset build_dataset(OracleKind kind, std::size_t n, std::uint64_t seed, double T,
                      const SolverConfig& cfg, std::size_t jobs = 1);

std::string dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const std::string& text);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Per-pair generation used by build_dataset and closed-loop evaluation:
// deterministic load + source draw for (seed, index).
struct DrawnRun {
  RcLoad load;
  Trajectory source;
};
DrawnRun draw_run(OracleKind kind, std::uint64_t seed, std::uint64_t index, double T);

}  // namespace issnode
