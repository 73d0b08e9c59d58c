#pragma once

#include "issnode/data.hpp"
#include "issnode/model.hpp"
#include "issnode/training.hpp"

namespace issnode {

struct StressProfile {
  Trajectory u_stress;    // one period of the periodic stress waveform
  double t_op_years = 0;  // operating time, log-uniform in [0.001, 10]
};

StressProfile gen_stress_profile(std::uint64_t seed, double t_stress);

// Single-layer GRU encoder of (u_stress, T_op) with linear read-out heads
// producing additive perturbations of A_theta, B, and mu of a frozen fresh
// model. Hidden dimension 20; inputs per step are one stress sample plus
// log10(T_op).
struct GruPerturbNet {
  std::size_t input_dim = 2, hidden = 20;
  std::size_t l = 0, n = 0, m = 0;  // target perturbation shapes

  Matrix Wz, Uz, Wr, Ur, Wh, Uh;  // hidden x input, hidden x hidden
  Vec bz, br, bh;
  Matrix head_A, head_B, head_mu;  // (l*n | l*m | l) x hidden
  Vec headb_A, headb_B, headb_mu;

  static constexpr std::size_t kStressSamples = 64;
};

// Heads zero-initialized so training starts at the fresh model.
GruPerturbNet init_gru(std::size_t l, std::size_t n, std::size_t m,
                       std::uint64_t seed, std::size_t hidden = 20);

struct PerturbDeltas {
  Matrix dA;  // l x n
  Matrix dB;  // l x m
  Vec dmu;    // l
};

PerturbDeltas gru_forward(const GruPerturbNet& net, const StressProfile& profile);

// Reverse-mode: cotangents on the deltas -> flat gradient over the GRU
// weights (same layout as pack_gru).
Vec gru_backward(const GruPerturbNet& net, const StressProfile& profile,
                 const PerturbDeltas& delta_bars);

Vec pack_gru(const GruPerturbNet& net);
void unpack_gru(GruPerturbNet& net, const Vec& theta);

// Realized aged model: A_theta = A0 + dA routed through the stability
// scaling, B = B0 + dB, mu = mu0 + dmu. rho is recomputed per profile.
CtrnnParams aged_params(const CtrnnParams& fresh, const PerturbDeltas& deltas);

// --- aging dataset -----------------------------------------------------------

struct AgingItem {
  StressProfile profile;
  OraclePair pair;  // raw trajectories from the aged oracle
};

struct AgingDataset {
  std::vector<AgingItem> items;
  std::vector<NormRecord> u_norm, y_norm;  // reused from the fresh dataset
  std::uint64_t seed = 0;
  double horizon = 1.0;
  double t_stress = 0.1;
  std::size_t train_count = 0;
};

AgingDataset build_aging_dataset(std::size_t n_items, std::uint64_t seed, double T,
                                 double t_stress, const SolverConfig& cfg,
                                 const std::vector<NormRecord>& u_norm,
                                 const std::vector<NormRecord>& y_norm);

std::string aging_dataset_to_json(const AgingDataset& ds);
AgingDataset aging_dataset_from_json(const std::string& text);
void save_aging_dataset(const AgingDataset& ds, const std::string& path);
AgingDataset load_aging_dataset(const std::string& path);

std::string gru_to_json(const GruPerturbNet& net);
GruPerturbNet gru_from_json(const std::string& text);
void save_gru(const GruPerturbNet& net, const std::string& path);
GruPerturbNet load_gru(const std::string& path);

// --- two-step training -------------------------------------------------------

struct AgingTrainState {
  GruPerturbNet net;
  std::vector<MetricsRow> history;  // valid_mse column holds held-out aged MSE
};

// Optimizes only the GRU/head weights with the shared loss/gradient/ADAM
// machinery; the fresh parameters are never touched.
AgingTrainState fit_aging(const CtrnnParams& fresh, const AgingDataset& ds,
                          const TrainConfig& cfg, std::ostream* log = nullptr);

// Mean open-loop normalized MSE over the given items with per-item realized
// aged parameters. A null `net` evaluates the frozen fresh model.
double aging_eval_mse(const CtrnnParams& fresh, const GruPerturbNet* net,
                      const AgingDataset& ds, const std::vector<std::size_t>& indices,
                      std::size_t grid_steps = 200);

}  // namespace issnode
