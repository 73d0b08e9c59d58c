#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>

#include "issnode/data.hpp"
#include "issnode/equilibrium.hpp"
#include "issnode/model.hpp"

namespace issnode {

enum class TrainMode { proposed, proposed_omega_identity, baseline };

TrainMode train_mode_from_string(const std::string& name);
std::string to_string(TrainMode mode);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
  std::size_t epochs = 200;
  std::size_t batch_size = 8;
  std::size_t K = 32;  // Monte Carlo time samples per trajectory
  double delta = 1e-3;
  std::size_t grid_steps = 200;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::proposed;
  std::size_t n = 6, l = 14;  // model dims; m, p come from the dataset
  bool train_W = true;  // aging fresh models freeze W = I
  bool train_nu = true;
  Nonlinearity kind = Nonlinearity::relu;
};

CtrnnParams init_params(std::size_t n, std::size_t l, std::size_t m, std::size_t p,
                        TrainMode mode, std::uint64_t seed, double delta = 1e-3,
                        Nonlinearity kind = Nonlinearity::relu,
                        bool w_identity = false);

// Normalized (input, target-output) trajectory pair.
struct TrainPair {
  Trajectory u;
  Trajectory y;
};

struct LossResult {
  double loss = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // DC/solver failures, never silently dropped
};

LossResult mc_loss(const CtrnnParams& params, const std::vector<TrainPair>& batch,
                   std::size_t K, Rng& rng, std::size_t grid_steps);

struct GradResult {
  LossResult loss;
  ParamGrads grads;  // finalized (A_theta / log-space entries valid)
  explicit GradResult(const CtrnnParams& p) : grads(p) {}
};

GradResult grad(const CtrnnParams& params, const std::vector<TrainPair>& batch,
                std::size_t K, Rng& rng, std::size_t grid_steps);

// Flat parameter vector in a fixed order:
// [log_tau, W, A_theta, B, mu, nu, H, b, log_omega].
Vec pack_params(const CtrnnParams& params);
void unpack_params(CtrnnParams& params, const Vec& theta);
Vec pack_grads(const ParamGrads& grads);
// 1 where the entry is trained under the given config, 0 where frozen.
Vec learnable_mask(const CtrnnParams& params, const TrainConfig& cfg);

struct AdamState {
  Vec m, v;
  std::size_t t = 0;
};

// Standard bias-corrected ADAM. Returns false (no update) on a non-finite
// gradient.
bool adam_step(Vec& theta, const Vec& g, AdamState& state, const TrainConfig& cfg);

struct MetricsRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_mse = 0.0;
  double lds_margin = 0.0;
  double rho = 0.0;
};

struct TrainState {
  CtrnnParams params;       // best-validation checkpoint
  CtrnnParams last_params;  // end-of-training parameters
  AdamState adam;
  std::size_t step = 0;
  std::vector<MetricsRow> history;
  double best_valid = 0.0;
};

std::vector<TrainPair> normalized_pairs(const Dataset& ds,
                                        const std::vector<std::size_t>& indices);

TrainState fit(const Dataset& ds, const TrainConfig& cfg, std::ostream* log = nullptr);

struct OpenLoopReport {
  Vec per_channel_mse;
  double aggregate = 0.0;  // mean over channels and trajectories
  std::size_t used = 0, excluded = 0;
};

OpenLoopReport evaluate_openloop(const CtrnnParams& params,
                                 const std::vector<TrainPair>& pairs,
                                 std::size_t grid_steps = 200);

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& history);

}  // namespace issnode
