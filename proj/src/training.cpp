#include "issnode/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "issnode/stability.hpp"

namespace issnode {

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "proposed") return TrainMode::proposed;
  if (name == "proposed_omega_identity") return TrainMode::proposed_omega_identity;
  if (name == "baseline") return TrainMode::baseline;
  throw InvalidInputError("unknown train mode: " + name);
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::proposed: return "proposed";
    case TrainMode::proposed_omega_identity: return "proposed_omega_identity";
    case TrainMode::baseline: return "baseline";
  }
  return "?";
}

CtrnnParams init_params(std::size_t n, std::size_t l, std::size_t m, std::size_t p,
                        TrainMode mode, std::uint64_t seed, double delta,
                        Nonlinearity kind, bool w_identity) {
  if (l < n) throw InvalidInputError("init_params: l < n");
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(double(l));
  auto fill_m = [&](Matrix& mat) {
    for (double& v : mat.data()) v = rng.uniform(-s, s);
  };
  auto fill_v = [&](Vec& vec) {
    for (double& v : vec) v = rng.uniform(-s, s);
  };

  CtrnnParams pr;
  pr.n = n;
  pr.l = l;
  pr.m = m;
  pr.p = p;
  pr.log_tau = std::log(0.2);
  pr.W = Matrix(n, l);
  pr.A_theta = Matrix(l, n);
  pr.B = Matrix(l, m);
  pr.mu.assign(l, 0.0);
  pr.nu.assign(n, 0.0);
  pr.H = Matrix(p, n);
  pr.b.assign(p, 0.0);
  pr.log_omega.assign(l, 0.0);
  pr.delta = delta;
  pr.kind = kind;

  fill_m(pr.W);
  fill_m(pr.A_theta);
  fill_m(pr.B);
  fill_v(pr.mu);
  fill_v(pr.nu);
  fill_m(pr.H);
  fill_v(pr.b);

  if (w_identity) {
    if (l != n) throw InvalidInputError("init_params: W=I requires l == n");
    pr.W = Matrix::identity(n);
    pr.nu.assign(n, 0.0);
  }

  switch (mode) {
    case TrainMode::proposed:
      pr.constrained = true;
      pr.omega_learned = true;
      break;
    case TrainMode::proposed_omega_identity:
      pr.constrained = true;
      pr.omega_learned = false;
      break;
    case TrainMode::baseline: {
      pr.constrained = false;
      pr.omega_learned = false;
      // Constraint at init only: shrink A until the LDS condition holds
      // with Omega = I, then leave A free.
      const Vec ones(l, 1.0);
      for (int tries = 0; tries < 200; ++tries) {
        if (lds_margin(pr.A_theta, pr.W, pr.tau(), ones) < 0.0) break;
        pr.A_theta = 0.5 * pr.A_theta;
      }
      break;
    }
  }
  return pr;
}

namespace {

// Loss and (optionally) gradient of one normalized trajectory pair.
struct TrajResult {
  double loss = 0.0;
  bool ok = false;
};

TrajResult traj_loss_grad(const RealizedModel& model, const TrainPair& pair,
                          std::size_t K, std::size_t grid_steps, Rng& rng,
                          ParamGrads* grads) {
  TrajResult res;
  const CtrnnParams& pr = model.params();
  const double T = pair.u.times.back();
  const double h = T / double(grid_steps);

  // Sample times are drawn before any failure can occur so the rng stream
  // stays aligned across loss-only and gradient calls.
  Vec samples(K);
  for (double& sj : samples) sj = rng.uniform(0.0, T);

  const Vec u0 = interp(pair.u, 0.0);
  DcResult dc;
  try {
    dc = solve_dc(model, u0, Vec(pr.n, 0.0));
  } catch (const DcFailure&) {
    return res;
  }

  std::vector<Vec> states;
  try {
    states = integrate_fixed_grid(
        [&](double t, const Vec& x, Vec& dx) { dx = model.dynamics(x, interp(pair.u, t)); },
        dc.x0, 0.0, T, grid_steps);
  } catch (const SolverError&) {
    return res;
  }
  for (const Vec& x : states)
    if (!all_finite(x)) return res;  // diverged (possible in baseline mode)

  std::vector<Vec> x_bars;
  if (grads) x_bars.assign(grid_steps + 1, Vec(pr.n, 0.0));

  double loss = 0.0;
  for (double sj : samples) {
    std::size_t seg = std::min(std::size_t(sj / h), grid_steps - 1);
    const double w = sj / h - double(seg);
    Vec xs(pr.n);
    for (std::size_t i = 0; i < pr.n; ++i)
      xs[i] = (1.0 - w) * states[seg][i] + w * states[seg + 1][i];
    Vec y = model.output(xs);
    const Vec yt = interp(pair.y, sj);
    Vec r(pr.p);
    for (std::size_t i = 0; i < pr.p; ++i) r[i] = y[i] - yt[i];
    loss += dot(r, r) / double(K);
    if (grads) {
      Vec y_bar(pr.p);
      for (std::size_t i = 0; i < pr.p; ++i) y_bar[i] = 2.0 * r[i] / double(K);
      for (std::size_t i = 0; i < pr.p; ++i) {
        for (std::size_t j = 0; j < pr.n; ++j) grads->H(i, j) += y_bar[i] * xs[j];
        grads->b[i] += y_bar[i];
      }
      const Vec xs_bar = matvec_t(pr.H, y_bar);
      for (std::size_t i = 0; i < pr.n; ++i) {
        x_bars[seg][i] += (1.0 - w) * xs_bar[i];
        x_bars[seg + 1][i] += w * xs_bar[i];
      }
    }
  }
  res.loss = loss;
  res.ok = true;
  if (!grads) return res;

  // Reverse sweep over the recorded BS3 grid steps. Stages are recomputed
  // from the stored grid states.
  Vec xbar = x_bars[grid_steps];
  Vec k1(pr.n), k2(pr.n), s2(pr.n), s3(pr.n);
  Vec k1_bar(pr.n), k2_bar(pr.n), k3_bar(pr.n), tmp(pr.n);
  for (std::size_t k = grid_steps; k-- > 0;) {
    const double t = double(k) * h;
    const Vec& x = states[k];
    const Vec u1 = interp(pair.u, t);
    const Vec u2 = interp(pair.u, t + 0.5 * h);
    const Vec u3 = interp(pair.u, t + 0.75 * h);
    k1 = model.dynamics(x, u1);
    for (std::size_t i = 0; i < pr.n; ++i) s2[i] = x[i] + 0.5 * h * k1[i];
    k2 = model.dynamics(s2, u2);
    for (std::size_t i = 0; i < pr.n; ++i) s3[i] = x[i] + 0.75 * h * k2[i];

    Vec new_xbar = xbar;
    for (std::size_t i = 0; i < pr.n; ++i) {
      k1_bar[i] = 2.0 * h / 9.0 * xbar[i];
      k2_bar[i] = h / 3.0 * xbar[i];
      k3_bar[i] = 4.0 * h / 9.0 * xbar[i];
    }
    std::fill(tmp.begin(), tmp.end(), 0.0);
    model.vjp(s3, u3, k3_bar, *grads, tmp);
    for (std::size_t i = 0; i < pr.n; ++i) {
      new_xbar[i] += tmp[i];
      k2_bar[i] += 0.75 * h * tmp[i];
    }
    std::fill(tmp.begin(), tmp.end(), 0.0);
    model.vjp(s2, u2, k2_bar, *grads, tmp);
    for (std::size_t i = 0; i < pr.n; ++i) {
      new_xbar[i] += tmp[i];
      k1_bar[i] += 0.5 * h * tmp[i];
    }
    std::fill(tmp.begin(), tmp.end(), 0.0);
    model.vjp(x, u1, k1_bar, *grads, tmp);
    for (std::size_t i = 0; i < pr.n; ++i) new_xbar[i] += tmp[i];

    for (std::size_t i = 0; i < pr.n; ++i) new_xbar[i] += x_bars[k][i];
    xbar = new_xbar;
  }

  // Initial condition came from the DC solve: implicit function theorem.
  try {
    dc_sensitivity(model, u0, dc.x0, xbar, *grads);
  } catch (const SingularMatrixError&) {
    res.ok = false;  // kink-straddling equilibrium; trajectory excluded
  }
  return res;
}

}  // namespace

LossResult mc_loss(const CtrnnParams& params, const std::vector<TrainPair>& batch,
                   std::size_t K, Rng& rng, std::size_t grid_steps) {
  const RealizedModel model(params);
  LossResult res;
  double total = 0.0;
  for (const TrainPair& pair : batch) {
    const TrajResult tr = traj_loss_grad(model, pair, K, grid_steps, rng, nullptr);
    if (tr.ok) {
      total += tr.loss;
      ++res.used;
    } else {
      ++res.excluded;
    }
  }
  res.loss = res.used > 0 ? total / double(res.used) : 0.0;
  return res;
}

GradResult grad(const CtrnnParams& params, const std::vector<TrainPair>& batch,
                std::size_t K, Rng& rng, std::size_t grid_steps) {
  const RealizedModel model(params);
  GradResult res(params);
  ParamGrads acc(params);
  double total = 0.0;
  for (const TrainPair& pair : batch) {
    ParamGrads g(params);
    const TrajResult tr = traj_loss_grad(model, pair, K, grid_steps, rng, &g);
    if (tr.ok) {
      total += tr.loss;
      acc.accumulate(g);
      ++res.loss.used;
    } else {
      ++res.loss.excluded;
    }
  }
  if (res.loss.used > 0) {
    res.loss.loss = total / double(res.loss.used);
    ParamGrads scaled(params);
    scaled.accumulate(acc, 1.0 / double(res.loss.used));
    scaled.finalize(params, model.rho());
    res.grads = std::move(scaled);
  }
  return res;
}

Vec pack_params(const CtrnnParams& p) {
  Vec theta;
  theta.push_back(p.log_tau);
  auto push_m = [&](const Matrix& m) {
    theta.insert(theta.end(), m.data().begin(), m.data().end());
  };
  auto push_v = [&](const Vec& v) { theta.insert(theta.end(), v.begin(), v.end()); };
  push_m(p.W);
  push_m(p.A_theta);
  push_m(p.B);
  push_v(p.mu);
  push_v(p.nu);
  push_m(p.H);
  push_v(p.b);
  push_v(p.log_omega);
  return theta;
}

void unpack_params(CtrnnParams& p, const Vec& theta) {
  std::size_t pos = 0;
  p.log_tau = theta[pos++];
  auto pull_m = [&](Matrix& m) {
    std::copy(theta.begin() + pos, theta.begin() + pos + m.data().size(),
              m.data().begin());
    pos += m.data().size();
  };
  auto pull_v = [&](Vec& v) {
    std::copy(theta.begin() + pos, theta.begin() + pos + v.size(), v.begin());
    pos += v.size();
  };
  pull_m(p.W);
  pull_m(p.A_theta);
  pull_m(p.B);
  pull_v(p.mu);
  pull_v(p.nu);
  pull_m(p.H);
  pull_v(p.b);
  pull_v(p.log_omega);
  if (pos != theta.size()) throw InvalidInputError("unpack_params: size mismatch");
}

Vec pack_grads(const ParamGrads& g) {
  Vec flat;
  flat.push_back(g.log_tau);
  auto push_m = [&](const Matrix& m) {
    flat.insert(flat.end(), m.data().begin(), m.data().end());
  };
  auto push_v = [&](const Vec& v) { flat.insert(flat.end(), v.begin(), v.end()); };
  push_m(g.W);
  push_m(g.A_theta);
  push_m(g.B);
  push_v(g.mu);
  push_v(g.nu);
  push_m(g.H);
  push_v(g.b);
  push_v(g.log_omega);
  return flat;
}

Vec learnable_mask(const CtrnnParams& p, const TrainConfig& cfg) {
  Vec mask;
  mask.push_back(1.0);  // log_tau
  auto push_n = [&](std::size_t count, double value) {
    mask.insert(mask.end(), count, value);
  };
  push_n(p.W.data().size(), cfg.train_W ? 1.0 : 0.0);
  push_n(p.A_theta.data().size(), 1.0);
  push_n(p.B.data().size(), 1.0);
  push_n(p.mu.size(), 1.0);
  push_n(p.nu.size(), cfg.train_nu ? 1.0 : 0.0);
  push_n(p.H.data().size(), 1.0);
  push_n(p.b.size(), 1.0);
  push_n(p.log_omega.size(), (p.constrained && p.omega_learned) ? 1.0 : 0.0);
  return mask;
}

bool adam_step(Vec& theta, const Vec& g, AdamState& state, const TrainConfig& cfg) {
  if (!all_finite(g)) return false;
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps_adam);
  }
  return true;
}

std::vector<TrainPair> normalized_pairs(const Dataset& ds,
                                        const std::vector<std::size_t>& indices) {
  std::vector<TrainPair> pairs;
  for (std::size_t i : indices)
    pairs.push_back({ds.normalized_u(i), ds.normalized_y(i)});
  return pairs;
}

OpenLoopReport evaluate_openloop(const CtrnnParams& params,
                                 const std::vector<TrainPair>& pairs,
                                 std::size_t grid_steps) {
  const RealizedModel model(params);
  OpenLoopReport rep;
  rep.per_channel_mse.assign(params.p, 0.0);
  double agg = 0.0;
  for (const TrainPair& pair : pairs) {
    const double T = pair.u.times.back();
    DcResult dc;
    std::vector<Vec> states;
    try {
      dc = solve_dc(model, interp(pair.u, 0.0), Vec(params.n, 0.0));
      states = integrate_fixed_grid(
          [&](double t, const Vec& x, Vec& dx) {
            dx = model.dynamics(x, interp(pair.u, t));
          },
          dc.x0, 0.0, T, grid_steps);
    } catch (const std::runtime_error&) {
      ++rep.excluded;
      continue;
    }
    bool finite = true;
    for (const Vec& x : states)
      if (!all_finite(x)) finite = false;
    if (!finite) {
      ++rep.excluded;
      continue;
    }
    // Trapezoid rule on the grid for (1/T) Int r_c(t)^2 dt per channel.
    Vec channel(params.p, 0.0);
    const double h = T / double(grid_steps);
    for (std::size_t k = 0; k <= grid_steps; ++k) {
      const double t = double(k) * h;
      const Vec y = model.output(states[k]);
      const Vec yt = interp(pair.y, t);
      const double wq = (k == 0 || k == grid_steps) ? 0.5 : 1.0;
      for (std::size_t c = 0; c < params.p; ++c) {
        const double r = y[c] - yt[c];
        channel[c] += wq * r * r * h;
      }
    }
    double traj_mean = 0.0;
    for (std::size_t c = 0; c < params.p; ++c) {
      channel[c] /= T;
      rep.per_channel_mse[c] += channel[c];
      traj_mean += channel[c];
    }
    agg += traj_mean / double(params.p);
    ++rep.used;
  }
  if (rep.used > 0) {
    for (double& v : rep.per_channel_mse) v /= double(rep.used);
    rep.aggregate = agg / double(rep.used);
  }
  return rep;
}

TrainState fit(const Dataset& ds, const TrainConfig& cfg, std::ostream* log) {
  const std::size_t m = ds.u_norm.size();
  const std::size_t p = ds.y_norm.size();
  CtrnnParams params =
      init_params(cfg.n, cfg.l, m, p, cfg.mode, cfg.seed, cfg.delta, cfg.kind,
                  !cfg.train_W);

  const std::vector<TrainPair> train = normalized_pairs(ds, ds.train_indices());
  const std::vector<TrainPair> valid = normalized_pairs(ds, ds.valid_indices());
  const std::vector<TrainPair>& valid_ref = valid.empty() ? train : valid;

  TrainState state{params, params, {}, 0, {}, 0.0};
  Vec theta = pack_params(params);
  const Vec mask = learnable_mask(params, cfg);

  Rng shuffle_rng(Rng::derive_seed(cfg.seed, 1));
  Rng sample_rng(Rng::derive_seed(cfg.seed, 2));

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  state.best_valid = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with our deterministic rng.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> idx(
          order.begin() + start,
          order.begin() + std::min(start + cfg.batch_size, order.size()));
      std::sort(idx.begin(), idx.end());  // order-fixed accumulation
      std::vector<TrainPair> batch;
      for (std::size_t i : idx) batch.push_back(train[i]);

      const GradResult gr = grad(params, batch, cfg.K, sample_rng, cfg.grid_steps);
      if (gr.loss.used == 0) continue;
      Vec g = pack_grads(gr.grads);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
      if (adam_step(theta, g, state.adam, cfg)) {
        unpack_params(params, theta);
        ++state.step;
      }
      epoch_loss += gr.loss.loss;
      ++batches;
    }
    epoch_loss = batches > 0 ? epoch_loss / double(batches) : 0.0;

    const OpenLoopReport vrep = evaluate_openloop(params, valid_ref, cfg.grid_steps);
    const double valid_mse =
        vrep.used > 0 ? vrep.aggregate : std::numeric_limits<double>::infinity();
    const StabilityReport srep = certify(params);

    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss;
    row.valid_mse = valid_mse;
    row.lds_margin = srep.lds_margin;
    row.rho = srep.rho;
    state.history.push_back(row);
    if (log)
      (*log) << "epoch " << epoch << " train_loss " << epoch_loss << " valid_mse "
             << valid_mse << " lds_margin " << srep.lds_margin << " rho " << srep.rho
             << "\n";

    if (valid_mse < state.best_valid) {
      state.best_valid = valid_mse;
      state.params = params;
    }
  }
  state.last_params = params;
  return state;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& history) {
  os << "epoch,train_loss,valid_mse,lds_margin,rho\n";
  os << std::setprecision(17);
  for (const MetricsRow& r : history)
    os << r.epoch << "," << r.train_loss << "," << r.valid_mse << "," << r.lds_margin
       << "," << r.rho << "\n";
}

}  // namespace issnode
