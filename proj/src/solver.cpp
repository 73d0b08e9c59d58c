#include "issnode/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace issnode {

Vec interp(const Trajectory& traj, double t) {
  if (traj.times.empty()) throw InvalidInputError("interp: empty trajectory");
  const Vec& times = traj.times;
  if (t <= times.front()) return traj.values.front();
  if (t >= times.back()) return traj.values.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t hi = std::size_t(it - times.begin());
  const std::size_t lo = hi - 1;
  const double t0 = times[lo], t1 = times[hi];
  const double w = (t - t0) / (t1 - t0);
  Vec r(traj.values[lo].size());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = (1.0 - w) * traj.values[lo][i] + w * traj.values[hi][i];
  return r;
}

double interp1(const Trajectory& traj, double t, std::size_t channel) {
  return interp(traj, t)[channel];
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  for (std::size_t c = 0; c < traj.dim(); ++c) {
    if (c < traj.labels.size())
      os << "," << traj.labels[c];
    else
      os << ",ch" << c;
  }
  os << "\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    os << traj.times[i];
    for (double v : traj.values[i]) os << "," << v;
    os << "\n";
  }
}

Trajectory read_trajectory_csv(std::istream& is) {
  Trajectory traj;
  std::string line;
  if (!std::getline(is, line)) throw InvalidInputError("trajectory csv: empty stream");
  {
    std::stringstream header(line);
    std::string field;
    bool first = true;
    while (std::getline(header, field, ',')) {
      if (first) {
        first = false;
        continue;
      }
      traj.labels.push_back(field);
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    bool first = true;
    Vec vals;
    while (std::getline(row, field, ',')) {
      const double v = std::stod(field);
      if (first) {
        traj.times.push_back(v);
        first = false;
      } else {
        vals.push_back(v);
      }
    }
    traj.values.push_back(std::move(vals));
  }
  return traj;
}

namespace {

// One BS3 step from (t, x) with stage-1 slope k1 already evaluated (FSAL).
// Returns x_new and the embedded error estimate; k4 is the FSAL slope at the
// new point.
void bs3_step(const OdeFn& f, double t, const Vec& x, const Vec& k1, double h,
              Vec& x_new, Vec& err, Vec& k4, Vec& k2, Vec& k3, Vec& stage) {
  const std::size_t n = x.size();
  stage.resize(n);
  for (std::size_t i = 0; i < n; ++i) stage[i] = x[i] + 0.5 * h * k1[i];
  f(t + 0.5 * h, stage, k2);
  for (std::size_t i = 0; i < n; ++i) stage[i] = x[i] + 0.75 * h * k2[i];
  f(t + 0.75 * h, stage, k3);
  x_new.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    x_new[i] = x[i] + h * (2.0 / 9.0 * k1[i] + 1.0 / 3.0 * k2[i] + 4.0 / 9.0 * k3[i]);
  f(t + h, x_new, k4);
  err.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = x[i] + h * (7.0 / 24.0 * k1[i] + 0.25 * k2[i] +
                                 1.0 / 3.0 * k3[i] + 0.125 * k4[i]);
    err[i] = x_new[i] - z;
  }
}

}  // namespace

IntegrateResult integrate(const OdeFn& f, const Vec& x0, double t0, double t1,
                          const SolverConfig& cfg) {
  if (!all_finite(x0)) throw InvalidInputError("integrate: non-finite x0");
  if (!(t1 > t0)) throw InvalidInputError("integrate: t_span not positive");

  IntegrateResult res;
  res.traj.times.push_back(t0);
  res.traj.values.push_back(x0);

  if (cfg.mode == SolverMode::fixed_grid) {
    auto states = integrate_fixed_grid(f, x0, t0, t1, cfg.grid_steps);
    const double h = (t1 - t0) / double(cfg.grid_steps);
    for (std::size_t k = 1; k < states.size(); ++k) {
      res.traj.times.push_back(t0 + double(k) * h);
      res.traj.values.push_back(std::move(states[k]));
    }
    res.accepted = cfg.grid_steps;
    return res;
  }

  const std::size_t n = x0.size();
  Vec x = x0, k1(n), k2(n), k3(n), k4(n), x_new(n), err(n), stage(n);
  f(t0, x, k1);
  double t = t0;
  double h = std::clamp(cfg.h_init, cfg.h_min, cfg.h_max);
  std::size_t steps = 0;

  while (t < t1) {
    if (++steps > cfg.max_steps)
      throw StepBudgetError("integrate: max_steps exceeded");
    h = std::min(h, t1 - t);
    bs3_step(f, t, x, k1, h, x_new, err, k4, k2, k3, stage);

    double ratio = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = cfg.atol + cfg.rtol * std::max(std::fabs(x[i]), std::fabs(x_new[i]));
      ratio = std::max(ratio, std::fabs(err[i]) / sc);
    }
    if (!std::isfinite(ratio)) ratio = 1e10;

    if (ratio <= 1.0) {
      t += h;
      x = x_new;
      k1 = k4;  // FSAL
      res.traj.times.push_back(t);
      res.traj.values.push_back(x);
      ++res.accepted;
    } else {
      ++res.rejected;
    }
    double factor = 0.9 * std::pow(std::max(ratio, 1e-10), -1.0 / 3.0);
    factor = std::clamp(factor, 0.2, 5.0);
    h = std::clamp(h * factor, cfg.h_min, cfg.h_max);
    if (t < t1 && h <= cfg.h_min && ratio > 1.0)
      throw StiffnessError("integrate: step size underflow");
  }
  return res;
}

std::vector<Vec> integrate_fixed_grid(const OdeFn& f, const Vec& x0, double t0,
                                      double t1, std::size_t steps) {
  if (steps == 0) throw InvalidInputError("integrate_fixed_grid: steps == 0");
  const double h = (t1 - t0) / double(steps);
  const std::size_t n = x0.size();
  std::vector<Vec> states;
  states.reserve(steps + 1);
  states.push_back(x0);
  Vec x = x0, k1(n), k2(n), k3(n), k4(n), x_new(n), err(n), stage(n);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t0 + double(k) * h;
    f(t, x, k1);
    bs3_step(f, t, x, k1, h, x_new, err, k4, k2, k3, stage);
    x = x_new;
    states.push_back(x);
  }
  return states;
}

double convergence_order(const OdeFn& f, const Vec& x0, double t0, double t1,
                         const std::function<Vec(double)>& exact,
                         const std::vector<double>& h_list) {
  std::vector<double> log_h, log_e;
  for (double h : h_list) {
    const std::size_t steps = std::size_t(std::llround((t1 - t0) / h));
    auto states = integrate_fixed_grid(f, x0, t0, t1, steps);
    const Vec ref = exact(t1);
    double e = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i)
      e = std::max(e, std::fabs(states.back()[i] - ref[i]));
    if (e < 1e-15) continue;  // exactness; nothing to fit
    log_h.push_back(std::log(h));
    log_e.push_back(std::log(e));
  }
  if (log_h.size() < 2) return 0.0;
  double mh = 0.0, me = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    mh += log_h[i];
    me += log_e[i];
  }
  mh /= double(log_h.size());
  me /= double(log_e.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    num += (log_h[i] - mh) * (log_e[i] - me);
    den += (log_h[i] - mh) * (log_h[i] - mh);
  }
  return num / den;
}

}  // namespace issnode
