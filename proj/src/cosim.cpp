#include "issnode/cosim.hpp"

#include <cmath>

#include <json.hpp>

#include "issnode/equilibrium.hpp"
#include "issnode/parallel.hpp"

namespace issnode {

LoadModel make_rc_load_model(const RcLoad& load) {
  LoadModel lm;
  lm.state_dim = 2;  // input node voltage, output node voltage
  lm.port_voltages = [](const Vec& xl, double) { return Vec{xl[0], xl[1]}; };
  lm.dynamics = [load](const Vec& xl, const Vec& y, double u_ext, Vec& dx) {
    dx.resize(2);
    dx[0] = ((u_ext - xl[0]) / load.r_in + y[0]) / load.c_in;
    dx[1] = (-xl[1] / load.r_out + y[1]) / load.c_out;
  };
  lm.dc_guess = [](double u_ext) { return Vec{u_ext, 0.0}; };
  return lm;
}

namespace {

struct JointSystem {
  const RealizedModel* model;
  const Interconnection* ic;
  std::size_t n, nl;

  Vec residual(const Vec& z, double u_ext) const {
    Vec dz(n + nl);
    eval(z, u_ext, dz);
    return dz;
  }

  void eval(const Vec& z, double u_ext, Vec& dz) const {
    const CtrnnParams& pr = model->params();
    const Vec x(z.begin(), z.begin() + n);
    const Vec xl(z.begin() + n, z.end());
    const Vec u_phys = ic->load.port_voltages(xl, u_ext);
    Vec u_model(pr.m);
    for (std::size_t c = 0; c < pr.m; ++c)
      u_model[c] = normalize(u_phys[c], ic->u_norm[c]);
    const Vec dx = model->dynamics(x, u_model);
    const Vec y_model = model->output(x);
    Vec y_phys(pr.p);
    for (std::size_t c = 0; c < pr.p; ++c)
      y_phys[c] = denormalize(y_model[c], ic->y_norm[c]);
    Vec dxl;
    ic->load.dynamics(xl, y_phys, u_ext, dxl);
    dz.resize(n + nl);
    for (std::size_t i = 0; i < n; ++i) dz[i] = dx[i];
    for (std::size_t i = 0; i < nl; ++i) dz[n + i] = dxl[i];
  }
};

}  // namespace

ClosedLoopResult simulate_closed_loop(const Interconnection& ic, double T,
                                      const SolverConfig& cfg, std::size_t samples) {
  const RealizedModel model(ic.model);
  const CtrnnParams& pr = ic.model;
  if (ic.u_norm.size() != pr.m || ic.y_norm.size() != pr.p)
    throw ConfigurationError("simulate_closed_loop: normalization/port mismatch");
  {
    const Vec probe = ic.load.port_voltages(Vec(ic.load.state_dim, 0.0), 0.0);
    if (probe.size() != pr.m)
      throw ConfigurationError("simulate_closed_loop: load port count mismatch");
  }

  JointSystem sys{&model, &ic, pr.n, ic.load.state_dim};
  const double uext0 = interp(ic.source, 0.0)[0];
  Vec guess(pr.n + ic.load.state_dim, 0.0);
  const Vec lg = ic.load.dc_guess ? ic.load.dc_guess(uext0) : Vec(ic.load.state_dim, 0.0);
  for (std::size_t i = 0; i < ic.load.state_dim; ++i) guess[pr.n + i] = lg[i];
  const Vec z0 =
      newton_fd([&](const Vec& z) { return sys.residual(z, uext0); }, guess, 1e-9);

  const IntegrateResult sol = integrate(
      [&](double t, const Vec& z, Vec& dz) { sys.eval(z, interp(ic.source, t)[0], dz); },
      z0, 0.0, T, cfg);

  ClosedLoopResult res;
  res.u.labels = {"v0", "v1"};
  res.y.labels = {"i0", "i1"};
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = T * double(k) / double(samples - 1);
    const Vec z = interp(sol.traj, t);
    const Vec x(z.begin(), z.begin() + pr.n);
    const Vec xl(z.begin() + pr.n, z.end());
    const Vec u_phys = ic.load.port_voltages(xl, interp(ic.source, t)[0]);
    const Vec y_model = model.output(x);
    Vec y_phys(pr.p);
    for (std::size_t c = 0; c < pr.p; ++c)
      y_phys[c] = denormalize(y_model[c], ic.y_norm[c]);
    res.u.times.push_back(t);
    res.u.values.push_back(u_phys);
    res.y.times.push_back(t);
    res.y.values.push_back(y_phys);
  }
  return res;
}

CosimReport test_mse(const CtrnnParams& model, const std::vector<NormRecord>& u_norm,
                     const std::vector<NormRecord>& y_norm, OracleKind kind,
                     std::size_t runs, std::uint64_t seed, double T,
                     const SolverConfig& cfg, std::size_t jobs) {
  const CircuitOracle oracle = CircuitOracle::make(kind);
  CosimReport rep;
  rep.runs.resize(runs);
  parallel_for(runs, jobs, [&](std::size_t r) {
    CosimRun run;
    try {
      const DrawnRun dr = draw_run(kind, seed, r, T);
      const OraclePair gt = simulate_oracle(oracle, dr.load, dr.source, T, cfg);
      Interconnection ic{model, u_norm, y_norm, make_rc_load_model(dr.load), dr.source};
      const ClosedLoopResult cl = simulate_closed_loop(ic, T, cfg, gt.y.size());
      // Normalized-scale MSE over channels and time (trapezoid on the grid).
      const std::size_t p = y_norm.size();
      double mse = 0.0;
      const std::size_t ns = gt.y.size();
      for (std::size_t k = 0; k < ns; ++k) {
        const double wq = (k == 0 || k + 1 == ns) ? 0.5 : 1.0;
        for (std::size_t c = 0; c < p; ++c) {
          const double a = normalize(gt.y.values[k][c], y_norm[c]);
          const double b = normalize(cl.y.values[k][c], y_norm[c]);
          mse += wq * (a - b) * (a - b);
        }
      }
      mse /= double(ns - 1) * double(p);
      if (!std::isfinite(mse)) throw SolverError("cosim: non-finite MSE");
      run.mse = mse;
      run.ok = true;
    } catch (const std::runtime_error&) {
      run.ok = false;
    }
    rep.runs[r] = run;
  });
  double total = 0.0;
  for (const CosimRun& run : rep.runs) {
    if (run.ok) {
      total += run.mse;
      ++rep.runs_ok;
    } else {
      ++rep.runs_failed;
    }
  }
  rep.mean_mse = rep.runs_ok > 0 ? total / double(rep.runs_ok) : 0.0;
  return rep;
}

std::string cosim_report_to_json(const CosimReport& rep) {
  nlohmann::json j;
  j["mean_mse"] = rep.mean_mse;
  j["runs_ok"] = rep.runs_ok;
  j["runs_failed"] = rep.runs_failed;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : rep.runs) runs.push_back({{"mse", r.mse}, {"ok", r.ok}});
  j["runs"] = std::move(runs);
  return j.dump(2);
}

}  // namespace issnode
