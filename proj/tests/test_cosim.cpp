#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "issnode/cosim.hpp"
#include "issnode/training.hpp"

using namespace issnode;

namespace {

// Hand-built constrained model used purely as a plant in interconnection
// tests; accuracy against the oracle is irrelevant here.
CtrnnParams small_model(std::uint64_t seed) {
  return init_params(3, 5, 2, 2, TrainMode::proposed, seed);
}

std::vector<NormRecord> unit_norms(std::size_t count) {
  return std::vector<NormRecord>(count);
}

Trajectory flat_source(double level, double T) {
  Trajectory t;
  t.times = {0.0, T};
  t.values = {{level}, {level}};
  t.labels = {"u_ext"};
  return t;
}

}  // namespace

TEST_CASE("zero-coupling load reproduces the open-loop trajectory") {
  const CtrnnParams params = small_model(61);
  const RealizedModel model(params);

  // Load states follow the external drive only; model currents are ignored.
  LoadModel load;
  load.state_dim = 2;
  load.port_voltages = [](const Vec& xl, double) { return Vec{xl[0], xl[1]}; };
  load.dynamics = [](const Vec& xl, const Vec&, double u_ext, Vec& dx) {
    dx.resize(2);
    dx[0] = (u_ext - xl[0]) / 0.1;
    dx[1] = -xl[1] / 0.1;
  };
  load.dc_guess = [](double u_ext) { return Vec{u_ext, 0.0}; };

  const PwlSource src = gen_pwl(5, 1.0, 4, -0.5, 0.5);
  Interconnection ic{params, unit_norms(2), unit_norms(2), load, src.to_trajectory()};
  SolverConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-11;
  const ClosedLoopResult cl = simulate_closed_loop(ic, 1.0, cfg, 101);

  // Open loop: drive the model with the load-state voltages directly.
  const Trajectory u_open = cl.u;
  const DcResult dc = solve_dc(model, interp(u_open, 0.0), Vec(3, 0.0));
  const IntegrateResult sol = integrate(
      [&](double t, const Vec& x, Vec& dx) { dx = model.dynamics(x, interp(u_open, t)); },
      dc.x0, 0.0, 1.0, cfg);
  for (std::size_t k = 0; k < cl.y.size(); ++k) {
    const double t = cl.y.times[k];
    const Vec y_open = model.output(interp(sol.traj, t));
    for (std::size_t c = 0; c < 2; ++c)
      CHECK(cl.y.values[k][c] == doctest::Approx(y_open[c]).epsilon(1e-5));
  }
}

TEST_CASE("constant drive settles at the stacked DC point") {
  const CtrnnParams params = small_model(63);
  RcLoad rc;
  Interconnection ic{params, unit_norms(2), unit_norms(2), make_rc_load_model(rc),
                     flat_source(0.3, 5.0)};
  SolverConfig cfg;
  const ClosedLoopResult cl = simulate_closed_loop(ic, 5.0, cfg, 51);
  // Under constant u_ext the joint system starts at its DC point and stays.
  for (std::size_t k = 0; k < cl.u.size(); ++k)
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(cl.u.values[k][c] == doctest::Approx(cl.u.values[0][c]).epsilon(1e-6));
      CHECK(std::abs(cl.y.values[k][c] - cl.y.values[0][c]) < 1e-6);
    }
}

TEST_CASE("port-count mismatch raises a configuration error") {
  const CtrnnParams params = small_model(65);
  RcLoad rc;
  Interconnection ic{params, unit_norms(1), unit_norms(2), make_rc_load_model(rc),
                     flat_source(0.0, 1.0)};
  SolverConfig cfg;
  CHECK_THROWS_AS(simulate_closed_loop(ic, 1.0, cfg), ConfigurationError);
}

TEST_CASE("closed-loop simulation is deterministic") {
  const CtrnnParams params = small_model(67);
  RcLoad rc;
  const PwlSource src = gen_pwl(9, 1.0, 6, -0.5, 0.5);
  Interconnection ic{params, unit_norms(2), unit_norms(2), make_rc_load_model(rc),
                     src.to_trajectory()};
  SolverConfig cfg;
  const ClosedLoopResult a = simulate_closed_loop(ic, 1.0, cfg, 51);
  const ClosedLoopResult b = simulate_closed_loop(ic, 1.0, cfg, 51);
  for (std::size_t k = 0; k < a.y.size(); ++k)
    for (std::size_t c = 0; c < 2; ++c) CHECK(a.y.values[k][c] == b.y.values[k][c]);
}

TEST_CASE("near-exact replica of the linear 2-port gives near-zero MSE") {
  // The output map y = Hx + b has no direct u feedthrough, while the 2-port's
  // port currents are (x - u)/R. Work around it with two fast auxiliary
  // states x2 ~ u0, x3 ~ u1 (rate k), and realize the linear dynamics through
  // tanh in its slope-1 region: A_theta = s*M, B = s*N, W = I/s with s tiny.
  const double r1 = CircuitOracle::kLinR1, c1 = CircuitOracle::kLinC1;
  const double r2 = CircuitOracle::kLinR2, c2 = CircuitOracle::kLinC2;
  const double tau = r1 * c1;
  const double s = 1e-8;
  const double k = 1e5;

  CtrnnParams p;
  p.n = 4;
  p.l = 4;
  p.m = 2;
  p.p = 2;
  p.constrained = false;
  p.kind = Nonlinearity::tanh_fn;
  p.log_tau = std::log(tau);
  p.W = Matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) p.W(i, i) = 1.0 / s;
  Matrix M(4, 4);
  M(0, 2) = 1.0 / (r1 * c1);                          // x0' += x2/(R1 C1)
  M(1, 1) = 1.0 / tau - 1.0 / (r2 * c2);              // leak correction
  M(1, 3) = 1.0 / (r2 * c2);                          // x1' += x3/(R2 C2)
  M(2, 2) = 1.0 / tau - k;                            // fast tracker
  M(3, 3) = 1.0 / tau - k;
  p.A_theta = s * M;
  Matrix N(4, 2);
  N(2, 0) = k;
  N(3, 1) = k;
  p.B = s * N;
  p.mu.assign(4, 0.0);
  p.nu.assign(4, 0.0);
  p.H = Matrix(2, 4);
  p.H(0, 0) = 1.0 / r1;
  p.H(0, 2) = -1.0 / r1;
  p.H(1, 1) = 1.0 / r2;
  p.H(1, 3) = -1.0 / r2;
  p.b.assign(2, 0.0);
  p.log_omega.assign(4, 0.0);

  SolverConfig cfg;
  cfg.rtol = 1e-9;
  cfg.atol = 1e-11;
  cfg.h_min = 1e-14;

  // NormRecord defaults are the identity map on [-1, 1], so the replica runs
  // in physical units.
  std::vector<NormRecord> un(2), yn(2);

  double total = 0.0;
  std::size_t count = 0;
  for (std::uint64_t i = 0; i < 2; ++i) {
    const DrawnRun run = draw_run(OracleKind::linear_2port, 71, i, 1.0);
    const CircuitOracle oracle = CircuitOracle::make(OracleKind::linear_2port);
    const OraclePair gt = simulate_oracle(oracle, run.load, run.source, 1.0, cfg);
    Interconnection ic{p, un, yn, make_rc_load_model(run.load), run.source};
    const ClosedLoopResult cl = simulate_closed_loop(ic, 1.0, cfg, gt.y.size());
    for (std::size_t j = 0; j < gt.y.size(); ++j)
      for (std::size_t c = 0; c < 2; ++c) {
        const double d = gt.y.values[j][c] - cl.y.values[j][c];
        total += d * d;
        ++count;
      }
  }
  CHECK(total / double(count) < 1e-5);
}

TEST_CASE("aggregate report counts failures and averages the rest") {
  const CtrnnParams params = small_model(69);
  SolverConfig cfg;
  const CosimReport rep = test_mse(params, unit_norms(2), unit_norms(2),
                                   OracleKind::linear_2port, 5, 81, 1.0, cfg);
  CHECK(rep.runs.size() == 5);
  CHECK(rep.runs_ok + rep.runs_failed == 5);
  double total = 0.0;
  for (const CosimRun& r : rep.runs)
    if (r.ok) total += r.mse;
  if (rep.runs_ok > 0)
    CHECK(rep.mean_mse == doctest::Approx(total / double(rep.runs_ok)));
}

TEST_CASE("report is independent of worker count") {
  const CtrnnParams params = small_model(69);
  SolverConfig cfg;
  const CosimReport serial = test_mse(params, unit_norms(2), unit_norms(2),
                                      OracleKind::linear_2port, 6, 83, 1.0, cfg, 1);
  const CosimReport parallel = test_mse(params, unit_norms(2), unit_norms(2),
                                        OracleKind::linear_2port, 6, 83, 1.0, cfg, 4);
  CHECK(serial.mean_mse == parallel.mean_mse);
  REQUIRE(serial.runs.size() == parallel.runs.size());
  for (std::size_t i = 0; i < serial.runs.size(); ++i)
    CHECK(serial.runs[i].mse == parallel.runs[i].mse);
}
