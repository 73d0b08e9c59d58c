#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "issnode/aging.hpp"
#include "issnode/stability.hpp"

using namespace issnode;

namespace {

CtrnnParams small_fresh(std::uint64_t seed) {
  CtrnnParams p = init_params(3, 5, 2, 2, TrainMode::proposed, seed);
  p.log_tau = std::log(0.3);
  return p;
}

GruPerturbNet random_net(std::size_t l, std::size_t n, std::size_t m,
                         std::uint64_t seed, std::size_t hidden) {
  GruPerturbNet net = init_gru(l, n, m, seed, hidden);
  Vec theta = pack_gru(net);
  Rng rng(seed ^ 0x5151);
  for (double& v : theta) v = rng.uniform(-0.3, 0.3);
  unpack_gru(net, theta);
  return net;
}

}  // namespace

TEST_CASE("stress profiles are deterministic and within range") {
  const StressProfile a = gen_stress_profile(17, 0.1);
  const StressProfile b = gen_stress_profile(17, 0.1);
  CHECK(a.t_op_years == b.t_op_years);
  REQUIRE(a.u_stress.size() == b.u_stress.size());
  for (std::size_t k = 0; k < a.u_stress.size(); ++k)
    CHECK(a.u_stress.values[k][0] == b.u_stress.values[k][0]);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const StressProfile s = gen_stress_profile(seed, 0.1);
    CHECK(s.t_op_years >= 0.001);
    CHECK(s.t_op_years <= 10.0);
    CHECK(s.u_stress.times.front() == 0.0);
    CHECK(s.u_stress.times.back() == doctest::Approx(0.1));
    for (const Vec& v : s.u_stress.values) {
      CHECK(v[0] >= 0.0);
      CHECK(v[0] <= 1.0);
    }
  }
}

TEST_CASE("aging factor hand values and monotonicity") {
  // factor = 1 + kappa * duty * log10(1 + T_op / T0)
  CHECK(CircuitOracle::compute_aging_factor(0.0, 5.0) == doctest::Approx(1.0));
  CHECK(CircuitOracle::compute_aging_factor(1.0, 0.999) ==
        doctest::Approx(1.0 + 0.3 * 3.0).epsilon(1e-12));
  CHECK(CircuitOracle::compute_aging_factor(0.5, 0.999) ==
        doctest::Approx(1.0 + 0.15 * 3.0).epsilon(1e-12));
  double prev = 0.0;
  for (double t_op : {0.001, 0.01, 0.1, 1.0, 10.0}) {
    const double f = CircuitOracle::compute_aging_factor(0.7, t_op);
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("zero heads leave the fresh model untouched") {
  const CtrnnParams fresh = small_fresh(41);
  const GruPerturbNet net = init_gru(fresh.l, fresh.n, fresh.m, 7);
  const StressProfile profile = gen_stress_profile(3, 0.1);
  const PerturbDeltas d = gru_forward(net, profile);
  for (double v : d.dA.data()) CHECK(v == 0.0);
  for (double v : d.dB.data()) CHECK(v == 0.0);
  for (double v : d.dmu) CHECK(v == 0.0);

  const CtrnnParams aged = aged_params(fresh, d);
  CHECK(aged.A_theta.data() == fresh.A_theta.data());
  CHECK(aged.B.data() == fresh.B.data());
  CHECK(aged.mu == fresh.mu);
  CHECK(effective_A(aged).data() == effective_A(fresh).data());
}

TEST_CASE("forward pass is deterministic and head-linear in the final state") {
  const GruPerturbNet net = random_net(4, 3, 2, 19, 6);
  const StressProfile profile = gen_stress_profile(5, 0.1);
  const PerturbDeltas a = gru_forward(net, profile);
  const PerturbDeltas b = gru_forward(net, profile);
  CHECK(a.dA.data() == b.dA.data());
  CHECK(a.dB.data() == b.dB.data());
  CHECK(a.dmu == b.dmu);

  // Doubling a head bias shifts exactly that output entry.
  GruPerturbNet shifted = net;
  shifted.headb_mu[2] += 0.25;
  const PerturbDeltas c = gru_forward(shifted, profile);
  CHECK(c.dmu[2] == doctest::Approx(a.dmu[2] + 0.25).epsilon(1e-12));
  CHECK(c.dA.data() == a.dA.data());
}

TEST_CASE("empty stress waveform is rejected") {
  const GruPerturbNet net = init_gru(2, 2, 1, 1);
  StressProfile profile;
  profile.t_op_years = 1.0;
  CHECK_THROWS_AS(gru_forward(net, profile), InvalidInputError);
}

TEST_CASE("pack and unpack round trip") {
  GruPerturbNet net = random_net(3, 2, 2, 23, 5);
  const Vec theta = pack_gru(net);
  GruPerturbNet other = init_gru(3, 2, 2, 999, 5);
  unpack_gru(other, theta);
  CHECK(pack_gru(other) == theta);
  CHECK_THROWS_AS(unpack_gru(other, Vec(theta.size() + 1, 0.0)), InvalidInputError);
}

TEST_CASE("reverse mode matches finite differences") {
  const StressProfile profile = gen_stress_profile(9, 0.1);
  GruPerturbNet net = random_net(3, 2, 2, 29, 5);

  Rng rng(31);
  PerturbDeltas bars;
  bars.dA = Matrix(3, 2);
  bars.dB = Matrix(3, 2);
  bars.dmu.assign(3, 0.0);
  for (double& v : bars.dA.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : bars.dB.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : bars.dmu) v = rng.uniform(-1.0, 1.0);

  // Scalar objective <bars, deltas>; gru_backward returns its exact gradient.
  auto objective = [&](const Vec& theta) {
    GruPerturbNet probe = net;
    unpack_gru(probe, theta);
    const PerturbDeltas d = gru_forward(probe, profile);
    double s = 0.0;
    for (std::size_t i = 0; i < d.dA.data().size(); ++i)
      s += bars.dA.data()[i] * d.dA.data()[i];
    for (std::size_t i = 0; i < d.dB.data().size(); ++i)
      s += bars.dB.data()[i] * d.dB.data()[i];
    for (std::size_t i = 0; i < d.dmu.size(); ++i) s += bars.dmu[i] * d.dmu[i];
    return s;
  };

  const Vec g = gru_backward(net, profile, bars);
  const Vec theta = pack_gru(net);
  REQUIRE(g.size() == theta.size());
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = rng.uniform_index(theta.size());
    Vec tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    const double fd = (objective(tp) - objective(tm)) / (2.0 * h);
    CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("aged parameters route the deltas through the certificate") {
  const CtrnnParams fresh = small_fresh(43);
  const GruPerturbNet net = random_net(fresh.l, fresh.n, fresh.m, 37, 6);
  const StressProfile profile = gen_stress_profile(11, 0.1);
  const PerturbDeltas d = gru_forward(net, profile);
  const CtrnnParams aged = aged_params(fresh, d);
  for (std::size_t i = 0; i < d.dA.data().size(); ++i)
    CHECK(aged.A_theta.data()[i] ==
          doctest::Approx(fresh.A_theta.data()[i] + d.dA.data()[i]).epsilon(1e-14));
  // rho is recomputed on the perturbed A_theta, so the aged realization stays
  // certified.
  const StabilityReport rep = certify(aged);
  CHECK(rep.satisfied);
}

TEST_CASE("aging dataset build, persistence, and split") {
  SolverConfig cfg;
  std::vector<NormRecord> un(2), yn(2);
  const AgingDataset ds = build_aging_dataset(5, 51, 0.5, 0.1, cfg, un, yn);
  CHECK(ds.items.size() == 5);
  CHECK(ds.train_count == 4);
  for (const AgingItem& item : ds.items) {
    CHECK(item.pair.u.size() > 0);
    CHECK(item.pair.y.size() == item.pair.u.size());
  }

  const std::string path = "test_aging_roundtrip.json";
  save_aging_dataset(ds, path);
  const AgingDataset back = load_aging_dataset(path);
  std::remove(path.c_str());
  REQUIRE(back.items.size() == ds.items.size());
  CHECK(back.train_count == ds.train_count);
  CHECK(back.items[2].profile.t_op_years == ds.items[2].profile.t_op_years);
  CHECK(back.items[2].pair.y.values == ds.items[2].pair.y.values);
  CHECK(back.u_norm.size() == ds.u_norm.size());
}

TEST_CASE("gru persistence round trip is lossless") {
  const GruPerturbNet net = random_net(3, 2, 2, 61, 5);
  const std::string path = "test_gru_roundtrip.json";
  save_gru(net, path);
  const GruPerturbNet back = load_gru(path);
  std::remove(path.c_str());
  CHECK(pack_gru(back) == pack_gru(net));
  CHECK(back.l == net.l);
  CHECK(back.hidden == net.hidden);
}

TEST_CASE("null net evaluation equals the zero-head net") {
  SolverConfig cfg;
  std::vector<NormRecord> un(2), yn(2);
  const AgingDataset ds = build_aging_dataset(3, 53, 0.5, 0.1, cfg, un, yn);
  const CtrnnParams fresh = small_fresh(45);
  const GruPerturbNet zero_net = init_gru(fresh.l, fresh.n, fresh.m, 3);
  const std::vector<std::size_t> idx = {0, 1, 2};
  const double fresh_mse = aging_eval_mse(fresh, nullptr, ds, idx, 60);
  const double net_mse = aging_eval_mse(fresh, &zero_net, ds, idx, 60);
  CHECK(fresh_mse == net_mse);
}

TEST_CASE("short aging fit freezes the fresh model and records history") {
  SolverConfig cfg;
  std::vector<NormRecord> un(2), yn(2);
  const AgingDataset ds = build_aging_dataset(4, 55, 0.5, 0.1, cfg, un, yn);
  const CtrnnParams fresh = small_fresh(47);
  const Vec fresh_before = pack_params(fresh);

  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 2;
  tc.K = 8;
  tc.grid_steps = 40;
  tc.seed = 5;
  const AgingTrainState a = fit_aging(fresh, ds, tc);
  CHECK(a.history.size() == 2);
  CHECK(pack_params(fresh) == fresh_before);

  // Bitwise reproducible across reruns.
  const AgingTrainState b = fit_aging(fresh, ds, tc);
  CHECK(pack_gru(a.net) == pack_gru(b.net));
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].valid_mse == b.history[e].valid_mse);
  }
}
