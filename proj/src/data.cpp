#include "issnode/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "issnode/equilibrium.hpp"
#include "issnode/parallel.hpp"

namespace issnode {

double normalize(double v, const NormRecord& rec) {
  if (rec.constant) return 0.0;
  return 2.0 * (v - rec.min) / (rec.max - rec.min) - 1.0;
}

double denormalize(double v, const NormRecord& rec) {
  if (rec.constant) return rec.min;
  return rec.min + 0.5 * (v + 1.0) * (rec.max - rec.min);
}

Trajectory normalize(const Trajectory& traj, const std::vector<NormRecord>& recs) {
  Trajectory out = traj;
  for (auto& row : out.values)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = normalize(row[c], recs[c]);
  return out;
}

Trajectory denormalize(const Trajectory& traj, const std::vector<NormRecord>& recs) {
  Trajectory out = traj;
  for (auto& row : out.values)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = denormalize(row[c], recs[c]);
  return out;
}

double PwlSource::eval(double t) const {
  if (breakpoints.empty()) throw InvalidInputError("PwlSource: empty");
  if (t <= breakpoints.front().first) return breakpoints.front().second;
  if (t >= breakpoints.back().first) return breakpoints.back().second;
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    if (t <= breakpoints[i].first) {
      const auto& [t0, v0] = breakpoints[i - 1];
      const auto& [t1, v1] = breakpoints[i];
      const double w = (t - t0) / (t1 - t0);
      return (1.0 - w) * v0 + w * v1;
    }
  }
  return breakpoints.back().second;
}

Trajectory PwlSource::to_trajectory() const {
  Trajectory traj;
  traj.labels = {"u_ext"};
  for (const auto& [t, v] : breakpoints) {
    traj.times.push_back(t);
    traj.values.push_back({v});
  }
  return traj;
}

PwlSource gen_pwl(std::uint64_t seed, double T, std::size_t segments, double v_lo,
                  double v_hi) {
  if (segments < 1) throw InvalidInputError("gen_pwl: segments < 1");
  Rng rng(seed);
  PwlSource src;
  src.v_lo = v_lo;
  src.v_hi = v_hi;
  Vec times;
  times.push_back(0.0);
  for (std::size_t i = 0; i + 1 < segments; ++i) times.push_back(rng.uniform(0.0, T));
  times.push_back(T);
  std::sort(times.begin(), times.end());
  for (double t : times) src.breakpoints.emplace_back(t, rng.uniform(v_lo, v_hi));
  return src;
}

Trajectory gen_prbs(std::uint64_t seed, const PrbsSource& cfg, std::size_t periods) {
  const std::size_t nbits = cfg.register_bits;
  if (nbits == 0 || nbits > 63) throw InvalidInputError("gen_prbs: bad register size");
  const std::uint64_t mask = (1ull << nbits) - 1;
  std::uint64_t state = seed & mask;
  if (state == 0) throw InvalidInputError("gen_prbs: zero initial LFSR state");
  for (std::size_t t : cfg.taps)
    if (t == 0 || t > nbits) throw InvalidInputError("gen_prbs: invalid tap");
  if (!(cfg.rise_time < cfg.bit_period))
    throw InvalidInputError("gen_prbs: rise_time >= bit_period");

  std::vector<int> bits;
  const std::size_t total = periods;
  for (std::size_t i = 0; i < total; ++i) {
    bits.push_back(int(state & 1));
    std::uint64_t fb = 0;
    for (std::size_t t : cfg.taps) fb ^= (state >> (nbits - t)) & 1;
    state = (state >> 1) | (fb << (nbits - 1));
  }

  // Trapezoidal edges: level changes ramp over rise_time at bit boundaries.
  Trajectory traj;
  traj.labels = {"u_ext"};
  auto level = [&](int b) { return b ? cfg.high : cfg.low; };
  traj.times.push_back(0.0);
  traj.values.push_back({level(bits[0])});
  for (std::size_t i = 1; i < bits.size(); ++i) {
    const double t_edge = double(i) * cfg.bit_period;
    if (bits[i] != bits[i - 1]) {
      traj.times.push_back(t_edge);
      traj.values.push_back({level(bits[i - 1])});
      traj.times.push_back(t_edge + cfg.rise_time);
      traj.values.push_back({level(bits[i])});
    }
  }
  traj.times.push_back(double(bits.size()) * cfg.bit_period);
  traj.values.push_back({level(bits.back())});
  return traj;
}

OracleKind oracle_kind_from_string(const std::string& name) {
  if (name == "common_source_surrogate") return OracleKind::common_source_surrogate;
  if (name == "inverter_chain_surrogate") return OracleKind::inverter_chain_surrogate;
  if (name == "linear_2port") return OracleKind::linear_2port;
  throw InvalidInputError("unknown oracle kind: " + name);
}

std::string to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::common_source_surrogate: return "common_source_surrogate";
    case OracleKind::inverter_chain_surrogate: return "inverter_chain_surrogate";
    case OracleKind::linear_2port: return "linear_2port";
  }
  return "?";
}

CircuitOracle CircuitOracle::make(OracleKind kind) { return CircuitOracle(kind); }

std::size_t CircuitOracle::state_dim() const {
  switch (kind_) {
    case OracleKind::common_source_surrogate: return 2;
    case OracleKind::inverter_chain_surrogate: return 9;
    case OracleKind::linear_2port: return 2;
  }
  return 0;
}

namespace {

// common-source surrogate constants
constexpr double kCsGain = 1.5, kCsSlope = 2.0, kCsTauA = 0.08;
constexpr double kCsGain2 = 0.5, kCsSlope2 = 1.5, kCsTauB = 0.15;
constexpr double kCsRin = 1.0, kCsKin = 0.4, kCsRdrive = 0.5;

// inverter-chain surrogate constants
constexpr double kInvAlpha = 8.0, kInvVth = 0.5;
constexpr double kInvRdrive = 0.5;
inline double inv_gate(double v) { return 0.5 * (1.0 - std::tanh(kInvAlpha * (v - kInvVth))); }
inline double inv_tau(std::size_t stage) { return 0.04 + 0.005 * double(stage + 1); }

}  // namespace

void CircuitOracle::dynamics(const Vec& x, const Vec& u, Vec& dx) const {
  dx.resize(state_dim());
  switch (kind_) {
    case OracleKind::common_source_surrogate:
      dx[0] = (-x[0] + kCsGain * std::tanh(kCsSlope * u[0])) / kCsTauA;
      dx[1] = (-x[1] + x[0] + kCsGain2 * std::tanh(kCsSlope2 * u[1])) / kCsTauB;
      break;
    case OracleKind::inverter_chain_surrogate: {
      double v_prev = u[0];
      for (std::size_t j = 0; j < 9; ++j) {
        dx[j] = (inv_gate(v_prev) - x[j]) / (inv_tau(j) * aging_factor);
        v_prev = x[j];
      }
      break;
    }
    case OracleKind::linear_2port:
      dx[0] = (u[0] - x[0]) / (kLinR1 * kLinC1);
      dx[1] = (u[1] - x[1]) / (kLinR2 * kLinC2);
      break;
  }
}

Vec CircuitOracle::port_currents(const Vec& x, const Vec& u) const {
  switch (kind_) {
    case OracleKind::common_source_surrogate:
      return {(kCsKin * x[0] - u[0]) / kCsRin, (x[1] - u[1]) / kCsRdrive};
    case OracleKind::inverter_chain_surrogate:
      return {0.05 * (0.5 - u[0]) + 0.02 * x[0], (x[8] - u[1]) / kInvRdrive};
    case OracleKind::linear_2port:
      return {(x[0] - u[0]) / kLinR1, (x[1] - u[1]) / kLinR2};
  }
  return {};
}

double CircuitOracle::compute_aging_factor(double duty, double t_op_years,
                                           double kappa, double t0_years) {
  return 1.0 + kappa * duty * std::log10(1.0 + t_op_years / t0_years);
}

double CircuitOracle::source_lo() const {
  return kind_ == OracleKind::inverter_chain_surrogate ? 0.0 : -1.0;
}
double CircuitOracle::source_hi() const { return 1.0; }

double duty_cycle(const Trajectory& waveform) {
  if (waveform.size() == 0) throw InvalidInputError("duty_cycle: empty waveform");
  double lo = waveform.values.front()[0], hi = lo;
  for (const auto& v : waveform.values) {
    lo = std::min(lo, v[0]);
    hi = std::max(hi, v[0]);
  }
  const double mid = 0.5 * (lo + hi);
  // Sample uniformly; breakpoint spacing may be uneven.
  const std::size_t samples = 256;
  const double t0 = waveform.times.front(), t1 = waveform.times.back();
  std::size_t above = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = t0 + (t1 - t0) * (double(i) + 0.5) / double(samples);
    if (interp(waveform, t)[0] > mid) ++above;
  }
  return double(above) / double(samples);
}

RcLoad gen_load(Rng& rng) {
  RcLoad load;
  load.r_in = rng.uniform(0.1, 0.3);
  load.c_in = rng.uniform(0.05, 0.2);
  load.r_out = rng.uniform(0.5, 2.0);
  load.c_out = rng.uniform(0.05, 0.3);
  return load;
}

OraclePair simulate_oracle(const CircuitOracle& oracle, const RcLoad& load,
                           const Trajectory& source, double T,
                           const SolverConfig& cfg, std::size_t samples) {
  const std::size_t ns = oracle.state_dim();
  const std::size_t dim = ns + 2;  // oracle states + two port voltage nodes

  auto joint = [&](double t, const Vec& z, Vec& dz) {
    const Vec xs(z.begin(), z.begin() + ns);
    const Vec u = {z[ns], z[ns + 1]};
    Vec dxs;
    oracle.dynamics(xs, u, dxs);
    const Vec i = oracle.port_currents(xs, u);
    const double uext = interp(source, t)[0];
    dz.resize(dim);
    for (std::size_t k = 0; k < ns; ++k) dz[k] = dxs[k];
    dz[ns] = ((uext - u[0]) / load.r_in + i[0]) / load.c_in;
    dz[ns + 1] = (-u[1] / load.r_out + i[1]) / load.c_out;
  };

  // DC point with the initial source value held constant.
  const double uext0 = interp(source, 0.0)[0];
  Vec guess(dim, 0.0);
  guess[ns] = uext0;
  const Vec z0 = newton_fd(
      [&](const Vec& z) {
        Vec dz;
        const Vec xs(z.begin(), z.begin() + ns);
        const Vec u = {z[ns], z[ns + 1]};
        Vec dxs;
        oracle.dynamics(xs, u, dxs);
        const Vec i = oracle.port_currents(xs, u);
        dz.resize(dim);
        for (std::size_t k = 0; k < ns; ++k) dz[k] = dxs[k];
        dz[ns] = ((uext0 - u[0]) / load.r_in + i[0]) / load.c_in;
        dz[ns + 1] = (-u[1] / load.r_out + i[1]) / load.c_out;
        return dz;
      },
      guess);

  const IntegrateResult sol = integrate(joint, z0, 0.0, T, cfg);

  OraclePair pair;
  pair.u.labels = {"v0", "v1"};
  pair.y.labels = {"i0", "i1"};
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = T * double(k) / double(samples - 1);
    const Vec z = interp(sol.traj, t);
    const Vec xs(z.begin(), z.begin() + ns);
    const Vec u = {z[ns], z[ns + 1]};
    pair.u.times.push_back(t);
    pair.u.values.push_back(u);
    pair.y.times.push_back(t);
    pair.y.values.push_back(oracle.port_currents(xs, u));
  }
  return pair;
}

DrawnRun draw_run(OracleKind kind, std::uint64_t seed, std::uint64_t index, double T) {
  Rng rng(Rng::derive_seed(seed, index));
  DrawnRun run;
  run.load = gen_load(rng);
  const CircuitOracle oracle = CircuitOracle::make(kind);
  const std::uint64_t src_seed = rng.next_u64();
  run.source =
      gen_pwl(src_seed, T, 8, oracle.source_lo(), oracle.source_hi()).to_trajectory();
  return run;
}

std::vector<std::size_t> Dataset::train_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < train_count; ++i) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> Dataset::valid_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = train_count; i < pairs.size(); ++i) idx.push_back(i);
  return idx;
}

namespace {

std::vector<NormRecord> compute_norms(const std::vector<const Trajectory*>& trajs) {
  std::vector<NormRecord> recs;
  if (trajs.empty()) return recs;
  const std::size_t dim = trajs.front()->dim();
  recs.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    double lo = trajs.front()->values.front()[c];
    double hi = lo;
    for (const Trajectory* t : trajs)
      for (const auto& row : t->values) {
        lo = std::min(lo, row[c]);
        hi = std::max(hi, row[c]);
      }
    recs[c].min = lo;
    recs[c].max = hi;
    recs[c].constant = !(hi > lo);
  }
  return recs;
}

}  // namespace

Dataset build_dataset(OracleKind kind, std::size_t n, std::uint64_t seed, double T,
                      const SolverConfig& cfg, std::size_t jobs) {
  if (n < 1) throw InvalidInputError("build_dataset: N < 1");
  Dataset ds;
  ds.seed = seed;
  ds.oracle_kind = to_string(kind);
  const CircuitOracle oracle = CircuitOracle::make(kind);
  ds.pairs.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const DrawnRun run = draw_run(kind, seed, i, T);
    ds.pairs[i] = simulate_oracle(oracle, run.load, run.source, T, cfg);
  });
  ds.train_count = std::max<std::size_t>(1, (n * 8) / 10);
  if (ds.train_count > n) ds.train_count = n;

  // Normalization from the training split only.
  std::vector<const Trajectory*> us, ys;
  for (std::size_t i = 0; i < ds.train_count; ++i) {
    us.push_back(&ds.pairs[i].u);
    ys.push_back(&ds.pairs[i].y);
  }
  ds.u_norm = compute_norms(us);
  ds.y_norm = compute_norms(ys);
  return ds;
}

namespace {

using nlohmann::json;

json traj_to_json(const Trajectory& t) {
  json j;
  j["times"] = t.times;
  j["values"] = t.values;
  j["labels"] = t.labels;
  return j;
}

Trajectory traj_from_json(const json& j) {
  Trajectory t;
  t.times = j.at("times").get<Vec>();
  t.values = j.at("values").get<std::vector<Vec>>();
  t.labels = j.at("labels").get<std::vector<std::string>>();
  return t;
}

json norm_to_json(const NormRecord& r) {
  return json{{"min", r.min}, {"max", r.max}, {"constant", r.constant}};
}

NormRecord norm_from_json(const json& j) {
  NormRecord r;
  r.min = j.at("min").get<double>();
  r.max = j.at("max").get<double>();
  r.constant = j.at("constant").get<bool>();
  return r;
}

}  // namespace

std::string dataset_to_json(const Dataset& ds) {
  json j;
  j["schema"] = "iss-node-dataset-v1";
  j["seed"] = ds.seed;
  j["oracle_kind"] = ds.oracle_kind;
  j["time_scale"] = ds.time_scale;
  j["train_count"] = ds.train_count;
  json pairs = json::array();
  for (const auto& p : ds.pairs)
    pairs.push_back(json{{"u", traj_to_json(p.u)}, {"y", traj_to_json(p.y)}});
  j["pairs"] = std::move(pairs);
  json un = json::array(), yn = json::array();
  for (const auto& r : ds.u_norm) un.push_back(norm_to_json(r));
  for (const auto& r : ds.y_norm) yn.push_back(norm_to_json(r));
  j["u_norm"] = std::move(un);
  j["y_norm"] = std::move(yn);
  return j.dump();
}

Dataset dataset_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "iss-node-dataset-v1")
    throw InvalidInputError("dataset json: unknown schema");
  Dataset ds;
  ds.seed = j.at("seed").get<std::uint64_t>();
  ds.oracle_kind = j.at("oracle_kind").get<std::string>();
  ds.time_scale = j.at("time_scale").get<double>();
  ds.train_count = j.at("train_count").get<std::size_t>();
  for (const auto& p : j.at("pairs"))
    ds.pairs.push_back({traj_from_json(p.at("u")), traj_from_json(p.at("y"))});
  for (const auto& r : j.at("u_norm")) ds.u_norm.push_back(norm_from_json(r));
  for (const auto& r : j.at("y_norm")) ds.y_norm.push_back(norm_from_json(r));
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInputError("save_dataset: cannot open " + path);
  os << dataset_to_json(ds) << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInputError("load_dataset: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return dataset_from_json(ss.str());
}

}  // namespace issnode
