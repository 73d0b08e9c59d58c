#include "issnode/aging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace issnode {

StressProfile gen_stress_profile(std::uint64_t seed, double t_stress) {
  Rng rng(seed);
  StressProfile profile;
  profile.u_stress = gen_pwl(rng.next_u64(), t_stress, 6, 0.0, 1.0).to_trajectory();
  profile.t_op_years = rng.log_uniform(0.001, 10.0);
  return profile;
}

GruPerturbNet init_gru(std::size_t l, std::size_t n, std::size_t m,
                       std::uint64_t seed, std::size_t hidden) {
  GruPerturbNet net;
  net.l = l;
  net.n = n;
  net.m = m;
  net.hidden = hidden;
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(double(hidden));
  auto rand_m = [&](std::size_t r, std::size_t c) {
    Matrix mat(r, c);
    for (double& v : mat.data()) v = rng.uniform(-s, s);
    return mat;
  };
  net.Wz = rand_m(hidden, net.input_dim);
  net.Uz = rand_m(hidden, hidden);
  net.Wr = rand_m(hidden, net.input_dim);
  net.Ur = rand_m(hidden, hidden);
  net.Wh = rand_m(hidden, net.input_dim);
  net.Uh = rand_m(hidden, hidden);
  net.bz.assign(hidden, 0.0);
  net.br.assign(hidden, 0.0);
  net.bh.assign(hidden, 0.0);
  // Zero heads: training starts exactly at the fresh model.
  net.head_A = Matrix(l * n, hidden);
  net.head_B = Matrix(l * m, hidden);
  net.head_mu = Matrix(l, hidden);
  net.headb_A.assign(l * n, 0.0);
  net.headb_B.assign(l * m, 0.0);
  net.headb_mu.assign(l, 0.0);
  return net;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GruTrace {
  std::vector<Vec> x;     // inputs per step
  std::vector<Vec> z, r, cand, h;  // per-step activations; h[t] after step t
};

GruTrace gru_run(const GruPerturbNet& net, const StressProfile& profile) {
  GruTrace tr;
  const std::size_t steps = GruPerturbNet::kStressSamples;
  const double t0 = profile.u_stress.times.front();
  const double t1 = profile.u_stress.times.back();
  const double log_top = std::log10(profile.t_op_years);
  Vec h(net.hidden, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const double ts = t0 + (t1 - t0) * double(t) / double(steps - 1);
    Vec x = {interp(profile.u_stress, ts)[0], log_top};
    Vec az = matvec(net.Wz, x), ar = matvec(net.Wr, x), ah = matvec(net.Wh, x);
    const Vec uzh = matvec(net.Uz, h), urh = matvec(net.Ur, h);
    Vec z(net.hidden), r(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i) {
      z[i] = sigmoid(az[i] + uzh[i] + net.bz[i]);
      r[i] = sigmoid(ar[i] + urh[i] + net.br[i]);
    }
    Vec rh(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i) rh[i] = r[i] * h[i];
    const Vec uhrh = matvec(net.Uh, rh);
    Vec cand(net.hidden), h_new(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i) {
      cand[i] = std::tanh(ah[i] + uhrh[i] + net.bh[i]);
      h_new[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i];
    }
    tr.x.push_back(std::move(x));
    tr.z.push_back(std::move(z));
    tr.r.push_back(std::move(r));
    tr.cand.push_back(std::move(cand));
    tr.h.push_back(h_new);
    h = std::move(h_new);
  }
  return tr;
}

}  // namespace

PerturbDeltas gru_forward(const GruPerturbNet& net, const StressProfile& profile) {
  if (profile.u_stress.size() == 0)
    throw InvalidInputError("gru_forward: empty stress waveform");
  const GruTrace tr = gru_run(net, profile);
  const Vec& h = tr.h.back();
  PerturbDeltas d;
  Vec va = matvec(net.head_A, h);
  for (std::size_t i = 0; i < va.size(); ++i) va[i] += net.headb_A[i];
  Vec vb = matvec(net.head_B, h);
  for (std::size_t i = 0; i < vb.size(); ++i) vb[i] += net.headb_B[i];
  Vec vm = matvec(net.head_mu, h);
  for (std::size_t i = 0; i < vm.size(); ++i) vm[i] += net.headb_mu[i];
  d.dA = Matrix(net.l, net.n);
  d.dB = Matrix(net.l, net.m);
  d.dA.data() = Vec(va.begin(), va.end());
  d.dB.data() = Vec(vb.begin(), vb.end());
  d.dmu = std::move(vm);
  return d;
}

Vec pack_gru(const GruPerturbNet& net) {
  Vec theta;
  auto push_m = [&](const Matrix& m) {
    theta.insert(theta.end(), m.data().begin(), m.data().end());
  };
  auto push_v = [&](const Vec& v) { theta.insert(theta.end(), v.begin(), v.end()); };
  push_m(net.Wz);
  push_m(net.Uz);
  push_m(net.Wr);
  push_m(net.Ur);
  push_m(net.Wh);
  push_m(net.Uh);
  push_v(net.bz);
  push_v(net.br);
  push_v(net.bh);
  push_m(net.head_A);
  push_m(net.head_B);
  push_m(net.head_mu);
  push_v(net.headb_A);
  push_v(net.headb_B);
  push_v(net.headb_mu);
  return theta;
}

void unpack_gru(GruPerturbNet& net, const Vec& theta) {
  std::size_t pos = 0;
  auto pull_m = [&](Matrix& m) {
    std::copy(theta.begin() + pos, theta.begin() + pos + m.data().size(),
              m.data().begin());
    pos += m.data().size();
  };
  auto pull_v = [&](Vec& v) {
    std::copy(theta.begin() + pos, theta.begin() + pos + v.size(), v.begin());
    pos += v.size();
  };
  pull_m(net.Wz);
  pull_m(net.Uz);
  pull_m(net.Wr);
  pull_m(net.Ur);
  pull_m(net.Wh);
  pull_m(net.Uh);
  pull_v(net.bz);
  pull_v(net.br);
  pull_v(net.bh);
  pull_m(net.head_A);
  pull_m(net.head_B);
  pull_m(net.head_mu);
  pull_v(net.headb_A);
  pull_v(net.headb_B);
  pull_v(net.headb_mu);
  if (pos != theta.size()) throw InvalidInputError("unpack_gru: size mismatch");
}

Vec gru_backward(const GruPerturbNet& net, const StressProfile& profile,
                 const PerturbDeltas& delta_bars) {
  const GruTrace tr = gru_run(net, profile);
  GruPerturbNet g = net;  // reuse the layout for gradient storage
  for (Matrix* m : {&g.Wz, &g.Uz, &g.Wr, &g.Ur, &g.Wh, &g.Uh, &g.head_A, &g.head_B,
                    &g.head_mu})
    std::fill(m->data().begin(), m->data().end(), 0.0);
  for (Vec* v : {&g.bz, &g.br, &g.bh, &g.headb_A, &g.headb_B, &g.headb_mu})
    std::fill(v->begin(), v->end(), 0.0);

  const Vec& hT = tr.h.back();
  const Vec& va_bar = delta_bars.dA.data();
  const Vec& vb_bar = delta_bars.dB.data();
  const Vec& vm_bar = delta_bars.dmu;

  Vec h_bar(net.hidden, 0.0);
  auto head_back = [&](const Matrix& head, Matrix& g_head, Vec& g_bias,
                       const Vec& out_bar) {
    for (std::size_t i = 0; i < out_bar.size(); ++i) {
      g_bias[i] += out_bar[i];
      for (std::size_t j = 0; j < net.hidden; ++j) {
        g_head(i, j) += out_bar[i] * hT[j];
        h_bar[j] += head(i, j) * out_bar[i];
      }
    }
  };
  head_back(net.head_A, g.head_A, g.headb_A, va_bar);
  head_back(net.head_B, g.head_B, g.headb_B, vb_bar);
  head_back(net.head_mu, g.head_mu, g.headb_mu, vm_bar);

  const std::size_t steps = GruPerturbNet::kStressSamples;
  for (std::size_t t = steps; t-- > 0;) {
    const Vec& h_prev = t > 0 ? tr.h[t - 1] : Vec(net.hidden, 0.0);
    const Vec& z = tr.z[t];
    const Vec& r = tr.r[t];
    const Vec& cand = tr.cand[t];
    const Vec& x = tr.x[t];

    Vec z_bar(net.hidden), cand_bar(net.hidden), hprev_bar(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i) {
      z_bar[i] = h_bar[i] * (cand[i] - h_prev[i]);
      cand_bar[i] = h_bar[i] * z[i];
      hprev_bar[i] = h_bar[i] * (1.0 - z[i]);
    }
    // candidate pre-activation
    Vec cand_pre(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i)
      cand_pre[i] = cand_bar[i] * (1.0 - cand[i] * cand[i]);
    for (std::size_t i = 0; i < net.hidden; ++i) {
      g.bh[i] += cand_pre[i];
      for (std::size_t j = 0; j < net.input_dim; ++j)
        g.Wh(i, j) += cand_pre[i] * x[j];
      for (std::size_t j = 0; j < net.hidden; ++j)
        g.Uh(i, j) += cand_pre[i] * r[j] * h_prev[j];
    }
    const Vec rh_bar = matvec_t(net.Uh, cand_pre);
    Vec r_bar(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i) {
      r_bar[i] = rh_bar[i] * h_prev[i];
      hprev_bar[i] += rh_bar[i] * r[i];
    }
    // gate pre-activations
    Vec z_pre(net.hidden), r_pre(net.hidden);
    for (std::size_t i = 0; i < net.hidden; ++i) {
      z_pre[i] = z_bar[i] * z[i] * (1.0 - z[i]);
      r_pre[i] = r_bar[i] * r[i] * (1.0 - r[i]);
    }
    for (std::size_t i = 0; i < net.hidden; ++i) {
      g.bz[i] += z_pre[i];
      g.br[i] += r_pre[i];
      for (std::size_t j = 0; j < net.input_dim; ++j) {
        g.Wz(i, j) += z_pre[i] * x[j];
        g.Wr(i, j) += r_pre[i] * x[j];
      }
      for (std::size_t j = 0; j < net.hidden; ++j) {
        g.Uz(i, j) += z_pre[i] * h_prev[j];
        g.Ur(i, j) += r_pre[i] * h_prev[j];
      }
    }
    const Vec uz_back = matvec_t(net.Uz, z_pre);
    const Vec ur_back = matvec_t(net.Ur, r_pre);
    for (std::size_t i = 0; i < net.hidden; ++i)
      hprev_bar[i] += uz_back[i] + ur_back[i];
    h_bar = std::move(hprev_bar);
  }
  return pack_gru(g);
}

CtrnnParams aged_params(const CtrnnParams& fresh, const PerturbDeltas& deltas) {
  CtrnnParams aged = fresh;
  aged.A_theta = fresh.A_theta + deltas.dA;
  aged.B = fresh.B + deltas.dB;
  for (std::size_t i = 0; i < aged.mu.size(); ++i) aged.mu[i] += deltas.dmu[i];
  return aged;
}

AgingDataset build_aging_dataset(std::size_t n_items, std::uint64_t seed, double T,
                                 double t_stress, const SolverConfig& cfg,
                                 const std::vector<NormRecord>& u_norm,
                                 const std::vector<NormRecord>& y_norm) {
  AgingDataset ds;
  ds.seed = seed;
  ds.horizon = T;
  ds.t_stress = t_stress;
  ds.u_norm = u_norm;
  ds.y_norm = y_norm;
  for (std::size_t i = 0; i < n_items; ++i) {
    const std::uint64_t item_seed = Rng::derive_seed(seed ^ 0xa61ull, i);
    AgingItem item;
    item.profile = gen_stress_profile(item_seed, t_stress);
    CircuitOracle oracle = CircuitOracle::make(OracleKind::inverter_chain_surrogate);
    oracle.aging_factor = CircuitOracle::compute_aging_factor(
        duty_cycle(item.profile.u_stress), item.profile.t_op_years);
    const DrawnRun run =
        draw_run(OracleKind::inverter_chain_surrogate, seed ^ 0xa62ull, i, T);
    item.pair = simulate_oracle(oracle, run.load, run.source, T, cfg);
    ds.items.push_back(std::move(item));
  }
  ds.train_count = std::max<std::size_t>(1, (n_items * 8) / 10);
  if (ds.train_count > n_items) ds.train_count = n_items;
  return ds;
}

AgingTrainState fit_aging(const CtrnnParams& fresh, const AgingDataset& ds,
                          const TrainConfig& cfg, std::ostream* log) {
  AgingTrainState state;
  state.net = init_gru(fresh.l, fresh.n, fresh.m, Rng::derive_seed(cfg.seed, 77));
  Vec theta = pack_gru(state.net);
  AdamState adam;

  std::vector<std::size_t> train_idx, valid_idx;
  for (std::size_t i = 0; i < ds.train_count; ++i) train_idx.push_back(i);
  for (std::size_t i = ds.train_count; i < ds.items.size(); ++i) valid_idx.push_back(i);
  if (valid_idx.empty()) valid_idx = train_idx;

  Rng shuffle_rng(Rng::derive_seed(cfg.seed, 3));
  Rng sample_rng(Rng::derive_seed(cfg.seed, 4));
  std::vector<std::size_t> order = train_idx;

  double best = std::numeric_limits<double>::infinity();
  Vec best_theta = theta;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> idx(
          order.begin() + start,
          order.begin() + std::min(start + cfg.batch_size, order.size()));
      std::sort(idx.begin(), idx.end());

      Vec g_total(theta.size(), 0.0);
      double batch_loss = 0.0;
      std::size_t used = 0;
      for (std::size_t i : idx) {
        const AgingItem& item = ds.items[i];
        const PerturbDeltas deltas = gru_forward(state.net, item.profile);
        const CtrnnParams realized = aged_params(fresh, deltas);
        const std::vector<TrainPair> one = {
            {normalize(item.pair.u, ds.u_norm), normalize(item.pair.y, ds.y_norm)}};
        const GradResult gr = grad(realized, one, cfg.K, sample_rng, cfg.grid_steps);
        if (gr.loss.used == 0) continue;
        PerturbDeltas bars{gr.grads.A_theta, gr.grads.B, gr.grads.mu};
        const Vec g = gru_backward(state.net, item.profile, bars);
        for (std::size_t k = 0; k < g.size(); ++k) g_total[k] += g[k];
        batch_loss += gr.loss.loss;
        ++used;
      }
      if (used == 0) continue;
      for (double& v : g_total) v /= double(used);
      if (adam_step(theta, g_total, adam, cfg)) unpack_gru(state.net, theta);
      epoch_loss += batch_loss / double(used);
      ++batches;
    }
    epoch_loss = batches > 0 ? epoch_loss / double(batches) : 0.0;

    const double valid_mse =
        aging_eval_mse(fresh, &state.net, ds, valid_idx, cfg.grid_steps);
    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss;
    row.valid_mse = valid_mse;
    state.history.push_back(row);
    if (log)
      (*log) << "aging epoch " << epoch << " train_loss " << epoch_loss
             << " valid_mse " << valid_mse << "\n";
    if (valid_mse < best) {
      best = valid_mse;
      best_theta = theta;
    }
  }
  unpack_gru(state.net, best_theta);
  return state;
}

double aging_eval_mse(const CtrnnParams& fresh, const GruPerturbNet* net,
                      const AgingDataset& ds, const std::vector<std::size_t>& indices,
                      std::size_t grid_steps) {
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i : indices) {
    const AgingItem& item = ds.items[i];
    CtrnnParams realized = fresh;
    if (net) realized = aged_params(fresh, gru_forward(*net, item.profile));
    const std::vector<TrainPair> one = {
        {normalize(item.pair.u, ds.u_norm), normalize(item.pair.y, ds.y_norm)}};
    const OpenLoopReport rep = evaluate_openloop(realized, one, grid_steps);
    if (rep.used > 0) {
      total += rep.aggregate;
      ++used;
    }
  }
  return used > 0 ? total / double(used) : std::numeric_limits<double>::infinity();
}

// --- persistence -------------------------------------------------------------

namespace {

using nlohmann::json;

json traj_to_json(const Trajectory& t) {
  return json{{"times", t.times}, {"values", t.values}, {"labels", t.labels}};
}

Trajectory traj_from_json(const json& j) {
  Trajectory t;
  t.times = j.at("times").get<Vec>();
  t.values = j.at("values").get<std::vector<Vec>>();
  t.labels = j.at("labels").get<std::vector<std::string>>();
  return t;
}

json mat_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"entries", m.data()}};
}

Matrix mat_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data() = j.at("entries").get<Vec>();
  return m;
}

}  // namespace

std::string aging_dataset_to_json(const AgingDataset& ds) {
  json j;
  j["schema"] = "iss-node-aging-v1";
  j["seed"] = ds.seed;
  j["horizon"] = ds.horizon;
  j["t_stress"] = ds.t_stress;
  j["train_count"] = ds.train_count;
  json items = json::array();
  for (const auto& item : ds.items) {
    items.push_back(json{{"u_stress", traj_to_json(item.profile.u_stress)},
                         {"t_op_years", item.profile.t_op_years},
                         {"u", traj_to_json(item.pair.u)},
                         {"y", traj_to_json(item.pair.y)}});
  }
  j["items"] = std::move(items);
  json un = json::array(), yn = json::array();
  for (const auto& r : ds.u_norm)
    un.push_back(json{{"min", r.min}, {"max", r.max}, {"constant", r.constant}});
  for (const auto& r : ds.y_norm)
    yn.push_back(json{{"min", r.min}, {"max", r.max}, {"constant", r.constant}});
  j["u_norm"] = std::move(un);
  j["y_norm"] = std::move(yn);
  return j.dump();
}

AgingDataset aging_dataset_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "iss-node-aging-v1")
    throw InvalidInputError("aging dataset json: unknown schema");
  AgingDataset ds;
  ds.seed = j.at("seed").get<std::uint64_t>();
  ds.horizon = j.at("horizon").get<double>();
  ds.t_stress = j.at("t_stress").get<double>();
  ds.train_count = j.at("train_count").get<std::size_t>();
  for (const auto& item : j.at("items")) {
    AgingItem it;
    it.profile.u_stress = traj_from_json(item.at("u_stress"));
    it.profile.t_op_years = item.at("t_op_years").get<double>();
    it.pair.u = traj_from_json(item.at("u"));
    it.pair.y = traj_from_json(item.at("y"));
    ds.items.push_back(std::move(it));
  }
  auto norms = [](const json& arr) {
    std::vector<NormRecord> recs;
    for (const auto& r : arr) {
      NormRecord rec;
      rec.min = r.at("min").get<double>();
      rec.max = r.at("max").get<double>();
      rec.constant = r.at("constant").get<bool>();
      recs.push_back(rec);
    }
    return recs;
  };
  ds.u_norm = norms(j.at("u_norm"));
  ds.y_norm = norms(j.at("y_norm"));
  return ds;
}

void save_aging_dataset(const AgingDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInputError("save_aging_dataset: cannot open " + path);
  os << aging_dataset_to_json(ds) << "\n";
}

AgingDataset load_aging_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInputError("load_aging_dataset: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return aging_dataset_from_json(ss.str());
}

std::string gru_to_json(const GruPerturbNet& net) {
  json j;
  j["schema"] = "iss-node-gru-v1";
  j["input_dim"] = net.input_dim;
  j["hidden"] = net.hidden;
  j["l"] = net.l;
  j["n"] = net.n;
  j["m"] = net.m;
  j["Wz"] = mat_to_json(net.Wz);
  j["Uz"] = mat_to_json(net.Uz);
  j["Wr"] = mat_to_json(net.Wr);
  j["Ur"] = mat_to_json(net.Ur);
  j["Wh"] = mat_to_json(net.Wh);
  j["Uh"] = mat_to_json(net.Uh);
  j["bz"] = net.bz;
  j["br"] = net.br;
  j["bh"] = net.bh;
  j["head_A"] = mat_to_json(net.head_A);
  j["head_B"] = mat_to_json(net.head_B);
  j["head_mu"] = mat_to_json(net.head_mu);
  j["headb_A"] = net.headb_A;
  j["headb_B"] = net.headb_B;
  j["headb_mu"] = net.headb_mu;
  return j.dump();
}

GruPerturbNet gru_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "iss-node-gru-v1")
    throw InvalidInputError("gru json: unknown schema");
  GruPerturbNet net;
  net.input_dim = j.at("input_dim").get<std::size_t>();
  net.hidden = j.at("hidden").get<std::size_t>();
  net.l = j.at("l").get<std::size_t>();
  net.n = j.at("n").get<std::size_t>();
  net.m = j.at("m").get<std::size_t>();
  net.Wz = mat_from_json(j.at("Wz"));
  net.Uz = mat_from_json(j.at("Uz"));
  net.Wr = mat_from_json(j.at("Wr"));
  net.Ur = mat_from_json(j.at("Ur"));
  net.Wh = mat_from_json(j.at("Wh"));
  net.Uh = mat_from_json(j.at("Uh"));
  net.bz = j.at("bz").get<Vec>();
  net.br = j.at("br").get<Vec>();
  net.bh = j.at("bh").get<Vec>();
  net.head_A = mat_from_json(j.at("head_A"));
  net.head_B = mat_from_json(j.at("head_B"));
  net.head_mu = mat_from_json(j.at("head_mu"));
  net.headb_A = j.at("headb_A").get<Vec>();
  net.headb_B = j.at("headb_B").get<Vec>();
  net.headb_mu = j.at("headb_mu").get<Vec>();
  return net;
}

void save_gru(const GruPerturbNet& net, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInputError("save_gru: cannot open " + path);
  os << gru_to_json(net) << "\n";
}

GruPerturbNet load_gru(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInputError("load_gru: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return gru_from_json(ss.str());
}

}  // namespace issnode
