// Single entry point for the workflows: data generation, training, stability
// certification, open-loop evaluation, closed-loop co-simulation, aging, and
// Verilog-A export. Every stochastic choice is seeded; each subcommand echoes
// its effective configuration into its --out directory.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "issnode/aging.hpp"
#include "issnode/cosim.hpp"
#include "issnode/equilibrium.hpp"
#include "issnode/exporter.hpp"
#include "issnode/model.hpp"
#include "issnode/parallel.hpp"
#include "issnode/stability.hpp"
#include "issnode/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace issnode;

namespace {

int g_verbosity = 1;  // 0 quiet, 1 normal, 2 debug

std::ostream* log_stream() { return g_verbosity >= 1 ? &std::cerr : nullptr; }

void info(const std::string& msg) {
  if (g_verbosity >= 1) std::cerr << msg << "\n";
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("ISS_NODE_SEED")) return std::stoull(env);
  return 0;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Effective-config echo: every artifact directory records exactly what
// produced it.
void echo_config(const fs::path& out, const json& cfg) {
  fs::create_directories(out);
  write_text(out / "config.json", cfg.dump(2) + "\n");
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw std::runtime_error("unknown config key '" + it.key() + "' in " + where);
  }
}

// Optional JSON config file mirroring TrainConfig; flags override file values.
void apply_train_config_file(TrainConfig& cfg, const std::string& path) {
  const json j = json::parse(read_text(path));
  reject_unknown_keys(j,
                      {"lr", "beta1", "beta2", "eps_adam", "epochs", "batch_size", "K",
                       "delta", "grid_steps", "seed", "mode", "n", "l", "train_W",
                       "train_nu", "kind"},
                      path);
  if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
  if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
  if (j.contains("eps_adam")) cfg.eps_adam = j["eps_adam"].get<double>();
  if (j.contains("epochs")) cfg.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("K")) cfg.K = j["K"].get<std::size_t>();
  if (j.contains("delta")) cfg.delta = j["delta"].get<double>();
  if (j.contains("grid_steps")) cfg.grid_steps = j["grid_steps"].get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("mode")) cfg.mode = train_mode_from_string(j["mode"].get<std::string>());
  if (j.contains("n")) cfg.n = j["n"].get<std::size_t>();
  if (j.contains("l")) cfg.l = j["l"].get<std::size_t>();
  if (j.contains("train_W")) cfg.train_W = j["train_W"].get<bool>();
  if (j.contains("train_nu")) cfg.train_nu = j["train_nu"].get<bool>();
  if (j.contains("kind"))
    cfg.kind = j["kind"].get<std::string>() == "tanh" ? Nonlinearity::tanh_fn
                                                      : Nonlinearity::relu;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"lr", cfg.lr},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"eps_adam", cfg.eps_adam},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"K", cfg.K},
              {"delta", cfg.delta},
              {"grid_steps", cfg.grid_steps},
              {"seed", cfg.seed},
              {"mode", to_string(cfg.mode)},
              {"n", cfg.n},
              {"l", cfg.l},
              {"train_W", cfg.train_W},
              {"train_nu", cfg.train_nu},
              {"kind", cfg.kind == Nonlinearity::tanh_fn ? "tanh" : "relu"}};
}

// --- verify ------------------------------------------------------------------

struct VerifyRow {
  std::string name;
  bool pass = false;
  std::string detail;
};

CtrnnParams random_constrained(std::size_t n, std::size_t l, Rng& rng) {
  CtrnnParams p = init_params(n, l, 2, 2, TrainMode::proposed,
                              rng.uniform_index(std::size_t(1) << 31));
  p.log_tau = std::log(rng.uniform(0.1, 10.0));
  return p;
}

VerifyRow verify_certificates() {
  VerifyRow row{"theorem2_certificate", true, ""};
  Rng rng(101);
  double worst = -1e300;
  const std::size_t dims[3][2] = {{2, 3}, {6, 14}, {20, 30}};
  for (std::size_t d = 0; d < 3; ++d) {
    for (int k = 0; k < 20; ++k) {
      const CtrnnParams p = random_constrained(dims[d][0], dims[d][1], rng);
      const StabilityReport rep = certify(p);
      worst = std::max(worst, rep.lds_margin - rep.theorem2_bound);
      if (rep.lds_margin > rep.theorem2_bound + 1e-8) row.pass = false;
    }
  }
  row.detail = "worst margin-bound gap " + fmt_g(worst);
  return row;
}

VerifyRow verify_scalar_tightness() {
  VerifyRow row{"scalar_tightness", false, ""};
  CtrnnParams p;
  p.n = 1;
  p.l = 1;
  p.m = 1;
  p.p = 1;
  p.log_tau = 0.0;
  p.W = Matrix(1, 1, {1.0});
  p.A_theta = Matrix(1, 1, {2.0});
  p.B = Matrix(1, 1, {0.0});
  p.mu = {0.0};
  p.nu = {0.0};
  p.H = Matrix(1, 1, {1.0});
  p.b = {0.0};
  p.log_omega = {0.0};
  p.delta = 1e-3;
  const StabilityReport rep = certify(p);
  const double gap = std::abs(rep.lds_margin - rep.theorem2_bound);
  row.pass = gap < 1e-9 && rep.satisfied;
  row.detail = "gap " + fmt_g(gap);
  return row;
}

VerifyRow verify_solver_order() {
  VerifyRow row{"solver_order", false, ""};
  const OdeFn f = [](double, const Vec& x, Vec& dx) {
    dx.resize(1);
    dx[0] = -x[0];
  };
  const double order = convergence_order(
      f, Vec{1.0}, 0.0, 1.0, [](double t) { return Vec{std::exp(-t)}; },
      {0.1, 0.05, 0.025, 0.0125});
  SolverConfig cfg;
  cfg.rtol = 1e-8;
  cfg.atol = 1e-8;
  const IntegrateResult res = integrate(f, Vec{1.0}, 0.0, 1.0, cfg);
  const double err = std::abs(res.traj.values.back()[0] - std::exp(-1.0));
  row.pass = order >= 2.7 && order <= 3.3 && err < 1e-6;
  row.detail = "order " + fmt_g(order) + ", e^-1 err " + fmt_g(err);
  return row;
}

// Open-loop pair generated by a random teacher model so the gradient test has
// realistic, solvable data.
TrainPair synthetic_pair(const CtrnnParams& teacher, std::uint64_t seed) {
  const double T = 1.0;
  const PwlSource src = gen_pwl(seed, T, 6, -0.8, 0.8);
  Trajectory u = src.to_trajectory();
  u.labels = {"u0", "u1"};
  Trajectory u2;
  u2.labels = u.labels;
  for (std::size_t k = 0; k <= 40; ++k) {
    const double t = T * double(k) / 40.0;
    u2.times.push_back(t);
    u2.values.push_back({interp(u, t)[0], 0.3 * interp(u, t)[0]});
  }
  const RealizedModel rm(teacher);
  const Vec u0 = u2.values.front();
  const DcResult dc = solve_dc(rm, u0, Vec(teacher.n, 0.0));
  const std::vector<Vec> xs = integrate_fixed_grid(
      [&](double t, const Vec& x, Vec& dx) { dx = rm.dynamics(x, interp(u2, t)); },
      dc.x0, 0.0, T, 40);
  Trajectory y;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    y.times.push_back(T * double(k) / 40.0);
    y.values.push_back(rm.output(xs[k]));
  }
  return TrainPair{u2, y};
}

bool gradient_check_instance(std::uint64_t seed, double tol, double* worst_rel) {
  Rng prng(seed);
  const CtrnnParams teacher = random_constrained(2, 3, prng);
  CtrnnParams p = random_constrained(2, 3, prng);
  const std::vector<TrainPair> batch{synthetic_pair(teacher, seed ^ 0x51)};
  TrainConfig tc;
  tc.grid_steps = 20;
  tc.K = 8;

  Rng grng(seed ^ 0x77);
  GradResult gr = grad(p, batch, tc.K, grng, tc.grid_steps);
  if (gr.loss.used == 0) return true;  // skipped, not failed
  const Vec g = pack_grads(gr.grads);
  const Vec mask = learnable_mask(p, tc);
  Vec theta = pack_params(p);

  double max_rel = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (mask[i] == 0.0) continue;
    Vec tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    CtrnnParams pp = p, pm = p;
    unpack_params(pp, tp);
    unpack_params(pm, tm);
    Rng r1(seed ^ 0x77), r2(seed ^ 0x77);
    const LossResult lp = mc_loss(pp, batch, tc.K, r1, tc.grid_steps);
    const LossResult lm = mc_loss(pm, batch, tc.K, r2, tc.grid_steps);
    if (lp.used == 0 || lm.used == 0) return true;
    const double fd = (lp.loss - lm.loss) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
    max_rel = std::max(max_rel, std::abs(fd - g[i]) / denom);
  }
  if (worst_rel) *worst_rel = std::max(*worst_rel, max_rel);
  return max_rel <= tol;
}

VerifyRow verify_gradients() {
  VerifyRow row{"gradient_vs_fd", true, ""};
  double worst = 0.0;
  int checked = 0;
  for (std::uint64_t s = 1; s <= 4; ++s) {
    if (!gradient_check_instance(1000 + s, 1e-4, &worst)) row.pass = false;
    ++checked;
  }
  row.detail = "instances " + std::to_string(checked) + ", worst rel err " +
               fmt_g(worst);
  return row;
}

VerifyRow verify_equilibrium() {
  VerifyRow row{"dc_uniqueness", true, ""};
  Rng rng(202);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const CtrnnParams p = random_constrained(4, 7, rng);
    const Vec u0{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    const UniquenessReport rep = dc_uniqueness_probe(p, u0, 10, 303 + k);
    worst = std::max(worst, rep.max_spread);
    if (!rep.pass) row.pass = false;
  }
  row.detail = "worst spread " + fmt_g(worst);
  return row;
}

VerifyRow verify_probes() {
  VerifyRow row{"dissipation_iss_probes", true, ""};
  Rng rng(404);
  SolverConfig cfg;
  for (int k = 0; k < 5; ++k) {
    const CtrnnParams p = random_constrained(3, 5, rng);
    Vec x0(p.n);
    for (auto& v : x0) v = rng.uniform(-1.0, 1.0);
    const DissipationReport dis = dissipation_probe(p, x0, 5.0 * p.tau(), cfg);
    const IssProbeReport iss = iss_probe(p, 1.0, 3, 10.0 * p.tau(), 505 + k);
    if (!dis.pass || !iss.pass) row.pass = false;
  }
  return row;
}

VerifyRow verify_export() {
  VerifyRow row{"export_roundtrip", false, ""};
  Rng rng(606);
  const CtrnnParams p = random_constrained(2, 3, rng);
  const std::vector<NormRecord> un(p.m), yn(p.p);
  const std::string va1 = emit_veriloga(p, "probe_mod", un, yn, 1.0);
  const std::string va2 = emit_veriloga(p, "probe_mod", un, yn, 1.0);
  const Matrix baked = parse_baked_A(va1, p.l, p.n);
  const Matrix eff = effective_A(p);
  double max_err = 0.0;
  for (std::size_t i = 0; i < p.l * p.n; ++i)
    max_err = std::max(max_err, std::abs(baked.data()[i] - eff.data()[i]));
  row.pass = (va1 == va2) && max_err == 0.0;
  row.detail = "baked-A max err " + fmt_g(max_err);
  return row;
}

int cmd_verify() {
  std::vector<VerifyRow> rows;
  rows.push_back(verify_certificates());
  rows.push_back(verify_scalar_tightness());
  rows.push_back(verify_solver_order());
  rows.push_back(verify_gradients());
  rows.push_back(verify_equilibrium());
  rows.push_back(verify_probes());
  rows.push_back(verify_export());

  bool all = true;
  std::cout << "check                        result  detail\n";
  std::cout << "---------------------------  ------  ------\n";
  for (const VerifyRow& r : rows) {
    all = all && r.pass;
    std::cout << r.name;
    for (std::size_t i = r.name.size(); i < 29; ++i) std::cout << ' ';
    std::cout << (r.pass ? "PASS" : "FAIL") << "    " << r.detail << "\n";
  }
  std::cout << (all ? "all checks passed\n" : "some checks FAILED\n");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ISS-constrained CTRNN behavioral modeling toolkit"};
  app.require_subcommand(1);
  app.add_option("--verbosity", g_verbosity, "0=quiet, 1=normal, 2=debug")
      ->check(CLI::Range(0, 2));
  std::size_t jobs = default_jobs();
  app.add_option("--jobs", jobs, "worker threads for data generation and cosim");

  std::optional<std::uint64_t> seed_flag;

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "build an oracle dataset");
  std::string gen_oracle = "common_source_surrogate";
  std::size_t gen_count = 50;
  double gen_T = 1.0;
  std::string gen_out;
  gen->add_option("--oracle", gen_oracle,
                  "common_source_surrogate | inverter_chain_surrogate | linear_2port");
  gen->add_option("--count", gen_count, "number of trajectories");
  gen->add_option("--horizon", gen_T, "trajectory horizon");
  gen->add_option("--seed", seed_flag, "dataset seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "fit a model on a dataset");
  std::string tr_data, tr_out, tr_cfg_file, tr_mode = "proposed", tr_kind = "relu";
  TrainConfig tr_cfg;
  tr->add_option("--data", tr_data, "dataset.json from generate-data")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--config", tr_cfg_file, "JSON training config (flags override)");
  tr->add_option("--mode", tr_mode, "proposed | proposed_omega_identity | baseline");
  tr->add_option("--epochs", tr_cfg.epochs);
  tr->add_option("--lr", tr_cfg.lr);
  tr->add_option("--batch-size", tr_cfg.batch_size);
  tr->add_option("--mc-samples", tr_cfg.K, "Monte Carlo time samples per trajectory");
  tr->add_option("--grid-steps", tr_cfg.grid_steps);
  tr->add_option("--state-dim", tr_cfg.n);
  tr->add_option("--hidden-dim", tr_cfg.l);
  tr->add_option("--nonlinearity", tr_kind, "relu | tanh");
  tr->add_option("--seed", seed_flag, "training seed");

  // check-stability
  auto* st = app.add_subcommand("check-stability", "certificate report for a model");
  std::string st_params, st_out;
  st->add_option("--params", st_params, "params.json")->required();
  st->add_option("--out", st_out, "optional output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "open-loop evaluation on a dataset split");
  std::string ev_params, ev_data, ev_split = "valid", ev_out;
  std::size_t ev_grid = 200;
  ev->add_option("--params", ev_params)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split", ev_split, "train | valid | all");
  ev->add_option("--grid-steps", ev_grid);
  ev->add_option("--out", ev_out, "optional output directory");

  // cosim
  auto* cs = app.add_subcommand("cosim", "closed-loop test against the oracle");
  std::string cs_params, cs_data, cs_out;
  std::size_t cs_runs = 100;
  double cs_T = 1.0;
  cs->add_option("--params", cs_params)->required();
  cs->add_option("--data", cs_data, "dataset.json (normalization + oracle kind)")
      ->required();
  cs->add_option("--runs", cs_runs);
  cs->add_option("--horizon", cs_T);
  cs->add_option("--seed", seed_flag, "run-draw seed");
  cs->add_option("--out", cs_out, "optional output directory");

  // export-veriloga
  auto* ex = app.add_subcommand("export-veriloga", "emit a Verilog-A module");
  std::string ex_params, ex_data, ex_module = "iss_node", ex_out;
  double ex_tscale = 1.0;
  ex->add_option("--params", ex_params)->required();
  ex->add_option("--data", ex_data, "dataset.json (port normalization)")->required();
  ex->add_option("--module", ex_module, "Verilog-A module name");
  ex->add_option("--time-scale", ex_tscale, "physical seconds per model time unit");
  ex->add_option("--out", ex_out, "output directory")->required();

  // age-train
  auto* at = app.add_subcommand("age-train", "fit the aging perturbation network");
  std::string at_params, at_data, at_aging, at_out;
  std::size_t at_count = 64, at_epochs = 60;
  double at_T = 1.0, at_tstress = 0.1;
  at->add_option("--params", at_params, "frozen fresh params.json")->required();
  at->add_option("--data", at_data, "fresh dataset.json (normalization)")->required();
  at->add_option("--aging-data", at_aging, "reuse an existing aging dataset");
  at->add_option("--count", at_count, "stress profiles to generate");
  at->add_option("--epochs", at_epochs);
  at->add_option("--horizon", at_T);
  at->add_option("--t-stress", at_tstress, "stress waveform period");
  at->add_option("--seed", seed_flag);
  at->add_option("--out", at_out, "output directory")->required();

  // age-eval
  auto* ae = app.add_subcommand("age-eval", "aged-model MSE on an aging dataset");
  std::string ae_params, ae_gru, ae_aging, ae_split = "valid", ae_out;
  ae->add_option("--params", ae_params, "frozen fresh params.json")->required();
  ae->add_option("--gru", ae_gru, "gru.json; omit to evaluate the fresh model");
  ae->add_option("--aging-data", ae_aging)->required();
  ae->add_option("--split", ae_split, "train | valid | all");
  ae->add_option("--out", ae_out, "optional output directory");

  // verify
  app.add_subcommand("verify", "run the invariant suite and print a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const std::uint64_t seed = resolve_seed(seed_flag);
      const OracleKind kind = oracle_kind_from_string(gen_oracle);
      SolverConfig scfg;
      info("generating " + std::to_string(gen_count) + " trajectories from " +
           gen_oracle);
      const Dataset ds = build_dataset(kind, gen_count, seed, gen_T, scfg, jobs);
      echo_config(gen_out, json{{"subcommand", "generate-data"},
                                {"oracle", gen_oracle},
                                {"count", gen_count},
                                {"horizon", gen_T},
                                {"seed", seed},
                                {"jobs", jobs}});
      save_dataset(ds, (fs::path(gen_out) / "dataset.json").string());
      info("wrote " + (fs::path(gen_out) / "dataset.json").string());
      return 0;
    }

    if (tr->parsed()) {
      if (!tr_cfg_file.empty()) {
        const TrainConfig from_flags = tr_cfg;
        apply_train_config_file(tr_cfg, tr_cfg_file);
        // Explicit flags take precedence over the file.
        if (tr->count("--epochs")) tr_cfg.epochs = from_flags.epochs;
        if (tr->count("--lr")) tr_cfg.lr = from_flags.lr;
        if (tr->count("--batch-size")) tr_cfg.batch_size = from_flags.batch_size;
        if (tr->count("--mc-samples")) tr_cfg.K = from_flags.K;
        if (tr->count("--grid-steps")) tr_cfg.grid_steps = from_flags.grid_steps;
        if (tr->count("--state-dim")) tr_cfg.n = from_flags.n;
        if (tr->count("--hidden-dim")) tr_cfg.l = from_flags.l;
      }
      if (tr->count("--mode")) tr_cfg.mode = train_mode_from_string(tr_mode);
      if (tr->count("--nonlinearity"))
        tr_cfg.kind = tr_kind == "tanh" ? Nonlinearity::tanh_fn : Nonlinearity::relu;
      if (seed_flag) {
        tr_cfg.seed = *seed_flag;
      } else if (const char* env = std::getenv("ISS_NODE_SEED")) {
        tr_cfg.seed = std::stoull(env);
      }
      const Dataset ds = load_dataset(tr_data);
      echo_config(tr_out, json{{"subcommand", "train"},
                               {"data", tr_data},
                               {"train", train_config_to_json(tr_cfg)}});
      const TrainState state = fit(ds, tr_cfg, log_stream());
      save_params(state.params, (fs::path(tr_out) / "params.json").string());
      save_params(state.last_params, (fs::path(tr_out) / "last_params.json").string());
      {
        std::ofstream os(fs::path(tr_out) / "metrics.csv", std::ios::binary);
        write_metrics_csv(os, state.history);
      }
      const StabilityReport rep = certify(state.params);
      write_text(fs::path(tr_out) / "stability.json", report_to_json(rep) + "\n");
      info("best valid_mse " + std::to_string(state.best_valid));
      return 0;
    }

    if (st->parsed()) {
      const CtrnnParams p = load_params(st_params);
      const StabilityReport rep = certify(p);
      const std::string text = report_to_json(rep);
      std::cout << text << "\n";
      if (!st_out.empty()) {
        echo_config(st_out, json{{"subcommand", "check-stability"}, {"params", st_params}});
        write_text(fs::path(st_out) / "stability.json", text + "\n");
      }
      return 0;
    }

    if (ev->parsed()) {
      const CtrnnParams p = load_params(ev_params);
      const Dataset ds = load_dataset(ev_data);
      std::vector<std::size_t> idx;
      if (ev_split == "train") {
        idx = ds.train_indices();
      } else if (ev_split == "valid") {
        idx = ds.valid_indices();
      } else if (ev_split == "all") {
        for (std::size_t i = 0; i < ds.pairs.size(); ++i) idx.push_back(i);
      } else {
        throw std::runtime_error("bad --split '" + ev_split + "'");
      }
      const OpenLoopReport rep = evaluate_openloop(p, normalized_pairs(ds, idx), ev_grid);
      json j{{"aggregate_mse", rep.aggregate},
             {"per_channel_mse", rep.per_channel_mse},
             {"used", rep.used},
             {"excluded", rep.excluded},
             {"split", ev_split}};
      std::cout << j.dump(2) << "\n";
      if (!ev_out.empty()) {
        echo_config(ev_out, json{{"subcommand", "eval"},
                                 {"params", ev_params},
                                 {"data", ev_data},
                                 {"split", ev_split},
                                 {"grid_steps", ev_grid}});
        write_text(fs::path(ev_out) / "eval.json", j.dump(2) + "\n");
      }
      return 0;
    }

    if (cs->parsed()) {
      const CtrnnParams p = load_params(cs_params);
      const Dataset ds = load_dataset(cs_data);
      const std::uint64_t seed = resolve_seed(seed_flag);
      SolverConfig scfg;
      const CosimReport rep =
          test_mse(p, ds.u_norm, ds.y_norm, oracle_kind_from_string(ds.oracle_kind),
                   cs_runs, seed, cs_T, scfg, jobs);
      const std::string text = cosim_report_to_json(rep);
      std::cout << text << "\n";
      if (!cs_out.empty()) {
        echo_config(cs_out, json{{"subcommand", "cosim"},
                                 {"params", cs_params},
                                 {"data", cs_data},
                                 {"runs", cs_runs},
                                 {"horizon", cs_T},
                                 {"seed", seed},
                                 {"jobs", jobs}});
        write_text(fs::path(cs_out) / "cosim.json", text + "\n");
      }
      return 0;
    }

    if (ex->parsed()) {
      const CtrnnParams p = load_params(ex_params);
      const Dataset ds = load_dataset(ex_data);
      const std::string va = emit_veriloga(p, ex_module, ds.u_norm, ds.y_norm, ex_tscale);
      echo_config(ex_out, json{{"subcommand", "export-veriloga"},
                               {"params", ex_params},
                               {"data", ex_data},
                               {"module", ex_module},
                               {"time_scale", ex_tscale}});
      const fs::path va_path = fs::path(ex_out) / (ex_module + ".va");
      write_text(va_path, va);
      info("wrote " + va_path.string());
      return 0;
    }

    if (at->parsed()) {
      const CtrnnParams fresh = load_params(at_params);
      const Dataset ds = load_dataset(at_data);
      const std::uint64_t seed = resolve_seed(seed_flag);
      SolverConfig scfg;
      AgingDataset ads;
      if (!at_aging.empty()) {
        ads = load_aging_dataset(at_aging);
      } else {
        info("building aging dataset (" + std::to_string(at_count) + " profiles)");
        ads = build_aging_dataset(at_count, seed, at_T, at_tstress, scfg, ds.u_norm,
                                  ds.y_norm);
      }
      TrainConfig cfg;
      cfg.epochs = at_epochs;
      cfg.seed = seed;
      echo_config(at_out, json{{"subcommand", "age-train"},
                               {"params", at_params},
                               {"data", at_data},
                               {"count", ads.items.size()},
                               {"epochs", at_epochs},
                               {"horizon", at_T},
                               {"t_stress", at_tstress},
                               {"seed", seed}});
      const AgingTrainState state = fit_aging(fresh, ads, cfg, log_stream());
      save_gru(state.net, (fs::path(at_out) / "gru.json").string());
      if (at_aging.empty())
        save_aging_dataset(ads, (fs::path(at_out) / "aging_dataset.json").string());
      {
        std::ofstream os(fs::path(at_out) / "metrics.csv", std::ios::binary);
        write_metrics_csv(os, state.history);
      }
      return 0;
    }

    if (ae->parsed()) {
      const CtrnnParams fresh = load_params(ae_params);
      const AgingDataset ads = load_aging_dataset(ae_aging);
      GruPerturbNet net;
      const bool have_net = !ae_gru.empty();
      if (have_net) net = gru_from_json(read_text(ae_gru));
      std::vector<std::size_t> idx;
      if (ae_split == "train") {
        for (std::size_t i = 0; i < ads.train_count; ++i) idx.push_back(i);
      } else if (ae_split == "valid") {
        for (std::size_t i = ads.train_count; i < ads.items.size(); ++i) idx.push_back(i);
      } else if (ae_split == "all") {
        for (std::size_t i = 0; i < ads.items.size(); ++i) idx.push_back(i);
      } else {
        throw std::runtime_error("bad --split '" + ae_split + "'");
      }
      const double mse = aging_eval_mse(fresh, have_net ? &net : nullptr, ads, idx);
      json j{{"mse", mse}, {"split", ae_split}, {"aged_model", have_net}};
      std::cout << j.dump(2) << "\n";
      if (!ae_out.empty()) {
        echo_config(ae_out, json{{"subcommand", "age-eval"},
                                 {"params", ae_params},
                                 {"gru", ae_gru},
                                 {"aging_data", ae_aging},
                                 {"split", ae_split}});
        write_text(fs::path(ae_out) / "age_eval.json", j.dump(2) + "\n");
      }
      return 0;
    }

    if (app.get_subcommand("verify")->parsed()) return cmd_verify();
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}
