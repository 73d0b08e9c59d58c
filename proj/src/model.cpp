#include "issnode/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace issnode {

Vec sigma(const Vec& w, Nonlinearity kind) {
  Vec r(w.size());
  if (kind == Nonlinearity::relu) {
    for (std::size_t i = 0; i < w.size(); ++i) r[i] = w[i] > 0.0 ? w[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < w.size(); ++i) r[i] = std::tanh(w[i]);
  }
  return r;
}

Vec sigma_slope(const Vec& w, Nonlinearity kind) {
  Vec r(w.size());
  if (kind == Nonlinearity::relu) {
    for (std::size_t i = 0; i < w.size(); ++i) r[i] = w[i] > 0.0 ? 1.0 : 0.0;
  } else {
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double t = std::tanh(w[i]);
      r[i] = 1.0 - t * t;
    }
  }
  return r;
}

double sigma_int(double s, Nonlinearity kind) {
  if (kind == Nonlinearity::relu) {
    const double r = s > 0.0 ? s : 0.0;
    return 0.5 * r * r;
  }
  // log cosh, overflow-safe
  const double a = std::fabs(s);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

Vec CtrnnParams::omega() const {
  Vec r(log_omega.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(log_omega[i]);
  return r;
}

void CtrnnParams::validate() const {
  if (l < n) throw InvalidInputError("CtrnnParams: l < n");
  if (W.rows() != n || W.cols() != l) throw InvalidInputError("CtrnnParams: W shape");
  if (A_theta.rows() != l || A_theta.cols() != n)
    throw InvalidInputError("CtrnnParams: A_theta shape");
  if (B.rows() != l || B.cols() != m) throw InvalidInputError("CtrnnParams: B shape");
  if (mu.size() != l || nu.size() != n) throw InvalidInputError("CtrnnParams: mu/nu size");
  if (H.rows() != p || H.cols() != n) throw InvalidInputError("CtrnnParams: H shape");
  if (b.size() != p) throw InvalidInputError("CtrnnParams: b size");
  if (log_omega.size() != l) throw InvalidInputError("CtrnnParams: log_omega size");
  if (!(delta > 0.0)) throw InvalidInputError("CtrnnParams: delta <= 0");
  if (!std::isfinite(log_tau) || !W.all_finite() || !A_theta.all_finite() ||
      !B.all_finite() || !all_finite(mu) || !all_finite(nu) || !H.all_finite() ||
      !all_finite(b) || !all_finite(log_omega))
    throw InvalidInputError("CtrnnParams: non-finite entries");
}

RhoDetail rho_detail(const CtrnnParams& params) {
  RhoDetail rd;
  const std::size_t l = params.l;
  const Matrix M = matmul(params.A_theta, params.W);  // l x l
  // t1 = Omega^1/2 M Omega^-1/2, diagonal scaling done elementwise.
  Vec d(l);
  for (std::size_t i = 0; i < l; ++i) d[i] = std::exp(0.5 * params.log_omega[i]);
  rd.t1 = Matrix(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) rd.t1(i, j) = d[i] / d[j] * M(i, j);
  Matrix S(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) S(i, j) = rd.t1(i, j) + rd.t1(j, i);
  auto [lmax, v] = sym_lambda_max_vec(S);
  rd.lambda_max = lmax;
  rd.eigvec = std::move(v);
  const double arg = 0.5 * params.tau() * lmax - 1.0 + params.delta;
  rd.active = arg > 0.0;
  rd.rho = rd.active ? arg : 0.0;
  return rd;
}

double rho(const CtrnnParams& params) { return rho_detail(params).rho; }

Matrix effective_A(const CtrnnParams& params) {
  if (!params.constrained) return params.A_theta;
  const double r = rho(params);
  return (1.0 / (r + 1.0)) * params.A_theta;
}

ParamGrads::ParamGrads(const CtrnnParams& params)
    : A(params.l, params.n),
      W(params.n, params.l),
      B(params.l, params.m),
      mu(params.l, 0.0),
      nu(params.n, 0.0),
      H(params.p, params.n),
      b(params.p, 0.0),
      A_theta(params.l, params.n),
      log_omega(params.l, 0.0) {}

void ParamGrads::accumulate(const ParamGrads& other, double scale) {
  auto add_m = [scale](Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.data().size(); ++i)
      dst.data()[i] += scale * src.data()[i];
  };
  auto add_v = [scale](Vec& dst, const Vec& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  tau += scale * other.tau;
  add_m(A, other.A);
  add_m(W, other.W);
  add_m(B, other.B);
  add_v(mu, other.mu);
  add_v(nu, other.nu);
  add_m(H, other.H);
  add_v(b, other.b);
  log_tau += scale * other.log_tau;
  add_m(A_theta, other.A_theta);
  add_v(log_omega, other.log_omega);
}

void ParamGrads::finalize(const CtrnnParams& params, const RhoDetail& rd) {
  const std::size_t l = params.l;
  if (!params.constrained) {
    A_theta = A;
    log_tau = params.tau() * tau;
    return;
  }
  const double s = 1.0 / (rd.rho + 1.0);
  A_theta = s * A;
  double g_tau_total = tau;
  if (rd.active) {
    // dL/drho through A = s*A_theta.
    double dLds = 0.0;
    for (std::size_t i = 0; i < A.data().size(); ++i)
      dLds += A.data()[i] * params.A_theta.data()[i];
    const double dLdrho = -s * s * dLds;
    // rho = (tau/2) lambda_max - 1 + delta on the active branch.
    g_tau_total += dLdrho * 0.5 * rd.lambda_max;
    const double c = dLdrho * 0.5 * params.tau();
    // G = c * v v^T is the cotangent on the symmetrized matrix S = T1 + T1^T.
    const Vec& v = rd.eigvec;
    Vec d(l);
    for (std::size_t i = 0; i < l; ++i) d[i] = std::exp(0.5 * params.log_omega[i]);
    // dL/dM = D G Dinv + Dinv G D, with G symmetric.
    Matrix gM(l, l);
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j) {
        const double g = c * v[i] * v[j];
        gM(i, j) = g * (d[i] / d[j] + d[j] / d[i]);
      }
    // M = A_theta W
    const Matrix gA = matmul(gM, transpose(params.W));      // l x n
    const Matrix gW = matmul(transpose(params.A_theta), gM);  // n x l
    for (std::size_t i = 0; i < A_theta.data().size(); ++i)
      A_theta.data()[i] += gA.data()[i];
    for (std::size_t i = 0; i < W.data().size(); ++i) W.data()[i] += gW.data()[i];
    if (params.omega_learned) {
      for (std::size_t k = 0; k < l; ++k) {
        double g = 0.0;
        for (std::size_t j = 0; j < l; ++j)
          g += c * v[k] * v[j] * (rd.t1(k, j) - rd.t1(j, k));
        log_omega[k] += g;
      }
    }
  }
  log_tau = params.tau() * g_tau_total;
}

bool ParamGrads::finite() const {
  return std::isfinite(log_tau) && A_theta.all_finite() && W.all_finite() &&
         B.all_finite() && all_finite(mu) && all_finite(nu) && H.all_finite() &&
         all_finite(b) && all_finite(log_omega);
}

RealizedModel::RealizedModel(const CtrnnParams& params)
    : params_(&params), tau_(params.tau()) {
  params.validate();
  rho_ = rho_detail(params);
  if (params.constrained)
    A_ = (1.0 / (rho_.rho + 1.0)) * params.A_theta;
  else
    A_ = params.A_theta;
}

Vec RealizedModel::dynamics(const Vec& x, const Vec& u) const {
  const CtrnnParams& pr = *params_;
  if (x.size() != pr.n || u.size() != pr.m)
    throw InvalidInputError("dynamics: dimension mismatch");
  Vec z = matvec(A_, x);
  const Vec bu = matvec(pr.B, u);
  for (std::size_t i = 0; i < pr.l; ++i) z[i] += bu[i] + pr.mu[i];
  const Vec s = sigma(z, pr.kind);
  Vec f = matvec(pr.W, s);
  for (std::size_t i = 0; i < pr.n; ++i) f[i] += -x[i] / tau_ + pr.nu[i];
  return f;
}

Vec RealizedModel::output(const Vec& x) const {
  const CtrnnParams& pr = *params_;
  if (x.size() != pr.n) throw InvalidInputError("output: dimension mismatch");
  Vec y = matvec(pr.H, x);
  for (std::size_t i = 0; i < pr.p; ++i) y[i] += pr.b[i];
  return y;
}

Matrix RealizedModel::dfdx(const Vec& x, const Vec& u) const {
  const CtrnnParams& pr = *params_;
  Vec z = matvec(A_, x);
  const Vec bu = matvec(pr.B, u);
  for (std::size_t i = 0; i < pr.l; ++i) z[i] += bu[i] + pr.mu[i];
  const Vec sp = sigma_slope(z, pr.kind);
  // -I/tau + W diag(sp) A
  Matrix J(pr.n, pr.n);
  for (std::size_t i = 0; i < pr.n; ++i) {
    for (std::size_t j = 0; j < pr.n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pr.l; ++k) s += pr.W(i, k) * sp[k] * A_(k, j);
      J(i, j) = s;
    }
    J(i, i) -= 1.0 / tau_;
  }
  return J;
}

Matrix RealizedModel::dfdu(const Vec& x, const Vec& u) const {
  const CtrnnParams& pr = *params_;
  Vec z = matvec(A_, x);
  const Vec bu = matvec(pr.B, u);
  for (std::size_t i = 0; i < pr.l; ++i) z[i] += bu[i] + pr.mu[i];
  const Vec sp = sigma_slope(z, pr.kind);
  Matrix J(pr.n, pr.m);
  for (std::size_t i = 0; i < pr.n; ++i)
    for (std::size_t j = 0; j < pr.m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pr.l; ++k) s += pr.W(i, k) * sp[k] * pr.B(k, j);
      J(i, j) = s;
    }
  return J;
}

void RealizedModel::vjp(const Vec& x, const Vec& u, const Vec& w,
                        ParamGrads& grads, Vec& x_bar) const {
  const CtrnnParams& pr = *params_;
  Vec z = matvec(A_, x);
  const Vec bu = matvec(pr.B, u);
  for (std::size_t i = 0; i < pr.l; ++i) z[i] += bu[i] + pr.mu[i];
  const Vec s = sigma(z, pr.kind);
  const Vec sp = sigma_slope(z, pr.kind);
  const Vec wv = matvec_t(pr.W, w);  // l
  Vec q(pr.l);
  for (std::size_t i = 0; i < pr.l; ++i) q[i] = sp[i] * wv[i];

  // x_bar += -w/tau + A^T q
  const Vec atq = matvec_t(A_, q);
  for (std::size_t i = 0; i < pr.n; ++i) x_bar[i] += -w[i] / tau_ + atq[i];

  grads.tau += dot(w, x) / (tau_ * tau_);
  for (std::size_t i = 0; i < pr.n; ++i)
    for (std::size_t j = 0; j < pr.l; ++j) grads.W(i, j) += w[i] * s[j];
  for (std::size_t i = 0; i < pr.l; ++i) {
    for (std::size_t j = 0; j < pr.n; ++j) grads.A(i, j) += q[i] * x[j];
    for (std::size_t j = 0; j < pr.m; ++j) grads.B(i, j) += q[i] * u[j];
    grads.mu[i] += q[i];
  }
  for (std::size_t i = 0; i < pr.n; ++i) grads.nu[i] += w[i];
}

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["entries"] = m.data();
  return j;
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto entries = j.at("entries").get<Vec>();
  if (entries.size() != m.data().size())
    throw InvalidInputError("params json: entry count mismatch");
  m.data() = entries;
  return m;
}

}  // namespace

std::string params_to_json(const CtrnnParams& params) {
  json j;
  j["schema"] = "iss-node-params-v1";
  j["n"] = params.n;
  j["l"] = params.l;
  j["m"] = params.m;
  j["p"] = params.p;
  j["log_tau"] = params.log_tau;
  j["W"] = matrix_to_json(params.W);
  j["A_theta"] = matrix_to_json(params.A_theta);
  j["B"] = matrix_to_json(params.B);
  j["mu"] = params.mu;
  j["nu"] = params.nu;
  j["H"] = matrix_to_json(params.H);
  j["b"] = params.b;
  j["log_omega"] = params.log_omega;
  j["omega_learned"] = params.omega_learned;
  j["delta"] = params.delta;
  j["constrained"] = params.constrained;
  j["nonlinearity"] = params.kind == Nonlinearity::relu ? "relu" : "tanh";
  return j.dump(2);
}

CtrnnParams params_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("schema").get<std::string>() != "iss-node-params-v1")
    throw InvalidInputError("params json: unknown schema");
  CtrnnParams p;
  p.n = j.at("n").get<std::size_t>();
  p.l = j.at("l").get<std::size_t>();
  p.m = j.at("m").get<std::size_t>();
  p.p = j.at("p").get<std::size_t>();
  p.log_tau = j.at("log_tau").get<double>();
  p.W = matrix_from_json(j.at("W"));
  p.A_theta = matrix_from_json(j.at("A_theta"));
  p.B = matrix_from_json(j.at("B"));
  p.mu = j.at("mu").get<Vec>();
  p.nu = j.at("nu").get<Vec>();
  p.H = matrix_from_json(j.at("H"));
  p.b = j.at("b").get<Vec>();
  p.log_omega = j.at("log_omega").get<Vec>();
  p.omega_learned = j.at("omega_learned").get<bool>();
  p.delta = j.at("delta").get<double>();
  p.constrained = j.at("constrained").get<bool>();
  p.kind = j.at("nonlinearity").get<std::string>() == "relu" ? Nonlinearity::relu
                                                             : Nonlinearity::tanh_fn;
  p.validate();
  return p;
}

void save_params(const CtrnnParams& params, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw InvalidInputError("save_params: cannot open " + path);
  os << params_to_json(params) << "\n";
}

CtrnnParams load_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInputError("load_params: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace issnode
