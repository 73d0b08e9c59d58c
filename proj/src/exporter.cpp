#include "issnode/exporter.hpp"

#include <cstdio>
#include <sstream>

namespace issnode {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string emit_veriloga(const CtrnnParams& params, const std::string& module_name,
                          const std::vector<NormRecord>& u_norm,
                          const std::vector<NormRecord>& y_norm, double time_scale) {
  params.validate();
  if (u_norm.size() != params.m || y_norm.size() != params.p)
    throw InvalidInputError("emit_veriloga: normalization record count mismatch");

  const Matrix A = effective_A(params);
  const std::size_t n = params.n, l = params.l, m = params.m, p = params.p;
  std::ostringstream os;

  os << "// " << module_name << ": CTRNN behavioral model (generated)\n";
  os << "`include \"constants.vams\"\n";
  os << "`include \"disciplines.vams\"\n\n";

  os << "module " << module_name << "(";
  for (std::size_t c = 0; c < m; ++c) os << (c ? ", " : "") << "pin" << c;
  for (std::size_t c = 0; c < p; ++c) os << ", pout" << c;
  os << ");\n";
  for (std::size_t c = 0; c < m; ++c)
    os << "  inout pin" << c << ";\n  electrical pin" << c << ";\n";
  for (std::size_t c = 0; c < p; ++c)
    os << "  inout pout" << c << ";\n  electrical pout" << c << ";\n";
  for (std::size_t i = 0; i < n; ++i) os << "  electrical x" << i << ";\n";
  os << "\n";

  os << "  parameter real TAU = " << fmt(params.tau()) << ";\n";
  os << "  parameter real TSCALE = " << fmt(time_scale) << ";\n";
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < n; ++j)
      os << "  parameter real A_" << i << "_" << j << " = " << fmt(A(i, j)) << ";\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < l; ++j)
      os << "  parameter real W_" << i << "_" << j << " = " << fmt(params.W(i, j))
         << ";\n";
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < m; ++j)
      os << "  parameter real B_" << i << "_" << j << " = " << fmt(params.B(i, j))
         << ";\n";
  for (std::size_t i = 0; i < l; ++i)
    os << "  parameter real MU_" << i << " = " << fmt(params.mu[i]) << ";\n";
  for (std::size_t i = 0; i < n; ++i)
    os << "  parameter real NU_" << i << " = " << fmt(params.nu[i]) << ";\n";
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < n; ++j)
      os << "  parameter real H_" << i << "_" << j << " = " << fmt(params.H(i, j))
         << ";\n";
  for (std::size_t i = 0; i < p; ++i)
    os << "  parameter real BOUT_" << i << " = " << fmt(params.b[i]) << ";\n";
  for (std::size_t c = 0; c < m; ++c) {
    os << "  parameter real UMIN_" << c << " = " << fmt(u_norm[c].min) << ";\n";
    os << "  parameter real UMAX_" << c << " = " << fmt(u_norm[c].max) << ";\n";
  }
  for (std::size_t c = 0; c < p; ++c) {
    os << "  parameter real YMIN_" << c << " = " << fmt(y_norm[c].min) << ";\n";
    os << "  parameter real YMAX_" << c << " = " << fmt(y_norm[c].max) << ";\n";
  }
  os << "\n";

  for (std::size_t c = 0; c < m; ++c) os << "  real u" << c << ";\n";
  for (std::size_t i = 0; i < l; ++i) os << "  real z" << i << ";\n  real s" << i << ";\n";
  for (std::size_t i = 0; i < n; ++i) os << "  real f" << i << ";\n";
  for (std::size_t c = 0; c < p; ++c) os << "  real y" << c << ";\n";
  os << "\n  analog begin\n";

  for (std::size_t c = 0; c < m; ++c) {
    if (u_norm[c].constant)
      os << "    u" << c << " = 0.0;\n";
    else
      os << "    u" << c << " = 2.0*(V(pin" << c << ") - UMIN_" << c << ")/(UMAX_" << c
         << " - UMIN_" << c << ") - 1.0;\n";
  }
  for (std::size_t i = 0; i < l; ++i) {
    os << "    z" << i << " = MU_" << i;
    for (std::size_t j = 0; j < n; ++j)
      os << " + A_" << i << "_" << j << "*V(x" << j << ")";
    for (std::size_t j = 0; j < m; ++j) os << " + B_" << i << "_" << j << "*u" << j;
    os << ";\n";
    if (params.kind == Nonlinearity::relu)
      os << "    s" << i << " = (z" << i << " > 0.0) ? z" << i << " : 0.0;\n";
    else
      os << "    s" << i << " = tanh(z" << i << ");\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    os << "    f" << i << " = -V(x" << i << ")/TAU + NU_" << i;
    for (std::size_t j = 0; j < l; ++j) os << " + W_" << i << "_" << j << "*s" << j;
    os << ";\n";
  }
  os << "    // state integrators on the rescaled time axis\n";
  for (std::size_t i = 0; i < n; ++i)
    os << "    I(x" << i << ") <+ TSCALE*ddt(V(x" << i << ")) - f" << i << ";\n";
  for (std::size_t c = 0; c < p; ++c) {
    os << "    y" << c << " = BOUT_" << c;
    for (std::size_t j = 0; j < n; ++j)
      os << " + H_" << c << "_" << j << "*V(x" << j << ")";
    os << ";\n";
    if (y_norm[c].constant)
      os << "    I(pout" << c << ") <+ -YMIN_" << c << ";\n";
    else
      os << "    I(pout" << c << ") <+ -(YMIN_" << c << " + 0.5*(y" << c
         << " + 1.0)*(YMAX_" << c << " - YMIN_" << c << "));\n";
  }
  os << "  end\nendmodule\n";
  return os.str();
}

Matrix parse_baked_A(const std::string& text, std::size_t l, std::size_t n) {
  Matrix A(l, n);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::ostringstream key;
      key << "parameter real A_" << i << "_" << j << " = ";
      const auto pos = text.find(key.str());
      if (pos == std::string::npos)
        throw InvalidInputError("parse_baked_A: missing " + key.str());
      const auto start = pos + key.str().size();
      const auto end = text.find(';', start);
      A(i, j) = std::stod(text.substr(start, end - start));
    }
  return A;
}

}  // namespace issnode
