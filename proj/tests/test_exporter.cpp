#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "issnode/exporter.hpp"
#include "issnode/training.hpp"

using namespace issnode;

namespace {

// Fixed hand-built model shared with the committed golden file.
CtrnnParams toy_model() {
  CtrnnParams p;
  p.n = 2;
  p.l = 2;
  p.m = 1;
  p.p = 1;
  p.log_tau = std::log(8.0);
  p.W = Matrix(2, 2);
  p.W(0, 0) = 0.3;
  p.W(0, 1) = -0.2;
  p.W(1, 0) = 0.1;
  p.W(1, 1) = 0.4;
  p.A_theta = Matrix(2, 2);
  p.A_theta(0, 0) = 1.2;
  p.A_theta(0, 1) = -0.7;
  p.A_theta(1, 0) = 0.5;
  p.A_theta(1, 1) = 0.9;
  p.B = Matrix(2, 1);
  p.B(0, 0) = 0.8;
  p.B(1, 0) = -0.3;
  p.mu = {0.1, -0.2};
  p.nu = {0.05, 0.0};
  p.H = Matrix(1, 2);
  p.H(0, 0) = 1.0;
  p.H(0, 1) = -0.5;
  p.b = {0.02};
  p.log_omega = {0.0, 0.1};
  p.kind = Nonlinearity::relu;
  return p;
}

std::vector<NormRecord> toy_u_norm() { return {{-1.0, 2.0, false}}; }
std::vector<NormRecord> toy_y_norm() { return {{-0.5, 0.5, false}}; }

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(bool(is));
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("emitted module has the expected skeleton") {
  const std::string text =
      emit_veriloga(toy_model(), "toy_model", toy_u_norm(), toy_y_norm(), 1e-9);
  CHECK(text.find("module toy_model(") != std::string::npos);
  CHECK(text.find("endmodule") != std::string::npos);
  CHECK(text.find("`include \"disciplines.vams\"") != std::string::npos);
  CHECK(text.find("ddt(") != std::string::npos);
  CHECK(text.find("TSCALE = 1.0000000000000001e-09") != std::string::npos);
}

TEST_CASE("emission is byte-identical across calls") {
  const std::string a =
      emit_veriloga(toy_model(), "toy_model", toy_u_norm(), toy_y_norm(), 1e-9);
  const std::string b =
      emit_veriloga(toy_model(), "toy_model", toy_u_norm(), toy_y_norm(), 1e-9);
  CHECK(a == b);
}

TEST_CASE("baked A round-trips exactly through the text") {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    CtrnnParams p = init_params(3, 5, 2, 2, TrainMode::proposed,
                                rng.uniform_index(std::size_t(1) << 31));
    p.log_tau = std::log(rng.uniform(0.1, 2.0));
    const std::string text = emit_veriloga(p, "m", std::vector<NormRecord>(2),
                                           std::vector<NormRecord>(2));
    const Matrix baked = parse_baked_A(text, p.l, p.n);
    const Matrix eff = effective_A(p);
    for (std::size_t i = 0; i < baked.data().size(); ++i)
      CHECK(baked.data()[i] == eff.data()[i]);
  }
}

TEST_CASE("normalization record mismatch is rejected") {
  CHECK_THROWS_AS(emit_veriloga(toy_model(), "m", std::vector<NormRecord>(3),
                                toy_y_norm()),
                  InvalidInputError);
}

TEST_CASE("relu and tanh emit their respective activations") {
  CtrnnParams p = toy_model();
  const std::string relu_text =
      emit_veriloga(p, "m", toy_u_norm(), toy_y_norm());
  CHECK(relu_text.find("(z0 > 0.0) ? z0 : 0.0") != std::string::npos);
  p.kind = Nonlinearity::tanh_fn;
  const std::string tanh_text =
      emit_veriloga(p, "m", toy_u_norm(), toy_y_norm());
  CHECK(tanh_text.find("tanh(z0)") != std::string::npos);
}

TEST_CASE("constant output channel emits a fixed current") {
  std::vector<NormRecord> yn = {{0.25, 0.25, true}};
  const std::string text = emit_veriloga(toy_model(), "m", toy_u_norm(), yn);
  CHECK(text.find("I(pout0) <+ -YMIN_0;") != std::string::npos);
}

TEST_CASE("missing baked parameter is reported") {
  CHECK_THROWS_AS(parse_baked_A("module m(); endmodule", 1, 1), InvalidInputError);
}

TEST_CASE("emitted text matches the committed golden file byte for byte") {
  const std::string golden = read_file(std::string(ISSNODE_GOLDEN_DIR) +
                                       "/toy_model.va");
  const std::string text =
      emit_veriloga(toy_model(), "toy_model", toy_u_norm(), toy_y_norm(), 1e-9);
  CHECK(text == golden);
}
