#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "generators.hpp"
#include "mlrtl/emit.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/error.hpp"
#include "mlrtl/ingest.hpp"
#include "mlrtl/lower.hpp"

using namespace mlrtl;
using namespace mlrtl::testing;

namespace {

const std::string kGolden = std::string(MLRTL_SOURCE_DIR) + "/tests/golden/";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing " << path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

bool updating() { return std::getenv("MLRTL_UPDATE_GOLDEN") != nullptr; }

QuantizedModel stump() {
  BdtEnsemble m;
  m.n_features = 1;
  m.base_scores = {0.0};
  m.trees.push_back({0, Tree{{TreeNode::split(0, 0.5, 1, 2), TreeNode::leaf(-1), TreeNode::leaf(1)}}});
  QuantizationConfig c;
  c.input = make_format(8, 4);
  c.bdt = BdtFormats{make_format(8, 4), make_format(8, 4), make_format(10, 6)};
  return quantize_bdt(m, c);
}

QuantizedModel tiny_fcnn() {
  FcnnModel m{{DenseLayer{Matrix(2, 2), {0.125, -0.25}, Activation::ReLU},
               DenseLayer{Matrix(1, 2), {0.0}, Activation::Sigmoid}}};
  m.layers[0].weights.data = {0.5, -0.75, 0.0, 1.25};
  m.layers[1].weights.data = {1.0, -0.5};
  QuantizationConfig c;
  c.input = make_format(8, 3);
  for (int k = 0; k < 2; ++k)
    c.layers.push_back(LayerFormats{make_format(8, 2), make_format(8, 3), make_format(18, 7), make_format(8, 3)});
  c.sigmoid = SigmoidLutConfig{64, 4.0};
  return quantize_fcnn(m, c);
}

std::size_t count_kind(const std::vector<LintFinding>& f, LintKind k) {
  return static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [&](const LintFinding& x) { return x.kind == k; }));
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  auto p = s.find(from);
  REQUIRE_MESSAGE(p != std::string::npos, from);
  return s.replace(p, from.size(), to);
}

}  // namespace

TEST_SUITE("emit") {

TEST_CASE("golden files are byte-stable") {
  struct Case { std::string name; int reuse; };
  for (const Case& gc : {Case{"stump", 1}, Case{"tiny_fcnn", 2}}) {
    CAPTURE(gc.name);
    const std::string base = kGolden + gc.name;
    if (updating()) spit(base + ".json", write_quantized_model(gc.name == "stump" ? stump() : tiny_fcnn()));
    auto q = parse_quantized_model(slurp(base + ".json"));
    auto n = lower(q, LowerOptions{gc.reuse, gc.name});
    std::string v = emit_verilog(n), nj = netlist_to_json(n);
    if (updating()) {
      spit(base + ".v", v);
      spit(base + ".netlist.json", nj);
    }
    CHECK(v == slurp(base + ".v"));
    CHECK(nj == slurp(base + ".netlist.json"));
    CHECK(lint_verilog(v).empty());
  }
}

TEST_CASE("emission is deterministic") {
  Rng rng(31);
  auto d = random_dataset(rng, 3, 40);
  auto q = quantize_for(random_fcnn(rng, {3, 4, 2}, {Activation::Sigmoid, Activation::Linear}), d, 10);
  auto a = emit_verilog(lower(q, LowerOptions{3}));
  auto b = emit_verilog(lower(q, LowerOptions{3}));
  CHECK(a == b);
  CHECK(a.find("localparam LATENCY") != std::string::npos);
  CHECK(a.find("\t") == std::string::npos);
}

TEST_CASE("lint is clean on emitted modules") {
  Rng rng(32);
  for (int it = 0; it < 40; ++it) {
    auto d = random_dataset(rng, 3, 30, 3);
    const Activation acts[] = {Activation::ReLU, Activation::Sigmoid, Activation::Linear, Activation::Softmax};
    Model m = it % 2 ? Model{random_bdt(rng, 3, 1 + it % 3, 1 + it % 9, it % 6)}
                     : Model{random_fcnn(rng, {3, 1 + static_cast<std::size_t>(it % 7), 3}, {acts[it % 3], acts[(it / 2) % 4]})};
    auto q = quantize_for(m, d, 4 + it % 28);
    auto n = lower(q, LowerOptions{it % 2 ? 1 : 1 + it % 4});
    auto findings = lint_verilog(emit_verilog(n));
    for (const auto& f : findings) MESSAGE(lint_kind_name(f.kind) << " line " << f.line << ": " << f.message);
    CHECK(findings.empty());
  }
}

TEST_CASE("lint catches injected defects") {
  const std::string v = emit_verilog(lower(stump()));
  REQUIRE(lint_verilog(v).empty());
  CHECK(count_kind(lint_verilog(replace_once(v, "wire signed [8:0] c0_a0_0_d_sum;", "wire signed [9:0] c0_a0_0_d_sum;")),
                   LintKind::WidthMismatch) > 0);
  CHECK(count_kind(lint_verilog(replace_once(v, "  assign k3 = 8'sh10;\n", "  assign k3 = 8'sh10;\n  assign k1 = 8'sh1;\n")),
                   LintKind::MultipleDrivers) > 0);
  CHECK(count_kind(lint_verilog(replace_once(v, "assign t0_l2_sel_d = ~t0_n0_lt;", "assign t0_l2_sel_d = ~t0_n9_lt;")),
                   LintKind::UndeclaredIdentifier) > 0);
  CHECK(count_kind(lint_verilog(replace_once(v, "  assign k3 = 8'sh10;\n", "")), LintKind::UndrivenSignal) > 0);
  CHECK(count_kind(lint_verilog(replace_once(v, "assign k0 = 8'sh8;", "assign k0 = 8'sh8")), LintKind::SyntaxError) > 0);
  CHECK(count_kind(lint_verilog(replace_once(v, "wire signed [7:0] t0_n0_lt_d_cb;", "wire [7:0] t0_n0_lt_d_cb;")), LintKind::SignednessMismatch) > 0);
  CHECK(count_kind(lint_verilog(replace_once(v, "localparam LATENCY = 4;", "localparam LATENCY = 5;")),
                   LintKind::PathRegisterCount) > 0);
  for (LintKind k : {LintKind::SyntaxError, LintKind::UndeclaredIdentifier, LintKind::WidthMismatch,
                     LintKind::SignednessMismatch, LintKind::MultipleDrivers, LintKind::UndrivenSignal,
                     LintKind::PathRegisterCount})
    CHECK(!lint_kind_name(k).empty());
}

TEST_CASE("Verilog simulation equals the netlist interpreter") {
  Rng rng(33);
  for (int it = 0; it < 24; ++it) {
    auto d = random_dataset(rng, 3, 25, 3);
    Model m = it % 2 ? Model{random_bdt(rng, 3, 1 + it % 3, 1 + it % 7, 1 + it % 4)}
                     : Model{random_fcnn(rng, {3, 5, 2}, {it % 4 ? Activation::ReLU : Activation::Sigmoid, Activation::Linear})};
    auto q = quantize_for(m, d, 5 + it % 20);
    auto n = lower(q, LowerOptions{it % 2 ? 1 : 1 + it % 3});
    std::vector<std::vector<FixedPointValue>> xs;
    for (std::size_t i = 0; i < d.rows(); ++i) xs.push_back(quantize_input(d.row(i), input_format(q)));
    CHECK(simulate_verilog_stream(emit_verilog(n), n, xs) == simulate_stream(n, xs));
  }
}

TEST_CASE("Verilog simulator basics") {
  auto n = lower(stump());
  VerilogSimulator sim(emit_verilog(n));
  CHECK(sim.localparam("LATENCY") == 4);
  CHECK(sim.localparam("II") == 1);
  sim.reset();
  sim.set("x0", -3);
  sim.set("in_valid", 1);
  for (int i = 0; i < 4; ++i) {
    CHECK(sim.get("out_valid") == 0);
    sim.step();
  }
  sim.evaluate();
  CHECK(sim.get("y0") == -16);
  CHECK(sim.get("out_valid") == 1);
  CHECK_THROWS(VerilogSimulator("module broken ("));
}

TEST_CASE("testbench text") {
  auto q = stump();
  auto n = lower(q);
  std::vector<std::vector<FixedPointValue>> xs, ys;
  for (double x : {0.0, 0.5, -1.0}) {
    xs.push_back(quantize_input(std::vector<double>{x}, input_format(q)));
    ys.push_back(infer_fixed(q, xs.back()).values);
  }
  auto tb = emit_testbench(n, xs, ys);
  CHECK(tb.find("module mlrtl_top_tb") != std::string::npos);
  CHECK(tb.find("mlrtl_top dut") != std::string::npos);
  CHECK(tb.find("PASS") != std::string::npos);
  CHECK(tb.find("$finish") != std::string::npos);
  CHECK(emit_testbench(n, xs, ys) == tb);
}

}
