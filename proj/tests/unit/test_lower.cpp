#include <algorithm>
#include <map>

#include "doctest.h"
#include "generators.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/error.hpp"
#include "mlrtl/lower.hpp"

using namespace mlrtl;
using namespace mlrtl::testing;

namespace {

int ceil_log2(std::size_t n) {
  int k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

std::size_t count(const NetlistIr& n, CellKind k) {
  return static_cast<std::size_t>(std::count_if(n.cells.begin(), n.cells.end(), [&](const Cell& c) { return c.kind == k; }));
}

// Fewest and most registers on any input-to-output path.
std::pair<int, int> register_span(const NetlistIr& n) {
  std::vector<int> lo(n.wires.size(), -1), hi(n.wires.size(), -1);
  for (std::size_t i = 0; i < n.inputs.size(); ++i) lo[static_cast<std::size_t>(n.inputs[i].wire)] = hi[static_cast<std::size_t>(n.inputs[i].wire)] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (const Cell& c : n.cells) {
      if (c.inputs.empty()) continue;
      int l = -1, h = -1;
      for (int w : c.inputs) {
        if (lo[static_cast<std::size_t>(w)] < 0) continue;
        l = l < 0 ? lo[static_cast<std::size_t>(w)] : std::min(l, lo[static_cast<std::size_t>(w)]);
        h = std::max(h, hi[static_cast<std::size_t>(w)]);
      }
      if (l < 0) continue;
      if (c.kind == CellKind::Register) ++l, ++h;
      auto o = static_cast<std::size_t>(c.output);
      if (lo[o] != l || hi[o] != h) {
        lo[o] = l;
        hi[o] = h;
        changed = true;
      }
    }
  }
  int l = 1 << 20, h = 0;
  for (std::size_t i = 0; i + 1 < n.outputs.size(); ++i) {
    auto w = static_cast<std::size_t>(n.outputs[i].wire);
    if (lo[w] < 0) continue;
    l = std::min(l, lo[w]);
    h = std::max(h, hi[w]);
  }
  return {l, h};
}

QuantizationConfig fcnn_config(std::size_t layers, int w = 12) {
  QuantizationConfig c;
  c.input = make_format(w, 4);
  for (std::size_t k = 0; k < layers; ++k)
    c.layers.push_back(LayerFormats{make_format(w, 3), make_format(w, 4), make_format(2 * w + 4, 10), make_format(w, 4)});
  return c;
}

std::vector<std::vector<FixedPointValue>> inputs(const QuantizedModel& q, const Dataset& d) {
  std::vector<std::vector<FixedPointValue>> xs;
  for (std::size_t i = 0; i < d.rows(); ++i) xs.push_back(quantize_input(d.row(i), input_format(q)));
  return xs;
}

}  // namespace

TEST_SUITE("lower") {

TEST_CASE("adder levels") {
  CHECK(adder_levels(1) == 0);
  CHECK(adder_levels(2) == 1);
  CHECK(adder_levels(3) == 2);
  CHECK(adder_levels(4) == 2);
  CHECK(adder_levels(5) == 3);
  CHECK(adder_levels(17) == 5);
}

TEST_CASE("stump structure") {
  BdtEnsemble m;
  m.n_features = 1;
  m.base_scores = {0.0};
  m.trees.push_back({0, Tree{{TreeNode::split(0, 0.5, 1, 2), TreeNode::leaf(-1), TreeNode::leaf(1)}}});
  QuantizationConfig c;
  c.input = make_format(8, 4);
  c.bdt = BdtFormats{make_format(8, 4), make_format(8, 4), make_format(10, 6)};
  auto n = lower(quantize_bdt(m, c));
  CHECK(n.latency == 4);
  CHECK(n.initiation_interval == 1);
  CHECK(count(n, CellKind::Comparator) == 1);
  CHECK(count(n, CellKind::AndReduce) == 2);
  CHECK(count(n, CellKind::Mul) == 0);
  CHECK(n.n_data_inputs() == 1);
  CHECK(n.n_data_outputs() == 1);
  CHECK(interpret_netlist(n, std::vector<FixedPointValue>{quantize_real(0.5, c.input)})[0].raw == 16);
  CHECK(interpret_netlist(n, std::vector<FixedPointValue>{quantize_real(0.4375, c.input)})[0].raw == -16);
}

TEST_CASE("eight trees add three adder levels") {
  Rng rng(21);
  auto m = random_bdt(rng, 3, 1, 8, 3);
  auto n = lower(quantize_for(m, random_dataset(rng, 3, 50), 10));
  CHECK(n.latency == 7);
  CHECK(register_span(n) == std::pair{7, 7});
}

TEST_CASE("multiplier count follows nonzero weights") {
  FcnnModel m{{DenseLayer{Matrix(1, 2), {0.25}, Activation::Linear}}};
  m.layers[0].weights.data = {0.5, -0.75};
  auto q = quantize_fcnn(m, fcnn_config(1));
  auto n = lower(q);
  CHECK(count(n, CellKind::Mul) == 2);
  CHECK(n.latency == 1 + 2 + 1);

  m.layers[0].weights.data = {0.5, 0.0};
  auto n1 = lower(quantize_fcnn(m, fcnn_config(1)));
  CHECK(count(n1, CellKind::Mul) == 1);
  CHECK(n1.latency == 1 + 1 + 1);
  auto y = interpret_netlist(n1, std::vector<FixedPointValue>{quantize_real(1.0, make_format(12, 4)), quantize_real(3.0, make_format(12, 4))});
  CHECK(dequantize(y[0]) == 0.75);
}

TEST_CASE("reuse shares multipliers") {
  Rng rng(22);
  auto m = random_fcnn(rng, {4, 4}, {Activation::Linear});
  auto q = quantize_fcnn(m, fcnn_config(1));
  auto n = lower(q, LowerOptions{4});
  CHECK(count(n, CellKind::Mul) == 4);
  CHECK(n.initiation_interval == 4);
  CHECK(n.latency == 1 + adder_levels(5) + 1 + 3);
  auto d = random_dataset(rng, 4, 30);
  auto xs = inputs(q, d);
  auto ys = simulate_stream(n, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(ys[i] == infer_fixed(q, xs[i]).values);
}

TEST_CASE("reuse errors") {
  Rng rng(23);
  auto m = random_bdt(rng, 2, 1, 2, 2);
  auto q = quantize_for(m, random_dataset(rng, 2, 20), 10);
  CHECK_THROWS_AS(lower(q, LowerOptions{2}), Error);
  CHECK_THROWS_AS(lower(q, LowerOptions{0}), Error);
  auto f = quantize_fcnn(random_fcnn(rng, {2, 2}, {Activation::Linear}), fcnn_config(1));
  try {
    lower(f, LowerOptions{0});
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
  CHECK_NOTHROW(lower(f, LowerOptions{64}));
}

TEST_CASE("latency formulas on random models") {
  Rng rng(24);
  for (int it = 0; it < 40; ++it) {
    auto d = random_dataset(rng, 4, 30);
    if (it % 2 == 0) {
      auto m = random_bdt(rng, 4, 1 + it % 3, 1 + uniform_int(rng, 0, 15), uniform_int(rng, 0, 5));
      auto n = lower(quantize_for(m, d, 12));
      std::map<int, std::size_t> per_class;
      for (const auto& t : m.trees) ++per_class[t.class_index];
      std::size_t tc = 0;
      for (auto [c, k] : per_class) tc = std::max(tc, k);
      CHECK(n.latency == 3 + ceil_log2(tc + 1));
      if (std::any_of(m.trees.begin(), m.trees.end(), [](const ClassTree& t) { return t.tree.nodes.size() > 1; }))
        CHECK(register_span(n) == std::pair{n.latency, n.latency});
    } else {
      std::size_t h = static_cast<std::size_t>(uniform_int(rng, 1, 12));
      auto m = random_fcnn(rng, {4, h, 2}, {Activation::ReLU, Activation::Sigmoid});
      auto pr = prune_fcnn(m, PruningConfig{{uniform(rng, 0, 0.9)}});
      auto q = quantize_fcnn(pr.model, calibrate_formats(pr.model, d, CalibrationWidths::uniform(12)), pr.masks);
      int R = 1 + uniform_int(rng, 0, 4);
      auto n = lower(q, LowerOptions{R});
      int want = 0;
      for (const auto& l : q.layers) {
        std::size_t nnz = 0;
        for (std::size_t r = 0; r < l.rows; ++r) nnz = std::max(nnz, l.fan_in_nonzero(r));
        want += 1 + ceil_log2(nnz + 1) + 1 + (R > 1 ? R - 1 : 0);
      }
      CHECK(n.latency == want);
      CHECK(n.initiation_interval == R);
      if (R == 1) CHECK(register_span(n) == std::pair{want, want});
    }
  }
}

TEST_CASE("netlist equals the emulator") {
  Rng rng(25);
  for (int it = 0; it < 30; ++it) {
    auto d = random_dataset(rng, 3, 60, 3);
    const Activation acts[] = {Activation::ReLU, Activation::Sigmoid, Activation::Linear, Activation::Softmax};
    Model m = it % 2 ? Model{random_bdt(rng, 3, 1 + it % 3, 1 + it % 12, it % 5)}
                     : Model{random_fcnn(rng, {3, 6, 3}, {acts[it % 3], acts[(it / 2) % 4]})};
    auto q = quantize_for(m, d, 6 + it % 14);
    int R = it % 2 ? 1 : 1 + it % 5;
    auto n = lower(q, LowerOptions{R});
    auto xs = inputs(q, d);
    for (const auto& x : xs) REQUIRE(interpret_netlist(n, x) == infer_fixed(q, x).values);
    auto ys = simulate_stream(n, xs);
    for (std::size_t i = 0; i < xs.size(); ++i) REQUIRE(ys[i] == infer_fixed(q, xs[i]).values);
  }
}

TEST_CASE("more reuse never adds multipliers") {
  Rng rng(26);
  for (int it = 0; it < 10; ++it) {
    auto m = random_fcnn(rng, {6, 5, 2}, {Activation::ReLU, Activation::Linear});
    auto pr = prune_fcnn(m, PruningConfig{{0.1 * it}});
    auto q = quantize_fcnn(pr.model, fcnn_config(2), pr.masks);
    std::size_t prev = 1u << 30;
    for (int R = 1; R <= 8; ++R) {
      auto muls = count(lower(q, LowerOptions{R}), CellKind::Mul);
      CHECK(muls <= prev);
      std::size_t want = 0;
      for (const auto& l : q.layers) {
        std::size_t nnz = 0;
        for (std::size_t r = 0; r < l.rows; ++r) nnz += l.fan_in_nonzero(r);
        want += (nnz + static_cast<std::size_t>(R) - 1) / static_cast<std::size_t>(R);
      }
      CHECK(muls == want);
      prev = muls;
    }
  }
}

TEST_CASE("names and determinism") {
  Rng rng(27);
  auto m = random_fcnn(rng, {3, 3}, {Activation::Sigmoid});
  auto q = quantize_fcnn(m, fcnn_config(1));
  auto a = lower(q, LowerOptions{1, "core"});
  auto b = lower(q, LowerOptions{1, "core"});
  CHECK(a.name == "core");
  CHECK(netlist_to_json(a) == netlist_to_json(b));
  CHECK(count(a, CellKind::LutRom) == 3);
  CHECK(a.inputs.back().name == "in_valid");
  CHECK(a.outputs.back().name == "out_valid");
}

}
