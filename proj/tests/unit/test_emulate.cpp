#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "generators.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/error.hpp"
#include "oracle.hpp"

using namespace mlrtl;
using namespace mlrtl::testing;

namespace {

BdtEnsemble single(std::vector<TreeNode> nodes, int n_features = 1) {
  BdtEnsemble m;
  m.n_features = n_features;
  m.base_scores = {0.0};
  m.trees.push_back({0, Tree{std::move(nodes)}});
  return m;
}

// Sum over leaves of leaf * [every split on the root path routes toward it].
std::vector<double> brute_bdt(const BdtEnsemble& m, std::span<const double> x) {
  std::vector<double> s = m.base_scores;
  for (const auto& ct : m.trees) {
    const auto& nodes = ct.tree.nodes;
    std::vector<int> parent(nodes.size(), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (!nodes[i].is_leaf) {
        parent[static_cast<std::size_t>(nodes[i].left)] = static_cast<int>(i);
        parent[static_cast<std::size_t>(nodes[i].right)] = static_cast<int>(i);
      }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i].is_leaf) continue;
      bool on = true;
      for (int c = static_cast<int>(i), p = parent[i]; p >= 0; c = p, p = parent[static_cast<std::size_t>(p)]) {
        const auto& n = nodes[static_cast<std::size_t>(p)];
        bool left = x[static_cast<std::size_t>(n.feature)] < n.threshold;
        on = on && (left == (n.left == c));
      }
      if (on) s[static_cast<std::size_t>(ct.class_index)] += nodes[i].score;
    }
  }
  return s;
}

std::vector<double> loop_fcnn(const FcnnModel& m, std::vector<double> x) {
  for (const auto& l : m.layers) {
    std::vector<double> y(l.n_out());
    for (std::size_t r = 0; r < l.n_out(); ++r) {
      double a = l.bias[r];
      for (std::size_t c = 0; c < l.n_in(); ++c) a += l.weights.at(r, c) * x[c];
      if (l.activation == Activation::ReLU) a = a > 0 ? a : 0;
      if (l.activation == Activation::Sigmoid) a = 1 / (1 + std::exp(-a));
      y[r] = a;
    }
    x = y;
  }
  return x;
}

Rational cast_value(const Rational& v, const FixedPointFormat& f) { return Rational(cast_raw(v, f), pow2(f.fractional_bits())); }

Rational tree_sum(std::vector<Rational> ops, const FixedPointFormat& acc) {
  if (ops.size() == 1) return cast_value(ops[0], acc);
  while (ops.size() > 1) {
    std::vector<Rational> next;
    for (std::size_t i = 0; i < ops.size(); i += 2)
      next.push_back(i + 1 < ops.size() ? cast_value(ops[i] + ops[i + 1], acc) : ops[i]);
    ops = next;
  }
  return ops[0];
}

std::vector<Rational> oracle_bdt(const QuantizedBdt& q, const std::vector<FixedPointValue>& x) {
  const auto& f = q.formats();
  std::vector<std::vector<Rational>> ops(static_cast<std::size_t>(q.n_classes));
  for (const auto& t : q.trees) {
    std::size_t id = 0;
    while (!t.nodes[id].is_leaf) {
      const auto& n = t.nodes[id];
      bool left = value(x[static_cast<std::size_t>(n.feature)].raw, q.config.input) < value(n.threshold, f.threshold);
      id = static_cast<std::size_t>(left ? n.left : n.right);
    }
    ops[static_cast<std::size_t>(t.class_index)].push_back(value(t.nodes[id].score, f.leaf));
  }
  std::vector<Rational> out;
  for (std::size_t c = 0; c < ops.size(); ++c) {
    ops[c].push_back(value(q.base_scores[c], f.leaf));
    out.push_back(tree_sum(ops[c], f.accum));
  }
  return out;
}

std::vector<Rational> oracle_fcnn(const QuantizedFcnn& q, const std::vector<FixedPointValue>& x) {
  std::vector<Rational> cur;
  for (const auto& v : x) cur.push_back(value(v.raw, v.format));
  for (std::size_t k = 0; k < q.layers.size(); ++k) {
    const auto& l = q.layers[k];
    const auto& lf = q.config.layers[k];
    std::vector<Rational> next;
    for (std::size_t r = 0; r < l.rows; ++r) {
      std::vector<Rational> ops;
      for (std::size_t c = 0; c < l.cols; ++c)
        if (l.weight(r, c) != 0) ops.push_back(cur[c] * value(l.weight(r, c), lf.weight));
      ops.push_back(value(l.bias[r], lf.bias));
      Rational a = tree_sum(ops, lf.accum);
      if (l.activation == Activation::ReLU && a < 0) a = 0;
      if (l.activation == Activation::Sigmoid) {
        const double range = q.config.sigmoid.range;
        const int size = q.config.sigmoid.size;
        FixedPointFormat rne = lf.activation;
        rne.rounding = Rounding::RoundNearestEven;
        BigInt idx = floor_of(a * Rational(size) / Rational(exact(2 * range))) + size / 2;
        double sig = idx < 0 ? 0.0 : idx >= size ? 1.0 : 1.0 / (1.0 + std::exp(-(-range + (idx.convert_to<double>() + 0.5) * 2 * range / size)));
        next.push_back(cast_value(exact(sig), rne));
      } else {
        next.push_back(cast_value(a, lf.activation));
      }
    }
    cur = next;
  }
  return cur;
}

std::vector<Rational> as_rationals(const FixedScores& s) {
  std::vector<Rational> out;
  for (const auto& v : s.values) out.push_back(value(v.raw, v.format));
  return out;
}

}  // namespace

TEST_SUITE("emulate") {

TEST_CASE("float BDT examples") {
  CHECK(infer_float_bdt(single({TreeNode::leaf(0.7)}), std::vector<double>{0.0}).values[0] == 0.7);
  auto s = single({TreeNode::split(0, 0.5, 1, 2), TreeNode::leaf(-1), TreeNode::leaf(1)});
  CHECK(infer_float_bdt(s, std::vector<double>{0.5}).values[0] == 1.0);
  CHECK(infer_float_bdt(s, std::vector<double>{0.4999}).values[0] == -1.0);

  BdtEnsemble three = s;
  three.trees.push_back({0, Tree{{TreeNode::split(0, 1.5, 1, 2), TreeNode::leaf(-10), TreeNode::leaf(10)}}});
  three.trees.push_back({0, Tree{{TreeNode::split(0, -1.0, 1, 2), TreeNode::leaf(-100), TreeNode::leaf(100)}}});
  for (double x : {-2.0, 0.0, 1.0, 2.0}) {
    std::vector<double> xv{x};
    CHECK(infer_float_bdt(three, xv).values[0] == brute_bdt(three, xv)[0]);
  }
}

TEST_CASE("objective does not change the decision") {
  auto s = single({TreeNode::leaf(2.0)});
  s.objective = Objective::Sigmoid;
  auto r = infer_float_bdt(s, std::vector<double>{0.0});
  CHECK(r.decision[0] == 2.0);
  CHECK(r.predicted_class == 1);
  CHECK(apply_objective(Objective::Sigmoid, r.values)[0] == doctest::Approx(1 / (1 + std::exp(-2.0))));
  auto p = apply_objective(Objective::Softmax, std::vector<double>{1.0, 3.0});
  CHECK(p[0] + p[1] == doctest::Approx(1.0));
  CHECK(argmax(p) == 1);
}

TEST_CASE("BDT path property") {
  Rng rng(1);
  for (int it = 0; it < 200; ++it) {
    auto m = random_bdt(rng, 3, 1 + it % 3, 1 + it % 8, it % 6);
    auto d = random_dataset(rng, 3, 20);
    for (std::size_t i = 0; i < d.rows(); ++i) {
      auto want = brute_bdt(m, d.row(i));
      auto got = infer_float_bdt(m, d.row(i)).decision;
      REQUIRE(got.size() == want.size());
      for (std::size_t c = 0; c < want.size(); ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("float fcNN examples") {
  FcnnModel id{{DenseLayer{Matrix(3, 3), {0, 0, 0}, Activation::Linear}}};
  for (int i = 0; i < 3; ++i) id.layers[0].weights.at(i, i) = 1.0;
  std::vector<double> x{0.1, -2, 3.5};
  CHECK(infer_float_fcnn(id, x).values == x);

  FcnnModel neg{{DenseLayer{Matrix(2, 2, -1.0), {-0.1, -0.2}, Activation::ReLU}}};
  CHECK(infer_float_fcnn(neg, std::vector<double>{1, 1}).values == std::vector<double>{0, 0});

  Rng rng(2);
  for (int it = 0; it < 200; ++it) {
    auto m = random_fcnn(rng, {3, 2, 2}, {it % 2 ? Activation::ReLU : Activation::Sigmoid, Activation::Linear});
    std::vector<double> v{uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3)};
    auto want = loop_fcnn(m, v);
    auto got = infer_float_fcnn(m, v).values;
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(got[c] - want[c]) < 1e-12);
  }
}

TEST_CASE("softmax is reported, argmax taken on logits") {
  FcnnModel m{{DenseLayer{Matrix(3, 1), {1.0, 3.0, 2.0}, Activation::Softmax}}};
  auto r = infer_float_fcnn(m, std::vector<double>{0.0});
  CHECK(r.predicted_class == 1);
  CHECK(r.decision == std::vector<double>{1.0, 3.0, 2.0});
  CHECK(std::accumulate(r.values.begin(), r.values.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("argmax ties go to the lowest index") {
  std::vector<double> v{1.0, 3.0, 3.0};
  CHECK(argmax(v) == 1);
  FixedPointFormat f = make_format(8, 4);
  QuantizedFcnn q;
  q.config.input = f;
  q.config.layers = {LayerFormats{f, f, make_format(16, 8), f}};
  q.layers.push_back(QuantizedLayer{2, 1, {0, 0}, {5, 5}, Activation::Linear, PruneMask{2, 1, {0, 0}}});
  CHECK(infer_fixed_fcnn(q, std::vector<FixedPointValue>{{3, f}}).predicted_class == 0);
}

TEST_CASE("fixed BDT equals the rational oracle") {
  Rng rng(3);
  for (int it = 0; it < 300; ++it) {
    auto m = random_bdt(rng, 3, 1 + it % 3, 1 + it % 9, it % 5);
    auto d = random_dataset(rng, 3, 20);
    CalibrationWidths w = CalibrationWidths::uniform(uniform_int(rng, 4, 20));
    w.leaf = uniform_int(rng, 3, 10);
    w.accum = it % 3 == 0 ? w.leaf + 1 : 0;
    QuantizedBdt q;
    try {
      q = quantize_bdt(m, calibrate_formats(m, d, w));
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::WidthTooSmall);
      continue;
    }
    for (std::size_t i = 0; i < d.rows(); ++i) {
      auto x = quantize_input(d.row(i), q.config.input);
      CHECK(as_rationals(infer_fixed_bdt(q, x)) == oracle_bdt(q, x));
    }
  }
}

TEST_CASE("fixed fcNN equals the rational oracle") {
  Rng rng(4);
  const Activation acts[] = {Activation::Linear, Activation::ReLU, Activation::Sigmoid};
  for (int it = 0; it < 200; ++it) {
    auto m = random_fcnn(rng, {3, static_cast<std::size_t>(uniform_int(rng, 1, 6)), 2},
                         {acts[it % 3], acts[(it / 3) % 3]});
    auto pr = prune_fcnn(m, PruningConfig{{uniform(rng, 0, 0.8)}});
    auto d = random_dataset(rng, 3, 20);
    CalibrationWidths w = CalibrationWidths::uniform(uniform_int(rng, 4, 18));
    if (it % 4 == 0) w.accum = w.weight + w.input;
    QuantizedFcnn q;
    try {
      q = quantize_fcnn(pr.model, calibrate_formats(pr.model, d, w), pr.masks);
    } catch (const Error& e) {
      REQUIRE((e.code() == ErrorCode::WidthTooSmall || e.code() == ErrorCode::InvalidConfig));
      continue;
    }
    for (std::size_t i = 0; i < d.rows(); ++i) {
      auto x = quantize_input(d.row(i), q.config.input);
      CHECK(as_rationals(infer_fixed_fcnn(q, x)) == oracle_fcnn(q, x));
    }
  }
}

TEST_CASE("exactly representable models match the float engine") {
  auto m = single({TreeNode::split(0, 0.5, 1, 2), TreeNode::leaf(-1.25), TreeNode::leaf(0.75)});
  m.base_scores = {0.5};
  QuantizationConfig c;
  c.input = make_format(16, 4);
  c.bdt = BdtFormats{make_format(16, 4), make_format(16, 4), make_format(20, 8)};
  auto q = quantize_bdt(m, c);
  for (double x : {-1.0, 0.5, 0.25, 3.0}) {
    std::vector<double> xv{x};
    CHECK(infer_fixed_bdt(q, quantize_input(xv, c.input)).as_doubles() == infer_float_bdt(m, xv).values);
  }
}

TEST_CASE("fixed fcNN simple cases") {
  FixedPointFormat f = make_format(12, 4);
  QuantizationConfig c;
  c.input = f;
  c.layers = {LayerFormats{f, f, make_format(24, 8), f}};
  FcnnModel id{{DenseLayer{Matrix(2, 2), {0, 0}, Activation::Linear}}};
  id.layers[0].weights.at(0, 0) = id.layers[0].weights.at(1, 1) = 1.0;
  auto q = quantize_fcnn(id, c);
  std::vector<FixedPointValue> zero{{0, f}, {0, f}};
  CHECK(infer_fixed_fcnn(q, zero).values == zero);
  std::vector<FixedPointValue> x{{37, f}, {-1000, f}};
  CHECK(infer_fixed_fcnn(q, x).values == x);
}

TEST_CASE("linear layers scale exactly without saturation") {
  Rng rng(5);
  for (int it = 0; it < 100; ++it) {
    auto m = random_fcnn(rng, {3, 2}, {Activation::Linear});
    m.layers[0].bias = {0.0, 0.0};
    QuantizationConfig c;
    c.input = make_format(12, 6);
    c.layers = {LayerFormats{make_format(10, 2), make_format(10, 2), make_format(40, 16), make_format(40, 16)}};
    auto q = quantize_fcnn(m, c);
    std::vector<FixedPointValue> x, x2;
    for (int j = 0; j < 3; ++j) {
      int128 r = uniform_int(rng, -500, 500);
      x.push_back({r, c.input});
      x2.push_back({2 * r, c.input});
    }
    auto a = infer_fixed_fcnn(q, x), b = infer_fixed_fcnn(q, x2);
    for (std::size_t k = 0; k < 2; ++k) CHECK(b.values[k].raw == 2 * a.values[k].raw);
  }
}

TEST_CASE("sigmoid table") {
  FixedPointFormat coarse = make_format(8, 1);
  auto t = build_sigmoid_table(SigmoidLutConfig{}, coarse);
  CHECK(t.entries.size() == 1024);
  CHECK(sigmoid_lookup(t, FixedPointValue{0, make_format(16, 8)}).raw == 64);
  FixedPointFormat fine = make_format(24, 2);
  auto u = build_sigmoid_table(SigmoidLutConfig{}, fine);
  CHECK(big(sigmoid_lookup(u, FixedPointValue{0, make_format(16, 8)}).raw) ==
        cast_raw(exact(1 / (1 + std::exp(-1.0 / 128))), fine));
  CHECK(sigmoid_lookup(u, quantize_real(-8.5, make_format(16, 8))).raw == 0);
  CHECK(sigmoid_lookup(u, quantize_real(8.0, make_format(16, 8))).raw == quantize_real(1.0, fine).raw);
  CHECK(sigmoid_lookup(u, quantize_real(-8.0, make_format(16, 8))).raw == u.entries[0]);
  CHECK_THROWS_AS(build_sigmoid_table(SigmoidLutConfig{1000, 8.0}, fine), Error);
  CHECK_THROWS_AS(build_sigmoid_table(SigmoidLutConfig{1024, 6.0}, fine), Error);
}

TEST_CASE("accumulation order matters only under saturation") {
  FixedPointFormat leaf = make_format(4, 4);
  std::vector<FixedPointValue> ops{{7, leaf}, {7, leaf}, {-7, leaf}, {-7, leaf}, {0, leaf}};
  auto tight = make_format(4, 4);
  auto tree = accumulate(ops, tight, AccumulationOrder::Tree);
  auto seq = accumulate(ops, tight, AccumulationOrder::Sequential);
  CHECK(tree.raw == -1);
  CHECK(seq.raw == -7);
  auto wide = make_format(8, 8);
  CHECK(accumulate(ops, wide, AccumulationOrder::Tree) == accumulate(ops, wide, AccumulationOrder::Sequential));

  Rng rng(6);
  for (int it = 0; it < 500; ++it) {
    std::vector<FixedPointValue> v;
    for (int k = uniform_int(rng, 1, 20); k > 0; --k) v.push_back({uniform_int(rng, -8, 7), leaf});
    CHECK(accumulate(v, wide, AccumulationOrder::Tree) == accumulate(v, wide, AccumulationOrder::Sequential));
  }
}

TEST_CASE("batch inference equals row-by-row and is independent of jobs") {
  Rng rng(7);
  auto m = random_fcnn(rng, {4, 6, 3}, {Activation::ReLU, Activation::Softmax});
  auto d = random_dataset(rng, 4, 10000, 3);
  QuantizedModel q = quantize_fcnn(m, calibrate_formats(m, d, CalibrationWidths::uniform(12)));
  auto b1 = batch_infer_fixed(q, d);
  auto b4 = batch_infer_fixed(q, d, {}, 4);
  CHECK(b1.predictions == b4.predictions);
  CHECK(b1.scores == b4.scores);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    auto s = infer_fixed(q, quantize_input(d.row(i), input_format(q)));
    REQUIRE(s == b1.scores[i]);
  }
  auto f1 = batch_infer_float(m, d), f3 = batch_infer_float(m, d, 3);
  CHECK(f1.predictions == f3.predictions);

  Dataset one;
  one.n_features = 4;
  one.features.assign(d.features.begin(), d.features.begin() + 4);
  one.labels = {d.labels[0]};
  CHECK(batch_infer_fixed(q, one).scores[0] == b1.scores[0]);

  Dataset rev = d;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    std::copy(d.row(i).begin(), d.row(i).end(), rev.features.begin() + static_cast<long>((d.rows() - 1 - i) * 4));
    rev.labels[d.rows() - 1 - i] = d.labels[i];
  }
  auto br = batch_infer_fixed(q, rev);
  for (std::size_t i = 0; i < d.rows(); ++i) REQUIRE(br.scores[d.rows() - 1 - i] == b1.scores[i]);
}

TEST_CASE("wide formats converge to the float decision") {
  Rng rng(8);
  for (int it = 0; it < 20; ++it) {
    auto d = random_dataset(rng, 4, 300);
    Model ms[] = {random_bdt(rng, 4, 1 + it % 3, 8, 4),
                  random_fcnn(rng, {4, 6, 1 + static_cast<std::size_t>(it % 3)},
                              {Activation::ReLU, it % 2 ? Activation::Linear : Activation::Sigmoid})};
    for (const Model& m : ms) {
      const bool bdt = std::holds_alternative<BdtEnsemble>(m);
      QuantizedModel q = bdt ? QuantizedModel{quantize_bdt(std::get<BdtEnsemble>(m),
                                                           calibrate_formats(std::get<BdtEnsemble>(m), d, CalibrationWidths::uniform(32)))}
                             : QuantizedModel{quantize_fcnn(std::get<FcnnModel>(m),
                                                            calibrate_formats(std::get<FcnnModel>(m), d, CalibrationWidths::uniform(24)))};
      auto fb = batch_infer_float(m, d);
      auto xb = batch_infer_fixed(q, d);
      double thr = bdt ? 0.0 : binary_threshold(std::get<FcnnModel>(m).layers.back().activation);
      for (std::size_t i = 0; i < d.rows(); ++i) {
        const auto& s = fb.scores[i];
        const auto& basis = s.decision.size() == 1 ? s.values : s.decision;
        if (decision_margin(basis, thr) > std::ldexp(1.0, -8)) CHECK(fb.predictions[i] == xb.predictions[i]);
      }
    }
  }
}

TEST_CASE("input checks") {
  auto m = single({TreeNode::leaf(1.0)}, 2);
  QuantizationConfig c;
  c.input = make_format(8, 4);
  c.bdt = BdtFormats{make_format(8, 4), make_format(8, 4), make_format(10, 6)};
  auto q = quantize_bdt(m, c);
  CHECK_THROWS_AS(infer_fixed_bdt(q, std::vector<FixedPointValue>{{0, c.input}}), Error);
  CHECK_THROWS_AS(infer_fixed_bdt(q, std::vector<FixedPointValue>{{0, c.input}, {0, make_format(9, 4)}}), Error);
}

}
