#include "mlrtl/lower.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "mlrtl/emulate.hpp"
#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

class Builder {
 public:
  explicit Builder(NetlistIr& n) : n_(n) {}

  int wire(const std::string& name, const WireType& t) {
    int w = n_.add_wire(name, t);
    stage_.push_back(0);
    const_.push_back(false);
    return w;
  }

  int input(const std::string& name, const WireType& t) {
    int w = wire(name, t);
    n_.inputs.push_back({name, w});
    return w;
  }

  int constant(const WireType& t, int128 value) {
    std::string key = to_string(t) + "=" + int128_to_string(value);
    if (auto it = consts_.find(key); it != consts_.end()) return it->second;
    int w = wire("k" + std::to_string(consts_.size()), t);
    const_[static_cast<std::size_t>(w)] = true;
    Cell c;
    c.name = "u_" + n_.wires[static_cast<std::size_t>(w)].name;
    c.kind = CellKind::Const;
    c.value = value;
    c.output = w;
    n_.add_cell(std::move(c));
    consts_[key] = w;
    return w;
  }

  // Combinational cell; `proto` supplies kind and attributes.
  int comb(Cell proto, const std::string& name, std::vector<int> inputs, const WireType& t) {
    int w = wire(name, t);
    int s = 0;
    for (int in : inputs) s = std::max(s, stage_[static_cast<std::size_t>(in)]);
    stage_[static_cast<std::size_t>(w)] = s;
    proto.name = "u_" + name;
    proto.inputs = std::move(inputs);
    proto.output = w;
    proto.stage = s;
    n_.add_cell(std::move(proto));
    return w;
  }

  int comb(CellKind kind, const std::string& name, std::vector<int> inputs, const WireType& t) {
    Cell c;
    c.kind = kind;
    return comb(std::move(c), name, std::move(inputs), t);
  }

  // Register driving `out` (a fresh wire when out < 0). Stage defaults to the
  // stage of d plus one.
  int reg(const std::string& name, int d, int enable = -1, int128 reset = 0, int out = -1, int stage = -1) {
    if (out < 0) out = wire(name, n_.wires[static_cast<std::size_t>(d)].type);
    if (stage < 0) stage = stage_[static_cast<std::size_t>(d)] + 1;
    stage_[static_cast<std::size_t>(out)] = stage;
    Cell c;
    c.name = "u_" + name;
    c.kind = CellKind::Register;
    c.inputs = {d};
    if (enable >= 0) c.inputs.push_back(enable);
    c.output = out;
    c.stage = stage;
    c.value = reset;
    n_.add_cell(std::move(c));
    return out;
  }

  // Constants need no pipeline register.
  int delay(const std::string& name, int w) {
    return const_[static_cast<std::size_t>(w)] ? w : reg(name, w);
  }

  const WireType& type(int w) const { return n_.wires[static_cast<std::size_t>(w)].type; }
  int stage(int w) const { return stage_[static_cast<std::size_t>(w)]; }
  void set_stage(int w, int s) { stage_[static_cast<std::size_t>(w)] = s; }

  void finish(const std::vector<int>& outputs, int in_valid, int latency) {
    for (std::size_t i = 0; i < outputs.size(); ++i) n_.outputs.push_back({"y" + std::to_string(i), outputs[i]});
    int v = in_valid;
    for (int i = 0; i < latency; ++i) v = reg("valid_" + std::to_string(i + 1), v);
    if (latency == 0) v = comb(CellKind::OrReduce, "valid_out", {v}, WireType::bit_vector(1));
    n_.outputs.push_back({"out_valid", v});
    n_.latency = latency;
  }

 private:
  NetlistIr& n_;
  std::vector<int> stage_;
  std::vector<bool> const_;
  std::map<std::string, int> consts_;
};

// Balanced reduction in tree order, padded with registers to `levels`.
int reduce(Builder& b, std::vector<int> ops, const FixedPointFormat& accum, int levels,
           const std::string& prefix) {
  const WireType acc = WireType::fixed(accum);
  int done = 0;
  if (ops.size() == 1) {
    ops[0] = b.comb(CellKind::SatCast, prefix + "_cast", {ops[0]}, acc);
  }
  while (ops.size() > 1) {
    std::vector<int> next;
    for (std::size_t i = 0; i < ops.size(); i += 2) {
      std::string name = prefix + "_a" + std::to_string(done) + "_" + std::to_string(i / 2);
      if (i + 1 < ops.size())
        next.push_back(b.reg(name, b.comb(CellKind::Add, name + "_d", {ops[i], ops[i + 1]}, acc)));
      else
        next.push_back(b.delay(name, ops[i]));
    }
    ops = std::move(next);
    ++done;
  }
  int w = ops[0];
  for (; done < levels; ++done) w = b.delay(prefix + "_pad" + std::to_string(done), w);
  return w;
}

void check_reuse(int reuse) {
  if (reuse < 1) throw Error(ErrorCode::InvalidArgument, "reuse factor must be at least 1");
}

}  // namespace

int adder_levels(std::size_t n_operands) {
  int levels = 0;
  while ((std::size_t{1} << levels) < n_operands) ++levels;
  return levels;
}

NetlistIr lower_bdt(const QuantizedBdt& qm, const LowerOptions& opts) {
  check_reuse(opts.reuse);
  if (opts.reuse != 1) throw Error(ErrorCode::InvalidArgument, "reuse factor applies to fcNN models only");
  if (qm.trees.empty()) throw Error(ErrorCode::EmptyEnsemble, "ensemble has no trees");
  const BdtFormats& f = qm.formats();
  NetlistIr n;
  n.name = opts.name;
  n.model_kind = "bdt";
  Builder b(n);
  std::vector<int> x;
  for (int i = 0; i < qm.n_features; ++i) x.push_back(b.input("x" + std::to_string(i), WireType::fixed(qm.config.input)));
  int in_valid = b.input("in_valid", WireType::bit_vector(1));
  const WireType bit = WireType::bit_vector(1);
  const WireType leaf = WireType::fixed(f.leaf);
  const WireType thr = WireType::fixed(f.threshold);

  std::vector<std::vector<int>> class_ops(static_cast<std::size_t>(qm.n_classes));
  for (std::size_t t = 0; t < qm.trees.size(); ++t) {
    const QuantizedTree& qt = qm.trees[t];
    const std::string tp = "t" + std::to_string(t);
    std::vector<int> cmp(qt.nodes.size(), -1);
    for (std::size_t i = 0; i < qt.nodes.size(); ++i) {
      const QuantizedNode& node = qt.nodes[i];
      if (node.is_leaf) continue;
      Cell c;
      c.kind = CellKind::Comparator;
      c.op = CompareOp::Lt;
      std::string name = tp + "_n" + std::to_string(i) + "_lt";
      int lt = b.comb(std::move(c), name + "_d", {x[static_cast<std::size_t>(node.feature)], b.constant(thr, node.threshold)}, bit);
      cmp[i] = b.reg(name, lt);
    }
    // Depth-first walk collecting each leaf's path conditions.
    struct Frame { int node; std::vector<int> conds; std::vector<std::uint8_t> invert; };
    std::vector<Frame> stack{{0, {}, {}}};
    std::vector<std::pair<int, int>> leaves;  // node, select wire
    while (!stack.empty()) {
      Frame fr = std::move(stack.back());
      stack.pop_back();
      const QuantizedNode& node = qt.nodes[static_cast<std::size_t>(fr.node)];
      if (node.is_leaf) {
        Cell c;
        c.kind = CellKind::AndReduce;
        c.invert = fr.invert;
        std::string name = tp + "_l" + std::to_string(fr.node) + "_sel";
        int sel = b.comb(std::move(c), name + "_d", fr.conds, bit);
        leaves.emplace_back(fr.node, b.reg(name, sel));
        continue;
      }
      Frame right{node.right, fr.conds, fr.invert};
      right.conds.push_back(cmp[static_cast<std::size_t>(fr.node)]);
      right.invert.push_back(1);
      fr.conds.push_back(cmp[static_cast<std::size_t>(fr.node)]);
      fr.invert.push_back(0);
      stack.push_back(std::move(right));
      stack.push_back(Frame{node.left, std::move(fr.conds), std::move(fr.invert)});
    }
    std::vector<int> gated;
    int zero = b.constant(leaf, 0);
    for (auto [node, sel] : leaves) {
      std::string name = tp + "_l" + std::to_string(node) + "_v";
      gated.push_back(b.comb(CellKind::Mux, name, {sel, zero, b.constant(leaf, qt.nodes[static_cast<std::size_t>(node)].score)}, leaf));
    }
    int score = b.comb(CellKind::OrReduce, tp + "_score_d", gated, leaf);
    class_ops[static_cast<std::size_t>(qt.class_index)].push_back(b.reg(tp + "_score", score));
  }

  int levels = 0;
  for (auto& ops : class_ops) levels = std::max(levels, adder_levels(ops.size() + 1));
  std::vector<int> outputs;
  for (int c = 0; c < qm.n_classes; ++c) {
    auto ops = class_ops[static_cast<std::size_t>(c)];
    ops.push_back(b.constant(leaf, qm.base_scores[static_cast<std::size_t>(c)]));
    outputs.push_back(reduce(b, ops, f.accum, levels, "c" + std::to_string(c)));
  }
  b.finish(outputs, in_valid, 3 + levels);
  require_verified(n);
  return n;
}

NetlistIr lower_fcnn(const QuantizedFcnn& qm, const LowerOptions& opts) {
  check_reuse(opts.reuse);
  if (qm.layers.empty()) throw Error(ErrorCode::EmptyModel, "network has no layers");
  const int R = opts.reuse;
  NetlistIr n;
  n.name = opts.name;
  n.model_kind = "fcnn";
  n.initiation_interval = R;
  Builder b(n);
  std::vector<int> cur;
  for (std::size_t i = 0; i < qm.n_inputs(); ++i)
    cur.push_back(b.input("x" + std::to_string(i), WireType::fixed(qm.config.input)));
  int in_valid = b.input("in_valid", WireType::bit_vector(1));
  int arrival = 0;

  for (std::size_t k = 0; k < qm.layers.size(); ++k) {
    const QuantizedLayer& layer = qm.layers[k];
    const LayerFormats& lf = qm.config.layers[k];
    const std::string lp = "l" + std::to_string(k);
    const WireType wt = WireType::fixed(lf.weight);
    const WireType pt = WireType::fixed(product_format(layer_input_format(qm.config, k), lf.weight));

    // products[r] lists the neuron's nonzero products in input order.
    std::vector<std::vector<int>> products(layer.rows);
    std::size_t max_nnz = 0;
    for (std::size_t r = 0; r < layer.rows; ++r) max_nnz = std::max(max_nnz, layer.fan_in_nonzero(r));

    if (R == 1) {
      for (std::size_t r = 0; r < layer.rows; ++r)
        for (std::size_t c = 0; c < layer.cols; ++c) {
          if (layer.weight(r, c) == 0) continue;
          std::string name = lp + "_n" + std::to_string(r) + "_p" + std::to_string(c);
          int m = b.comb(CellKind::Mul, name + "_d", {cur[c], b.constant(wt, layer.weight(r, c))}, pt);
          products[r].push_back(b.reg(name, m));
        }
    } else {
      // Phase counter: phase 0 in the cycle a sample reaches this layer.
      int bits = std::max(1, static_cast<int>(std::bit_width(static_cast<unsigned>(R - 1))));
      const WireType ct = WireType::fixed(make_format(bits, bits, false, Rounding::TruncateTowardNegInf, Overflow::Wrap));
      int phase = b.wire(lp + "_phase", ct);
      int inc = b.comb(CellKind::Add, lp + "_phase_inc", {phase, b.constant(ct, 1)}, ct);
      Cell eq;
      eq.kind = CellKind::Comparator;
      eq.op = CompareOp::Eq;
      int last = b.comb(std::move(eq), lp + "_phase_last", {phase, b.constant(ct, R - 1)}, WireType::bit_vector(1));
      int next = b.comb(CellKind::Mux, lp + "_phase_next", {last, inc, b.constant(ct, 0)}, ct);
      b.reg(lp + "_phase_q", next, -1, ((-arrival) % R + R) % R, phase, 0);
      b.set_stage(phase, 0);

      struct Pair { std::size_t r, c; };
      std::vector<Pair> pairs;
      for (std::size_t r = 0; r < layer.rows; ++r)
        for (std::size_t c = 0; c < layer.cols; ++c)
          if (layer.weight(r, c) != 0) pairs.push_back({r, c});
      for (std::size_t m0 = 0, unit = 0; m0 < pairs.size(); m0 += static_cast<std::size_t>(R), ++unit) {
        const std::size_t count = std::min(pairs.size() - m0, static_cast<std::size_t>(R));
        const std::string up = lp + "_m" + std::to_string(unit);
        std::vector<int> xs{phase}, ws{phase};
        for (std::size_t j = 0; j < count; ++j) {
          xs.push_back(cur[pairs[m0 + j].c]);
          ws.push_back(b.constant(wt, layer.weight(pairs[m0 + j].r, pairs[m0 + j].c)));
        }
        int xsel = count == 1 ? xs[1] : b.comb(CellKind::Mux, up + "_x", xs, b.type(cur[0]));
        int wsel = count == 1 ? ws[1] : b.comb(CellKind::Mux, up + "_w", ws, wt);
        int prod = b.comb(CellKind::Mul, up + "_prod", {xsel, wsel}, pt);
        std::vector<int> shift;
        for (int i = 0; i + 1 < R; ++i)
          shift.push_back(b.reg(up + "_s" + std::to_string(i), i == 0 ? prod : shift.back()));
        for (std::size_t j = 0; j < count; ++j) {
          int d = j + 1 == static_cast<std::size_t>(R) ? prod : shift[static_cast<std::size_t>(R) - 2 - j];
          const Pair& p = pairs[m0 + j];
          std::string name = lp + "_n" + std::to_string(p.r) + "_p" + std::to_string(p.c);
          products[p.r].push_back(b.reg(name, d, last, 0, -1, arrival + R));
        }
      }
    }

    const int levels = adder_levels(max_nnz + 1);
    const WireType at = WireType::fixed(lf.activation);
    SigmoidTable table;
    if (layer.activation == Activation::Sigmoid) table = build_sigmoid_table(qm.config.sigmoid, lf.activation);
    std::vector<int> next;
    for (std::size_t r = 0; r < layer.rows; ++r) {
      const std::string np = lp + "_n" + std::to_string(r);
      auto ops = products[r];
      ops.push_back(b.constant(WireType::fixed(lf.bias), layer.bias[r]));
      int acc = reduce(b, ops, lf.accum, levels, np);
      int y = -1;
      switch (layer.activation) {
        case Activation::ReLU: {
          int v = acc;
          if (lf.accum.is_signed) v = b.comb(CellKind::ReluClamp, np + "_relu", {acc}, b.type(acc));
          y = b.comb(CellKind::SatCast, np + "_act", {v}, at);
          break;
        }
        case Activation::Sigmoid: {
          Cell c;
          c.kind = CellKind::LutRom;
          c.scale_log2 = table.scale_log2;
          c.offset = table.offset;
          c.entries = table.entries;
          c.below = table.below;
          c.above = table.above;
          y = b.comb(std::move(c), np + "_act", {acc}, at);
          break;
        }
        case Activation::Linear:
        case Activation::Softmax: y = b.comb(CellKind::SatCast, np + "_act", {acc}, at); break;
      }
      next.push_back(b.delay(lp + "_y" + std::to_string(r), y));
    }
    arrival += (R == 1 ? 1 : R) + levels + 1;
    cur = std::move(next);
  }
  b.finish(cur, in_valid, arrival);
  require_verified(n);
  return n;
}

NetlistIr lower(const QuantizedModel& qm, const LowerOptions& opts) {
  if (const auto* bdt = std::get_if<QuantizedBdt>(&qm)) return lower_bdt(*bdt, opts);
  return lower_fcnn(std::get<QuantizedFcnn>(qm), opts);
}

}  // namespace mlrtl
