#include "mlrtl/emulate.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.begin(), z.end());
  if (out.empty()) return out;
  double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

int predict(std::span<const double> decision, double threshold) {
  if (decision.size() == 1) return decision[0] > threshold ? 1 : 0;
  return argmax(decision);
}

int predict_fixed(std::span<const FixedPointValue> values, Activation final_activation) {
  if (values.size() == 1) {
    // 0.5 == raw 1 in fixed<2,1,u>; 0 == raw 0.
    FixedPointValue thr{final_activation == Activation::Sigmoid ? 1 : 0, make_format(2, 1, false)};
    return fxp_compare(values[0], thr) == std::strong_ordering::greater ? 1 : 0;
  }
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (fxp_compare(values[i], values[best]) == std::strong_ordering::greater)
      best = static_cast<int>(i);
  return best;
}

void check_input(std::span<const FixedPointValue> x, std::size_t n, const FixedPointFormat& fmt) {
  if (x.size() != n)
    throw Error(ErrorCode::InvalidArgument,
                "expected " + std::to_string(n) + " inputs, got " + std::to_string(x.size()));
  for (const FixedPointValue& v : x)
    if (!v.format.same_grid(fmt) || !raw_fits(v.raw, fmt))
      throw Error(ErrorCode::InvalidArgument, "input is not in " + to_string(fmt));
}

template <typename Fn>
void parallel_rows(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<double> FixedScores::as_doubles() const {
  std::vector<double> out;
  for (const auto& v : values) out.push_back(dequantize(v));
  return out;
}

int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

double binary_threshold(Activation final_activation) {
  return final_activation == Activation::Sigmoid ? 0.5 : 0.0;
}

double decision_margin(std::span<const double> decision, double threshold) {
  if (decision.empty()) return 0.0;
  if (decision.size() == 1) return std::fabs(decision[0] - threshold);
  double top = -INFINITY, second = -INFINITY;
  for (double v : decision) {
    if (v > top) {
      second = top;
      top = v;
    } else if (v > second) {
      second = v;
    }
  }
  return top - second;
}

FloatScores infer_float_bdt(const BdtEnsemble& m, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(m.n_features))
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(m.n_features) +
                                                " features, got " + std::to_string(x.size()));
  FloatScores s;
  s.values = m.base_scores;
  for (const ClassTree& ct : m.trees) {
    int id = 0;
    while (!ct.tree.nodes[id].is_leaf) {
      const TreeNode& n = ct.tree.nodes[id];
      id = x[n.feature] < n.threshold ? n.left : n.right;
    }
    s.values[ct.class_index] += ct.tree.nodes[id].score;
  }
  s.decision = s.values;
  s.predicted_class = predict(s.decision, 0.0);
  return s;
}

std::vector<std::vector<double>> forward_layers(const FcnnModel& m, std::span<const double> x) {
  if (x.size() != m.n_inputs())
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(m.n_inputs()) +
                                                " inputs, got " + std::to_string(x.size()));
  std::vector<std::vector<double>> outs;
  std::vector<double> cur(x.begin(), x.end());
  for (const DenseLayer& layer : m.layers) {
    std::vector<double> next(layer.n_out());
    for (std::size_t r = 0; r < layer.n_out(); ++r) {
      double acc = 0.0;
      auto row = layer.weights.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * cur[c];
      acc += layer.bias[r];
      switch (layer.activation) {
        case Activation::ReLU: acc = std::max(0.0, acc); break;
        case Activation::Sigmoid: acc = sigmoid(acc); break;
        case Activation::Linear:
        case Activation::Softmax: break;
      }
      next[r] = acc;
    }
    outs.push_back(next);
    cur = std::move(next);
  }
  return outs;
}

FloatScores infer_float_fcnn(const FcnnModel& m, std::span<const double> x) {
  auto outs = forward_layers(m, x);
  FloatScores s;
  s.decision = outs.back();
  const Activation last = m.layers.back().activation;
  s.values = (last == Activation::Softmax && s.decision.size() > 1) ? softmax(s.decision)
                                                                     : s.decision;
  s.predicted_class = predict(s.decision, binary_threshold(last));
  return s;
}

FloatScores infer_float(const Model& m, std::span<const double> x) {
  return std::visit(
      [&](const auto& model) {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, BdtEnsemble>)
          return infer_float_bdt(model, x);
        else
          return infer_float_fcnn(model, x);
      },
      m);
}

std::vector<double> apply_objective(Objective objective, std::span<const double> raw) {
  switch (objective) {
    case Objective::Sigmoid: {
      std::vector<double> out;
      for (double v : raw) out.push_back(sigmoid(v));
      return out;
    }
    case Objective::Softmax: return softmax(raw);
    case Objective::RawScore: break;
  }
  return {raw.begin(), raw.end()};
}

std::vector<FixedPointValue> quantize_input(std::span<const double> x, const FixedPointFormat& fmt) {
  std::vector<FixedPointValue> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(quantize_real(v, fmt));
  return out;
}

FixedPointValue accumulate(std::vector<FixedPointValue> operands, const FixedPointFormat& accum,
                           AccumulationOrder order) {
  if (operands.empty()) return {0, accum};
  if (operands.size() == 1) return fxp_cast(operands[0], accum);
  if (order == AccumulationOrder::Sequential) {
    // Base score / bias is the last operand; it seeds the running sum.
    FixedPointValue acc = fxp_cast(operands.back(), accum);
    for (std::size_t i = 0; i + 1 < operands.size(); ++i) acc = fxp_add(acc, operands[i], accum);
    return acc;
  }
  while (operands.size() > 1) {
    std::vector<FixedPointValue> next;
    next.reserve((operands.size() + 1) / 2);
    for (std::size_t i = 0; i < operands.size(); i += 2) {
      if (i + 1 < operands.size())
        next.push_back(fxp_add(operands[i], operands[i + 1], accum));
      else
        next.push_back(operands[i]);
    }
    operands = std::move(next);
  }
  return operands[0];
}

FixedScores infer_fixed_bdt(const QuantizedBdt& qm, std::span<const FixedPointValue> x,
                            const EmulatorOptions& opts) {
  const BdtFormats& f = qm.formats();
  check_input(x, static_cast<std::size_t>(qm.n_features), qm.config.input);
  std::vector<std::vector<FixedPointValue>> operands(static_cast<std::size_t>(qm.n_classes));
  for (const QuantizedTree& qt : qm.trees) {
    int id = 0;
    while (!qt.nodes[id].is_leaf) {
      const QuantizedNode& n = qt.nodes[id];
      bool left = fxp_compare(x[n.feature], FixedPointValue{n.threshold, f.threshold}) ==
                  std::strong_ordering::less;
      id = left ? n.left : n.right;
    }
    operands[qt.class_index].push_back({qt.nodes[id].score, f.leaf});
  }
  FixedScores s;
  for (int c = 0; c < qm.n_classes; ++c) {
    operands[c].push_back({qm.base_scores[c], f.leaf});
    s.values.push_back(accumulate(std::move(operands[c]), f.accum, opts.order));
  }
  s.predicted_class = predict_fixed(s.values, Activation::Linear);
  return s;
}

SigmoidTable build_sigmoid_table(const SigmoidLutConfig& lut, const FixedPointFormat& out) {
  check_sigmoid_config(lut);
  SigmoidTable t;
  t.format = out;
  int size_log2 = 0, range_exp = 0;
  std::frexp(static_cast<double>(lut.size), &size_log2);
  std::frexp(lut.range, &range_exp);
  // size = 2^(size_log2-1), range = 2^(range_exp-1); bins per unit = size / (2 range).
  t.scale_log2 = (size_log2 - 1) - 1 - (range_exp - 1);
  t.offset = lut.size / 2;
  FixedPointFormat rne = out;
  rne.rounding = Rounding::RoundNearestEven;
  const double width = 2.0 * lut.range / lut.size;
  for (int i = 0; i < lut.size; ++i) {
    double mid = -lut.range + (i + 0.5) * width;
    t.entries.push_back(quantize_real(sigmoid(mid), rne).raw);
  }
  t.below = quantize_real(0.0, rne).raw;
  t.above = quantize_real(1.0, rne).raw;
  return t;
}

FixedPointValue sigmoid_lookup(const SigmoidTable& table, const FixedPointValue& v) {
  int128 idx = fxp_floor_scaled(v, table.scale_log2) + table.offset;
  if (idx < 0) return {table.below, table.format};
  if (idx >= static_cast<int128>(table.entries.size())) return {table.above, table.format};
  return {table.entries[static_cast<std::size_t>(idx)], table.format};
}

FixedScores infer_fixed_fcnn(const QuantizedFcnn& qm, std::span<const FixedPointValue> x,
                             const EmulatorOptions& opts) {
  if (qm.layers.empty()) throw Error(ErrorCode::EmptyModel, "model has no layers");
  check_input(x, qm.n_inputs(), qm.config.input);
  std::vector<FixedPointValue> cur(x.begin(), x.end());
  for (std::size_t k = 0; k < qm.layers.size(); ++k) {
    const QuantizedLayer& layer = qm.layers[k];
    const LayerFormats& lf = qm.config.layers[k];
    const FixedPointFormat prod_fmt = product_format(layer_input_format(qm.config, k), lf.weight);
    SigmoidTable table;
    if (layer.activation == Activation::Sigmoid)
      table = build_sigmoid_table(qm.config.sigmoid, lf.activation);

    std::vector<FixedPointValue> next;
    next.reserve(layer.rows);
    for (std::size_t r = 0; r < layer.rows; ++r) {
      std::vector<FixedPointValue> ops;
      for (std::size_t c = 0; c < layer.cols; ++c) {
        int128 w = layer.weight(r, c);
        if (w != 0) ops.push_back(fxp_mul(cur[c], FixedPointValue{w, lf.weight}, prod_fmt));
      }
      ops.push_back({layer.bias[r], lf.bias});
      FixedPointValue acc = accumulate(std::move(ops), lf.accum, opts.order);
      switch (layer.activation) {
        case Activation::ReLU:
          if (acc.raw < 0) acc.raw = 0;
          next.push_back(fxp_cast(acc, lf.activation));
          break;
        case Activation::Sigmoid: next.push_back(sigmoid_lookup(table, acc)); break;
        case Activation::Linear:
        case Activation::Softmax: next.push_back(fxp_cast(acc, lf.activation)); break;
      }
    }
    cur = std::move(next);
  }
  FixedScores s;
  s.values = std::move(cur);
  s.predicted_class = predict_fixed(s.values, qm.layers.back().activation);
  return s;
}

FixedScores infer_fixed(const QuantizedModel& qm, std::span<const FixedPointValue> x,
                        const EmulatorOptions& opts) {
  return std::visit(
      [&](const auto& model) {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, QuantizedBdt>)
          return infer_fixed_bdt(model, x, opts);
        else
          return infer_fixed_fcnn(model, x, opts);
      },
      qm);
}

std::size_t n_features(const QuantizedModel& qm) {
  return std::visit(
      [](const auto& model) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, QuantizedBdt>)
          return static_cast<std::size_t>(model.n_features);
        else
          return model.n_inputs();
      },
      qm);
}

const FixedPointFormat& input_format(const QuantizedModel& qm) {
  return std::visit([](const auto& model) -> const FixedPointFormat& { return model.config.input; },
                    qm);
}

FloatBatch batch_infer_float(const Model& m, const Dataset& d, int jobs) {
  FloatBatch out;
  out.scores.resize(d.rows());
  parallel_rows(d.rows(), jobs, [&](std::size_t i) { out.scores[i] = infer_float(m, d.row(i)); });
  for (const auto& s : out.scores) out.predictions.push_back(s.predicted_class);
  return out;
}

FixedBatch batch_infer_fixed(const QuantizedModel& qm, const Dataset& d,
                             const EmulatorOptions& opts, int jobs) {
  check_feature_count(d, n_features(qm));
  const FixedPointFormat& fmt = input_format(qm);
  FixedBatch out;
  out.scores.resize(d.rows());
  parallel_rows(d.rows(), jobs, [&](std::size_t i) {
    out.scores[i] = infer_fixed(qm, quantize_input(d.row(i), fmt), opts);
  });
  for (const auto& s : out.scores) out.predictions.push_back(s.predicted_class);
  return out;
}

}  // namespace mlrtl
