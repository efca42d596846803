#include "mlrtl/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlrtl/emulate.hpp"
#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

bool is_power_of_two(double v) {
  if (!(v > 0) || !std::isfinite(v)) return false;
  int e = 0;
  return std::frexp(v, &e) == 0.5;
}

FixedPointFormat role_format(const char* role, double max_abs, int width, Rounding rounding) {
  if (width < 2)
    throw Error(ErrorCode::WidthTooSmall,
                std::string(role) + " width must be >= 2, got " + std::to_string(width));
  if (width > 64)
    throw Error(ErrorCode::WidthTooSmall,
                std::string(role) + " width must be <= 64, got " + std::to_string(width));
  int ib = signed_integer_bits(max_abs);
  if (ib > width - 1)
    throw Error(ErrorCode::WidthTooSmall, std::string(role) + " needs " + std::to_string(ib) +
                                              " integer bits but width is " +
                                              std::to_string(width));
  return make_format(width, ib, true, rounding, Overflow::Saturate);
}

// Accumulator: fractional bits of the widest operand, integer bits covering
// `bound`. width == 0 means "exactly what is needed".
FixedPointFormat accum_format(double bound, int frac, int width) {
  int ib = signed_integer_bits(bound);
  int total = width == 0 ? ib + frac : width;
  if (total > 64)
    throw Error(ErrorCode::WidthTooSmall, "accumulator needs " + std::to_string(ib + frac) +
                                              " bits (" + std::to_string(ib) + " integer), over 64");
  if (total - ib < frac)
    throw Error(ErrorCode::WidthTooSmall, "accumulator width " + std::to_string(total) +
                                              " cannot hold " + std::to_string(frac) +
                                              " fractional and " + std::to_string(ib) +
                                              " integer bits");
  return make_format(total, total - frac, true, Rounding::TruncateTowardNegInf,
                     Overflow::Saturate);
}

double ulp(const FixedPointFormat& f) { return std::ldexp(1.0, -f.fractional_bits()); }

double max_abs_input(const Dataset& calib) {
  double m = 0.0;
  for (double v : calib.features) m = std::max(m, std::fabs(v));
  return m;
}

// Values within one ulp of the range round or saturate onto its edge; anything
// further out means the format is too narrow for the parameter.
void check_fits(const char* what, double v, const FixedPointFormat& fmt) {
  double u = ulp(fmt);
  double lo = std::ldexp(static_cast<double>(fmt.min_raw()), -fmt.fractional_bits());
  bool ok = v >= lo - u && v <= fmt.max_value() + u;
  if (!ok)
    throw Error(ErrorCode::WidthTooSmall,
                std::string(what) + " " + std::to_string(v) + " is outside " + to_string(fmt));
}

}  // namespace

int signed_integer_bits(double max_abs) {
  if (!(max_abs >= 1.0)) return 1;
  int e = 0;
  std::frexp(max_abs, &e);  // max_abs < 2^e
  return e + 1;
}

void check_sigmoid_config(const SigmoidLutConfig& lut) {
  if (lut.size < 2 || (lut.size & (lut.size - 1)) != 0)
    throw Error(ErrorCode::InvalidConfig, "sigmoid table size must be a power of two >= 2");
  if (!is_power_of_two(lut.range))
    throw Error(ErrorCode::InvalidConfig, "sigmoid table range must be a power of two");
}

void check_bdt_config(const QuantizationConfig& cfg) {
  if (!cfg.bdt) throw Error(ErrorCode::InvalidConfig, "config has no BDT formats");
  cfg.input.check();
  const BdtFormats& f = *cfg.bdt;
  f.threshold.check();
  f.leaf.check();
  f.accum.check();
  if (f.accum.fractional_bits() < f.leaf.fractional_bits())
    throw Error(ErrorCode::InvalidConfig, "accum_fmt " + to_string(f.accum) +
                                              " has fewer fractional bits than leaf_fmt " +
                                              to_string(f.leaf));
}

const FixedPointFormat& layer_input_format(const QuantizationConfig& cfg, std::size_t k) {
  return k == 0 ? cfg.input : cfg.layers.at(k - 1).activation;
}

void check_fcnn_config(const QuantizationConfig& cfg, std::size_t n_layers) {
  cfg.input.check();
  check_sigmoid_config(cfg.sigmoid);
  if (cfg.layers.size() != n_layers)
    throw Error(ErrorCode::InvalidConfig, "config has " + std::to_string(cfg.layers.size()) +
                                              " layer formats, model has " +
                                              std::to_string(n_layers) + " layers");
  for (std::size_t k = 0; k < n_layers; ++k) {
    const LayerFormats& lf = cfg.layers[k];
    for (const auto* f : {&lf.weight, &lf.bias, &lf.accum, &lf.activation}) f->check();
    const FixedPointFormat& in = layer_input_format(cfg, k);
    product_format(in, lf.weight);  // throws when the product exceeds 64 bits
    int need = std::max(in.fractional_bits() + lf.weight.fractional_bits(),
                        lf.bias.fractional_bits());
    if (lf.accum.fractional_bits() < need)
      throw Error(ErrorCode::InvalidConfig,
                  "layer " + std::to_string(k) + " accum_fmt " + to_string(lf.accum) + " keeps " +
                      std::to_string(lf.accum.fractional_bits()) +
                      " fractional bits, operands need " + std::to_string(need));
  }
}

QuantizationConfig calibrate_formats(const BdtEnsemble& m, const Dataset& calib,
                                     const CalibrationWidths& widths) {
  if (calib.rows() == 0) throw Error(ErrorCode::InvalidArgument, "calibration set is empty");
  check_feature_count(calib, static_cast<std::size_t>(m.n_features));

  double max_threshold = 0.0;
  double max_leaf = 0.0;
  for (const ClassTree& ct : m.trees)
    for (const TreeNode& n : ct.tree.nodes) {
      if (n.is_leaf)
        max_leaf = std::max(max_leaf, std::fabs(n.score));
      else
        max_threshold = std::max(max_threshold, std::fabs(n.threshold));
    }
  for (double b : m.base_scores) max_leaf = std::max(max_leaf, std::fabs(b));

  QuantizationConfig cfg;
  cfg.input = role_format("input", max_abs_input(calib), widths.input, Rounding::RoundNearestEven);
  BdtFormats f;
  f.threshold = role_format("threshold", max_threshold, widths.threshold, Rounding::RoundNearestEven);
  f.leaf = role_format("leaf", max_leaf, widths.leaf, Rounding::RoundNearestEven);

  // Worst case over classes of |base| + sum of per-tree max |leaf|, padded by
  // one leaf ulp per operand for rounding.
  std::vector<double> bound(static_cast<std::size_t>(m.n_classes), 0.0);
  for (int c = 0; c < m.n_classes; ++c) bound[c] = std::fabs(m.base_scores[c]) + ulp(f.leaf);
  for (const ClassTree& ct : m.trees) {
    double tmax = 0.0;
    for (const TreeNode& n : ct.tree.nodes)
      if (n.is_leaf) tmax = std::max(tmax, std::fabs(n.score));
    bound[ct.class_index] += tmax + ulp(f.leaf);
  }
  double worst = *std::max_element(bound.begin(), bound.end());
  f.accum = accum_format(worst, f.leaf.fractional_bits(), widths.accum);
  cfg.bdt = f;
  check_bdt_config(cfg);
  return cfg;
}

QuantizationConfig calibrate_formats(const FcnnModel& m, const Dataset& calib,
                                     const CalibrationWidths& widths) {
  if (calib.rows() == 0) throw Error(ErrorCode::InvalidArgument, "calibration set is empty");
  auto violations = validate_fcnn(m);
  if (!violations.empty()) throw Error(ErrorCode::StructuralViolation, describe(violations));
  check_feature_count(calib, m.n_inputs());

  // Max |output| per layer over float forward passes (order-insensitive).
  std::vector<double> act_max(m.layers.size(), 0.0);
  for (std::size_t i = 0; i < calib.rows(); ++i) {
    auto outs = forward_layers(m, calib.row(i));
    for (std::size_t k = 0; k < outs.size(); ++k)
      for (double v : outs[k]) act_max[k] = std::max(act_max[k], std::fabs(v));
  }

  QuantizationConfig cfg;
  cfg.input = role_format("input", max_abs_input(calib), widths.input, Rounding::RoundNearestEven);
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const DenseLayer& layer = m.layers[k];
    double wmax = 0.0, bmax = 0.0;
    for (double w : layer.weights.data) wmax = std::max(wmax, std::fabs(w));
    for (double b : layer.bias) bmax = std::max(bmax, std::fabs(b));

    LayerFormats lf;
    lf.weight = role_format("weight", wmax, widths.weight, Rounding::RoundNearestEven);
    lf.bias = role_format("bias", bmax, widths.bias, Rounding::RoundNearestEven);
    lf.activation = role_format("activation", act_max[k], widths.activation,
                                Rounding::TruncateTowardNegInf);

    const FixedPointFormat& in = k == 0 ? cfg.input : cfg.layers[k - 1].activation;
    double in_max = std::ldexp(1.0, in.integer_bits - 1);
    double worst = 0.0;
    for (std::size_t r = 0; r < layer.n_out(); ++r) {
      double s = std::fabs(layer.bias[r]) + ulp(lf.bias);
      for (double w : layer.weights.row(r))
        if (w != 0.0) s += (std::fabs(w) + ulp(lf.weight)) * in_max;
      worst = std::max(worst, s);
    }
    int frac = std::max(in.fractional_bits() + lf.weight.fractional_bits(),
                        lf.bias.fractional_bits());
    lf.accum = accum_format(worst, frac, widths.accum);
    cfg.layers.push_back(lf);
  }
  check_fcnn_config(cfg, m.layers.size());
  return cfg;
}

QuantizedBdt quantize_bdt(const BdtEnsemble& m, const QuantizationConfig& cfg) {
  auto violations = validate_bdt(m);
  if (!violations.empty()) throw Error(ErrorCode::StructuralViolation, describe(violations));
  check_bdt_config(cfg);
  const BdtFormats& f = *cfg.bdt;
  FixedPointFormat thr = f.threshold;
  thr.rounding = Rounding::RoundNearestEven;

  QuantizedBdt q;
  q.n_features = m.n_features;
  q.n_classes = m.n_classes;
  q.objective = m.objective;
  q.config = cfg;
  for (double b : m.base_scores) {
    check_fits("base score", b, f.leaf);
    q.base_scores.push_back(quantize_real(b, f.leaf).raw);
  }
  for (const ClassTree& ct : m.trees) {
    QuantizedTree qt;
    qt.class_index = ct.class_index;
    for (const TreeNode& n : ct.tree.nodes) {
      QuantizedNode qn;
      qn.is_leaf = n.is_leaf;
      qn.feature = n.feature;
      qn.left = n.left;
      qn.right = n.right;
      if (n.is_leaf) {
        check_fits("leaf score", n.score, f.leaf);
        qn.score = quantize_real(n.score, f.leaf).raw;
      } else {
        check_fits("threshold", n.threshold, thr);
        qn.threshold = quantize_real(n.threshold, thr).raw;
      }
      qt.nodes.push_back(qn);
    }
    q.trees.push_back(std::move(qt));
  }
  return q;
}

std::size_t PruneMask::count() const {
  return static_cast<std::size_t>(std::count(pruned.begin(), pruned.end(), std::uint8_t{1}));
}

std::size_t prune_count(double sparsity, std::size_t n_weights) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "sparsity must lie in [0, 1]");
  // Decimal sparsities like 0.29 are not exact in binary; snap products that
  // are integral up to rounding noise before taking the floor.
  double p = sparsity * static_cast<double>(n_weights);
  double r = std::round(p);
  if (std::fabs(p - r) <= 1e-9 * std::max(1.0, p)) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::floor(p));
}

PruneResult prune_fcnn(const FcnnModel& m, const PruningConfig& p) {
  auto violations = validate_fcnn(m);
  if (!violations.empty()) throw Error(ErrorCode::StructuralViolation, describe(violations));
  if (p.sparsity.size() != 1 && p.sparsity.size() != m.layers.size())
    throw Error(ErrorCode::InvalidConfig, "sparsity needs 1 or " +
                                              std::to_string(m.layers.size()) + " entries");
  PruneResult out{m, {}};
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    DenseLayer& layer = out.model.layers[k];
    const std::size_t n = layer.weights.data.size();
    std::size_t drop = prune_count(p.sparsity.size() == 1 ? p.sparsity[0] : p.sparsity[k], n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Row-major index order is (row, col) lexicographic order.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::fabs(layer.weights.data[a]) < std::fabs(layer.weights.data[b]);
    });
    PruneMask mask{layer.weights.rows, layer.weights.cols, std::vector<std::uint8_t>(n, 0)};
    for (std::size_t i = 0; i < drop; ++i) {
      layer.weights.data[order[i]] = 0.0;
      mask.pruned[order[i]] = 1;
    }
    out.masks.push_back(std::move(mask));
  }
  return out;
}

std::size_t QuantizedLayer::fan_in_nonzero(std::size_t r) const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < cols; ++c)
    if (weight(r, c) != 0) ++n;
  return n;
}

std::size_t QuantizedLayer::nonzero_weights() const {
  return static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](int128 w) { return w != 0; }));
}

QuantizedFcnn quantize_fcnn(const FcnnModel& m, const QuantizationConfig& cfg,
                            const std::vector<PruneMask>& masks) {
  auto violations = validate_fcnn(m);
  if (!violations.empty()) throw Error(ErrorCode::StructuralViolation, describe(violations));
  check_fcnn_config(cfg, m.layers.size());
  if (!masks.empty() && masks.size() != m.layers.size())
    throw Error(ErrorCode::InvalidArgument, "one prune mask per layer required");

  QuantizedFcnn q;
  q.config = cfg;
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const DenseLayer& layer = m.layers[k];
    const LayerFormats& lf = cfg.layers[k];
    QuantizedLayer ql;
    ql.rows = layer.n_out();
    ql.cols = layer.n_in();
    ql.activation = layer.activation;
    if (masks.empty()) {
      ql.prune_mask = PruneMask{ql.rows, ql.cols, std::vector<std::uint8_t>(ql.rows * ql.cols, 0)};
    } else {
      ql.prune_mask = masks[k];
      if (ql.prune_mask.rows != ql.rows || ql.prune_mask.cols != ql.cols ||
          ql.prune_mask.pruned.size() != ql.rows * ql.cols)
        throw Error(ErrorCode::InvalidArgument,
                    "prune mask shape differs from layer " + std::to_string(k));
    }
    for (std::size_t i = 0; i < layer.weights.data.size(); ++i) {
      double w = ql.prune_mask.pruned[i] ? 0.0 : layer.weights.data[i];
      check_fits("weight", w, lf.weight);
      ql.weights.push_back(quantize_real(w, lf.weight).raw);
    }
    for (double b : layer.bias) {
      check_fits("bias", b, lf.bias);
      ql.bias.push_back(quantize_real(b, lf.bias).raw);
    }
    q.layers.push_back(std::move(ql));
  }
  return q;
}

BdtEnsemble dequantize_model(const QuantizedBdt& q) {
  const BdtFormats& f = q.formats();
  BdtEnsemble m;
  m.n_features = q.n_features;
  m.n_classes = q.n_classes;
  m.objective = q.objective;
  for (int128 b : q.base_scores) m.base_scores.push_back(dequantize({b, f.leaf}));
  for (const QuantizedTree& qt : q.trees) {
    ClassTree ct;
    ct.class_index = qt.class_index;
    for (const QuantizedNode& n : qt.nodes) {
      ct.tree.nodes.push_back(n.is_leaf ? TreeNode::leaf(dequantize({n.score, f.leaf}))
                                        : TreeNode::split(n.feature,
                                                          dequantize({n.threshold, f.threshold}),
                                                          n.left, n.right));
    }
    m.trees.push_back(std::move(ct));
  }
  return m;
}

FcnnModel dequantize_model(const QuantizedFcnn& q) {
  FcnnModel m;
  for (std::size_t k = 0; k < q.layers.size(); ++k) {
    const QuantizedLayer& ql = q.layers[k];
    const LayerFormats& lf = q.config.layers[k];
    DenseLayer layer;
    layer.activation = ql.activation;
    layer.weights = Matrix(ql.rows, ql.cols);
    for (std::size_t i = 0; i < ql.weights.size(); ++i)
      layer.weights.data[i] = dequantize({ql.weights[i], lf.weight});
    for (int128 b : ql.bias) layer.bias.push_back(dequantize({b, lf.bias}));
    m.layers.push_back(std::move(layer));
  }
  return m;
}

}  // namespace mlrtl
