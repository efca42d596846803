#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mlrtl/dataset.hpp"
#include "mlrtl/fixedpoint.hpp"
#include "mlrtl/model.hpp"

namespace mlrtl {

struct BdtFormats {
  FixedPointFormat threshold;
  FixedPointFormat leaf;   // leaf scores and base scores
  FixedPointFormat accum;  // per-class score accumulator
  bool operator==(const BdtFormats&) const = default;
};

struct LayerFormats {
  FixedPointFormat weight;
  FixedPointFormat bias;
  FixedPointFormat accum;
  FixedPointFormat activation;
  bool operator==(const LayerFormats&) const = default;
};

// Piecewise-constant sigmoid over [-range, range) with `size` bins. Both must
// be powers of two so that bin lookup is a shift of the datapath value.
struct SigmoidLutConfig {
  int size = 1024;
  double range = 8.0;
  bool operator==(const SigmoidLutConfig&) const = default;
};

struct QuantizationConfig {
  FixedPointFormat input;
  std::optional<BdtFormats> bdt;
  std::vector<LayerFormats> layers;  // fcNN, one entry per dense layer
  SigmoidLutConfig sigmoid;
  bool operator==(const QuantizationConfig&) const = default;
};

// Each accumulator must keep at least the fractional bits of every operand
// it sums; for dense layers the operands are full-precision products.
// Throws Error(InvalidConfig).
void check_bdt_config(const QuantizationConfig& cfg);
void check_fcnn_config(const QuantizationConfig& cfg, std::size_t n_layers);
void check_sigmoid_config(const SigmoidLutConfig& lut);

// Input format of dense layer k: the network input format for k == 0,
// otherwise the previous layer's activation format.
const FixedPointFormat& layer_input_format(const QuantizationConfig& cfg, std::size_t k);

struct PruningConfig {
  std::vector<double> sparsity;  // one entry per layer, or a single entry for all
};

struct PruneMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pruned;  // 1 where the weight was zeroed

  std::size_t count() const;
  bool operator==(const PruneMask&) const = default;
};

struct QuantizedNode {
  bool is_leaf = true;
  int feature = 0;
  int128 threshold = 0;
  int left = -1;
  int right = -1;
  int128 score = 0;
  bool operator==(const QuantizedNode&) const = default;
};

struct QuantizedTree {
  int class_index = 0;
  std::vector<QuantizedNode> nodes;
  bool operator==(const QuantizedTree&) const = default;
};

struct QuantizedBdt {
  int n_features = 0;
  int n_classes = 1;
  Objective objective = Objective::RawScore;
  std::vector<QuantizedTree> trees;
  std::vector<int128> base_scores;  // leaf format
  QuantizationConfig config;

  const BdtFormats& formats() const { return *config.bdt; }
  bool operator==(const QuantizedBdt&) const = default;
};

struct QuantizedLayer {
  std::size_t rows = 0;  // outputs
  std::size_t cols = 0;  // inputs
  std::vector<int128> weights;  // row-major, weight format
  std::vector<int128> bias;     // bias format
  Activation activation = Activation::Linear;
  PruneMask prune_mask;

  int128 weight(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
  // Nonzero quantized weights of one output neuron (its multiplier count).
  std::size_t fan_in_nonzero(std::size_t r) const;
  std::size_t nonzero_weights() const;
  bool operator==(const QuantizedLayer&) const = default;
};

struct QuantizedFcnn {
  std::vector<QuantizedLayer> layers;
  QuantizationConfig config;

  std::size_t n_inputs() const { return layers.empty() ? 0 : layers.front().cols; }
  std::size_t n_outputs() const { return layers.empty() ? 0 : layers.back().rows; }
  bool operator==(const QuantizedFcnn&) const = default;
};

using QuantizedModel = std::variant<QuantizedBdt, QuantizedFcnn>;

// Total bit widths per role. accum == 0 sizes the accumulator automatically:
// fractional bits from its operands, integer bits from a worst-case bound.
struct CalibrationWidths {
  int input = 16;
  int threshold = 16;
  int leaf = 16;
  int weight = 16;
  int bias = 16;
  int activation = 16;
  int accum = 0;

  static CalibrationWidths uniform(int w) { return {w, w, w, w, w, w, 0}; }
};

// Smallest signed integer_bits whose range covers max_abs (sign bit included).
int signed_integer_bits(double max_abs);

// Range-driven formats. Parameters use the exact max over the model; the
// input format uses the calibration rows; activation formats use the max
// over float forward passes of the calibration rows. Throws
// Error(WidthTooSmall) when a role needs more than W - 1 integer bits.
QuantizationConfig calibrate_formats(const BdtEnsemble& m, const Dataset& calib,
                                     const CalibrationWidths& widths);
QuantizationConfig calibrate_formats(const FcnnModel& m, const Dataset& calib,
                                     const CalibrationWidths& widths);

// Thresholds round to nearest even; leaves and base scores use the leaf
// format's rounding. Throws Error(WidthTooSmall) when a parameter lies
// outside its format's range.
QuantizedBdt quantize_bdt(const BdtEnsemble& m, const QuantizationConfig& cfg);

struct PruneResult {
  FcnnModel model;
  std::vector<PruneMask> masks;
};

// Per layer, zeroes exactly floor(sparsity * n_weights) weights of smallest
// magnitude (ties by row, then column). Biases are never pruned.
PruneResult prune_fcnn(const FcnnModel& m, const PruningConfig& p);
std::size_t prune_count(double sparsity, std::size_t n_weights);

QuantizedFcnn quantize_fcnn(const FcnnModel& m, const QuantizationConfig& cfg,
                            const std::vector<PruneMask>& masks = {});

BdtEnsemble dequantize_model(const QuantizedBdt& q);
FcnnModel dequantize_model(const QuantizedFcnn& q);

}  // namespace mlrtl
