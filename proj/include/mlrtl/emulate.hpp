#pragma once

#include <span>
#include <vector>

#include "mlrtl/dataset.hpp"
#include "mlrtl/fixedpoint.hpp"
#include "mlrtl/model.hpp"
#include "mlrtl/quantize.hpp"

namespace mlrtl {

// Saturating adds are not associative, so the summation order is part of the
// fixed-point semantics. Tree order is the balanced pairwise reduction the
// generated hardware uses: operands are paired (0,1), (2,3), ... level by
// level and an odd trailing operand passes to the next level unchanged. The
// operand list is the per-tree scores of a class in tree-index order followed
// by the base score, or a neuron's nonzero products in input-index order
// followed by the bias. Sequential order starts from the base score (bias) and
// adds the remaining operands left to right.
enum class AccumulationOrder { Tree, Sequential };

struct EmulatorOptions {
  AccumulationOrder order = AccumulationOrder::Tree;
};

// values: reported per-class outputs (softmax applied for fcNN softmax
// layers). decision: what the class decision is taken on (pre-softmax).
struct FloatScores {
  std::vector<double> values;
  std::vector<double> decision;
  int predicted_class = 0;
};

struct FixedScores {
  std::vector<FixedPointValue> values;
  int predicted_class = 0;

  std::vector<double> as_doubles() const;
  bool operator==(const FixedScores&) const = default;
};

// Lowest index wins ties.
int argmax(std::span<const double> v);

// Single-output models predict class 1 iff the output exceeds the threshold
// (0.5 after a sigmoid, 0 otherwise). Multi-output models use argmax.
double binary_threshold(Activation final_activation);

// Distance of the decision from the nearest class change: top-1 minus top-2
// for multi-output decisions, |value - threshold| for single-output ones.
double decision_margin(std::span<const double> decision, double threshold);

FloatScores infer_float_bdt(const BdtEnsemble& m, std::span<const double> x);
FloatScores infer_float_fcnn(const FcnnModel& m, std::span<const double> x);
FloatScores infer_float(const Model& m, std::span<const double> x);

// Per-layer float outputs; the softmax layer reports its logits.
std::vector<std::vector<double>> forward_layers(const FcnnModel& m, std::span<const double> x);

// Probabilities for reporting; argmax is unaffected.
std::vector<double> apply_objective(Objective objective, std::span<const double> raw);

std::vector<FixedPointValue> quantize_input(std::span<const double> x, const FixedPointFormat& fmt);

FixedScores infer_fixed_bdt(const QuantizedBdt& qm, std::span<const FixedPointValue> x,
                            const EmulatorOptions& opts = {});
FixedScores infer_fixed_fcnn(const QuantizedFcnn& qm, std::span<const FixedPointValue> x,
                             const EmulatorOptions& opts = {});
FixedScores infer_fixed(const QuantizedModel& qm, std::span<const FixedPointValue> x,
                        const EmulatorOptions& opts = {});

// Reduces operands into accum using the given order. A single operand is
// cast into accum.
FixedPointValue accumulate(std::vector<FixedPointValue> operands, const FixedPointFormat& accum,
                           AccumulationOrder order);

struct SigmoidTable {
  int scale_log2 = 0;  // bin index = floor(v * 2^scale_log2) + offset
  int offset = 0;
  std::vector<int128> entries;
  int128 below = 0;  // index < 0
  int128 above = 0;  // index >= entries.size()
  FixedPointFormat format;
};

// entry i = round-nearest-even of sigmoid at the midpoint of bin i.
SigmoidTable build_sigmoid_table(const SigmoidLutConfig& lut, const FixedPointFormat& out);
FixedPointValue sigmoid_lookup(const SigmoidTable& table, const FixedPointValue& v);

struct FloatBatch {
  std::vector<int> predictions;
  std::vector<FloatScores> scores;
};

struct FixedBatch {
  std::vector<int> predictions;
  std::vector<FixedScores> scores;
};

// Row order is preserved; results do not depend on `jobs`.
FloatBatch batch_infer_float(const Model& m, const Dataset& d, int jobs = 1);
FixedBatch batch_infer_fixed(const QuantizedModel& qm, const Dataset& d,
                             const EmulatorOptions& opts = {}, int jobs = 1);

std::size_t n_features(const QuantizedModel& qm);
const FixedPointFormat& input_format(const QuantizedModel& qm);

}  // namespace mlrtl
