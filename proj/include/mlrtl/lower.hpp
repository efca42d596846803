#pragma once

#include <string>

#include "mlrtl/netlist.hpp"
#include "mlrtl/quantize.hpp"

namespace mlrtl {

struct LowerOptions {
  // Reuse factor R: each dense-layer multiplier serves R weight products over
  // R consecutive cycles. Must be 1 for tree ensembles.
  int reuse = 1;
  std::string name = "mlrtl_top";
};

// Produces a verified netlist whose outputs, read `latency` cycles after an
// input is applied, equal infer_fixed() with tree-order accumulation.
// BDT: comparators, leaf decode and per-tree leaf select take one stage each,
// followed by a balanced adder tree per class.
// fcNN: per layer one multiply stage (R stages when R > 1), a balanced adder
// tree over the neuron's nonzero products and bias, and an activation stage.
NetlistIr lower(const QuantizedModel& qm, const LowerOptions& opts = {});
NetlistIr lower_bdt(const QuantizedBdt& qm, const LowerOptions& opts = {});
NetlistIr lower_fcnn(const QuantizedFcnn& qm, const LowerOptions& opts = {});

// Number of balanced pairwise adder levels that reduce n operands.
int adder_levels(std::size_t n_operands);

}  // namespace mlrtl
