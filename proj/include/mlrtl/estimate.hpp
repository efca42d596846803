#pragma once

#include <map>
#include <string>
#include <string_view>

#include "mlrtl/netlist.hpp"

namespace mlrtl {

// Linear per-cell rule. Widths: Mul uses its two operand widths, Comparator
// the wider operand, every other kind its output width. k is the input count
// (data inputs for Mux).
struct CostRule {
  double lut_per_bit = 0;        // Add, Comparator, SatCast, ReluClamp
  double lut_per_bit_input = 0;  // Mux: per bit per data input beyond the first
  int lut_inputs = 0;            // AndReduce/OrReduce: ceil(k / lut_inputs) LUTs (per bit for OrReduce)
  int dsp_width = 0;             // Mul: ceil(W1 / d) * ceil(W2 / d) DSPs
  double ff_per_bit = 0;         // Register
  long long bram_threshold_bits = 0;  // LutRom: 1 BRAM above E*W bits
  int lut_rom_bits = 0;               // LutRom: else ceil(E*W / lut_rom_bits) LUTs
  bool operator==(const CostRule&) const = default;
};

struct CostModel {
  std::string name = "generic-4lut-18x18dsp";
  std::map<CellKind, CostRule> rules;
  bool operator==(const CostModel&) const = default;
};

// Generic 4-input-LUT fabric with 18x18 DSP blocks.
CostModel default_cost_model();
CostModel parse_cost_model(std::string_view json_text);
std::string write_cost_model(const CostModel& cm);

struct ResourceCounts {
  long long count = 0;  // cells (breakdown only)
  long long lut = 0;
  long long ff = 0;
  long long dsp = 0;
  long long bram = 0;
  bool operator==(const ResourceCounts&) const = default;
};

struct ResourceReport {
  long long lut = 0;
  long long ff = 0;
  long long dsp = 0;
  long long bram = 0;
  int latency_cycles = 0;
  int initiation_interval = 1;
  std::map<CellKind, ResourceCounts> breakdown;
  bool operator==(const ResourceReport&) const = default;
};

// Throws Error(UncoveredCellKind) when a cell kind has no rule.
ResourceCounts cell_cost(const NetlistIr& n, const Cell& c, const CostModel& cm);
ResourceReport estimate(const NetlistIr& n, const CostModel& cm = default_cost_model());

std::string report_to_json(const ResourceReport& r);
ResourceReport report_from_json(std::string_view text);
// Header plus one totals row and one row per cell kind.
std::string report_to_csv(const ResourceReport& r);

// Pareto comparison over lut, ff, dsp, bram, latency and II (lower is better).
enum class Dominance { Equal, ADominates, BDominates, Incomparable };
std::string_view dominance_name(Dominance d);
Dominance compare_reports(const ResourceReport& a, const ResourceReport& b);

}  // namespace mlrtl
