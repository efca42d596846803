#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlrtl/fixedpoint.hpp"

namespace mlrtl {

inline constexpr std::string_view kNetlistSchemaVersion = "1.0";

// A wire is either a fixed-point value or an unsigned bit vector.
struct WireType {
  bool is_fixed = true;
  FixedPointFormat format;  // when is_fixed
  int bits = 1;             // when !is_fixed

  int width() const noexcept { return is_fixed ? format.total_bits : bits; }
  static WireType fixed(const FixedPointFormat& f) { return {true, f, 0}; }
  static WireType bit_vector(int n) { return {false, {}, n}; }
  bool same_shape(const WireType& o) const noexcept;
  bool operator==(const WireType&) const = default;
};

std::string to_string(const WireType& t);  // "fixed<...>" or "bits<n>"
WireType parse_wire_type(std::string_view text);

struct Wire {
  std::string name;
  WireType type;
};

enum class CellKind {
  Const,       // no inputs; output = value
  Comparator,  // [a, b] fixed; bits<1> output = a < b (Lt) or a == b (Eq), exact values
  AndReduce,   // bits<1> inputs, each optionally inverted; no inputs gives 1
  OrReduce,    // bitwise OR of the two's-complement patterns; inputs shaped like the output
  Mux,         // [select, d0, d1, ...]; output = d[min(select, n - 1)]
  Add,         // exact sum cast once into the output format
  Mul,         // exact product cast once into the output format
  ReluClamp,   // max(0, x); output format equals the input format
  SatCast,     // cast into the output format
  LutRom,      // out = table[floor(x * 2^scale_log2) + offset], below/above outside
  Register,    // [d] or [d, enable]; synchronous active-high reset to reset_value
};

enum class CompareOp { Lt, Eq };

std::string_view cell_kind_name(CellKind k);
CellKind parse_cell_kind(std::string_view s);

struct Cell {
  std::string name;
  CellKind kind = CellKind::Const;
  std::vector<int> inputs;  // wire indices
  int output = -1;
  int stage = 0;  // first cycle the output carries sample 0

  int128 value = 0;  // Const value, Register reset value
  CompareOp op = CompareOp::Lt;
  std::vector<std::uint8_t> invert;  // AndReduce
  int scale_log2 = 0;                // LutRom
  int offset = 0;
  std::vector<int128> entries;
  int128 below = 0;
  int128 above = 0;
};

struct Port {
  std::string name;
  int wire = -1;
};

struct NetlistIr {
  std::string name = "mlrtl_top";
  std::string model_kind;
  int latency = 0;
  int initiation_interval = 1;
  std::vector<Wire> wires;
  std::vector<Cell> cells;
  std::vector<Port> inputs;   // data inputs then in_valid
  std::vector<Port> outputs;  // data outputs then out_valid

  int add_wire(std::string name, WireType type);
  int add_cell(Cell cell);
  // Data ports exclude the trailing valid ports.
  std::size_t n_data_inputs() const;
  std::size_t n_data_outputs() const;
  int find_wire(std::string_view name) const;
};

std::string netlist_to_json(const NetlistIr& n);
NetlistIr netlist_from_json(std::string_view text);

// Structural checks: single drivers, port and cell typing, acyclic
// combinational logic, register-count balance of every input-to-output path
// (when the initiation interval is 1), and a timed simulation that checks each
// cell's stage annotation and that output samples appear at
// latency + k * initiation_interval. Returns one line per finding.
std::vector<std::string> verify_netlist(const NetlistIr& n);
// Throws Error(UnverifiedNetlist) listing the findings.
void require_verified(const NetlistIr& n);

// Cycle-accurate simulation from reset.
class NetlistSimulator {
 public:
  explicit NetlistSimulator(const NetlistIr& n);
  void reset();
  void set_input(std::size_t port, int128 value);
  // Settles combinational logic for the current inputs and state.
  void evaluate();
  // Clock edge; evaluates first.
  void step();
  int128 wire_value(int wire) const { return values_[static_cast<std::size_t>(wire)]; }
  int128 output(std::size_t port) const;
  const NetlistIr& netlist() const { return n_; }

 private:
  const NetlistIr& n_;
  std::vector<int> order_;      // combinational cells, topological
  std::vector<int> registers_;  // register cells
  std::vector<int128> values_;
};

// Holds x on the data inputs with in_valid high and reads the data outputs
// after `latency` clock edges.
std::vector<FixedPointValue> interpret_netlist(const NetlistIr& n, std::span<const FixedPointValue> x);

// Issues one input vector every initiation_interval cycles and collects
// each result latency cycles after its issue.
std::vector<std::vector<FixedPointValue>> simulate_stream(
    const NetlistIr& n, const std::vector<std::vector<FixedPointValue>>& xs);

}  // namespace mlrtl
