#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mlrtl/netlist.hpp"

namespace mlrtl {

// One Verilog-2001 module: clk, synchronous active-high rst, one port per
// netlist port. Fixed-point ports carry the raw two's-complement value
// (unsigned formats as plain vectors). Every operator works on operands of
// equal declared width; sign and zero extension are explicit.
std::string emit_verilog(const NetlistIr& n);

// Self-checking testbench: applies inputs[k] every initiation interval and
// compares the outputs latency cycles later against expected[k]. Prints
// "PASS <n>" or "FAIL <n> <mismatches>" and finishes.
std::string emit_testbench(const NetlistIr& n, const std::vector<std::vector<FixedPointValue>>& inputs,
                           const std::vector<std::vector<FixedPointValue>>& expected);

enum class LintKind {
  SyntaxError,
  UndeclaredIdentifier,
  WidthMismatch,
  SignednessMismatch,
  MultipleDrivers,
  UndrivenSignal,
  PathRegisterCount,
};

std::string_view lint_kind_name(LintKind k);

struct LintFinding {
  LintKind kind;
  int line = 0;
  std::string message;
};

// Checks the module subset produced by emit_verilog(). When the module
// declares II == 1, also checks that every input-to-output path crosses
// exactly LATENCY registers.
std::vector<LintFinding> lint_verilog(std::string_view source);

struct VerilogModule;

// Two-state cycle simulator for the emit_verilog() subset.
class VerilogSimulator {
 public:
  explicit VerilogSimulator(std::string_view source);
  ~VerilogSimulator();
  VerilogSimulator(VerilogSimulator&&) noexcept;

  // Applies one clock edge with rst high.
  void reset();
  void set(std::string_view port, int128 value);
  void evaluate();
  void step();
  // Value of a signal; signed declarations are sign-extended.
  int128 get(std::string_view signal) const;
  int localparam(std::string_view name) const;

 private:
  std::unique_ptr<VerilogModule> m_;
};

// Drives the emitted module like simulate_stream() drives the netlist.
std::vector<std::vector<FixedPointValue>> simulate_verilog_stream(
    std::string_view source, const NetlistIr& n, const std::vector<std::vector<FixedPointValue>>& xs);

}  // namespace mlrtl
