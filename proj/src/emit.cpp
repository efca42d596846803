#include "mlrtl/emit.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

using boost::multiprecision::cpp_int;

constexpr int kMaxWidth = 250;

std::string lit(const cpp_int& value, int width, bool is_signed) {
  cpp_int mod = cpp_int(1) << width;
  cpp_int p = value % mod;
  if (p < 0) p += mod;
  std::ostringstream s;
  s << width << (is_signed ? "'sh" : "'h") << std::hex << p;
  return s.str();
}

std::string lit(int128 value, int width, bool is_signed) {
  cpp_int v = static_cast<long long>(value >> 64);
  v <<= 64;
  v += static_cast<unsigned long long>(value & ((int128{1} << 64) - 1));
  return lit(v, width, is_signed);
}

std::string range(int width) { return "[" + std::to_string(width - 1) + ":0]"; }

std::string bit(const std::string& name, int i) { return name + "[" + std::to_string(i) + "]"; }

std::string slice(const std::string& name, int hi, int lo) {
  if (hi == lo) return bit(name, hi);
  return name + "[" + std::to_string(hi) + ":" + std::to_string(lo) + "]";
}

// A declared signal whose raw pattern scaled by 2^-frac is its real value.
struct Sig {
  std::string name;
  int width = 1;
  bool is_signed = false;
  int frac = 0;
};

class Writer {
 public:
  explicit Writer(const NetlistIr& n) {
    for (const Wire& w : n.wires) used_.insert(w.name);
    used_.insert("clk");
    used_.insert("rst");
    for (const Port& p : n.inputs) used_.insert(p.name);
    for (const Port& p : n.outputs) used_.insert(p.name);
  }

  std::string fresh(const std::string& base) {
    std::string name = base;
    for (int i = 1; used_.count(name); ++i) name = base + "_" + std::to_string(i);
    used_.insert(name);
    return name;
  }

  void declare(const std::string& kind, const std::string& name, int width, bool is_signed) {
    if (width > kMaxWidth)
      throw Error(ErrorCode::InvalidArgument, "intermediate signal " + name + " needs " + std::to_string(width) + " bits");
    decls_ << "  " << kind << (is_signed ? " signed " : " ") << range(width) << " " << name << ";\n";
  }

  Sig wire(const std::string& base, int width, bool is_signed, int frac, const std::string& expr) {
    Sig s{fresh(base), width, is_signed, frac};
    declare("wire", s.name, width, is_signed);
    assign(s.name, expr);
    return s;
  }

  void assign(const std::string& name, const std::string& expr) {
    body_ << "  assign " << name << " = " << expr << ";\n";
  }

  std::ostringstream& body() { return body_; }
  std::string declarations() const { return decls_.str(); }
  std::string statements() const { return body_.str(); }

 private:
  std::set<std::string> used_;
  std::ostringstream decls_;
  std::ostringstream body_;
};

// Pattern of s * 2^shift extended to `width` bits.
std::string ext(const Sig& s, int width, int shift = 0) {
  const int pad = width - s.width - shift;
  std::vector<std::string> parts;
  if (pad > 0) {
    if (s.is_signed) {
      std::string sign = bit(s.name, s.width - 1);
      parts.push_back(pad == 1 ? sign : "{" + std::to_string(pad) + "{" + sign + "}}");
    } else {
      parts.push_back(lit(int128{0}, pad, false));
    }
  }
  parts.push_back(s.name);
  if (shift > 0) parts.push_back(lit(int128{0}, shift, false));
  if (parts.size() == 1) return s.name;
  std::string out = "{";
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ", " : "") + parts[i];
  return out + "}";
}

Sig align(Writer& w, const Sig& s, int frac, int width, const std::string& base) {
  return w.wire(base, width, true, frac, ext(s, width, frac - s.frac));
}

Sig as_signed(Writer& w, const Sig& s, const std::string& base) {
  if (s.is_signed) return s;
  return align(w, s, s.frac, s.width + 1, base);
}

Sig floor_shift(Writer& w, const Sig& s, int d, const std::string& base) {
  if (d >= s.width) return w.wire(base, 1, true, s.frac - d, bit(s.name, s.width - 1));
  return w.wire(base, s.width - d, true, s.frac - d, slice(s.name, s.width - 1, d));
}

// Width a signal needs once aligned to `frac` and held as signed.
int aligned_width(const Sig& s, int frac) { return s.width + (s.is_signed ? 0 : 1) + frac - s.frac; }

void cast_into(Writer& w, Sig s, const FixedPointFormat& out, const std::string& target) {
  const std::string base = target;
  s = as_signed(w, s, base + "_sx");
  const int fo = out.fractional_bits();
  Sig t;
  if (fo >= s.frac) {
    t = fo == s.frac ? s : align(w, s, fo, s.width + fo - s.frac, base + "_al");
  } else {
    const int d = s.frac - fo;
    if (out.rounding == Rounding::TruncateTowardNegInf) {
      t = floor_shift(w, s, d, base + "_tr");
    } else {
      if (s.width < d + 2) s = align(w, s, s.frac, d + 2, base + "_wx");
      Sig q = floor_shift(w, s, d, base + "_q");
      std::string rest = d == 1 ? "" : d == 2 ? bit(s.name, 0) : "(|" + slice(s.name, d - 2, 0) + ")";
      std::string up = bit(s.name, d - 1) + " & " +
                       (rest.empty() ? bit(s.name, d) : "(" + bit(s.name, d) + " | " + rest + ")");
      Sig rup = w.wire(base + "_up", 1, false, 0, up);
      t = w.wire(base + "_rn", q.width + 1, true, fo,
                 ext(q, q.width + 1) + " + {" + lit(int128{0}, q.width, false) + ", " + rup.name + "}");
    }
  }
  const int W = out.total_bits;
  if (out.is_signed && t.width <= W) {
    w.assign(target, ext(t, W));
  } else if (out.overflow == Overflow::Wrap) {
    w.assign(target, t.width > W ? slice(t.name, W - 1, 0) : ext(t, W));
  } else {
    if (t.width < W + 1) t = align(w, t, t.frac, W + 1, base + "_sw");
    const int E = t.width;
    std::string low = t.width == W ? t.name : slice(t.name, W - 1, 0);
    w.assign(target, "(" + t.name + " < " + lit(out.min_raw(), E, true) + ") ? " + lit(out.min_raw(), W, out.is_signed) +
                         " : (" + t.name + " > " + lit(out.max_raw(), E, true) + ") ? " +
                         lit(out.max_raw(), W, out.is_signed) + " : " + low);
  }
}

Sig sig_of(const NetlistIr& n, int wire) {
  const WireType& t = n.wires[static_cast<std::size_t>(wire)].type;
  if (!t.is_fixed) return {n.wires[static_cast<std::size_t>(wire)].name, t.bits, false, 0};
  return {n.wires[static_cast<std::size_t>(wire)].name, t.format.total_bits, t.format.is_signed,
          t.format.fractional_bits()};
}

bool is_signed(const WireType& t) { return t.is_fixed && t.format.is_signed; }

void emit_cell(Writer& w, const NetlistIr& n, const Cell& c) {
  const WireType& ot = n.wires[static_cast<std::size_t>(c.output)].type;
  const std::string& out = n.wires[static_cast<std::size_t>(c.output)].name;
  const int W = ot.width();
  auto in = [&](std::size_t i) { return sig_of(n, c.inputs[i]); };
  switch (c.kind) {
    case CellKind::Const: w.assign(out, lit(c.value, W, is_signed(ot))); break;
    case CellKind::Comparator: {
      Sig a = in(0), b = in(1);
      int f = std::max(a.frac, b.frac);
      int e = std::max(aligned_width(a, f), aligned_width(b, f));
      Sig ea = align(w, a, f, e, out + "_ca");
      Sig eb = align(w, b, f, e, out + "_cb");
      w.assign(out, ea.name + (c.op == CompareOp::Lt ? " < " : " == ") + eb.name);
      break;
    }
    case CellKind::AndReduce: {
      if (c.inputs.empty()) {
        w.assign(out, lit(int128{1}, 1, false));
        break;
      }
      std::string expr;
      for (std::size_t i = 0; i < c.inputs.size(); ++i)
        expr += (i ? " & " : "") + std::string(c.invert[i] ? "~" : "") + in(i).name;
      w.assign(out, expr);
      break;
    }
    case CellKind::OrReduce: {
      std::string expr;
      for (std::size_t i = 0; i < c.inputs.size(); ++i) expr += (i ? " | " : "") + in(i).name;
      w.assign(out, expr);
      break;
    }
    case CellKind::Mux: {
      Sig sel = in(0);
      const std::size_t nd = c.inputs.size() - 1;
      std::string expr;
      for (std::size_t i = 0; i + 1 < nd; ++i) {
        if (sel.width < 64 && i >= (std::size_t{1} << sel.width)) break;
        expr += "(" + sel.name + " == " + lit(static_cast<int128>(i), sel.width, false) + ") ? " + in(i + 1).name + " : ";
      }
      w.assign(out, expr + in(nd).name);
      break;
    }
    case CellKind::Add: {
      Sig a = in(0), b = in(1);
      int f = std::max(a.frac, b.frac);
      int e = std::max(aligned_width(a, f), aligned_width(b, f)) + 1;
      Sig ea = align(w, a, f, e, out + "_aa");
      Sig eb = align(w, b, f, e, out + "_ab");
      Sig sum = w.wire(out + "_sum", e, true, f, ea.name + " + " + eb.name);
      cast_into(w, sum, ot.format, out);
      break;
    }
    case CellKind::Mul: {
      Sig a = in(0), b = in(1);
      int e = aligned_width(a, a.frac) + aligned_width(b, b.frac);
      Sig ea = align(w, a, a.frac, e, out + "_ma");
      Sig eb = align(w, b, b.frac, e, out + "_mb");
      Sig prod = w.wire(out + "_prod", e, true, a.frac + b.frac, ea.name + " * " + eb.name);
      cast_into(w, prod, ot.format, out);
      break;
    }
    case CellKind::ReluClamp: {
      Sig a = in(0);
      w.assign(out, bit(a.name, a.width - 1) + " ? " + lit(int128{0}, W, true) + " : " + a.name);
      break;
    }
    case CellKind::SatCast: cast_into(w, in(0), ot.format, out); break;
    case CellKind::LutRom: {
      Sig v = as_signed(w, in(0), out + "_sx");
      const int shift = c.scale_log2 - v.frac;
      Sig t = shift >= 0 ? w.wire(out + "_sc", v.width + shift, true, 0, ext(v, v.width + shift, shift))
                         : floor_shift(w, v, -shift, out + "_sc");
      const int size = static_cast<int>(c.entries.size());
      int kb = 0;
      while ((1 << kb) < size) ++kb;
      const int e = std::max(t.width, kb + 2) + 1;
      Sig idx = w.wire(out + "_idx", e, true, 0, ext(t, e) + " + " + lit(static_cast<int128>(c.offset), e, true));
      const bool s = is_signed(ot);
      std::string tab = w.fresh(out + "_tab");
      if (kb == 0) {
        w.declare("wire", tab, W, s);
        w.assign(tab, lit(c.entries[0], W, s));
      } else {
        w.declare("reg", tab, W, s);
        auto& b = w.body();
        b << "  always @(*)\n    case (" << slice(idx.name, kb - 1, 0) << ")\n";
        for (int i = 0; i < size; ++i)
          b << "      " << lit(static_cast<int128>(i), kb, false) << ": " << tab << " = "
            << lit(c.entries[static_cast<std::size_t>(i)], W, s) << ";\n";
        b << "      default: " << tab << " = " << lit(c.below, W, s) << ";\n    endcase\n";
      }
      w.assign(out, "(" + idx.name + " < " + lit(int128{0}, e, true) + ") ? " + lit(c.below, W, s) + " : (" +
                        idx.name + " > " + lit(static_cast<int128>(size - 1), e, true) + ") ? " +
                        lit(c.above, W, s) + " : " + tab);
      break;
    }
    case CellKind::Register: {
      auto& b = w.body();
      b << "  always @(posedge clk)\n    if (rst) " << out << " <= " << lit(c.value, W, is_signed(ot)) << ";\n";
      if (c.inputs.size() == 2)
        b << "    else if (" << in(1).name << ") " << out << " <= " << in(0).name << ";\n";
      else
        b << "    else " << out << " <= " << in(0).name << ";\n";
      break;
    }
  }
}

std::string port_decl(const std::string& dir, const WireType& t, const std::string& name) {
  return "  " + dir + " wire" + (is_signed(t) ? " signed " : " ") + range(t.width()) + " " + name;
}

}  // namespace

std::string emit_verilog(const NetlistIr& n) {
  if (!verify_netlist(n).empty()) require_verified(n);
  Writer w(n);
  std::set<int> port_wires;
  for (const Port& p : n.inputs) port_wires.insert(p.wire);
  std::vector<bool> is_reg(n.wires.size(), false);
  for (const Cell& c : n.cells)
    if (c.kind == CellKind::Register) is_reg[static_cast<std::size_t>(c.output)] = true;
  std::ostringstream head;
  head << "// " << n.name << ": " << n.model_kind << ", latency " << n.latency << ", initiation interval "
       << n.initiation_interval << "\n";
  head << "module " << n.name << " (\n  input wire clk,\n  input wire rst";
  for (const Port& p : n.inputs) head << ",\n" << port_decl("input", n.wires[static_cast<std::size_t>(p.wire)].type, p.name);
  for (const Port& p : n.outputs) head << ",\n" << port_decl("output", n.wires[static_cast<std::size_t>(p.wire)].type, p.name);
  head << "\n);\n\n";
  head << "  localparam LATENCY = " << n.latency << ";\n";
  head << "  localparam II = " << n.initiation_interval << ";\n\n";

  for (const Port& p : n.inputs) {
    const Wire& wire = n.wires[static_cast<std::size_t>(p.wire)];
    if (wire.name == p.name) continue;
    w.declare("wire", wire.name, wire.type.width(), is_signed(wire.type));
    w.assign(wire.name, p.name);
  }
  for (std::size_t i = 0; i < n.wires.size(); ++i) {
    if (port_wires.count(static_cast<int>(i))) continue;
    const Wire& wire = n.wires[i];
    w.declare(is_reg[i] ? "reg" : "wire", wire.name, wire.type.width(), is_signed(wire.type));
  }
  for (const Cell& c : n.cells) emit_cell(w, n, c);
  for (const Port& p : n.outputs) w.assign(p.name, n.wires[static_cast<std::size_t>(p.wire)].name);

  return head.str() + w.declarations() + "\n" + w.statements() + "\nendmodule\n";
}

std::string emit_testbench(const NetlistIr& n, const std::vector<std::vector<FixedPointValue>>& inputs,
                           const std::vector<std::vector<FixedPointValue>>& expected) {
  if (inputs.size() != expected.size())
    throw Error(ErrorCode::InvalidArgument, "testbench needs one expected vector per input vector");
  const std::size_t ni = n.n_data_inputs(), no = n.n_data_outputs();
  for (std::size_t k = 0; k < inputs.size(); ++k)
    if (inputs[k].size() != ni || expected[k].size() != no)
      throw Error(ErrorCode::InvalidArgument, "testbench vector " + std::to_string(k) + " has the wrong size");
  const std::size_t count = inputs.size();
  const std::size_t depth = std::max<std::size_t>(count, 1);
  auto type_of = [&](const Port& p) -> const WireType& { return n.wires[static_cast<std::size_t>(p.wire)].type; };
  std::ostringstream s;
  s << "`timescale 1ns/1ps\n";
  s << "module " << n.name << "_tb;\n";
  s << "  reg clk = 1'b0;\n  reg rst = 1'b1;\n";
  for (std::size_t i = 0; i <= ni; ++i) {
    const Port& p = n.inputs[i];
    s << "  reg" << (is_signed(type_of(p)) ? " signed " : " ") << range(type_of(p).width()) << " " << p.name << ";\n";
  }
  for (const Port& p : n.outputs)
    s << "  wire" << (is_signed(type_of(p)) ? " signed " : " ") << range(type_of(p).width()) << " " << p.name << ";\n";
  for (std::size_t i = 0; i < ni; ++i)
    s << "  reg " << range(type_of(n.inputs[i]).width()) << " stim_" << n.inputs[i].name << " [0:" << depth - 1 << "];\n";
  for (std::size_t i = 0; i < no; ++i)
    s << "  reg " << range(type_of(n.outputs[i]).width()) << " want_" << n.outputs[i].name << " [0:" << depth - 1 << "];\n";
  s << "  integer cycle, k, pass, fail;\n\n";
  s << "  " << n.name << " dut (\n    .clk(clk),\n    .rst(rst)";
  for (const Port& p : n.inputs) s << ",\n    ." << p.name << "(" << p.name << ")";
  for (const Port& p : n.outputs) s << ",\n    ." << p.name << "(" << p.name << ")";
  s << "\n  );\n\n  always #5 clk = ~clk;\n\n  initial begin\n";
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t i = 0; i < ni; ++i)
      s << "    stim_" << n.inputs[i].name << "[" << k << "] = "
        << lit(inputs[k][i].raw, type_of(n.inputs[i]).width(), false) << ";\n";
    for (std::size_t i = 0; i < no; ++i)
      s << "    want_" << n.outputs[i].name << "[" << k << "] = "
        << lit(expected[k][i].raw, type_of(n.outputs[i]).width(), false) << ";\n";
  }
  const std::string valid = n.inputs.back().name;
  s << "    pass = 0;\n    fail = 0;\n";
  for (std::size_t i = 0; i < ni; ++i) s << "    " << n.inputs[i].name << " = 0;\n";
  s << "    " << valid << " = 1'b0;\n";
  s << "    @(posedge clk);\n    #1 rst = 1'b0;\n";
  if (count > 0) {
    s << "    for (cycle = 0; cycle <= LAST; cycle = cycle + 1) begin\n";
    s << "      if (cycle % " << n.initiation_interval << " == 0 && cycle / " << n.initiation_interval << " < "
      << count << ") begin\n";
    s << "        k = cycle / " << n.initiation_interval << ";\n";
    for (std::size_t i = 0; i < ni; ++i)
      s << "        " << n.inputs[i].name << " = stim_" << n.inputs[i].name << "[k];\n";
    s << "        " << valid << " = 1'b1;\n      end\n      #1;\n";
    s << "      if (cycle >= " << n.latency << " && (cycle - " << n.latency << ") % " << n.initiation_interval
      << " == 0) begin\n";
    s << "        k = (cycle - " << n.latency << ") / " << n.initiation_interval << ";\n";
    s << "        if (";
    for (std::size_t i = 0; i < no; ++i)
      s << (i ? " && " : "") << n.outputs[i].name << " === want_" << n.outputs[i].name << "[k]";
    s << ")\n          pass = pass + 1;\n        else begin\n          fail = fail + 1;\n";
    s << "          $display(\"mismatch at vector %0d\", k);\n        end\n      end\n";
    s << "      @(posedge clk);\n      #1;\n    end\n";
  }
  s << "    if (fail == 0)\n      $display(\"PASS %0d\", pass);\n    else\n      $display(\"FAIL %0d %0d\", pass, fail);\n";
  s << "    $finish;\n  end\n";
  std::ostringstream full;
  std::string body = s.str();
  const long long last = n.latency + static_cast<long long>(count ? count - 1 : 0) * n.initiation_interval;
  auto pos = body.find("  integer cycle");
  body.insert(pos, "  localparam LAST = " + std::to_string(last) + ";\n");
  full << body << "endmodule\n";
  return full.str();
}

}  // namespace mlrtl
