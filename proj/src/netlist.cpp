#include "mlrtl/netlist.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

using json = nlohmann::json;

constexpr int kConstTag = -1;
constexpr int kInitTag = -2;
constexpr int kUnknownTag = -3;

const char* const kCellKindNames[] = {"const",      "comparator", "and_reduce", "or_reduce",
                                      "mux",        "add",        "mul",        "relu_clamp",
                                      "sat_cast",   "lut_rom",    "register"};

int128 pattern_mask(int width) {
  return width >= 127 ? ~int128{0} : (int128{1} << width) - 1;
}

int128 to_pattern(int128 v, int width) { return v & pattern_mask(width); }

int128 from_pattern(int128 p, const WireType& t) {
  const int w = t.width();
  p &= pattern_mask(w);
  if (t.is_fixed && t.format.is_signed && ((p >> (w - 1)) & 1)) p -= int128{1} << w;
  return p;
}

bool value_fits(int128 v, const WireType& t) {
  if (t.is_fixed) return raw_fits(v, t.format);
  return v >= 0 && v <= pattern_mask(t.bits);
}

FixedPointValue fixed_at(const NetlistIr& n, const std::vector<int128>& values, int wire) {
  return {values[static_cast<std::size_t>(wire)], n.wires[static_cast<std::size_t>(wire)].type.format};
}

int128 lut_lookup(const Cell& c, const FixedPointValue& v) {
  int128 idx = fxp_floor_scaled(v, c.scale_log2) + c.offset;
  if (idx < 0) return c.below;
  if (idx >= static_cast<int128>(c.entries.size())) return c.above;
  return c.entries[static_cast<std::size_t>(idx)];
}

std::size_t mux_index(int128 sel, std::size_t n_data) {
  if (sel < 0) return 0;
  if (sel >= static_cast<int128>(n_data)) return n_data - 1;
  return static_cast<std::size_t>(sel);
}

// Combinational function of every non-register cell.
int128 eval_cell(const NetlistIr& n, const Cell& c, const std::vector<int128>& values) {
  const WireType& out = n.wires[static_cast<std::size_t>(c.output)].type;
  auto in = [&](std::size_t i) { return values[static_cast<std::size_t>(c.inputs[i])]; };
  switch (c.kind) {
    case CellKind::Const: return c.value;
    case CellKind::Comparator: {
      auto ord = fxp_compare(fixed_at(n, values, c.inputs[0]), fixed_at(n, values, c.inputs[1]));
      bool r = c.op == CompareOp::Lt ? ord == std::strong_ordering::less
                                     : ord == std::strong_ordering::equal;
      return r ? 1 : 0;
    }
    case CellKind::AndReduce: {
      for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        bool bit = (in(i) & 1) != 0;
        if (c.invert[i]) bit = !bit;
        if (!bit) return 0;
      }
      return 1;
    }
    case CellKind::OrReduce: {
      int128 p = 0;
      for (std::size_t i = 0; i < c.inputs.size(); ++i) p |= to_pattern(in(i), out.width());
      return from_pattern(p, out);
    }
    case CellKind::Mux: return in(1 + mux_index(in(0), c.inputs.size() - 1));
    case CellKind::Add:
      return fxp_add(fixed_at(n, values, c.inputs[0]), fixed_at(n, values, c.inputs[1]), out.format).raw;
    case CellKind::Mul:
      return fxp_mul(fixed_at(n, values, c.inputs[0]), fixed_at(n, values, c.inputs[1]), out.format).raw;
    case CellKind::ReluClamp: return std::max<int128>(in(0), 0);
    case CellKind::SatCast: return fxp_cast(fixed_at(n, values, c.inputs[0]), out.format).raw;
    case CellKind::LutRom: return lut_lookup(c, fixed_at(n, values, c.inputs[0]));
    case CellKind::Register: break;
  }
  throw Error(ErrorCode::UnverifiedNetlist, "register evaluated combinationally");
}

json raw_json(int128 raw) {
  if (raw >= std::numeric_limits<long long>::min() && raw <= std::numeric_limits<long long>::max())
    return json(static_cast<long long>(raw));
  return json(static_cast<unsigned long long>(raw));
}

int128 raw_from_json(const json& j) {
  if (j.is_number_unsigned()) return static_cast<int128>(j.get<unsigned long long>());
  if (j.is_number_integer()) return static_cast<int128>(j.get<long long>());
  throw Error(ErrorCode::MalformedJson, "expected an integer");
}

struct Drivers {
  std::vector<int> driver;  // cell index, kPortDriver, or kNoDriver
  std::vector<std::string> findings;
};
constexpr int kNoDriver = -1;
constexpr int kPortDriver = -2;

Drivers find_drivers(const NetlistIr& n) {
  Drivers d;
  d.driver.assign(n.wires.size(), kNoDriver);
  auto claim = [&](int w, int who, const std::string& by) {
    if (w < 0 || static_cast<std::size_t>(w) >= n.wires.size()) {
      d.findings.push_back(by + ": drives a wire index out of range");
      return;
    }
    if (d.driver[static_cast<std::size_t>(w)] != kNoDriver)
      d.findings.push_back("wire " + n.wires[static_cast<std::size_t>(w)].name + " has multiple drivers");
    else
      d.driver[static_cast<std::size_t>(w)] = who;
  };
  for (const Port& p : n.inputs) claim(p.wire, kPortDriver, "input " + p.name);
  for (std::size_t i = 0; i < n.cells.size(); ++i)
    claim(n.cells[i].output, static_cast<int>(i), "cell " + n.cells[i].name);
  return d;
}

// Topological order of combinational cells; false on a combinational loop.
bool combinational_order(const NetlistIr& n, const std::vector<int>& driver, std::vector<int>& order) {
  const std::size_t nc = n.cells.size();
  std::vector<int> pending(nc, 0);
  std::vector<std::vector<int>> users(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    if (n.cells[i].kind == CellKind::Register) continue;
    for (int w : n.cells[i].inputs) {
      int d = driver[static_cast<std::size_t>(w)];
      if (d >= 0 && n.cells[static_cast<std::size_t>(d)].kind != CellKind::Register) {
        ++pending[i];
        users[static_cast<std::size_t>(d)].push_back(static_cast<int>(i));
      }
    }
  }
  order.clear();
  std::vector<int> ready;
  for (std::size_t i = 0; i < nc; ++i)
    if (n.cells[i].kind != CellKind::Register && pending[i] == 0) ready.push_back(static_cast<int>(i));
  std::size_t n_comb = 0;
  for (const Cell& c : n.cells) n_comb += c.kind != CellKind::Register;
  while (!ready.empty()) {
    int c = ready.back();
    ready.pop_back();
    order.push_back(c);
    for (int u : users[static_cast<std::size_t>(c)])
      if (--pending[static_cast<std::size_t>(u)] == 0) ready.push_back(u);
  }
  return order.size() == n_comb;
}

std::string cell_label(const Cell& c) {
  return std::string(cell_kind_name(c.kind)) + " " + c.name;
}

void check_cell_types(const NetlistIr& n, const Cell& c, std::vector<std::string>& out) {
  auto fail = [&](const std::string& msg) { out.push_back(cell_label(c) + ": " + msg); };
  for (int w : c.inputs)
    if (w < 0 || static_cast<std::size_t>(w) >= n.wires.size()) {
      fail("input wire index out of range");
      return;
    }
  if (c.output < 0 || static_cast<std::size_t>(c.output) >= n.wires.size()) return;
  const WireType& o = n.wires[static_cast<std::size_t>(c.output)].type;
  auto type = [&](std::size_t i) -> const WireType& {
    return n.wires[static_cast<std::size_t>(c.inputs[i])].type;
  };
  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (c.inputs.size() < lo || c.inputs.size() > hi) {
      fail("wrong number of inputs (" + std::to_string(c.inputs.size()) + ")");
      return false;
    }
    return true;
  };
  switch (c.kind) {
    case CellKind::Const:
      if (!arity(0, 0)) return;
      if (!value_fits(c.value, o)) fail("value does not fit the output type");
      break;
    case CellKind::Comparator:
      if (!arity(2, 2)) return;
      if (!type(0).is_fixed || !type(1).is_fixed) fail("operands must be fixed-point");
      if (o != WireType::bit_vector(1)) fail("output must be bits<1>");
      break;
    case CellKind::AndReduce:
      if (c.invert.size() != c.inputs.size()) fail("invert mask size differs from input count");
      for (std::size_t i = 0; i < c.inputs.size(); ++i)
        if (type(i) != WireType::bit_vector(1)) fail("inputs must be bits<1>");
      if (o != WireType::bit_vector(1)) fail("output must be bits<1>");
      break;
    case CellKind::OrReduce:
      if (!arity(1, std::numeric_limits<std::size_t>::max())) return;
      for (std::size_t i = 0; i < c.inputs.size(); ++i)
        if (!type(i).same_shape(o)) fail("input " + std::to_string(i) + " differs from the output type");
      break;
    case CellKind::Mux:
      if (!arity(2, std::numeric_limits<std::size_t>::max())) return;
      if (type(0).is_fixed && (type(0).format.is_signed || type(0).format.fractional_bits() != 0))
        fail("select must be bits or an unsigned integer");
      for (std::size_t i = 1; i < c.inputs.size(); ++i)
        if (!type(i).same_shape(o)) fail("data input " + std::to_string(i - 1) + " differs from the output type");
      break;
    case CellKind::Add:
    case CellKind::Mul:
      if (!arity(2, 2)) return;
      if (!type(0).is_fixed || !type(1).is_fixed || !o.is_fixed) fail("operands must be fixed-point");
      break;
    case CellKind::ReluClamp:
      if (!arity(1, 1)) return;
      if (!type(0).is_fixed || !type(0).same_shape(o) || !o.format.is_signed)
        fail("input and output must share one signed format");
      break;
    case CellKind::SatCast:
      if (!arity(1, 1)) return;
      if (!type(0).is_fixed || !o.is_fixed) fail("operands must be fixed-point");
      break;
    case CellKind::LutRom:
      if (!arity(1, 1)) return;
      if (!type(0).is_fixed || !o.is_fixed) fail("operands must be fixed-point");
      if (c.entries.empty()) fail("empty table");
      for (int128 e : c.entries)
        if (!value_fits(e, o)) {
          fail("table entry does not fit the output type");
          break;
        }
      if (!value_fits(c.below, o) || !value_fits(c.above, o)) fail("out-of-range entry does not fit");
      break;
    case CellKind::Register:
      if (!arity(1, 2)) return;
      if (!type(0).same_shape(o)) fail("d differs from the output type");
      if (c.inputs.size() == 2 && type(1) != WireType::bit_vector(1)) fail("enable must be bits<1>");
      if (!value_fits(c.value, o)) fail("reset value does not fit the output type");
      break;
  }
}

// Wires whose value can depend on an input port.
std::vector<bool> input_dependent(const NetlistIr& n) {
  std::vector<bool> dep(n.wires.size(), false);
  for (const Port& p : n.inputs) dep[static_cast<std::size_t>(p.wire)] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const Cell& c : n.cells) {
      if (dep[static_cast<std::size_t>(c.output)]) continue;
      for (int w : c.inputs)
        if (dep[static_cast<std::size_t>(w)]) {
          dep[static_cast<std::size_t>(c.output)] = true;
          changed = true;
          break;
        }
    }
  }
  return dep;
}

void check_register_balance(const NetlistIr& n, const std::vector<int>& driver,
                            const std::vector<bool>& dep, std::vector<std::string>& out) {
  std::vector<int> depth(n.wires.size(), -1);
  std::vector<std::uint8_t> state(n.wires.size(), 0);  // 1 visiting, 2 done
  std::function<int(int)> visit = [&](int w) -> int {
    auto wi = static_cast<std::size_t>(w);
    if (state[wi] == 2) return depth[wi];
    if (state[wi] == 1) {
      out.push_back("wire " + n.wires[wi].name + " lies on a loop reachable from an input");
      return depth[wi] = 0;
    }
    state[wi] = 1;
    int d = driver[wi];
    int result = 0;
    if (d >= 0) {
      const Cell& c = n.cells[static_cast<std::size_t>(d)];
      if (c.kind == CellKind::Register) {
        result = visit(c.inputs[0]) + 1;
      } else {
        int seen = -1;
        for (int in : c.inputs) {
          if (!dep[static_cast<std::size_t>(in)]) continue;
          int di = visit(in);
          if (seen >= 0 && di != seen)
            out.push_back(cell_label(c) + ": inputs arrive after " + std::to_string(seen) + " and " +
                          std::to_string(di) + " registers");
          seen = std::max(seen, di);
        }
        result = std::max(seen, 0);
      }
    }
    state[wi] = 2;
    return depth[wi] = result;
  };
  for (std::size_t i = 0; i < n.n_data_outputs(); ++i) {
    int w = n.outputs[i].wire;
    if (!dep[static_cast<std::size_t>(w)]) continue;
    int d = visit(w);
    if (d != n.latency)
      out.push_back("output " + n.outputs[i].name + " is " + std::to_string(d) +
                    " registers from the inputs, latency is " + std::to_string(n.latency));
  }
}

int merge_tag(int a, int b) {
  if (a == kConstTag) return b;
  if (b == kConstTag) return a;
  if (a == b) return a;
  return kUnknownTag;
}

// Simulates values and sample tags together. Input samples k = 0..K-1 are
// issued every II cycles; each output sampled at latency + k*II must carry
// tag k, and each cell must first carry tag 0 at its stage.
void check_timing(const NetlistIr& n, const std::vector<int>& order, const std::vector<int>& driver,
                  const std::vector<bool>& dep, std::vector<std::string>& out) {
  const int ii = n.initiation_interval;
  const int samples = 3;
  const int cycles = n.latency + samples * ii + 1;
  const std::size_t nw = n.wires.size();
  std::vector<int128> val(nw, 0);
  std::vector<int> tag(nw, kConstTag);
  std::vector<int> first_zero(nw, -1);
  std::vector<int> tag_at_stage(nw, kUnknownTag);
  for (std::size_t i = 0; i < n.cells.size(); ++i)
    if (n.cells[i].kind == CellKind::Register) {
      const Cell& c = n.cells[i];
      val[static_cast<std::size_t>(c.output)] = c.value;
      tag[static_cast<std::size_t>(c.output)] = dep[static_cast<std::size_t>(c.output)] ? kInitTag : kConstTag;
    }
  std::mt19937_64 rng(0x5eed);
  auto random_value = [&](const WireType& t) -> int128 {
    if (!t.is_fixed) return static_cast<int128>(rng() & static_cast<std::uint64_t>(pattern_mask(std::min(t.bits, 63))));
    int128 lo = t.format.min_raw(), hi = t.format.max_raw();
    std::uniform_int_distribution<long long> u(static_cast<long long>(std::max<int128>(lo, -(int128{1} << 62))),
                                               static_cast<long long>(std::min<int128>(hi, int128{1} << 62)));
    return u(rng);
  };
  for (int cycle = 0; cycle < cycles; ++cycle) {
    if (cycle % ii == 0 && cycle / ii < samples) {
      int k = cycle / ii;
      for (std::size_t p = 0; p < n.inputs.size(); ++p) {
        auto w = static_cast<std::size_t>(n.inputs[p].wire);
        val[w] = p < n.n_data_inputs() ? random_value(n.wires[w].type) : 1;
        tag[w] = k;
      }
    }
    for (int ci : order) {
      const Cell& c = n.cells[static_cast<std::size_t>(ci)];
      auto o = static_cast<std::size_t>(c.output);
      val[o] = eval_cell(n, c, val);
      int t = kConstTag;
      if (c.kind == CellKind::Mux && tag[static_cast<std::size_t>(c.inputs[0])] == kConstTag) {
        std::size_t pick = 1 + mux_index(val[static_cast<std::size_t>(c.inputs[0])], c.inputs.size() - 1);
        t = tag[static_cast<std::size_t>(c.inputs[pick])];
      } else {
        for (int in : c.inputs) t = merge_tag(t, tag[static_cast<std::size_t>(in)]);
      }
      tag[o] = t;
    }
    for (std::size_t w = 0; w < nw; ++w)
      if (tag[w] == 0 && first_zero[w] < 0) first_zero[w] = cycle;
    for (const Cell& c : n.cells)
      if (c.stage == cycle) tag_at_stage[static_cast<std::size_t>(c.output)] = tag[static_cast<std::size_t>(c.output)];
    for (std::size_t p = 0; p < n.n_data_outputs(); ++p) {
      int rel = cycle - n.latency;
      if (rel < 0 || rel % ii != 0 || rel / ii >= samples) continue;
      int k = rel / ii;
      int t = tag[static_cast<std::size_t>(n.outputs[p].wire)];
      if (t != k && t != kConstTag)
        out.push_back("output " + n.outputs[p].name + " at cycle " + std::to_string(cycle) +
                      " does not carry sample " + std::to_string(k));
    }
    std::vector<std::pair<int128, int>> next;
    next.reserve(n.cells.size());
    for (std::size_t i = 0; i < n.cells.size(); ++i) {
      const Cell& c = n.cells[i];
      if (c.kind != CellKind::Register) continue;
      auto d = static_cast<std::size_t>(c.inputs[0]);
      auto o = static_cast<std::size_t>(c.output);
      bool en = c.inputs.size() < 2 || (val[static_cast<std::size_t>(c.inputs[1])] & 1);
      int t = en ? tag[d] : tag[o];
      if (c.inputs.size() == 2) t = merge_tag(t, tag[static_cast<std::size_t>(c.inputs[1])]);
      next.emplace_back(en ? val[d] : val[o], t);
    }
    std::size_t r = 0;
    for (std::size_t i = 0; i < n.cells.size(); ++i) {
      const Cell& c = n.cells[i];
      if (c.kind != CellKind::Register) continue;
      auto o = static_cast<std::size_t>(c.output);
      val[o] = next[r].first;
      tag[o] = next[r].second;
      ++r;
    }
  }
  for (std::size_t i = 0; i < n.cells.size(); ++i) {
    const Cell& c = n.cells[i];
    int fz = first_zero[static_cast<std::size_t>(c.output)];
    if (fz < 0) continue;
    // A time-multiplexed cell may select a constant operand in its first cycle.
    bool late_ok = fz > c.stage && tag_at_stage[static_cast<std::size_t>(c.output)] == kConstTag;
    if (fz != c.stage && !late_ok)
      out.push_back(cell_label(c) + ": annotated stage " + std::to_string(c.stage) +
                    ", first carries sample 0 at cycle " + std::to_string(fz));
  }
  (void)driver;
}

}  // namespace

bool WireType::same_shape(const WireType& o) const noexcept {
  if (is_fixed != o.is_fixed) return false;
  return is_fixed ? format.same_grid(o.format) : bits == o.bits;
}

std::string to_string(const WireType& t) {
  return t.is_fixed ? to_string(t.format) : "bits<" + std::to_string(t.bits) + ">";
}

WireType parse_wire_type(std::string_view text) {
  if (text.rfind("bits<", 0) == 0 && text.size() > 6 && text.back() == '>') {
    std::string digits(text.substr(5, text.size() - 6));
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(digits, &used);
      if (used != digits.size()) n = 0;
    } catch (const std::exception&) {
      n = 0;
    }
    if (n < 1 || n > 64) throw Error(ErrorCode::InvalidFormat, "bad bit vector type: " + std::string(text));
    return WireType::bit_vector(n);
  }
  return WireType::fixed(parse_format(text));
}

std::string_view cell_kind_name(CellKind k) { return kCellKindNames[static_cast<int>(k)]; }

CellKind parse_cell_kind(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(CellKind::Register); ++i)
    if (s == kCellKindNames[i]) return static_cast<CellKind>(i);
  throw Error(ErrorCode::ParseError, "unknown cell kind: " + std::string(s));
}

int NetlistIr::add_wire(std::string name, WireType type) {
  wires.push_back({std::move(name), type});
  return static_cast<int>(wires.size()) - 1;
}

int NetlistIr::add_cell(Cell cell) {
  cells.push_back(std::move(cell));
  return static_cast<int>(cells.size()) - 1;
}

std::size_t NetlistIr::n_data_inputs() const { return inputs.empty() ? 0 : inputs.size() - 1; }
std::size_t NetlistIr::n_data_outputs() const { return outputs.empty() ? 0 : outputs.size() - 1; }

int NetlistIr::find_wire(std::string_view name) const {
  for (std::size_t i = 0; i < wires.size(); ++i)
    if (wires[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string netlist_to_json(const NetlistIr& n) {
  json j;
  j["schema_version"] = kNetlistSchemaVersion;
  j["name"] = n.name;
  j["model_kind"] = n.model_kind;
  j["latency"] = n.latency;
  j["initiation_interval"] = n.initiation_interval;
  json wires = json::array();
  for (const Wire& w : n.wires) wires.push_back({{"name", w.name}, {"type", to_string(w.type)}});
  j["wires"] = std::move(wires);
  auto ports = [&](const std::vector<Port>& ps) {
    json a = json::array();
    for (const Port& p : ps) a.push_back({{"name", p.name}, {"wire", n.wires[static_cast<std::size_t>(p.wire)].name}});
    return a;
  };
  j["inputs"] = ports(n.inputs);
  j["outputs"] = ports(n.outputs);
  json cells = json::array();
  for (const Cell& c : n.cells) {
    json cj;
    cj["name"] = c.name;
    cj["kind"] = cell_kind_name(c.kind);
    json ins = json::array();
    for (int w : c.inputs) ins.push_back(n.wires[static_cast<std::size_t>(w)].name);
    cj["inputs"] = std::move(ins);
    cj["output"] = n.wires[static_cast<std::size_t>(c.output)].name;
    cj["stage"] = c.stage;
    switch (c.kind) {
      case CellKind::Const: cj["value"] = raw_json(c.value); break;
      case CellKind::Register: cj["reset_value"] = raw_json(c.value); break;
      case CellKind::Comparator: cj["op"] = c.op == CompareOp::Lt ? "lt" : "eq"; break;
      case CellKind::AndReduce: {
        json inv = json::array();
        for (auto b : c.invert) inv.push_back(static_cast<int>(b));
        cj["invert"] = std::move(inv);
        break;
      }
      case CellKind::LutRom: {
        cj["scale_log2"] = c.scale_log2;
        cj["offset"] = c.offset;
        json e = json::array();
        for (int128 v : c.entries) e.push_back(raw_json(v));
        cj["entries"] = std::move(e);
        cj["below"] = raw_json(c.below);
        cj["above"] = raw_json(c.above);
        break;
      }
      default: break;
    }
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

NetlistIr netlist_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<std::string>() != kNetlistSchemaVersion)
      throw Error(ErrorCode::UnknownSchemaVersion,
                  "unsupported netlist schema_version " + j.at("schema_version").get<std::string>());
    NetlistIr n;
    n.name = j.at("name").get<std::string>();
    n.model_kind = j.at("model_kind").get<std::string>();
    n.latency = j.at("latency").get<int>();
    n.initiation_interval = j.at("initiation_interval").get<int>();
    std::map<std::string, int> index;
    for (const json& w : j.at("wires")) {
      std::string name = w.at("name").get<std::string>();
      if (index.count(name)) throw Error(ErrorCode::ParseError, "duplicate wire " + name);
      index[name] = n.add_wire(name, parse_wire_type(w.at("type").get<std::string>()));
    }
    auto wire = [&](const json& name) {
      auto it = index.find(name.get<std::string>());
      if (it == index.end()) throw Error(ErrorCode::ParseError, "unknown wire " + name.get<std::string>());
      return it->second;
    };
    for (const json& p : j.at("inputs")) n.inputs.push_back({p.at("name").get<std::string>(), wire(p.at("wire"))});
    for (const json& p : j.at("outputs")) n.outputs.push_back({p.at("name").get<std::string>(), wire(p.at("wire"))});
    for (const json& cj : j.at("cells")) {
      Cell c;
      c.name = cj.at("name").get<std::string>();
      c.kind = parse_cell_kind(cj.at("kind").get<std::string>());
      for (const json& w : cj.at("inputs")) c.inputs.push_back(wire(w));
      c.output = wire(cj.at("output"));
      c.stage = cj.at("stage").get<int>();
      switch (c.kind) {
        case CellKind::Const: c.value = raw_from_json(cj.at("value")); break;
        case CellKind::Register: c.value = raw_from_json(cj.at("reset_value")); break;
        case CellKind::Comparator: {
          std::string op = cj.at("op").get<std::string>();
          if (op != "lt" && op != "eq") throw Error(ErrorCode::ParseError, "bad comparator op " + op);
          c.op = op == "lt" ? CompareOp::Lt : CompareOp::Eq;
          break;
        }
        case CellKind::AndReduce:
          for (const json& b : cj.at("invert")) c.invert.push_back(static_cast<std::uint8_t>(b.get<int>() != 0));
          break;
        case CellKind::LutRom:
          c.scale_log2 = cj.at("scale_log2").get<int>();
          c.offset = cj.at("offset").get<int>();
          for (const json& e : cj.at("entries")) c.entries.push_back(raw_from_json(e));
          c.below = raw_from_json(cj.at("below"));
          c.above = raw_from_json(cj.at("above"));
          break;
        default: break;
      }
      n.add_cell(std::move(c));
    }
    return n;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("netlist: ") + e.what());
  }
}

std::vector<std::string> verify_netlist(const NetlistIr& n) {
  std::vector<std::string> out;
  if (n.latency < 0) out.push_back("negative latency");
  if (n.initiation_interval < 1) out.push_back("initiation interval must be at least 1");
  if (n.inputs.empty() || n.outputs.empty()) {
    out.push_back("netlist needs data ports and valid ports");
    return out;
  }
  const WireType valid = WireType::bit_vector(1);
  if (n.wires[static_cast<std::size_t>(n.inputs.back().wire)].type != valid) out.push_back("in_valid must be bits<1>");
  if (n.wires[static_cast<std::size_t>(n.outputs.back().wire)].type != valid) out.push_back("out_valid must be bits<1>");
  Drivers d = find_drivers(n);
  out.insert(out.end(), d.findings.begin(), d.findings.end());
  for (const Cell& c : n.cells) check_cell_types(n, c, out);
  if (!out.empty()) return out;
  for (const Cell& c : n.cells)
    for (int w : c.inputs)
      if (d.driver[static_cast<std::size_t>(w)] == kNoDriver)
        out.push_back(cell_label(c) + ": reads undriven wire " + n.wires[static_cast<std::size_t>(w)].name);
  for (const Port& p : n.outputs)
    if (d.driver[static_cast<std::size_t>(p.wire)] == kNoDriver) out.push_back("output " + p.name + " is undriven");
  std::vector<int> order;
  if (!combinational_order(n, d.driver, order)) out.push_back("combinational loop");
  if (!out.empty()) return out;
  std::vector<bool> dep = input_dependent(n);
  if (n.initiation_interval == 1) check_register_balance(n, d.driver, dep, out);
  check_timing(n, order, d.driver, dep, out);
  return out;
}

void require_verified(const NetlistIr& n) {
  auto findings = verify_netlist(n);
  if (findings.empty()) return;
  std::ostringstream msg;
  msg << findings.size() << " finding(s)";
  for (std::size_t i = 0; i < findings.size() && i < 8; ++i) msg << "\n  " << findings[i];
  throw Error(ErrorCode::UnverifiedNetlist, msg.str());
}

NetlistSimulator::NetlistSimulator(const NetlistIr& n) : n_(n) {
  Drivers d = find_drivers(n);
  if (!d.findings.empty()) throw Error(ErrorCode::UnverifiedNetlist, d.findings.front());
  if (!combinational_order(n, d.driver, order_)) throw Error(ErrorCode::UnverifiedNetlist, "combinational loop");
  for (std::size_t i = 0; i < n.cells.size(); ++i)
    if (n.cells[i].kind == CellKind::Register) registers_.push_back(static_cast<int>(i));
  reset();
}

void NetlistSimulator::reset() {
  values_.assign(n_.wires.size(), 0);
  for (int r : registers_) {
    const Cell& c = n_.cells[static_cast<std::size_t>(r)];
    values_[static_cast<std::size_t>(c.output)] = c.value;
  }
}

void NetlistSimulator::set_input(std::size_t port, int128 value) {
  const Port& p = n_.inputs.at(port);
  if (!value_fits(value, n_.wires[static_cast<std::size_t>(p.wire)].type))
    throw Error(ErrorCode::InvalidArgument, "value does not fit input " + p.name);
  values_[static_cast<std::size_t>(p.wire)] = value;
}

void NetlistSimulator::evaluate() {
  for (int ci : order_) {
    const Cell& c = n_.cells[static_cast<std::size_t>(ci)];
    values_[static_cast<std::size_t>(c.output)] = eval_cell(n_, c, values_);
  }
}

void NetlistSimulator::step() {
  evaluate();
  std::vector<int128> next;
  next.reserve(registers_.size());
  for (int r : registers_) {
    const Cell& c = n_.cells[static_cast<std::size_t>(r)];
    bool en = c.inputs.size() < 2 || (values_[static_cast<std::size_t>(c.inputs[1])] & 1);
    next.push_back(values_[static_cast<std::size_t>(en ? c.inputs[0] : c.output)]);
  }
  for (std::size_t i = 0; i < registers_.size(); ++i)
    values_[static_cast<std::size_t>(n_.cells[static_cast<std::size_t>(registers_[i])].output)] = next[i];
}

int128 NetlistSimulator::output(std::size_t port) const {
  return values_[static_cast<std::size_t>(n_.outputs.at(port).wire)];
}

namespace {

void apply_inputs(NetlistSimulator& sim, const NetlistIr& n, std::span<const FixedPointValue> x) {
  if (x.size() != n.n_data_inputs())
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(n.n_data_inputs()) + " inputs, got " +
                                                std::to_string(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const WireType& t = n.wires[static_cast<std::size_t>(n.inputs[i].wire)].type;
    if (!t.is_fixed || !t.format.same_grid(x[i].format))
      throw Error(ErrorCode::InvalidArgument, "input " + n.inputs[i].name + " expects " + to_string(t));
    sim.set_input(i, x[i].raw);
  }
  sim.set_input(n.inputs.size() - 1, 1);
}

std::vector<FixedPointValue> read_outputs(const NetlistSimulator& sim, const NetlistIr& n) {
  std::vector<FixedPointValue> y;
  for (std::size_t i = 0; i < n.n_data_outputs(); ++i)
    y.push_back({sim.output(i), n.wires[static_cast<std::size_t>(n.outputs[i].wire)].type.format});
  return y;
}

}  // namespace

std::vector<FixedPointValue> interpret_netlist(const NetlistIr& n, std::span<const FixedPointValue> x) {
  NetlistSimulator sim(n);
  apply_inputs(sim, n, x);
  for (int c = 0; c < n.latency; ++c) sim.step();
  sim.evaluate();
  return read_outputs(sim, n);
}

std::vector<std::vector<FixedPointValue>> simulate_stream(
    const NetlistIr& n, const std::vector<std::vector<FixedPointValue>>& xs) {
  std::vector<std::vector<FixedPointValue>> ys;
  if (xs.empty()) return ys;
  NetlistSimulator sim(n);
  const long long ii = n.initiation_interval;
  const long long last = n.latency + static_cast<long long>(xs.size() - 1) * ii;
  for (long long cycle = 0; cycle <= last; ++cycle) {
    if (cycle % ii == 0 && static_cast<std::size_t>(cycle / ii) < xs.size())
      apply_inputs(sim, n, xs[static_cast<std::size_t>(cycle / ii)]);
    sim.evaluate();
    long long rel = cycle - n.latency;
    if (rel >= 0 && rel % ii == 0) ys.push_back(read_outputs(sim, n));
    if (cycle < last) sim.step();
  }
  return ys;
}

}  // namespace mlrtl
