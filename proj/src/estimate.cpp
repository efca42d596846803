#include "mlrtl/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

using json = nlohmann::json;

long long ceil_div(long long a, long long b) { return (a + b - 1) / b; }

long long scaled(double per, long long bits) { return static_cast<long long>(std::ceil(per * static_cast<double>(bits))); }

int width_of(const NetlistIr& n, int wire) { return n.wires[static_cast<std::size_t>(wire)].type.width(); }

const char* const kRuleKeys[] = {"lut_per_bit", "lut_per_bit_input", "lut_inputs", "dsp_width",
                                 "ff_per_bit",  "bram_threshold_bits", "lut_rom_bits"};

json rule_json(const CostRule& r) {
  json j = json::object();
  if (r.lut_per_bit) j["lut_per_bit"] = r.lut_per_bit;
  if (r.lut_per_bit_input) j["lut_per_bit_input"] = r.lut_per_bit_input;
  if (r.lut_inputs) j["lut_inputs"] = r.lut_inputs;
  if (r.dsp_width) j["dsp_width"] = r.dsp_width;
  if (r.ff_per_bit) j["ff_per_bit"] = r.ff_per_bit;
  if (r.bram_threshold_bits) j["bram_threshold_bits"] = r.bram_threshold_bits;
  if (r.lut_rom_bits) j["lut_rom_bits"] = r.lut_rom_bits;
  return j;
}

json counts_json(const ResourceCounts& c) {
  return {{"count", c.count}, {"lut", c.lut}, {"ff", c.ff}, {"dsp", c.dsp}, {"bram", c.bram}};
}

}  // namespace

CostModel default_cost_model() {
  CostModel cm;
  cm.rules[CellKind::Const] = {};
  cm.rules[CellKind::Comparator].lut_per_bit = 1;
  cm.rules[CellKind::AndReduce].lut_inputs = 4;
  cm.rules[CellKind::OrReduce].lut_inputs = 4;
  cm.rules[CellKind::Mux].lut_per_bit_input = 1;
  cm.rules[CellKind::Add].lut_per_bit = 1;
  cm.rules[CellKind::Mul].dsp_width = 18;
  cm.rules[CellKind::ReluClamp].lut_per_bit = 1;
  cm.rules[CellKind::SatCast].lut_per_bit = 1;
  cm.rules[CellKind::LutRom].bram_threshold_bits = 8192;
  cm.rules[CellKind::LutRom].lut_rom_bits = 64;
  cm.rules[CellKind::Register].ff_per_bit = 1;
  return cm;
}

CostModel parse_cost_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
  try {
    CostModel cm;
    if (j.contains("name")) cm.name = j.at("name").get<std::string>();
    for (const auto& [key, rule] : j.at("rules").items()) {
      CellKind kind = parse_cell_kind(key);
      CostRule r;
      for (const auto& [field, value] : rule.items()) {
        if (std::find(std::begin(kRuleKeys), std::end(kRuleKeys), field) == std::end(kRuleKeys))
          throw Error(ErrorCode::InvalidConfig, "unknown cost rule field " + field);
        if (!value.is_number() || value.get<double>() < 0)
          throw Error(ErrorCode::InvalidConfig, "cost rule field " + field + " must be a non-negative number");
      }
      r.lut_per_bit = rule.value("lut_per_bit", 0.0);
      r.lut_per_bit_input = rule.value("lut_per_bit_input", 0.0);
      r.lut_inputs = rule.value("lut_inputs", 0);
      r.dsp_width = rule.value("dsp_width", 0);
      r.ff_per_bit = rule.value("ff_per_bit", 0.0);
      r.bram_threshold_bits = rule.value("bram_threshold_bits", 0LL);
      r.lut_rom_bits = rule.value("lut_rom_bits", 0);
      cm.rules[kind] = r;
    }
    return cm;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("cost model: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw Error(ErrorCode::InvalidConfig, e.what());
    throw;
  }
}

std::string write_cost_model(const CostModel& cm) {
  json rules = json::object();
  for (const auto& [kind, rule] : cm.rules) rules[std::string(cell_kind_name(kind))] = rule_json(rule);
  json j = {{"name", cm.name}, {"rules", rules}};
  return j.dump(2) + "\n";
}

ResourceCounts cell_cost(const NetlistIr& n, const Cell& c, const CostModel& cm) {
  auto it = cm.rules.find(c.kind);
  if (it == cm.rules.end())
    throw Error(ErrorCode::UncoveredCellKind, "cost model has no rule for " + std::string(cell_kind_name(c.kind)));
  const CostRule& r = it->second;
  ResourceCounts out;
  out.count = 1;
  const long long w = width_of(n, c.output);
  const long long k = static_cast<long long>(c.inputs.size());
  switch (c.kind) {
    case CellKind::Const: break;
    case CellKind::Comparator:
      out.lut = scaled(r.lut_per_bit, std::max(width_of(n, c.inputs[0]), width_of(n, c.inputs[1])));
      break;
    case CellKind::AndReduce:
      if (r.lut_inputs > 0 && k > 0) out.lut = ceil_div(k, r.lut_inputs);
      break;
    case CellKind::OrReduce:
      if (r.lut_inputs > 0 && k > 1) out.lut = w * ceil_div(k, r.lut_inputs);
      break;
    case CellKind::Mux: out.lut = scaled(r.lut_per_bit_input, w * (k - 2)); break;
    case CellKind::Add:
    case CellKind::ReluClamp:
    case CellKind::SatCast: out.lut = scaled(r.lut_per_bit, w); break;
    case CellKind::Mul:
      if (r.dsp_width > 0)
        out.dsp = ceil_div(width_of(n, c.inputs[0]), r.dsp_width) * ceil_div(width_of(n, c.inputs[1]), r.dsp_width);
      break;
    case CellKind::LutRom: {
      const long long bits = static_cast<long long>(c.entries.size()) * w;
      if (r.bram_threshold_bits > 0 && bits > r.bram_threshold_bits)
        out.bram = 1;
      else if (r.lut_rom_bits > 0)
        out.lut = ceil_div(bits, r.lut_rom_bits);
      break;
    }
    case CellKind::Register: out.ff = scaled(r.ff_per_bit, w); break;
  }
  return out;
}

ResourceReport estimate(const NetlistIr& n, const CostModel& cm) {
  ResourceReport rep;
  rep.latency_cycles = n.latency;
  rep.initiation_interval = n.initiation_interval;
  for (const Cell& c : n.cells) {
    ResourceCounts cost = cell_cost(n, c, cm);
    ResourceCounts& b = rep.breakdown[c.kind];
    b.count += cost.count;
    b.lut += cost.lut;
    b.ff += cost.ff;
    b.dsp += cost.dsp;
    b.bram += cost.bram;
    rep.lut += cost.lut;
    rep.ff += cost.ff;
    rep.dsp += cost.dsp;
    rep.bram += cost.bram;
  }
  return rep;
}

std::string report_to_json(const ResourceReport& r) {
  json breakdown = json::object();
  for (const auto& [kind, c] : r.breakdown) breakdown[std::string(cell_kind_name(kind))] = counts_json(c);
  json j = {{"lut", r.lut},
            {"ff", r.ff},
            {"dsp", r.dsp},
            {"bram", r.bram},
            {"latency_cycles", r.latency_cycles},
            {"initiation_interval", r.initiation_interval},
            {"breakdown", breakdown}};
  return j.dump(2) + "\n";
}

ResourceReport report_from_json(std::string_view text) {
  try {
    json j = json::parse(text.begin(), text.end());
    ResourceReport r;
    r.lut = j.at("lut").get<long long>();
    r.ff = j.at("ff").get<long long>();
    r.dsp = j.at("dsp").get<long long>();
    r.bram = j.at("bram").get<long long>();
    r.latency_cycles = j.at("latency_cycles").get<int>();
    r.initiation_interval = j.at("initiation_interval").get<int>();
    for (const auto& [key, c] : j.at("breakdown").items())
      r.breakdown[parse_cell_kind(key)] = {c.at("count").get<long long>(), c.at("lut").get<long long>(),
                                           c.at("ff").get<long long>(), c.at("dsp").get<long long>(),
                                           c.at("bram").get<long long>()};
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedJson, std::string("report: ") + e.what());
  }
}

std::string report_to_csv(const ResourceReport& r) {
  std::ostringstream s;
  s << "kind,count,lut,ff,dsp,bram,latency_cycles,initiation_interval\n";
  long long cells = 0;
  for (const auto& [kind, c] : r.breakdown) cells += c.count;
  s << "total," << cells << "," << r.lut << "," << r.ff << "," << r.dsp << "," << r.bram << "," << r.latency_cycles
    << "," << r.initiation_interval << "\n";
  for (const auto& [kind, c] : r.breakdown)
    s << cell_kind_name(kind) << "," << c.count << "," << c.lut << "," << c.ff << "," << c.dsp << "," << c.bram
      << ",,\n";
  return s.str();
}

std::string_view dominance_name(Dominance d) {
  switch (d) {
    case Dominance::Equal: return "equal";
    case Dominance::ADominates: return "a_dominates";
    case Dominance::BDominates: return "b_dominates";
    case Dominance::Incomparable: return "incomparable";
  }
  return "?";
}

Dominance compare_reports(const ResourceReport& a, const ResourceReport& b) {
  const long long av[] = {a.lut, a.ff, a.dsp, a.bram, a.latency_cycles, a.initiation_interval};
  const long long bv[] = {b.lut, b.ff, b.dsp, b.bram, b.latency_cycles, b.initiation_interval};
  bool a_better = false, b_better = false;
  for (int i = 0; i < 6; ++i) {
    a_better = a_better || av[i] < bv[i];
    b_better = b_better || bv[i] < av[i];
  }
  if (a_better && b_better) return Dominance::Incomparable;
  if (a_better) return Dominance::ADominates;
  if (b_better) return Dominance::BDominates;
  return Dominance::Equal;
}

}  // namespace mlrtl
