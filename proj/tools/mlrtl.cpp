#include <algorithm>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mlrtl/bench.hpp"
#include "mlrtl/emit.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/error.hpp"
#include "mlrtl/estimate.hpp"
#include "mlrtl/ingest.hpp"
#include "mlrtl/io.hpp"
#include "mlrtl/lower.hpp"
#include "mlrtl/netlist.hpp"

#ifndef MLRTL_VERSION
#define MLRTL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mlrtl;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ';');
  return s;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_file(path, text);
}

// Value errors in flags are usage errors, not domain errors.
template <typename F>
auto flag_value(const std::string& flag, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

CostModel load_cost_model(const std::string& path) {
  return path.empty() ? default_cost_model() : parse_cost_model(read_file(path));
}

std::string model_kind(const Model& m) { return std::holds_alternative<BdtEnsemble>(m) ? "bdt" : "fcnn"; }

CalibrationWidths parse_widths(const std::string& text) {
  CalibrationWidths w;
  if (text.empty()) return w;
  if (text.find('=') == std::string::npos) {
    int v = parse_int_grid(text).at(0);
    return CalibrationWidths::uniform(v);
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto eq = part.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected role=bits, got '" + part + "'");
    std::string role = part.substr(0, eq);
    int v = parse_int_grid(part.substr(eq + 1)).at(0);
    if (role == "input") w.input = v;
    else if (role == "threshold") w.threshold = v;
    else if (role == "leaf") w.leaf = v;
    else if (role == "weight") w.weight = v;
    else if (role == "bias") w.bias = v;
    else if (role == "activation") w.activation = v;
    else if (role == "accum") w.accum = v;
    else if (role == "all") w = CalibrationWidths::uniform(v);
    else throw Error(ErrorCode::InvalidArgument, "unknown role '" + role + "'");
  }
  return w;
}

json stats_json(const Model& m) {
  ModelStats s = model_stats(m);
  return {{"model_kind", model_kind(m)},
          {"n_params", s.n_params},
          {"n_nodes", s.n_nodes},
          {"max_depth", s.max_depth},
          {"n_nonzero_weights", s.n_nonzero_weights}};
}

int128 random_raw(std::mt19937_64& rng, const FixedPointFormat& f) {
  using u128 = unsigned __int128;
  const u128 span = static_cast<u128>(f.max_raw() - f.min_raw()) + 1;
  const u128 r = (static_cast<u128>(rng()) << 64) | rng();
  return f.min_raw() + static_cast<int128>(span == 0 ? r : r % span);
}

// --- subcommands -----------------------------------------------------------

struct IngestArgs {
  std::string model, out;
  bool validate_only = false;
};

int run_ingest(const IngestArgs& a) {
  Metadata meta;
  Model m = parse_model(read_file(a.model), &meta);
  json stats = stats_json(m);
  stats["valid"] = true;
  if (!a.validate_only && !a.out.empty()) write_file(a.out, write_model(m, meta));
  std::cout << stats.dump(2) << "\n";
  return 0;
}

struct QuantizeArgs {
  std::string model, config, calibrate, widths, out, write_config;
};

int run_quantize(const QuantizeArgs& a) {
  Model m = parse_model(read_file(a.model));
  QuantizedModel q;
  QuantizationConfig cfg;
  std::vector<PruneMask> masks;
  if (!a.config.empty()) {
    ConfigFile cf = parse_config(read_file(a.config));
    cfg = cf.quantization;
    if (cf.pruning) {
      if (!std::holds_alternative<FcnnModel>(m))
        throw Error(ErrorCode::InvalidConfig, "pruning applies to fcNN models only");
      PruneResult pr = prune_fcnn(std::get<FcnnModel>(m), *cf.pruning);
      m = pr.model;
      masks = pr.masks;
    }
  } else {
    CalibrationWidths w = flag_value("--widths", [&] { return parse_widths(a.widths); });
    Dataset d = read_csv(a.calibrate);
    cfg = std::visit([&](const auto& mm) { return calibrate_formats(mm, d, w); }, m);
  }
  if (const auto* b = std::get_if<BdtEnsemble>(&m))
    q = quantize_bdt(*b, cfg);
  else
    q = quantize_fcnn(std::get<FcnnModel>(m), cfg, masks);
  if (!a.write_config.empty()) write_file(a.write_config, write_config(ConfigFile{cfg, std::nullopt}));
  emit(a.out, write_quantized_model(q));
  return 0;
}

struct PruneArgs {
  std::string model, sparsity, out;
};

int run_prune(const PruneArgs& a) {
  Model m = parse_model(read_file(a.model));
  const auto* f = std::get_if<FcnnModel>(&m);
  if (!f) throw Error(ErrorCode::InvalidArgument, "pruning applies to fcNN models only");
  PruningConfig p{flag_value("--sparsity", [&] { return parse_real_grid(a.sparsity); })};
  PruneResult pr = prune_fcnn(*f, p);
  emit(a.out, write_model(pr.model));
  if (!a.out.empty()) {
    json summary = json::array();
    for (std::size_t k = 0; k < pr.masks.size(); ++k)
      summary.push_back({{"layer", k}, {"pruned", pr.masks[k].count()}, {"weights", pr.masks[k].rows * pr.masks[k].cols}});
    std::cout << summary.dump() << "\n";
  }
  return 0;
}

struct EmulateArgs {
  std::string model, data, engine = "fixed", order = "tree", out;
  int jobs = 1;
};

int run_emulate(const EmulateArgs& a) {
  std::string bytes = read_file(a.model);
  const std::string kind = document_kind(bytes);
  const bool quantized = kind == "qbdt" || kind == "qfcnn";
  Dataset d = read_csv(a.data);
  std::vector<int> preds;
  std::vector<std::vector<double>> values;
  if (a.engine == "fixed") {
    if (!quantized) throw Error(ErrorCode::InvalidArgument, "the fixed engine needs a quantized model");
    EmulatorOptions opts;
    if (a.order == "sequential") opts.order = AccumulationOrder::Sequential;
    FixedBatch b = batch_infer_fixed(parse_quantized_model(bytes), d, opts, a.jobs);
    preds = b.predictions;
    for (const auto& s : b.scores) values.push_back(s.as_doubles());
  } else {
    Model m = quantized ? std::visit([](const auto& q) { return Model{dequantize_model(q)}; }, parse_quantized_model(bytes))
                        : parse_model(bytes);
    FloatBatch b = batch_infer_float(m, d, a.jobs);
    preds = b.predictions;
    for (const auto& s : b.scores) values.push_back(s.values);
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "row,label,predicted";
  const std::size_t k = values.empty() ? 0 : values.front().size();
  for (std::size_t c = 0; c < k; ++c) csv << ",y" << c;
  csv << "\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    csv << i << "," << d.labels[i] << "," << preds[i];
    for (double v : values[i]) csv << "," << v;
    csv << "\n";
  }
  emit(a.out, csv.str());
  if (!a.out.empty() && !preds.empty())
    std::cout << json{{"rows", preds.size()}, {"accuracy", metric_accuracy(preds, d.labels)}}.dump() << "\n";
  return 0;
}

struct CompileArgs {
  std::string model, out_dir, name = "mlrtl_top", cost_model, tb_data;
  int reuse = 1;
  int tb_samples = 16;
  std::uint64_t seed = 1;
};

int run_compile(const CompileArgs& a) {
  QuantizedModel q = parse_quantized_model(read_file(a.model));
  NetlistIr n = lower(q, LowerOptions{a.reuse, a.name});
  const FixedPointFormat& in_fmt = input_format(q);
  std::vector<std::vector<FixedPointValue>> xs;
  if (!a.tb_data.empty()) {
    Dataset d = read_csv(a.tb_data);
    check_feature_count(d, n_features(q));
    for (std::size_t i = 0; i < d.rows() && xs.size() < static_cast<std::size_t>(a.tb_samples); ++i)
      xs.push_back(quantize_input(d.row(i), in_fmt));
  } else {
    std::mt19937_64 rng(a.seed);
    for (int i = 0; i < a.tb_samples; ++i) {
      std::vector<FixedPointValue> x;
      for (std::size_t j = 0; j < n_features(q); ++j) x.push_back(from_raw(random_raw(rng, in_fmt), in_fmt));
      xs.push_back(std::move(x));
    }
  }
  std::vector<std::vector<FixedPointValue>> expected;
  for (const auto& x : xs) expected.push_back(infer_fixed(q, x).values);
  ResourceReport r = estimate(n, load_cost_model(a.cost_model));
  fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / (a.name + ".v"), emit_verilog(n));
  write_file(dir / (a.name + "_tb.v"), emit_testbench(n, xs, expected));
  write_file(dir / "netlist.json", netlist_to_json(n));
  write_file(dir / "report.json", report_to_json(r));
  std::cout << json{{"latency", n.latency}, {"ii", n.initiation_interval}, {"cells", n.cells.size()},
                    {"lut", r.lut}, {"ff", r.ff}, {"dsp", r.dsp}, {"bram", r.bram}}
                   .dump()
            << "\n";
  return 0;
}

struct ReportArgs {
  std::string netlist, cost_model, format = "json", out;
};

int run_report(const ReportArgs& a) {
  NetlistIr n = netlist_from_json(read_file(a.netlist));
  require_verified(n);
  ResourceReport r = estimate(n, load_cost_model(a.cost_model));
  emit(a.out, a.format == "csv" ? report_to_csv(r) : report_to_json(r));
  return 0;
}

struct SweepArgs {
  std::string model, data, widths, sparsity = "0", reuse = "1", out, plot_json, dat, cost_model;
  int jobs = 1;
};

int run_sweep(const SweepArgs& a) {
  SweepGrid g;
  g.widths = flag_value("--widths", [&] { return parse_int_grid(a.widths); });
  g.sparsities = flag_value("--sparsity", [&] { return parse_real_grid(a.sparsity); });
  g.reuses = flag_value("--reuse", [&] { return parse_int_grid(a.reuse); });
  Model m = parse_model(read_file(a.model));
  Dataset d = read_csv(a.data);
  SweepOptions opts;
  opts.jobs = a.jobs;
  opts.cost_model = load_cost_model(a.cost_model);
  auto rows = sweep(m, d, g, opts);
  emit(a.out, sweep_to_csv(rows));
  if (!a.plot_json.empty()) write_file(a.plot_json, sweep_plot_json(rows));
  if (!a.dat.empty()) write_file(a.dat, sweep_gnuplot_dat(rows));
  return 0;
}

struct DataArgs {
  std::uint64_t seed = 1;
  std::size_t n = 1000;
  int features = 4, classes = 2;
  std::string out;
};

int run_make_data(const DataArgs& a) {
  emit(a.out, to_csv(make_synthetic(a.seed, a.n, a.features, a.classes)));
  return 0;
}

struct DemoArgs {
  std::string kind = "fcnn", out;
  std::uint64_t seed = 1;
  int features = 4, classes = 2, trees = 8, depth = 3, hidden = 0;
};

int run_demo_model(const DemoArgs& a) {
  Model m;
  if (a.kind == "fcnn")
    m = make_blob_fcnn(a.seed, a.features, a.classes, a.hidden);
  else if (a.kind == "bdt")
    m = make_blob_bdt(a.seed, a.features, a.classes, a.trees, a.depth);
  else
    throw UsageError("--kind must be fcnn or bdt");
  emit(a.out, write_model(m));
  return 0;
}

std::string version_text() {
  std::ostringstream s;
  s << "mlrtl " << MLRTL_VERSION << "\n"
    << "interchange schema " << kSchemaVersion << "\n"
    << "netlist schema " << kNetlistSchemaVersion;
  return s.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile trained tree ensembles and dense networks to Verilog."};
  app.name("mlrtl");
  app.set_version_flag("--version", version_text());
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a model and print its statistics");
  c_ingest->add_option("model", ingest.model, "Interchange JSON")->required();
  c_ingest->add_flag("--validate-only", ingest.validate_only, "Only validate");
  c_ingest->add_option("--out", ingest.out, "Write the normalized model here");

  QuantizeArgs quant;
  auto* c_quant = app.add_subcommand("quantize", "Quantize a model");
  c_quant->add_option("model", quant.model, "Interchange JSON")->required();
  auto* o_cfg = c_quant->add_option("--config", quant.config, "Quantization config JSON");
  auto* o_cal = c_quant->add_option("--calibrate", quant.calibrate, "Calibration data CSV");
  o_cfg->excludes(o_cal);
  c_quant->add_option("--widths", quant.widths, "Bits for every role (16) or role=bits,... ")->needs(o_cal);
  c_quant->add_option("--out", quant.out, "Quantized model path (stdout if absent)");
  c_quant->add_option("--write-config", quant.write_config, "Also write the config used");

  PruneArgs prune;
  auto* c_prune = app.add_subcommand("prune", "Magnitude-prune an fcNN");
  c_prune->add_option("model", prune.model, "Interchange JSON")->required();
  c_prune->add_option("--sparsity", prune.sparsity, "One fraction, or one per layer")->required();
  c_prune->add_option("--out", prune.out, "Pruned model path (stdout if absent)");

  EmulateArgs emu;
  auto* c_emu = app.add_subcommand("emulate", "Run the float or bit-exact fixed-point emulator");
  c_emu->add_option("model", emu.model, "Model or quantized model JSON")->required();
  c_emu->add_option("--data", emu.data, "Input CSV")->required();
  c_emu->add_option("--engine", emu.engine, "float or fixed")->check(CLI::IsMember({"float", "fixed"}));
  c_emu->add_option("--order", emu.order, "Accumulation order")->check(CLI::IsMember({"tree", "sequential"}));
  c_emu->add_option("--out", emu.out, "Predictions CSV (stdout if absent)");
  c_emu->add_option("--jobs", emu.jobs, "Worker threads")->check(CLI::PositiveNumber);

  CompileArgs comp;
  auto* c_comp = app.add_subcommand("compile", "Lower a quantized model to Verilog");
  c_comp->add_option("model", comp.model, "Quantized model JSON")->required();
  c_comp->add_option("--reuse", comp.reuse, "Reuse factor")->check(CLI::PositiveNumber);
  c_comp->add_option("--out-dir", comp.out_dir, "Output directory")->required();
  c_comp->add_option("--name", comp.name, "Module name");
  c_comp->add_option("--cost-model", comp.cost_model, "Cost model JSON");
  c_comp->add_option("--tb-data", comp.tb_data, "Testbench inputs CSV (random if absent)");
  c_comp->add_option("--tb-samples", comp.tb_samples, "Testbench sample count")->check(CLI::PositiveNumber);
  c_comp->add_option("--seed", comp.seed, "Seed for random testbench inputs");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Estimate resources of a netlist");
  c_rep->add_option("netlist", rep.netlist, "netlist.json")->required();
  c_rep->add_option("--cost-model", rep.cost_model, "Cost model JSON");
  c_rep->add_option("--format", rep.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  c_rep->add_option("--out", rep.out, "Report path (stdout if absent)");

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "Accuracy and resources over a configuration grid");
  c_sw->add_option("--model", sw.model, "Interchange JSON")->required();
  c_sw->add_option("--data", sw.data, "Calibration and evaluation CSV")->required();
  c_sw->add_option("--widths", sw.widths, "e.g. 4..24 or 8,12,16")->required();
  c_sw->add_option("--sparsity", sw.sparsity, "e.g. 0,0.5,0.9");
  c_sw->add_option("--reuse", sw.reuse, "e.g. 1,2,4");
  c_sw->add_option("--out", sw.out, "CSV path (stdout if absent)");
  c_sw->add_option("--plot-json", sw.plot_json, "Plot series JSON");
  c_sw->add_option("--dat", sw.dat, "gnuplot data file");
  c_sw->add_option("--cost-model", sw.cost_model, "Cost model JSON");
  c_sw->add_option("--jobs", sw.jobs, "Worker threads")->check(CLI::PositiveNumber);

  DataArgs data;
  auto* c_data = app.add_subcommand("make-data", "Write a synthetic Gaussian-blob dataset");
  c_data->add_option("--seed", data.seed, "Seed");
  c_data->add_option("--n", data.n, "Rows");
  c_data->add_option("--features", data.features, "Features")->check(CLI::PositiveNumber);
  c_data->add_option("--classes", data.classes, "Classes")->check(CLI::Range(2, 1000));
  c_data->add_option("--out", data.out, "CSV path (stdout if absent)");

  DemoArgs demo;
  auto* c_demo = app.add_subcommand("demo-model", "Write a hand-built model for make-data datasets");
  c_demo->add_option("--kind", demo.kind, "fcnn or bdt")->check(CLI::IsMember({"fcnn", "bdt"}));
  c_demo->add_option("--seed", demo.seed, "Seed");
  c_demo->add_option("--features", demo.features, "Features")->check(CLI::PositiveNumber);
  c_demo->add_option("--classes", demo.classes, "Classes")->check(CLI::Range(2, 1000));
  c_demo->add_option("--trees", demo.trees, "Trees")->check(CLI::PositiveNumber);
  c_demo->add_option("--depth", demo.depth, "Tree depth")->check(CLI::Range(0, 16));
  c_demo->add_option("--hidden", demo.hidden, "Hidden neurons (at least 2 per feature)");
  c_demo->add_option("--out", demo.out, "Model path (stdout if absent)");

  std::string cm_out;
  auto* c_cm = app.add_subcommand("cost-model", "Print the default cost model");
  c_cm->add_option("--out", cm_out, "Path (stdout if absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion&) {
    std::cout << version_text() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR Usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (c_ingest->parsed()) return run_ingest(ingest);
    if (c_quant->parsed()) {
      if (quant.config.empty() == quant.calibrate.empty()) throw UsageError("quantize needs --config or --calibrate");
      return run_quantize(quant);
    }
    if (c_prune->parsed()) return run_prune(prune);
    if (c_emu->parsed()) return run_emulate(emu);
    if (c_comp->parsed()) return run_compile(comp);
    if (c_rep->parsed()) return run_report(rep);
    if (c_sw->parsed()) return run_sweep(sw);
    if (c_data->parsed()) return run_make_data(data);
    if (c_demo->parsed()) return run_demo_model(demo);
    if (c_cm->parsed()) {
      emit(cm_out, write_cost_model(default_cost_model()));
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "ERROR Usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "ERROR " << error_code_name(e.code()) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR Internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}
