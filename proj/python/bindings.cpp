#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mlrtl/bench.hpp"
#include "mlrtl/emit.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/estimate.hpp"
#include "mlrtl/fixedpoint.hpp"
#include "mlrtl/ingest.hpp"
#include "mlrtl/lower.hpp"
#include "mlrtl/netlist.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace mlrtl;

namespace {

// Python ints of any size pass through decimal text.
py::int_ to_py(int128 v) { return py::int_(py::str(int128_to_string(v))); }
int128 from_py(const py::int_& v) { return int128_from_string(std::string(py::str(v))); }

FixedPointValue value(const py::int_& raw, const std::string& fmt) { return from_raw(from_py(raw), parse_format(fmt)); }

Dataset to_dataset(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
  Dataset d;
  d.n_features = rows.empty() ? 0 : rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != d.n_features) throw Error(ErrorCode::InvalidArgument, "ragged rows");
    d.features.insert(d.features.end(), r.begin(), r.end());
  }
  if (labels.empty()) labels.assign(rows.size(), 0);
  if (labels.size() != rows.size()) throw Error(ErrorCode::InvalidArgument, "label count differs from row count");
  d.labels = std::move(labels);
  return d;
}

py::dict stats(const Model& m) {
  ModelStats s = model_stats(m);
  return py::dict("model_kind"_a = std::holds_alternative<BdtEnsemble>(m) ? "bdt" : "fcnn", "n_params"_a = s.n_params,
                  "n_nodes"_a = s.n_nodes, "max_depth"_a = s.max_depth, "n_nonzero_weights"_a = s.n_nonzero_weights);
}

}  // namespace

PYBIND11_MODULE(_mlrtl, m) {
  m.doc() = "Bit-exact fixed-point emulation and RTL generation for tree ensembles and dense networks";
  m.attr("__version__") = MLRTL_VERSION;
  m.attr("SCHEMA_VERSION") = std::string(kSchemaVersion);

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result([&]() { return py::exception<Error>(m, "MlrtlError"); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type.get_stored(), (std::string(error_code_name(e.code())) + ": " + e.what()).c_str());
    }
  });

  m.def("normalize_format", [](const std::string& f) { return to_string(parse_format(f)); }, "fmt"_a);
  m.def("quantize_real", [](double x, const std::string& f) { return to_py(quantize_real(x, parse_format(f)).raw); },
        "x"_a, "fmt"_a, "Raw integer of x under fmt");
  m.def("dequantize", [](const py::int_& raw, const std::string& f) { return dequantize(value(raw, f)); }, "raw"_a,
        "fmt"_a);
  m.def("fxp_add",
        [](const py::int_& a, const std::string& fa, const py::int_& b, const std::string& fb, const std::string& out) {
          return to_py(fxp_add(value(a, fa), value(b, fb), parse_format(out)).raw);
        },
        "a"_a, "a_fmt"_a, "b"_a, "b_fmt"_a, "out_fmt"_a);
  m.def("fxp_mul",
        [](const py::int_& a, const std::string& fa, const py::int_& b, const std::string& fb, const std::string& out) {
          return to_py(fxp_mul(value(a, fa), value(b, fb), parse_format(out)).raw);
        },
        "a"_a, "a_fmt"_a, "b"_a, "b_fmt"_a, "out_fmt"_a);

  m.def("ingest", [](const std::string& doc) { return stats(parse_model(doc)); }, "doc"_a,
        "Validate an interchange document and return model statistics");
  m.def("normalize_model", [](const std::string& doc) { return write_model(parse_model(doc)); }, "doc"_a);

  m.def("make_synthetic",
        [](std::uint64_t seed, std::size_t n, int n_features, int n_classes) {
          Dataset d = make_synthetic(seed, n, n_features, n_classes);
          std::vector<std::vector<double>> rows;
          for (std::size_t i = 0; i < d.rows(); ++i) rows.emplace_back(d.row(i).begin(), d.row(i).end());
          return py::make_tuple(rows, d.labels);
        },
        "seed"_a, "n"_a, "n_features"_a, "n_classes"_a);
  m.def("demo_fcnn", [](std::uint64_t seed, int f, int c) { return write_model(make_blob_fcnn(seed, f, c)); },
        "seed"_a = 1, "n_features"_a = 4, "n_classes"_a = 2);
  m.def("demo_bdt",
        [](std::uint64_t seed, int f, int c, int trees, int depth) {
          return write_model(make_blob_bdt(seed, f, c, trees, depth));
        },
        "seed"_a = 1, "n_features"_a = 4, "n_classes"_a = 2, "n_trees"_a = 8, "depth"_a = 3);

  m.def("calibrate_and_quantize",
        [](const std::string& doc, const std::vector<std::vector<double>>& rows, int width) {
          Model model = parse_model(doc);
          Dataset d = to_dataset(rows, {});
          CalibrationWidths w = CalibrationWidths::uniform(width);
          QuantizedModel q;
          if (const auto* b = std::get_if<BdtEnsemble>(&model))
            q = quantize_bdt(*b, calibrate_formats(*b, d, w));
          else
            q = quantize_fcnn(std::get<FcnnModel>(model), calibrate_formats(std::get<FcnnModel>(model), d, w));
          return write_quantized_model(q);
        },
        "doc"_a, "rows"_a, "width"_a);

  m.def("predict_float",
        [](const std::string& doc, const std::vector<std::vector<double>>& rows) {
          FloatBatch b = batch_infer_float(parse_model(doc), to_dataset(rows, {}));
          std::vector<std::vector<double>> values;
          for (const auto& s : b.scores) values.push_back(s.values);
          return py::make_tuple(b.predictions, values);
        },
        "doc"_a, "rows"_a);
  m.def("predict_fixed",
        [](const std::string& qdoc, const std::vector<std::vector<double>>& rows) {
          FixedBatch b = batch_infer_fixed(parse_quantized_model(qdoc), to_dataset(rows, {}));
          std::vector<std::vector<py::int_>> raws;
          for (const auto& s : b.scores) {
            raws.emplace_back();
            for (const auto& v : s.values) raws.back().push_back(to_py(v.raw));
          }
          return py::make_tuple(b.predictions, raws);
        },
        "qdoc"_a, "rows"_a, "Predictions and raw output integers");

  m.def("compile",
        [](const std::string& qdoc, int reuse, const std::string& name) {
          NetlistIr n = lower(parse_quantized_model(qdoc), LowerOptions{reuse, name});
          ResourceReport r = estimate(n, default_cost_model());
          return py::dict("verilog"_a = emit_verilog(n), "netlist"_a = netlist_to_json(n),
                          "report"_a = report_to_json(r), "latency"_a = n.latency, "ii"_a = n.initiation_interval);
        },
        "qdoc"_a, "reuse"_a = 1, "name"_a = "mlrtl_top");
  m.def("lint_verilog",
        [](const std::string& src) {
          std::vector<py::tuple> out;
          for (const auto& f : lint_verilog(src))
            out.push_back(py::make_tuple(std::string(lint_kind_name(f.kind)), f.line, f.message));
          return out;
        },
        "source"_a);

  m.def("metric_auc", [](const std::vector<double>& s, const std::vector<int>& l) { return metric_auc(s, l); },
        "scores"_a, "labels"_a);
  m.def("metric_accuracy", [](const std::vector<int>& p, const std::vector<int>& l) { return metric_accuracy(p, l); },
        "predictions"_a, "labels"_a);
}
