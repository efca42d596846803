#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mlrtl/dataset.hpp"
#include "mlrtl/emulate.hpp"
#include "mlrtl/estimate.hpp"
#include "mlrtl/model.hpp"
#include "mlrtl/netlist.hpp"
#include "mlrtl/quantize.hpp"

namespace mlrtl {

double metric_accuracy(std::span<const int> predictions, std::span<const int> labels);

// Rank statistic (sum of positive ranks - n_pos(n_pos+1)/2) / (n_pos n_neg)
// with midranks for ties. Labels are 0/1; both classes must be present.
double metric_auc(std::span<const double> scores, std::span<const int> labels);

// Gaussian class blobs: labels uniform over classes; feature j of class c has
// mean 1.5 when j mod n_classes == c, else 0; unit variance, independent.
Dataset make_synthetic(std::uint64_t seed, std::size_t n, int n_features, int n_classes);

// Hand-built classifiers for make_synthetic() data; `seed` perturbs the
// parameters. The fcNN is a ReLU layer splitting each feature into its
// positive and negative parts followed by the linear class discriminant.
// Binary problems (n_classes == 2) give a single-score sigmoid BDT.
FcnnModel make_blob_fcnn(std::uint64_t seed, int n_features, int n_classes, int hidden = 0);
BdtEnsemble make_blob_bdt(std::uint64_t seed, int n_features, int n_classes, int n_trees, int depth);

// Score used for AUC: the single output, or output 1 minus output 0 for two
// outputs. Multi-class models use the mean one-vs-rest AUC over outputs.
double model_auc(const std::vector<std::vector<double>>& outputs, std::span<const int> labels);

struct SweepGrid {
  std::vector<int> widths;
  std::vector<double> sparsities{0.0};
  std::vector<int> reuses{1};
};

struct PointContext {
  const Model& model;  // after pruning
  const QuantizedModel& quantized;
  const Dataset& data;
  const FloatBatch& float_results;
  const FixedBatch& fixed_results;
  const NetlistIr& netlist;
};

using MetricHook = std::function<double(const PointContext&)>;

struct SweepOptions {
  int jobs = 1;
  CostModel cost_model = default_cost_model();
  std::vector<std::pair<std::string, MetricHook>> metrics;
};

struct SweepRow {
  int width = 0;
  double sparsity = 0;
  int reuse = 1;
  std::string status = "ok";  // or the error code name when the point cannot be built
  double accuracy = 0;
  double auc = 0;
  double mismatch_vs_float = 0;
  ResourceReport resources;
  std::vector<double> extra;  // one value per metric hook
};

// Calibrates on `data` with every role at `width` bits, prunes fcNNs to
// `sparsity`, lowers with reuse `reuse` and evaluates on `data`.
SweepRow run_point(const Model& m, const Dataset& data, int width, double sparsity, int reuse,
                   const SweepOptions& opts = {});

// Rows in grid order: widths outermost, then sparsity, then reuse.
std::vector<SweepRow> sweep(const Model& m, const Dataset& data, const SweepGrid& grid, const SweepOptions& opts = {});

std::string sweep_csv_header(const std::vector<std::string>& metric_names = {});
std::string sweep_to_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& metric_names = {});
// {"x_axis": "width", "series": [{"label", "metric", "points": [{"x","y","label"}]}]}
std::string sweep_plot_json(const std::vector<SweepRow>& rows);
// Whitespace columns, one blank-line-separated block per (sparsity, reuse).
std::string sweep_gnuplot_dat(const std::vector<SweepRow>& rows);

// Parses "4..24", "4..24:4" or "4,8,16".
std::vector<int> parse_int_grid(const std::string& text);
std::vector<double> parse_real_grid(const std::string& text);

}  // namespace mlrtl
