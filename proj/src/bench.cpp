#include "mlrtl/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mlrtl/error.hpp"
#include "mlrtl/lower.hpp"

namespace mlrtl {
namespace {

std::string real_text(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double normal(std::mt19937_64& rng) {
  double u1 = 1.0 - unit_uniform(rng);
  double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double blob_mean(int feature, int cls, int n_classes) { return feature % n_classes == cls ? 1.5 : 0.0; }

int grow_tree(Tree& t, std::mt19937_64& rng, int depth, double acc, int n_features, int cls, int n_classes) {
  const int id = static_cast<int>(t.nodes.size());
  if (depth == 0) {
    t.nodes.push_back(TreeNode::leaf(0.3 * acc + 0.05 * normal(rng)));
    return id;
  }
  const int f = static_cast<int>(rng() % static_cast<std::uint64_t>(n_features));
  const double th = 0.75 + 0.5 * normal(rng);
  const double s = f % n_classes == cls ? 1.0 : -1.0;
  t.nodes.push_back(TreeNode::split(f, th, -1, -1));
  int l = grow_tree(t, rng, depth - 1, acc - s, n_features, cls, n_classes);
  int r = grow_tree(t, rng, depth - 1, acc + s, n_features, cls, n_classes);
  t.nodes[static_cast<std::size_t>(id)].left = l;
  t.nodes[static_cast<std::size_t>(id)].right = r;
  return id;
}

std::vector<double> binary_scores(const std::vector<std::vector<double>>& outputs, std::size_t k) {
  std::vector<double> s;
  s.reserve(outputs.size());
  for (const auto& o : outputs) s.push_back(o[k]);
  return s;
}

}  // namespace

double metric_accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "prediction and label counts differ");
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double metric_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::InvalidArgument, "score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are doubled so midranks of tied groups stay integral.
  long long rank2_pos = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const long long mid2 = static_cast<long long>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      int l = labels[idx[k]];
      if (l != 0 && l != 1) throw Error(ErrorCode::InvalidArgument, "AUC labels must be 0 or 1");
      if (l == 1) {
        rank2_pos += mid2;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::InvalidArgument, "AUC needs both classes");
  const long long num2 = rank2_pos - n_pos * (n_pos + 1);
  return static_cast<double>(num2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Dataset make_synthetic(std::uint64_t seed, std::size_t n, int n_features, int n_classes) {
  if (n_features < 1 || n_classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least one feature and two classes");
  std::mt19937_64 rng(seed);
  Dataset d;
  d.n_features = static_cast<std::size_t>(n_features);
  for (int j = 0; j < n_features; ++j) d.column_names.push_back("f" + std::to_string(j));
  d.features.reserve(n * d.n_features);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng() % static_cast<std::uint64_t>(n_classes));
    d.labels.push_back(c);
    for (int j = 0; j < n_features; ++j) {
      d.features.push_back(normal(rng) + blob_mean(j, c, n_classes));
    }
  }
  return d;
}

FcnnModel make_blob_fcnn(std::uint64_t seed, int n_features, int n_classes, int hidden) {
  if (n_features < 1 || n_classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least one feature and two classes");
  const std::size_t f = static_cast<std::size_t>(n_features);
  const std::size_t h = std::max<std::size_t>(static_cast<std::size_t>(std::max(hidden, 0)), 2 * f);
  std::mt19937_64 rng(seed);
  DenseLayer l1{Matrix(h, f), std::vector<double>(h), Activation::ReLU};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      double w = r < 2 * f ? (r / 2 == c ? (r % 2 ? -1.0 : 1.0) : 0.0) : 0.25 * normal(rng);
      l1.weights.at(r, c) = w == 0.0 ? 0.0 : w + 0.05 * normal(rng);
    }
    l1.bias[r] = 0.02 * normal(rng);
  }
  const std::size_t k = static_cast<std::size_t>(n_classes);
  DenseLayer l2{Matrix(k, h), std::vector<double>(k), Activation::Linear};
  for (std::size_t c = 0; c < k; ++c) {
    double norm2 = 0;
    for (std::size_t j = 0; j < f; ++j) {
      double mu = blob_mean(static_cast<int>(j), static_cast<int>(c), n_classes);
      norm2 += mu * mu;
      l2.weights.at(c, 2 * j) = mu + 0.05 * normal(rng);
      l2.weights.at(c, 2 * j + 1) = -mu + 0.05 * normal(rng);
    }
    for (std::size_t r = 2 * f; r < h; ++r) l2.weights.at(c, r) = 0.05 * normal(rng);
    l2.bias[c] = -0.5 * norm2;
  }
  return FcnnModel{{l1, l2}};
}

BdtEnsemble make_blob_bdt(std::uint64_t seed, int n_features, int n_classes, int n_trees, int depth) {
  if (n_features < 1 || n_classes < 2) throw Error(ErrorCode::InvalidArgument, "need at least one feature and two classes");
  if (n_trees < 1 || depth < 0 || depth > 16) throw Error(ErrorCode::InvalidArgument, "bad tree count or depth");
  std::mt19937_64 rng(seed);
  BdtEnsemble m;
  m.n_features = n_features;
  const bool binary = n_classes == 2;
  m.n_classes = binary ? 1 : n_classes;
  m.objective = binary ? Objective::Sigmoid : Objective::Softmax;
  m.base_scores.assign(static_cast<std::size_t>(m.n_classes), 0.0);
  for (int t = 0; t < n_trees; ++t) {
    const int cls = binary ? 1 : t % n_classes;
    ClassTree ct{binary ? 0 : cls, {}};
    grow_tree(ct.tree, rng, depth, 0.0, n_features, cls, n_classes);
    m.trees.push_back(std::move(ct));
  }
  return m;
}

double model_auc(const std::vector<std::vector<double>>& outputs, std::span<const int> labels) {
  if (outputs.empty()) throw Error(ErrorCode::InvalidArgument, "no samples");
  const std::size_t k = outputs.front().size();
  if (k == 1) return metric_auc(binary_scores(outputs, 0), labels);
  if (k == 2) {
    std::vector<double> s;
    for (const auto& o : outputs) s.push_back(o[1] - o[0]);
    return metric_auc(s, labels);
  }
  double total = 0;
  int used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<int> one(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) one[i] = labels[i] == static_cast<int>(c);
    if (std::count(one.begin(), one.end(), 1) == 0 || std::count(one.begin(), one.end(), 0) == 0) continue;
    total += metric_auc(binary_scores(outputs, c), one);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::InvalidArgument, "AUC needs both classes");
  return total / used;
}

SweepRow run_point(const Model& m, const Dataset& data, int width, double sparsity, int reuse, const SweepOptions& opts) {
  SweepRow row;
  row.width = width;
  row.sparsity = sparsity;
  row.reuse = reuse;
  const bool is_bdt = std::holds_alternative<BdtEnsemble>(m);
  if (is_bdt && (sparsity != 0.0 || reuse != 1))
    throw Error(ErrorCode::InvalidArgument, "sparsity and reuse apply to fcNN models only");
  try {
    Model used = m;
    QuantizedModel q;
    const CalibrationWidths widths = CalibrationWidths::uniform(width);
    if (is_bdt) {
      const auto& bdt = std::get<BdtEnsemble>(m);
      q = quantize_bdt(bdt, calibrate_formats(bdt, data, widths));
    } else {
      PruneResult pr = prune_fcnn(std::get<FcnnModel>(m), PruningConfig{{sparsity}});
      used = pr.model;
      q = quantize_fcnn(pr.model, calibrate_formats(pr.model, data, widths), pr.masks);
    }
    FloatBatch fb = batch_infer_float(used, data);
    FixedBatch xb = batch_infer_fixed(q, data);
    NetlistIr n = lower(q, LowerOptions{reuse, "mlrtl_top"});
    row.resources = estimate(n, opts.cost_model);
    row.accuracy = metric_accuracy(xb.predictions, data.labels);
    std::vector<std::vector<double>> outs;
    for (const FixedScores& s : xb.scores) outs.push_back(s.as_doubles());
    try {
      row.auc = model_auc(outs, data.labels);
    } catch (const Error&) {
      row.auc = std::nan("");
    }
    std::size_t mismatch = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) mismatch += fb.predictions[i] != xb.predictions[i];
    row.mismatch_vs_float = static_cast<double>(mismatch) / static_cast<double>(data.rows());
    PointContext ctx{used, q, data, fb, xb, n};
    for (const auto& [name, hook] : opts.metrics) row.extra.push_back(hook(ctx));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::WidthTooSmall && e.code() != ErrorCode::InvalidConfig) throw;
    row = SweepRow{};
    row.width = width;
    row.sparsity = sparsity;
    row.reuse = reuse;
    row.status = std::string(error_code_name(e.code()));
    row.accuracy = row.auc = row.mismatch_vs_float = std::nan("");
    row.extra.assign(opts.metrics.size(), std::nan(""));
  }
  return row;
}

std::vector<SweepRow> sweep(const Model& m, const Dataset& data, const SweepGrid& grid, const SweepOptions& opts) {
  if (grid.widths.empty() || grid.sparsities.empty() || grid.reuses.empty())
    throw Error(ErrorCode::InvalidArgument, "sweep grids must be nonempty");
  validate(m).empty() ? void() : throw Error(ErrorCode::StructuralViolation, describe(validate(m)));
  struct Point { int w; double s; int r; };
  std::vector<Point> points;
  for (int w : grid.widths)
    for (double s : grid.sparsities)
      for (int r : grid.reuses) points.push_back({w, s, r});
  std::vector<SweepRow> rows(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, opts.jobs));
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < points.size(); i += jobs) {
      try {
        rows[i] = run_point(m, data, points[i].w, points[i].s, points[i].r, opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < jobs && t < points.size(); ++t) threads.emplace_back(work, t);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

std::string sweep_csv_header(const std::vector<std::string>& metric_names) {
  std::string h = "width,sparsity,reuse,status,accuracy,auc,mismatch_vs_float,lut,ff,dsp,bram,latency,ii";
  for (const auto& m : metric_names) h += "," + m;
  return h + "\n";
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& metric_names) {
  std::ostringstream s;
  s << sweep_csv_header(metric_names);
  for (const SweepRow& r : rows) {
    s << r.width << "," << real_text(r.sparsity) << "," << r.reuse << "," << r.status << "," << real_text(r.accuracy)
      << "," << real_text(r.auc) << "," << real_text(r.mismatch_vs_float) << "," << r.resources.lut << ","
      << r.resources.ff << "," << r.resources.dsp << "," << r.resources.bram << "," << r.resources.latency_cycles
      << "," << r.resources.initiation_interval;
    for (double v : r.extra) s << "," << real_text(v);
    s << "\n";
  }
  return s.str();
}

namespace {

std::string series_key(const SweepRow& r) {
  return "s=" + real_text(r.sparsity) + ",R=" + std::to_string(r.reuse);
}

}  // namespace

std::string sweep_plot_json(const std::vector<SweepRow>& rows) {
  using json = nlohmann::json;
  const char* metrics[] = {"accuracy", "auc", "mismatch_vs_float", "lut", "ff", "dsp", "bram", "latency"};
  std::vector<std::string> keys;
  for (const SweepRow& r : rows)
    if (std::find(keys.begin(), keys.end(), series_key(r)) == keys.end()) keys.push_back(series_key(r));
  json series = json::array();
  for (const char* metric : metrics) {
    for (const std::string& key : keys) {
      json points = json::array();
      for (const SweepRow& r : rows) {
        if (series_key(r) != key || r.status != "ok") continue;
        std::string m = metric;
        double y = m == "accuracy" ? r.accuracy
                   : m == "auc" ? r.auc
                   : m == "mismatch_vs_float" ? r.mismatch_vs_float
                   : m == "lut" ? static_cast<double>(r.resources.lut)
                   : m == "ff" ? static_cast<double>(r.resources.ff)
                   : m == "dsp" ? static_cast<double>(r.resources.dsp)
                   : m == "bram" ? static_cast<double>(r.resources.bram)
                                 : static_cast<double>(r.resources.latency_cycles);
        json pt = {{"x", r.width}, {"label", key}};
        pt["y"] = std::isnan(y) ? json(nullptr) : json(y);
        points.push_back(std::move(pt));
      }
      series.push_back({{"label", std::string(metric) + " " + key}, {"metric", metric}, {"points", points}});
    }
  }
  json j = {{"x_axis", "width"}, {"series", series}};
  return j.dump(2) + "\n";
}

std::string sweep_gnuplot_dat(const std::vector<SweepRow>& rows) {
  std::ostringstream s;
  s << "# width sparsity reuse accuracy auc mismatch_vs_float lut ff dsp bram latency ii\n";
  std::vector<std::string> keys;
  for (const SweepRow& r : rows)
    if (std::find(keys.begin(), keys.end(), series_key(r)) == keys.end()) keys.push_back(series_key(r));
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (k) s << "\n\n";
    s << "# " << keys[k] << "\n";
    for (const SweepRow& r : rows) {
      if (series_key(r) != keys[k] || r.status != "ok") continue;
      s << r.width << " " << real_text(r.sparsity) << " " << r.reuse << " " << real_text(r.accuracy) << " "
        << real_text(r.auc) << " " << real_text(r.mismatch_vs_float) << " " << r.resources.lut << " "
        << r.resources.ff << " " << r.resources.dsp << " " << r.resources.bram << " " << r.resources.latency_cycles
        << " " << r.resources.initiation_interval << "\n";
    }
  }
  return s.str();
}

namespace {

template <typename T>
T parse_number(const std::string& text) {
  T v{};
  const char* b = text.data();
  const char* e = b + text.size();
  while (b < e && *b == ' ') ++b;
  while (e > b && e[-1] == ' ') --e;
  auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc() || r.ptr != e || b == e) throw Error(ErrorCode::InvalidArgument, "bad number '" + text + "'");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

}  // namespace

std::vector<int> parse_int_grid(const std::string& text) {
  std::vector<int> out;
  if (auto dots = text.find(".."); dots != std::string::npos) {
    std::string rest = text.substr(dots + 2);
    int step = 1;
    if (auto colon = rest.find(':'); colon != std::string::npos) {
      step = parse_number<int>(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    int lo = parse_number<int>(text.substr(0, dots)), hi = parse_number<int>(rest);
    if (step < 1 || hi < lo) throw Error(ErrorCode::InvalidArgument, "bad range '" + text + "'");
    for (int v = lo; v <= hi; v += step) out.push_back(v);
    return out;
  }
  for (const auto& p : split(text, ',')) out.push_back(parse_number<int>(p));
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty grid");
  return out;
}

std::vector<double> parse_real_grid(const std::string& text) {
  std::vector<double> out;
  for (const auto& p : split(text, ',')) out.push_back(parse_number<double>(p));
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty grid");
  return out;
}

}  // namespace mlrtl
