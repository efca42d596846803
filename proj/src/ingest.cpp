#include "mlrtl/ingest.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

namespace mlrtl {
namespace {

using json = nlohmann::json;

[[noreturn]] void bad(const std::string& msg) {
  throw Error(ErrorCode::StructuralViolation, msg);
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) bad(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) bad(where + ": missing \"" + key + "\"");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) bad(where + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) bad(where + ": NaN and infinities are not allowed");
  return v;
}

long long integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad(where + ": expected an integer");
  if (j.is_number_unsigned() &&
      j.get<unsigned long long>() > static_cast<unsigned long long>(std::numeric_limits<long long>::max()))
    bad(where + ": integer out of range");
  return j.get<long long>();
}

int small_int(const json& j, const std::string& where) {
  long long v = integer(j, where);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    bad(where + ": integer out of range");
  return static_cast<int>(v);
}

const json& array(const json& j, const std::string& where) {
  if (!j.is_array()) bad(where + ": expected an array");
  return j;
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) bad(where + ": expected a string");
  return j.get<std::string>();
}

int128 raw_value(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return static_cast<int128>(j.get<unsigned long long>());
  if (j.is_number_integer()) return static_cast<int128>(j.get<long long>());
  bad(where + ": expected an integer raw value");
}

json raw_json(int128 raw) {
  if (raw >= std::numeric_limits<long long>::min() && raw <= std::numeric_limits<long long>::max())
    return json(static_cast<long long>(raw));
  return json(static_cast<unsigned long long>(raw));
}

FixedPointFormat fmt_field(const json& obj, const char* key, const std::string& where) {
  const json& j = field(obj, key, where);
  try {
    return parse_format(text(j, where + "." + key));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidFormat) throw Error(ErrorCode::InvalidConfig, e.what());
    throw;
  }
}

json parse_json(std::string_view bytes) {
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
}

struct Envelope {
  std::string kind;
  const json* payload;
  Metadata metadata;
};

Envelope open_envelope(const json& doc) {
  if (!doc.is_object()) bad("document: expected a JSON object");
  auto sv = doc.find("schema_version");
  if (sv == doc.end() || !sv->is_string() || sv->get<std::string>() != kSchemaVersion)
    throw Error(ErrorCode::UnknownSchemaVersion,
                "schema_version must be \"" + std::string(kSchemaVersion) + "\"");
  Envelope env;
  env.kind = text(field(doc, "model_kind", "document"), "model_kind");
  env.payload = &field(doc, "payload", "document");
  if (!env.payload->is_object()) bad("payload: expected an object");
  if (auto md = doc.find("metadata"); md != doc.end()) {
    if (!md->is_object()) bad("metadata: expected an object");
    if (auto sf = md->find("source_framework"); sf != md->end())
      env.metadata.source_framework = text(*sf, "metadata.source_framework");
    if (auto cr = md->find("created"); cr != md->end())
      env.metadata.created = text(*cr, "metadata.created");
  }
  return env;
}

json envelope(std::string_view kind, json payload, const Metadata& md) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["model_kind"] = kind;
  doc["metadata"] = {{"source_framework", md.source_framework}, {"created", md.created}};
  doc["payload"] = std::move(payload);
  return doc;
}

void throw_if_invalid(std::vector<Violation> v) {
  if (v.empty()) return;
  bool depth = std::any_of(v.begin(), v.end(), [](const Violation& x) {
    return x.kind == ViolationKind::DepthExceeded;
  });
  throw StructuralError(depth ? ErrorCode::DepthCapExceeded : ErrorCode::StructuralViolation,
                        std::move(v));
}

std::vector<TreeNode> parse_nodes(const json& nodes, const std::string& where) {
  std::vector<TreeNode> out;
  array(nodes, where);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    std::string w = where + "[" + std::to_string(i) + "]";
    if (!n.is_object()) bad(w + ": expected an object");
    if (n.contains("leaf")) {
      if (n.contains("feature") || n.contains("left") || n.contains("right"))
        bad(w + ": leaf node carries split fields");
      out.push_back(TreeNode::leaf(number(n["leaf"], w + ".leaf")));
    } else {
      out.push_back(TreeNode::split(small_int(field(n, "feature", w), w + ".feature"),
                                    number(field(n, "threshold", w), w + ".threshold"),
                                    small_int(field(n, "left", w), w + ".left"),
                                    small_int(field(n, "right", w), w + ".right")));
    }
  }
  return out;
}

BdtEnsemble parse_bdt_payload(const json& p) {
  BdtEnsemble m;
  m.n_features = small_int(field(p, "n_features", "payload"), "payload.n_features");
  m.n_classes = small_int(field(p, "n_classes", "payload"), "payload.n_classes");
  for (const json& b : array(field(p, "base_scores", "payload"), "payload.base_scores"))
    m.base_scores.push_back(number(b, "payload.base_scores[]"));
  m.objective = parse_objective(text(field(p, "objective", "payload"), "payload.objective"));
  const json& trees = array(field(p, "trees", "payload"), "payload.trees");
  for (std::size_t t = 0; t < trees.size(); ++t) {
    std::string w = "payload.trees[" + std::to_string(t) + "]";
    ClassTree ct;
    ct.class_index = small_int(field(trees[t], "class_index", w), w + ".class_index");
    ct.tree.nodes = parse_nodes(field(trees[t], "nodes", w), w + ".nodes");
    m.trees.push_back(std::move(ct));
  }
  return m;
}

Matrix parse_matrix(const json& rows, const std::string& where) {
  array(rows, where);
  Matrix mat;
  mat.rows = rows.size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const json& row = array(rows[r], where + "[" + std::to_string(r) + "]");
    if (r == 0) mat.cols = row.size();
    if (row.size() != mat.cols)
      throw StructuralError(ErrorCode::StructuralViolation,
                            {Violation{ViolationKind::ShapeMismatch, -1, -1, where + " is ragged"}});
    for (const json& v : row) mat.data.push_back(number(v, where));
  }
  return mat;
}

FcnnModel parse_fcnn_payload(const json& p) {
  FcnnModel m;
  const json& layers = array(field(p, "layers", "payload"), "payload.layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    std::string w = "payload.layers[" + std::to_string(k) + "]";
    DenseLayer layer;
    layer.weights = parse_matrix(field(layers[k], "weights", w), w + ".weights");
    for (const json& b : array(field(layers[k], "bias", w), w + ".bias"))
      layer.bias.push_back(number(b, w + ".bias"));
    layer.activation = parse_activation(text(field(layers[k], "activation", w), w + ".activation"));
    m.layers.push_back(std::move(layer));
  }
  return m;
}

json bdt_payload(const BdtEnsemble& m) {
  json trees = json::array();
  for (const ClassTree& ct : m.trees) {
    json nodes = json::array();
    for (const TreeNode& n : ct.tree.nodes) {
      if (n.is_leaf)
        nodes.push_back({{"leaf", n.score}});
      else
        nodes.push_back({{"feature", n.feature},
                         {"threshold", n.threshold},
                         {"left", n.left},
                         {"right", n.right}});
    }
    trees.push_back({{"class_index", ct.class_index}, {"nodes", std::move(nodes)}});
  }
  return {{"n_features", m.n_features},
          {"n_classes", m.n_classes},
          {"base_scores", m.base_scores},
          {"objective", std::string(objective_name(m.objective))},
          {"trees", std::move(trees)}};
}

json fcnn_payload(const FcnnModel& m) {
  json layers = json::array();
  for (const DenseLayer& l : m.layers) {
    json rows = json::array();
    for (std::size_t r = 0; r < l.n_out(); ++r) {
      auto row = l.weights.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    layers.push_back({{"weights", std::move(rows)},
                      {"bias", l.bias},
                      {"activation", std::string(activation_name(l.activation))}});
  }
  return {{"layers", std::move(layers)}};
}

json sigmoid_json(const SigmoidLutConfig& s) { return {{"size", s.size}, {"range", s.range}}; }

SigmoidLutConfig parse_sigmoid(const json& j) {
  SigmoidLutConfig s;
  if (auto it = j.find("size"); it != j.end()) s.size = small_int(*it, "sigmoid_lut.size");
  if (auto it = j.find("range"); it != j.end()) s.range = number(*it, "sigmoid_lut.range");
  check_sigmoid_config(s);
  return s;
}

json layer_formats_json(const LayerFormats& lf) {
  return {{"weight_fmt", to_string(lf.weight)},
          {"bias_fmt", to_string(lf.bias)},
          {"accum_fmt", to_string(lf.accum)},
          {"activation_fmt", to_string(lf.activation)}};
}

LayerFormats parse_layer_formats(const json& j, const std::string& w) {
  return {fmt_field(j, "weight_fmt", w), fmt_field(j, "bias_fmt", w), fmt_field(j, "accum_fmt", w),
          fmt_field(j, "activation_fmt", w)};
}

json config_json(const QuantizationConfig& cfg) {
  json j;
  j["input_fmt"] = to_string(cfg.input);
  if (cfg.bdt)
    j["bdt"] = {{"threshold_fmt", to_string(cfg.bdt->threshold)},
                {"leaf_fmt", to_string(cfg.bdt->leaf)},
                {"accum_fmt", to_string(cfg.bdt->accum)}};
  if (!cfg.layers.empty()) {
    json layers = json::array();
    for (const LayerFormats& lf : cfg.layers) layers.push_back(layer_formats_json(lf));
    j["layers"] = std::move(layers);
  }
  j["sigmoid_lut"] = sigmoid_json(cfg.sigmoid);
  return j;
}

QuantizationConfig parse_config_object(const json& j) {
  QuantizationConfig cfg;
  cfg.input = fmt_field(j, "input_fmt", "config");
  if (auto it = j.find("bdt"); it != j.end())
    cfg.bdt = BdtFormats{fmt_field(*it, "threshold_fmt", "config.bdt"),
                         fmt_field(*it, "leaf_fmt", "config.bdt"),
                         fmt_field(*it, "accum_fmt", "config.bdt")};
  if (auto it = j.find("layers"); it != j.end()) {
    array(*it, "config.layers");
    for (std::size_t k = 0; k < it->size(); ++k)
      cfg.layers.push_back(parse_layer_formats((*it)[k], "config.layers[" + std::to_string(k) + "]"));
  }
  if (auto it = j.find("sigmoid_lut"); it != j.end()) cfg.sigmoid = parse_sigmoid(*it);
  return cfg;
}

std::vector<int128> parse_raws(const json& j, const FixedPointFormat& fmt, const std::string& w) {
  std::vector<int128> out;
  for (const json& v : array(j, w)) {
    int128 r = raw_value(v, w);
    if (!raw_fits(r, fmt)) bad(w + ": raw " + int128_to_string(r) + " does not fit " + to_string(fmt));
    out.push_back(r);
  }
  return out;
}

QuantizedBdt parse_qbdt_payload(const json& p) {
  QuantizedBdt q;
  q.config = parse_config_object(field(p, "config", "payload"));
  try {
    check_bdt_config(q.config);
  } catch (const Error& e) {
    bad(e.what());
  }
  const BdtFormats& f = q.formats();
  q.n_features = small_int(field(p, "n_features", "payload"), "payload.n_features");
  q.n_classes = small_int(field(p, "n_classes", "payload"), "payload.n_classes");
  q.objective = parse_objective(text(field(p, "objective", "payload"), "payload.objective"));
  q.base_scores = parse_raws(field(p, "base_scores", "payload"), f.leaf, "payload.base_scores");
  const json& trees = array(field(p, "trees", "payload"), "payload.trees");
  for (std::size_t t = 0; t < trees.size(); ++t) {
    std::string w = "payload.trees[" + std::to_string(t) + "]";
    QuantizedTree qt;
    qt.class_index = small_int(field(trees[t], "class_index", w), w + ".class_index");
    const json& nodes = array(field(trees[t], "nodes", w), w + ".nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const json& n = nodes[i];
      std::string nw = w + ".nodes[" + std::to_string(i) + "]";
      if (!n.is_object()) bad(nw + ": expected an object");
      QuantizedNode qn;
      if (n.contains("leaf")) {
        qn.score = raw_value(n["leaf"], nw);
        if (!raw_fits(qn.score, f.leaf)) bad(nw + ": leaf raw does not fit leaf_fmt");
      } else {
        qn.is_leaf = false;
        qn.feature = small_int(field(n, "feature", nw), nw);
        qn.threshold = raw_value(field(n, "threshold", nw), nw);
        if (!raw_fits(qn.threshold, f.threshold))
          bad(nw + ": threshold raw does not fit threshold_fmt");
        qn.left = small_int(field(n, "left", nw), nw);
        qn.right = small_int(field(n, "right", nw), nw);
      }
      qt.nodes.push_back(qn);
    }
    q.trees.push_back(std::move(qt));
  }
  throw_if_invalid(validate_bdt(dequantize_model(q)));
  return q;
}

QuantizedFcnn parse_qfcnn_payload(const json& p) {
  QuantizedFcnn q;
  q.config = parse_config_object(field(p, "config", "payload"));
  const json& layers = array(field(p, "layers", "payload"), "payload.layers");
  if (q.config.layers.size() != layers.size())
    bad("payload: config has " + std::to_string(q.config.layers.size()) + " layer formats for " +
        std::to_string(layers.size()) + " layers");
  try {
    check_fcnn_config(q.config, layers.size());
  } catch (const Error& e) {
    bad(e.what());
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    std::string w = "payload.layers[" + std::to_string(k) + "]";
    const LayerFormats& lf = q.config.layers[k];
    QuantizedLayer ql;
    const json& rows = array(field(layers[k], "weights", w), w + ".weights");
    ql.rows = rows.size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto row = parse_raws(rows[r], lf.weight, w + ".weights");
      if (r == 0) ql.cols = row.size();
      if (row.size() != ql.cols) bad(w + ".weights is ragged");
      ql.weights.insert(ql.weights.end(), row.begin(), row.end());
    }
    ql.bias = parse_raws(field(layers[k], "bias", w), lf.bias, w + ".bias");
    ql.activation = parse_activation(text(field(layers[k], "activation", w), w + ".activation"));
    ql.prune_mask = PruneMask{ql.rows, ql.cols, std::vector<std::uint8_t>(ql.rows * ql.cols, 0)};
    if (auto it = layers[k].find("prune_mask"); it != layers[k].end()) {
      const json& mrows = array(*it, w + ".prune_mask");
      if (mrows.size() != ql.rows) bad(w + ".prune_mask shape differs from weights");
      for (std::size_t r = 0; r < ql.rows; ++r) {
        const json& mr = array(mrows[r], w + ".prune_mask");
        if (mr.size() != ql.cols) bad(w + ".prune_mask shape differs from weights");
        for (std::size_t c = 0; c < ql.cols; ++c) {
          long long v = integer(mr[c], w + ".prune_mask");
          if (v != 0 && v != 1) bad(w + ".prune_mask entries must be 0 or 1");
          if (v == 1 && ql.weight(r, c) != 0) bad(w + ": pruned weight is nonzero");
          ql.prune_mask.pruned[r * ql.cols + c] = static_cast<std::uint8_t>(v);
        }
      }
    }
    q.layers.push_back(std::move(ql));
  }
  throw_if_invalid(validate_fcnn(dequantize_model(q)));
  return q;
}

json qbdt_payload(const QuantizedBdt& q) {
  json trees = json::array();
  for (const QuantizedTree& qt : q.trees) {
    json nodes = json::array();
    for (const QuantizedNode& n : qt.nodes) {
      if (n.is_leaf)
        nodes.push_back({{"leaf", raw_json(n.score)}});
      else
        nodes.push_back({{"feature", n.feature},
                         {"threshold", raw_json(n.threshold)},
                         {"left", n.left},
                         {"right", n.right}});
    }
    trees.push_back({{"class_index", qt.class_index}, {"nodes", std::move(nodes)}});
  }
  json base = json::array();
  for (int128 b : q.base_scores) base.push_back(raw_json(b));
  return {{"config", config_json(q.config)},
          {"n_features", q.n_features},
          {"n_classes", q.n_classes},
          {"objective", std::string(objective_name(q.objective))},
          {"base_scores", std::move(base)},
          {"trees", std::move(trees)}};
}

json qfcnn_payload(const QuantizedFcnn& q) {
  json layers = json::array();
  for (const QuantizedLayer& l : q.layers) {
    json rows = json::array(), mask = json::array(), bias = json::array();
    for (std::size_t r = 0; r < l.rows; ++r) {
      json row = json::array(), mrow = json::array();
      for (std::size_t c = 0; c < l.cols; ++c) {
        row.push_back(raw_json(l.weight(r, c)));
        mrow.push_back(static_cast<int>(l.prune_mask.pruned[r * l.cols + c]));
      }
      rows.push_back(std::move(row));
      mask.push_back(std::move(mrow));
    }
    for (int128 b : l.bias) bias.push_back(raw_json(b));
    layers.push_back({{"weights", std::move(rows)},
                      {"bias", std::move(bias)},
                      {"activation", std::string(activation_name(l.activation))},
                      {"prune_mask", std::move(mask)}});
  }
  return {{"config", config_json(q.config)}, {"layers", std::move(layers)}};
}

}  // namespace

std::string document_kind(std::string_view bytes) {
  json doc = parse_json(bytes);
  return open_envelope(doc).kind;
}

Model parse_model(std::string_view bytes, Metadata* metadata) {
  json doc = parse_json(bytes);
  Envelope env = open_envelope(doc);
  if (metadata) *metadata = env.metadata;
  if (env.kind == "bdt") {
    BdtEnsemble m = parse_bdt_payload(*env.payload);
    throw_if_invalid(validate_bdt(m));
    return m;
  }
  if (env.kind == "fcnn") {
    FcnnModel m = parse_fcnn_payload(*env.payload);
    throw_if_invalid(validate_fcnn(m));
    return m;
  }
  bad("model_kind must be \"bdt\" or \"fcnn\", got \"" + env.kind + "\"");
}

std::string write_model(const Model& m, const Metadata& metadata) {
  json doc;
  if (const auto* bdt = std::get_if<BdtEnsemble>(&m)) {
    if (bdt->trees.empty()) throw Error(ErrorCode::EmptyModel, "ensemble has no trees");
    doc = envelope("bdt", bdt_payload(*bdt), metadata);
  } else {
    const auto& fcnn = std::get<FcnnModel>(m);
    if (fcnn.layers.empty()) throw Error(ErrorCode::EmptyModel, "network has no layers");
    doc = envelope("fcnn", fcnn_payload(fcnn), metadata);
  }
  return doc.dump(2) + "\n";
}

QuantizedModel parse_quantized_model(std::string_view bytes) {
  json doc = parse_json(bytes);
  Envelope env = open_envelope(doc);
  if (env.kind == "qbdt") return parse_qbdt_payload(*env.payload);
  if (env.kind == "qfcnn") return parse_qfcnn_payload(*env.payload);
  bad("model_kind must be \"qbdt\" or \"qfcnn\", got \"" + env.kind + "\"");
}

std::string write_quantized_model(const QuantizedModel& qm, const Metadata& metadata) {
  json doc;
  if (const auto* q = std::get_if<QuantizedBdt>(&qm)) {
    if (q->trees.empty()) throw Error(ErrorCode::EmptyModel, "ensemble has no trees");
    doc = envelope("qbdt", qbdt_payload(*q), metadata);
  } else {
    const auto& f = std::get<QuantizedFcnn>(qm);
    if (f.layers.empty()) throw Error(ErrorCode::EmptyModel, "network has no layers");
    doc = envelope("qfcnn", qfcnn_payload(f), metadata);
  }
  return doc.dump(2) + "\n";
}

ConfigFile parse_config(std::string_view bytes) {
  json j = parse_json(bytes);
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  ConfigFile out;
  try {
    out.quantization = parse_config_object(j);
    if (auto it = j.find("pruning"); it != j.end()) {
      PruningConfig p;
      const json& s = field(*it, "sparsity", "config.pruning");
      if (s.is_array()) {
        for (const json& v : s) p.sparsity.push_back(number(v, "config.pruning.sparsity"));
      } else {
        p.sparsity.push_back(number(s, "config.pruning.sparsity"));
      }
      out.pruning = std::move(p);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::StructuralViolation) throw Error(ErrorCode::InvalidConfig, e.what());
    throw;
  }
  return out;
}

std::string write_config(const ConfigFile& cfg) {
  json j = config_json(cfg.quantization);
  if (cfg.pruning) j["pruning"] = {{"sparsity", cfg.pruning->sparsity}};
  return j.dump(2) + "\n";
}

}  // namespace mlrtl
