#include "mlrtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mlrtl/error.hpp"

namespace mlrtl {
namespace {

void add(std::vector<Violation>& out, ViolationKind kind, int index, int node,
         std::string message) {
  out.push_back(Violation{kind, index, node, std::move(message)});
}

void validate_tree(const Tree& tree, int t, int n_features, std::vector<Violation>& out) {
  const int n = static_cast<int>(tree.nodes.size());
  if (n == 0) {
    add(out, ViolationKind::EmptyTree, t, -1, "tree has no nodes");
    return;
  }
  for (int i = 0; i < n; ++i) {
    const TreeNode& node = tree.nodes[i];
    if (node.is_leaf) {
      if (!std::isfinite(node.score))
        add(out, ViolationKind::NonFiniteValue, t, i, "leaf score is not finite");
      continue;
    }
    if (node.feature < 0 || node.feature >= n_features)
      add(out, ViolationKind::FeatureOutOfRange, t, i,
          "feature " + std::to_string(node.feature) + " outside [0, " +
              std::to_string(n_features) + ")");
    if (!std::isfinite(node.threshold))
      add(out, ViolationKind::NonFiniteValue, t, i, "threshold is not finite");
    for (int child : {node.left, node.right})
      if (child < 0 || child >= n)
        add(out, ViolationKind::ChildOutOfRange, t, i,
            "child id " + std::to_string(child) + " outside [0, " + std::to_string(n) + ")");
  }

  // Iterative DFS; state 1 = on the current path, 2 = finished.
  std::vector<int> state(n, 0);
  std::vector<int> depth(n, 0);
  struct Frame {
    int node;
    int next_child;
  };
  std::vector<Frame> stack{{0, 0}};
  state[0] = 1;
  int max_depth = 0;
  while (!stack.empty()) {
    Frame& f = stack.back();
    const TreeNode& node = tree.nodes[f.node];
    if (node.is_leaf || f.next_child == 2) {
      max_depth = std::max(max_depth, depth[f.node]);
      state[f.node] = 2;
      stack.pop_back();
      continue;
    }
    int child = f.next_child == 0 ? node.left : node.right;
    ++f.next_child;
    if (child < 0 || child >= n) continue;
    if (state[child] == 1) {
      add(out, ViolationKind::CycleViolation, t, f.node,
          "edge to ancestor " + std::to_string(child));
    } else if (state[child] == 2) {
      add(out, ViolationKind::SharedSubtree, t, f.node,
          "node " + std::to_string(child) + " has more than one parent");
    } else {
      state[child] = 1;
      depth[child] = depth[f.node] + 1;
      stack.push_back({child, 0});
    }
  }
  for (int i = 0; i < n; ++i)
    if (state[i] == 0)
      add(out, ViolationKind::UnreachableNode, t, i, "node not reachable from root");
  if (max_depth > kMaxTreeDepth)
    add(out, ViolationKind::DepthExceeded, t, -1,
        "depth " + std::to_string(max_depth) + " exceeds cap " + std::to_string(kMaxTreeDepth));
}

}  // namespace

std::string_view violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::InvalidCount: return "InvalidCount";
    case ViolationKind::BaseScoreCount: return "BaseScoreCount";
    case ViolationKind::ClassIndexOutOfRange: return "ClassIndexOutOfRange";
    case ViolationKind::EmptyTree: return "EmptyTree";
    case ViolationKind::ChildOutOfRange: return "ChildOutOfRange";
    case ViolationKind::CycleViolation: return "CycleViolation";
    case ViolationKind::SharedSubtree: return "SharedSubtree";
    case ViolationKind::UnreachableNode: return "UnreachableNode";
    case ViolationKind::FeatureOutOfRange: return "FeatureOutOfRange";
    case ViolationKind::DepthExceeded: return "DepthExceeded";
    case ViolationKind::NonFiniteValue: return "NonFiniteValue";
    case ViolationKind::EmptyModel: return "EmptyModel";
    case ViolationKind::ShapeMismatch: return "ShapeMismatch";
    case ViolationKind::SoftmaxPlacement: return "SoftmaxPlacement";
  }
  return "Unknown";
}

std::vector<Violation> validate_bdt(const BdtEnsemble& m) {
  std::vector<Violation> out;
  if (m.n_features < 1) add(out, ViolationKind::InvalidCount, -1, -1, "n_features must be >= 1");
  if (m.n_classes < 1) add(out, ViolationKind::InvalidCount, -1, -1, "n_classes must be >= 1");
  if (m.n_classes >= 1 && m.base_scores.size() != static_cast<std::size_t>(m.n_classes))
    add(out, ViolationKind::BaseScoreCount, -1, -1,
        "expected " + std::to_string(m.n_classes) + " base scores, got " +
            std::to_string(m.base_scores.size()));
  for (double b : m.base_scores)
    if (!std::isfinite(b)) add(out, ViolationKind::NonFiniteValue, -1, -1, "base score is not finite");
  for (std::size_t t = 0; t < m.trees.size(); ++t) {
    const ClassTree& ct = m.trees[t];
    if (ct.class_index < 0 || ct.class_index >= m.n_classes)
      add(out, ViolationKind::ClassIndexOutOfRange, static_cast<int>(t), -1,
          "class_index " + std::to_string(ct.class_index) + " outside [0, " +
              std::to_string(m.n_classes) + ")");
    validate_tree(ct.tree, static_cast<int>(t), m.n_features, out);
  }
  return out;
}

std::vector<Violation> validate_fcnn(const FcnnModel& m) {
  std::vector<Violation> out;
  if (m.layers.empty()) {
    add(out, ViolationKind::EmptyModel, -1, -1, "model has no layers");
    return out;
  }
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const DenseLayer& layer = m.layers[k];
    const int li = static_cast<int>(k);
    if (layer.weights.rows == 0 || layer.weights.cols == 0 ||
        layer.weights.data.size() != layer.weights.rows * layer.weights.cols)
      add(out, ViolationKind::ShapeMismatch, li, -1, "weight matrix is empty or ragged");
    if (layer.bias.size() != layer.weights.rows)
      add(out, ViolationKind::ShapeMismatch, li, -1,
          "bias length " + std::to_string(layer.bias.size()) + " != output size " +
              std::to_string(layer.weights.rows));
    if (k > 0 && m.layers[k - 1].n_out() != layer.n_in())
      add(out, ViolationKind::ShapeMismatch, li, -1,
          "input size " + std::to_string(layer.n_in()) + " != previous output size " +
              std::to_string(m.layers[k - 1].n_out()));
    if (layer.activation == Activation::Softmax && k + 1 != m.layers.size())
      add(out, ViolationKind::SoftmaxPlacement, li, -1, "softmax is only allowed on the final layer");
    bool finite = std::all_of(layer.weights.data.begin(), layer.weights.data.end(),
                              [](double w) { return std::isfinite(w); }) &&
                  std::all_of(layer.bias.begin(), layer.bias.end(),
                              [](double b) { return std::isfinite(b); });
    if (!finite) add(out, ViolationKind::NonFiniteValue, li, -1, "non-finite weight or bias");
  }
  return out;
}

std::vector<Violation> validate(const Model& m) {
  return std::visit(
      [](const auto& model) -> std::vector<Violation> {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, BdtEnsemble>)
          return validate_bdt(model);
        else
          return validate_fcnn(model);
      },
      m);
}

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const Violation& v = violations[i];
    if (i) os << "; ";
    os << violation_name(v.kind);
    if (v.index >= 0) os << " at " << v.index;
    if (v.node >= 0) os << "/" << v.node;
    if (!v.message.empty()) os << " (" << v.message << ")";
  }
  return os.str();
}

int tree_depth(const Tree& t) {
  if (t.nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    const TreeNode& n = t.nodes[id];
    if (n.is_leaf) {
      best = std::max(best, d);
    } else {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return best;
}

ModelStats model_stats(const BdtEnsemble& m) {
  ModelStats s;
  s.n_params = m.base_scores.size();
  for (const ClassTree& ct : m.trees) {
    s.n_nodes += ct.tree.nodes.size();
    s.n_params += ct.tree.nodes.size();  // one threshold or one score per node
    s.max_depth = std::max(s.max_depth, tree_depth(ct.tree));
    for (const TreeNode& n : ct.tree.nodes)
      if (n.is_leaf && n.score != 0.0) ++s.n_nonzero_weights;
  }
  return s;
}

ModelStats model_stats(const FcnnModel& m) {
  ModelStats s;
  s.max_depth = static_cast<int>(m.layers.size());
  for (const DenseLayer& l : m.layers) {
    s.n_params += l.weights.data.size() + l.bias.size();
    s.n_nodes += l.n_out();
    s.n_nonzero_weights += static_cast<std::size_t>(
        std::count_if(l.weights.data.begin(), l.weights.data.end(), [](double w) { return w != 0.0; }));
  }
  return s;
}

ModelStats model_stats(const Model& m) {
  return std::visit([](const auto& model) { return model_stats(model); }, m);
}

std::string_view objective_name(Objective o) {
  switch (o) {
    case Objective::RawScore: return "raw";
    case Objective::Sigmoid: return "sigmoid";
    case Objective::Softmax: return "softmax";
  }
  return "raw";
}

Objective parse_objective(std::string_view s) {
  if (s == "raw") return Objective::RawScore;
  if (s == "sigmoid") return Objective::Sigmoid;
  if (s == "softmax") return Objective::Softmax;
  throw Error(ErrorCode::StructuralViolation, "unknown objective '" + std::string(s) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
  }
  return "linear";
}

Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "softmax") return Activation::Softmax;
  throw Error(ErrorCode::StructuralViolation, "unknown activation '" + std::string(s) + "'");
}

}  // namespace mlrtl
