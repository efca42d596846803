#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mlrtl {

inline constexpr int kMaxTreeDepth = 32;

// Flat array node; node 0 is the root. Routing: left iff x[feature] < threshold.
struct TreeNode {
  bool is_leaf = true;
  int feature = 0;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double score = 0.0;

  static TreeNode leaf(double score) { return TreeNode{true, 0, 0.0, -1, -1, score}; }
  static TreeNode split(int feature, double threshold, int left, int right) {
    return TreeNode{false, feature, threshold, left, right, 0.0};
  }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;
  bool operator==(const Tree&) const = default;
};

struct ClassTree {
  int class_index = 0;
  Tree tree;
  bool operator==(const ClassTree&) const = default;
};

enum class Objective { RawScore, Sigmoid, Softmax };

// n_classes == 1 models a binary problem through a single score.
struct BdtEnsemble {
  int n_features = 0;
  int n_classes = 1;
  std::vector<ClassTree> trees;
  std::vector<double> base_scores;
  Objective objective = Objective::RawScore;

  bool operator==(const BdtEnsemble&) const = default;
};

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

enum class Activation { Linear, ReLU, Sigmoid, Softmax };

// weights is [out x in].
struct DenseLayer {
  Matrix weights;
  std::vector<double> bias;
  Activation activation = Activation::Linear;

  std::size_t n_in() const { return weights.cols; }
  std::size_t n_out() const { return weights.rows; }
  bool operator==(const DenseLayer&) const = default;
};

struct FcnnModel {
  std::vector<DenseLayer> layers;

  std::size_t n_inputs() const { return layers.empty() ? 0 : layers.front().n_in(); }
  std::size_t n_outputs() const { return layers.empty() ? 0 : layers.back().n_out(); }
  bool operator==(const FcnnModel&) const = default;
};

using Model = std::variant<BdtEnsemble, FcnnModel>;

enum class ViolationKind {
  InvalidCount,
  BaseScoreCount,
  ClassIndexOutOfRange,
  EmptyTree,
  ChildOutOfRange,
  CycleViolation,
  SharedSubtree,
  UnreachableNode,
  FeatureOutOfRange,
  DepthExceeded,
  NonFiniteValue,
  EmptyModel,
  ShapeMismatch,
  SoftmaxPlacement,
};

std::string_view violation_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  int index = -1;  // tree or layer
  int node = -1;
  std::string message;
};

std::vector<Violation> validate_bdt(const BdtEnsemble& m);
std::vector<Violation> validate_fcnn(const FcnnModel& m);
std::vector<Violation> validate(const Model& m);
std::string describe(const std::vector<Violation>& violations);

struct ModelStats {
  std::size_t n_params = 0;
  std::size_t n_nodes = 0;  // tree nodes, or neurons for an fcNN
  int max_depth = 0;        // deepest leaf, or layer count for an fcNN
  std::size_t n_nonzero_weights = 0;  // nonzero leaf scores for a BDT
};

ModelStats model_stats(const BdtEnsemble& m);
ModelStats model_stats(const FcnnModel& m);
ModelStats model_stats(const Model& m);

// Depth of the deepest reachable leaf; assumes a valid tree.
int tree_depth(const Tree& t);

std::string_view objective_name(Objective o);
Objective parse_objective(std::string_view s);
std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view s);

}  // namespace mlrtl
