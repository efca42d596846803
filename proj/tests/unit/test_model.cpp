#include <algorithm>

#include "doctest.h"
#include "generators.hpp"
#include "mlrtl/model.hpp"

using namespace mlrtl;
using namespace mlrtl::testing;

namespace {

BdtEnsemble one_leaf() {
  BdtEnsemble m;
  m.n_features = 1;
  m.trees.push_back({0, Tree{{TreeNode::leaf(0.7)}}});
  m.base_scores = {0.0};
  return m;
}

bool has(const std::vector<Violation>& v, ViolationKind k) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; });
}

DenseLayer dense(std::size_t out, std::size_t in, Activation a = Activation::Linear) {
  return DenseLayer{Matrix(out, in, 0.5), std::vector<double>(out, 0.0), a};
}

Tree full_tree(int depth) {
  Tree t;
  // Breadth-first numbering of a complete tree.
  int internal = (1 << depth) - 1, total = (1 << (depth + 1)) - 1;
  for (int i = 0; i < total; ++i)
    t.nodes.push_back(i < internal ? TreeNode::split(0, 0.0, 2 * i + 1, 2 * i + 2) : TreeNode::leaf(1.0));
  return t;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("validate_bdt examples") {
  CHECK(validate_bdt(one_leaf()).empty());

  auto m = one_leaf();
  m.trees[0].tree.nodes = {TreeNode::split(0, 0.5, 0, 1), TreeNode::leaf(1)};
  CHECK(has(validate_bdt(m), ViolationKind::CycleViolation));

  m = one_leaf();
  m.trees[0].tree.nodes = {TreeNode::split(1, 0.5, 1, 2), TreeNode::leaf(1), TreeNode::leaf(2)};
  CHECK(has(validate_bdt(m), ViolationKind::FeatureOutOfRange));
}

TEST_CASE("validate_bdt structural violations") {
  auto m = one_leaf();
  m.trees[0].class_index = 1;
  CHECK(has(validate_bdt(m), ViolationKind::ClassIndexOutOfRange));

  m = one_leaf();
  m.trees[0].tree.nodes = {TreeNode::split(0, 0.5, 1, 5), TreeNode::leaf(1)};
  CHECK(has(validate_bdt(m), ViolationKind::ChildOutOfRange));

  m = one_leaf();
  m.trees[0].tree.nodes = {TreeNode::split(0, 0.5, 1, 1), TreeNode::leaf(1)};
  CHECK(has(validate_bdt(m), ViolationKind::SharedSubtree));

  m = one_leaf();
  m.trees[0].tree.nodes.push_back(TreeNode::leaf(3));
  CHECK(has(validate_bdt(m), ViolationKind::UnreachableNode));

  m = one_leaf();
  m.trees[0].tree.nodes.clear();
  CHECK(has(validate_bdt(m), ViolationKind::EmptyTree));

  m = one_leaf();
  m.base_scores = {0.0, 1.0};
  CHECK(has(validate_bdt(m), ViolationKind::BaseScoreCount));

  m = one_leaf();
  m.trees[0].tree.nodes[0].score = std::nan("");
  CHECK(has(validate_bdt(m), ViolationKind::NonFiniteValue));

  m = one_leaf();
  m.trees[0].tree.nodes.clear();
  Tree chain;
  for (int i = 0; i < 33; ++i) {
    chain.nodes.push_back(TreeNode::split(0, 0.0, 2 * i + 1, 2 * i + 2));
    chain.nodes.push_back(TreeNode::leaf(0));
  }
  chain.nodes.push_back(TreeNode::leaf(0));
  m.trees[0].tree = chain;
  CHECK(has(validate_bdt(m), ViolationKind::DepthExceeded));
}

TEST_CASE("depth 32 is allowed") {
  auto m = one_leaf();
  Tree chain;
  for (int i = 0; i < 32; ++i) {
    chain.nodes.push_back(TreeNode::split(0, 0.0, 2 * i + 1, 2 * i + 2));
    chain.nodes.push_back(TreeNode::leaf(0));
  }
  chain.nodes.push_back(TreeNode::leaf(0));
  m.trees[0].tree = chain;
  CHECK(tree_depth(chain) == 32);
  CHECK(validate_bdt(m).empty());
}

TEST_CASE("validate_fcnn examples") {
  CHECK(validate_fcnn(FcnnModel{{dense(2, 3)}}).empty());
  auto v = validate_fcnn(FcnnModel{{dense(2, 3), dense(1, 3)}});
  REQUIRE(has(v, ViolationKind::ShapeMismatch));
  CHECK(std::find_if(v.begin(), v.end(), [](const Violation& x) { return x.kind == ViolationKind::ShapeMismatch; })
            ->index == 1);
  CHECK(has(validate_fcnn(FcnnModel{{dense(2, 3, Activation::Softmax), dense(1, 2)}}), ViolationKind::SoftmaxPlacement));
  CHECK(validate_fcnn(FcnnModel{{dense(2, 3), dense(2, 2, Activation::Softmax)}}).empty());
  CHECK(has(validate_fcnn(FcnnModel{}), ViolationKind::EmptyModel));
  auto l = dense(2, 3);
  l.bias.pop_back();
  CHECK(has(validate_fcnn(FcnnModel{{l}}), ViolationKind::ShapeMismatch));
}

TEST_CASE("model_stats examples") {
  DenseLayer l{Matrix(1, 2), {0.0}, Activation::Linear};
  l.weights.at(0, 0) = 1.0;
  auto s = model_stats(FcnnModel{{l}});
  CHECK(s.n_params == 3);
  CHECK(s.n_nonzero_weights == 1);

  BdtEnsemble m = one_leaf();
  m.trees[0].tree = full_tree(2);
  auto b = model_stats(m);
  CHECK(b.n_nodes == 7);
  CHECK(b.max_depth == 2);

  CHECK(model_stats(FcnnModel{{dense(4, 4), dense(2, 4)}}).n_params == 4 * 4 + 4 + 4 * 2 + 2);
}

TEST_CASE("model_stats is invariant under renumbering tree nodes") {
  Rng rng(3);
  for (int it = 0; it < 50; ++it) {
    auto m = random_bdt(rng, 3, 2, 4, 4);
    auto before = model_stats(m);
    for (auto& ct : m.trees) {
      // Reverse the node array and remap ids; node 0 stays the root.
      auto& nodes = ct.tree.nodes;
      const int n = static_cast<int>(nodes.size());
      auto remap = [&](int id) { return id == 0 ? 0 : n - id; };
      std::vector<TreeNode> out(nodes.size());
      for (int i = 0; i < n; ++i) {
        TreeNode t = nodes[static_cast<std::size_t>(i)];
        if (!t.is_leaf) {
          t.left = remap(t.left);
          t.right = remap(t.right);
        }
        out[static_cast<std::size_t>(remap(i))] = t;
      }
      nodes = out;
    }
    REQUIRE(validate_bdt(m).empty());
    auto after = model_stats(m);
    CHECK(after.n_nodes == before.n_nodes);
    CHECK(after.n_params == before.n_params);
    CHECK(after.max_depth == before.max_depth);
    CHECK(after.n_nonzero_weights == before.n_nonzero_weights);
  }
}

TEST_CASE("random generators produce valid models") {
  Rng rng(4);
  for (int it = 0; it < 100; ++it) {
    CHECK(validate_bdt(random_bdt(rng, 1 + it % 5, 1 + it % 3, 1 + it % 7, it % 6)).empty());
    CHECK(validate_fcnn(random_fcnn(rng, {3, 4, 2}, {Activation::ReLU, Activation::Softmax})).empty());
  }
}

}
