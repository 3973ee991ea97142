#pragma once

// Desk-scale learners used as black boxes: least squares, CART regression
// trees, bagged forests and a bagged tree classifier. All of them regress on
// the observed time and ignore the event column.

#include "medshap/core.hpp"

#include <memory>

namespace medshap {

enum class ModelKind { kLinear, kTree, kForest, kClassifier };

std::string to_string(ModelKind kind);

/// A trained built-in model. Immutable and safe to share across threads.
class FittedModel : public PredictiveModel {
 public:
  FittedModel(ModelKind kind, std::vector<std::string> feature_names)
      : kind_(kind), feature_names_(std::move(feature_names)) {}

  ModelKind kind() const { return kind_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  int n_features() const override { return static_cast<int>(feature_names_.size()); }

 protected:
  void check_batch(const Matrix& batch) const;

 private:
  ModelKind kind_;
  std::vector<std::string> feature_names_;
};

class LinearModel final : public FittedModel {
 public:
  LinearModel(std::vector<std::string> feature_names, Vector weights, double intercept);

  Vector predict(const Matrix& batch) const override;

  const Vector& weights() const { return weights_; }
  double intercept() const { return intercept_; }

 private:
  Vector weights_;
  double intercept_;
};

/// Thrown by fit_linear when the design matrix is rank deficient.
class SingularDesignError : public std::runtime_error {
 public:
  SingularDesignError(const std::string& what, std::vector<std::string> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
};

/// Ordinary least squares of time on the features. Constant columns get a
/// zero weight; other collinear columns raise SingularDesignError.
std::unique_ptr<LinearModel> fit_linear(const Dataset& dataset);

struct TreeParams {
  int max_depth = 8;
  int min_leaf = 5;
  // Features tried per split; unset tries all of them.
  std::optional<int> max_features;
};

enum class SplitCriterion { kVariance, kGini };

/// Binary tree stored as a flat node array; node 0 is the root.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class RegressionTree final : public FittedModel {
 public:
  RegressionTree(std::vector<std::string> feature_names, std::vector<TreeNode> nodes)
      : FittedModel(ModelKind::kTree, std::move(feature_names)), nodes_(std::move(nodes)) {}

  Vector predict(const Matrix& batch) const override;
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;
};

/// CART with variance-reduction splits at midpoints; leaves hold mean(y).
std::unique_ptr<RegressionTree> fit_tree(const Dataset& dataset, int max_depth, int min_leaf);

// Lower level entry used by the ensembles: fits on `rows` (with repeats).
std::vector<TreeNode> grow_tree(const Matrix& X, const Vector& y, const std::vector<Index>& rows,
                                const TreeParams& params, SplitCriterion criterion,
                                std::uint64_t seed);

struct ForestParams {
  int n_trees = 100;
  TreeParams tree{8, 5, std::nullopt};
  bool bootstrap = true;
  // Per-split feature subset size; unset means ceil(sqrt(M)).
  std::optional<int> max_features;
  std::uint64_t seed = 0;
};

class Forest final : public FittedModel {
 public:
  Forest(ModelKind kind, std::vector<std::string> feature_names,
         std::vector<RegressionTree> trees, std::uint64_t seed)
      : FittedModel(kind, std::move(feature_names)), trees_(std::move(trees)), seed_(seed) {}

  // Mean of the tree outputs (for classifiers: the fraction of 1-votes).
  Vector predict(const Matrix& batch) const override;

  const std::vector<RegressionTree>& trees() const { return trees_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<RegressionTree> trees_;
  std::uint64_t seed_;
};

std::unique_ptr<Forest> fit_forest(const Dataset& dataset, const ForestParams& params);
std::unique_ptr<Forest> fit_forest(const Dataset& dataset, int n_trees, int max_depth,
                                   std::uint64_t seed);

/// Bagged Gini trees on 0/1 labels. Each tree votes 1, 0, or 1/2 when its
/// leaf is evenly split, so the output is a probability in [0, 1] and
/// inverting the labels maps p to 1 - p.
std::unique_ptr<Forest> fit_classifier(const Matrix& features, const std::vector<int>& labels,
                                       std::vector<std::string> feature_names,
                                       const ForestParams& params = {});
std::unique_ptr<Forest> fit_classifier(const Dataset& dataset, const std::vector<int>& labels,
                                       const ForestParams& params = {});

}  // namespace medshap
