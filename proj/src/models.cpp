#include "medshap/models.hpp"

#include "medshap/random.hpp"

#include <Eigen/QR>

#include <numeric>

namespace medshap {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLinear: return "linear";
    case ModelKind::kTree: return "tree";
    case ModelKind::kForest: return "forest";
    case ModelKind::kClassifier: return "classifier";
  }
  return "unknown";
}

void FittedModel::check_batch(const Matrix& batch) const {
  if (batch.cols() != n_features()) {
    throw PreconditionError(to_string(kind_) + " model expects " + std::to_string(n_features()) +
                            " features, batch has " + std::to_string(batch.cols()));
  }
}

// ---------------------------------------------------------------------------
// Linear

LinearModel::LinearModel(std::vector<std::string> feature_names, Vector weights, double intercept)
    : FittedModel(ModelKind::kLinear, std::move(feature_names)),
      weights_(std::move(weights)),
      intercept_(intercept) {}

Vector LinearModel::predict(const Matrix& batch) const {
  check_batch(batch);
  return (batch * weights_).array() + intercept_;
}

std::unique_ptr<LinearModel> fit_linear(const Dataset& dataset) {
  const Matrix& X = dataset.features();
  const Vector& y = dataset.time();
  const Index n = X.rows();
  const Index m = X.cols();
  if (n <= m) {
    throw PreconditionError("fit_linear needs more rows than features (" + std::to_string(n) +
                            " rows, " + std::to_string(m) + " features)");
  }

  const Eigen::RowVectorXd means = X.colwise().mean();
  const double y_mean = y.mean();
  std::vector<Index> kept;
  for (Index j = 0; j < m; ++j) {
    if ((X.col(j).array() != X(0, j)).any()) kept.push_back(j);
  }

  Vector weights = Vector::Zero(m);
  if (!kept.empty()) {
    const Matrix centered = X(Eigen::all, kept).rowwise() - means(kept);
    Eigen::ColPivHouseholderQR<Matrix> qr(centered);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Index>(kept.size())) {
      std::vector<std::string> names;
      std::string list;
      for (Index p = qr.rank(); p < static_cast<Index>(kept.size()); ++p) {
        const Index col = kept[static_cast<std::size_t>(qr.colsPermutation().indices()(p))];
        names.push_back(dataset.feature_names()[static_cast<std::size_t>(col)]);
        list += (list.empty() ? "" : ", ") + names.back();
      }
      throw SingularDesignError("fit_linear: singular design, collinear columns: " + list,
                                std::move(names));
    }
    const Vector w = qr.solve((y.array() - y_mean).matrix());
    for (std::size_t c = 0; c < kept.size(); ++c) weights(kept[c]) = w(static_cast<Index>(c));
  }
  const double intercept = y_mean - means.dot(weights);
  return std::make_unique<LinearModel>(dataset.feature_names(), std::move(weights), intercept);
}

// ---------------------------------------------------------------------------
// Trees

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // lower is better
};

class TreeGrower {
 public:
  TreeGrower(const Matrix& X, const Vector& y, const TreeParams& params,
             SplitCriterion criterion, std::uint64_t seed)
      : X_(X), y_(y), params_(params), criterion_(criterion), rng_(seed) {}

  std::vector<TreeNode> grow(std::vector<Index> rows) {
    nodes_.clear();
    build(std::move(rows), 0);
    return std::move(nodes_);
  }

 private:
  double leaf_value(const std::vector<Index>& rows) const {
    if (criterion_ == SplitCriterion::kVariance) {
      double s = 0.0;
      for (Index r : rows) s += y_(r);
      return s / static_cast<double>(rows.size());
    }
    std::int64_t ones = 0;
    for (Index r : rows) ones += y_(r) > 0.5 ? 1 : 0;
    const auto zeros = static_cast<std::int64_t>(rows.size()) - ones;
    if (ones > zeros) return 1.0;
    if (ones < zeros) return 0.0;
    return 0.5;
  }

  // Impurity of a node: SSE for regression, n * Gini / 2 for classification.
  // The Gini form n1 * n0 / n is symmetric in the two classes.
  double impurity(double sum, double sum_sq, std::int64_t ones, std::int64_t n) const {
    if (criterion_ == SplitCriterion::kVariance) return sum_sq - sum * sum / static_cast<double>(n);
    return static_cast<double>(ones * (n - ones)) / static_cast<double>(n);
  }

  std::vector<int> candidate_features() {
    const int m = static_cast<int>(X_.cols());
    std::vector<int> all(static_cast<std::size_t>(m));
    std::iota(all.begin(), all.end(), 0);
    const int take = params_.max_features.value_or(m);
    if (take >= m) return all;
    // Partial Fisher-Yates.
    for (int i = 0; i < take; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     static_cast<std::size_t>(uniform_index(rng_, static_cast<std::uint64_t>(m - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[j]);
    }
    all.resize(static_cast<std::size_t>(take));
    std::sort(all.begin(), all.end());
    return all;
  }

  SplitCandidate best_split(const std::vector<Index>& rows, double parent_impurity) {
    SplitCandidate best;
    best.score = parent_impurity;
    const auto n = static_cast<std::int64_t>(rows.size());
    const auto min_leaf = static_cast<std::int64_t>(params_.min_leaf);
    std::vector<std::pair<double, double>> column(rows.size());

    double total_sum = 0.0, total_sq = 0.0;
    std::int64_t total_ones = 0;
    for (Index r : rows) {
      total_sum += y_(r);
      total_sq += y_(r) * y_(r);
      total_ones += y_(r) > 0.5 ? 1 : 0;
    }

    for (int f : candidate_features()) {
      for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {X_(rows[i], f), y_(rows[i])};
      std::sort(column.begin(), column.end());
      double left_sum = 0.0, left_sq = 0.0;
      std::int64_t left_ones = 0;
      for (std::int64_t i = 0; i + 1 < n; ++i) {
        const double yi = column[static_cast<std::size_t>(i)].second;
        left_sum += yi;
        left_sq += yi * yi;
        left_ones += yi > 0.5 ? 1 : 0;
        const std::int64_t n_left = i + 1;
        const std::int64_t n_right = n - n_left;
        if (n_left < min_leaf) continue;
        if (n_right < min_leaf) break;
        const double a = column[static_cast<std::size_t>(i)].first;
        const double b = column[static_cast<std::size_t>(i + 1)].first;
        if (!(a < b)) continue;
        double score;
        if (criterion_ == SplitCriterion::kVariance) {
          // SSE of children up to the constant sum of squares.
          const double right_sum = total_sum - left_sum;
          score = total_sq - left_sum * left_sum / static_cast<double>(n_left) -
                  right_sum * right_sum / static_cast<double>(n_right);
        } else {
          score = impurity(0, 0, left_ones, n_left) +
                  impurity(0, 0, total_ones - left_ones, n_right);
        }
        if (score < best.score) {
          best.score = score;
          best.feature = f;
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best.threshold = mid;
        }
      }
    }
    return best;
  }

  int build(std::vector<Index> rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{});
    nodes_[static_cast<std::size_t>(id)].value = leaf_value(rows);

    const auto n = static_cast<std::int64_t>(rows.size());
    if (depth >= params_.max_depth || n < 2 * static_cast<std::int64_t>(params_.min_leaf)) return id;

    double sum = 0.0, sum_sq = 0.0;
    std::int64_t ones = 0;
    bool constant = true;
    for (Index r : rows) {
      sum += y_(r);
      sum_sq += y_(r) * y_(r);
      ones += y_(r) > 0.5 ? 1 : 0;
      constant = constant && y_(r) == y_(rows.front());
    }
    if (constant) return id;

    const double parent = impurity(sum, sum_sq, ones, n);
    const SplitCandidate split = best_split(rows, parent);
    if (split.feature < 0) return id;

    std::vector<Index> left, right;
    for (Index r : rows) (X_(r, split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    nodes_[static_cast<std::size_t>(id)].feature = split.feature;
    nodes_[static_cast<std::size_t>(id)].threshold = split.threshold;
    const int l = build(std::move(left), depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    const int r = build(std::move(right), depth + 1);
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Matrix& X_;
  const Vector& y_;
  TreeParams params_;
  SplitCriterion criterion_;
  Rng rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

std::vector<TreeNode> grow_tree(const Matrix& X, const Vector& y, const std::vector<Index>& rows,
                                const TreeParams& params, SplitCriterion criterion,
                                std::uint64_t seed) {
  if (params.max_depth < 0) throw PreconditionError("tree max_depth must be >= 0");
  if (params.min_leaf < 1) throw PreconditionError("tree min_leaf must be >= 1");
  if (rows.empty()) throw PreconditionError("cannot grow a tree on zero rows");
  return TreeGrower(X, y, params, criterion, seed).grow(rows);
}

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int id = 0;
  while (true) {
    const TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    if (node.feature < 0) return node.value;
    id = row(node.feature) <= node.threshold ? node.left : node.right;
  }
}

Vector RegressionTree::predict(const Matrix& batch) const {
  check_batch(batch);
  Vector out(batch.rows());
  for (Index i = 0; i < batch.rows(); ++i) out(i) = predict_row(batch.row(i));
  return out;
}

int RegressionTree::depth() const {
  std::function<int(int)> walk = [&](int id) -> int {
    const TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    if (node.feature < 0) return 0;
    return 1 + std::max(walk(node.left), walk(node.right));
  };
  return walk(0);
}

std::unique_ptr<RegressionTree> fit_tree(const Dataset& dataset, int max_depth, int min_leaf) {
  std::vector<Index> rows(static_cast<std::size_t>(dataset.n_rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  TreeParams params{max_depth, min_leaf, std::nullopt};
  return std::make_unique<RegressionTree>(
      dataset.feature_names(),
      grow_tree(dataset.features(), dataset.time(), rows, params, SplitCriterion::kVariance, 0));
}

// ---------------------------------------------------------------------------
// Ensembles

namespace {

std::vector<RegressionTree> grow_ensemble(const Matrix& X, const Vector& y,
                                          const std::vector<std::string>& names,
                                          const ForestParams& params, SplitCriterion criterion) {
  if (params.n_trees < 1) throw PreconditionError("forest needs n_trees >= 1");
  const Index n = X.rows();
  const int m = static_cast<int>(X.cols());
  TreeParams tree = params.tree;
  tree.max_features = std::min(
      m, params.max_features.value_or(static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m))))));

  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    const std::uint64_t seed = derive_seed(params.seed, static_cast<std::uint64_t>(t));
    Rng rng(seed);
    std::vector<Index> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      for (auto& r : rows) r = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), Index{0});
    }
    trees.emplace_back(names, grow_tree(X, y, rows, tree, criterion, rng()));
  }
  return trees;
}

}  // namespace

Vector Forest::predict(const Matrix& batch) const {
  check_batch(batch);
  Vector out = Vector::Zero(batch.rows());
  for (Index i = 0; i < batch.rows(); ++i) {
    double s = 0.0;
    for (const auto& tree : trees_) s += tree.predict_row(batch.row(i));
    out(i) = s / static_cast<double>(trees_.size());
  }
  return out;
}

std::unique_ptr<Forest> fit_forest(const Dataset& dataset, const ForestParams& params) {
  auto trees = grow_ensemble(dataset.features(), dataset.time(), dataset.feature_names(), params,
                             SplitCriterion::kVariance);
  return std::make_unique<Forest>(ModelKind::kForest, dataset.feature_names(), std::move(trees),
                                  params.seed);
}

std::unique_ptr<Forest> fit_forest(const Dataset& dataset, int n_trees, int max_depth,
                                   std::uint64_t seed) {
  ForestParams params;
  params.n_trees = n_trees;
  params.tree.max_depth = max_depth;
  params.seed = seed;
  return fit_forest(dataset, params);
}

std::unique_ptr<Forest> fit_classifier(const Matrix& features, const std::vector<int>& labels,
                                       std::vector<std::string> feature_names,
                                       const ForestParams& params) {
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw PreconditionError("fit_classifier: label count does not match row count");
  }
  Vector y(features.rows());
  bool has_zero = false, has_one = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw PreconditionError("fit_classifier: labels must be 0 or 1");
    }
    has_zero = has_zero || labels[i] == 0;
    has_one = has_one || labels[i] == 1;
    y(static_cast<Index>(i)) = labels[i];
  }
  if (!has_zero || !has_one) {
    throw PreconditionError("fit_classifier: labels contain a single class");
  }
  if (feature_names.empty()) {
    for (Index j = 0; j < features.cols(); ++j) feature_names.push_back("x" + std::to_string(j));
  }
  auto trees = grow_ensemble(features, y, feature_names, params, SplitCriterion::kGini);
  return std::make_unique<Forest>(ModelKind::kClassifier, std::move(feature_names),
                                  std::move(trees), params.seed);
}

std::unique_ptr<Forest> fit_classifier(const Dataset& dataset, const std::vector<int>& labels,
                                       const ForestParams& params) {
  return fit_classifier(dataset.features(), labels, dataset.feature_names(), params);
}

}  // namespace medshap
