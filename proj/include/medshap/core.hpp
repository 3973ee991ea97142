#pragma once

// Domain types shared by every module: datasets, coalitions, summary
// statistics, reference sets, reports and the black-box model interface.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace medshap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when a caller violates a documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Feature matrix with named columns plus survival outcome columns.
///
/// Rows are individuals. `time` holds the observed survival (or censoring)
/// time, `event` is true when the event was observed. Immutable once built.
class Dataset {
 public:
  Dataset(std::vector<std::string> feature_names, Matrix features, Vector time,
          std::vector<bool> event = {});

  // Convenience for feature-only data (time defaults to 1, all events).
  static Dataset from_features(Matrix features,
                               std::vector<std::string> feature_names = {});

  Index n_rows() const { return features_.rows(); }
  Index n_features() const { return features_.cols(); }

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Matrix& features() const { return features_; }
  const Vector& time() const { return time_; }
  const std::vector<bool>& event() const { return event_; }

  // Same rows restricted to `columns` (in the given order).
  Dataset select_features(const std::vector<int>& columns) const;

  // Same features with a replaced outcome column.
  Dataset with_time(Vector time) const;

 private:
  std::vector<std::string> feature_names_;
  Matrix features_;
  Vector time_;
  std::vector<bool> event_;
};

/// Subset S of {0..M-1}. Backed by a packed bitset so it can be hashed and
/// used as a key of the per-report value cache.
class Coalition {
 public:
  Coalition() = default;
  explicit Coalition(int n_features);
  Coalition(int n_features, std::initializer_list<int> members);

  static Coalition full(int n_features);
  static Coalition from_members(int n_features, const std::vector<int>& members);

  int n_features() const { return n_features_; }
  bool contains(int j) const;
  int size() const;
  bool empty() const { return size() == 0; }
  bool is_full() const { return size() == n_features_; }

  void insert(int j);
  void erase(int j);
  Coalition with(int j) const;
  Coalition without(int j) const;
  Coalition complement() const;

  // Sorted member indices.
  std::vector<int> members() const;
  std::string to_string() const;

  std::size_t hash() const;
  friend bool operator==(const Coalition& a, const Coalition& b) {
    return a.n_features_ == b.n_features_ && a.words_ == b.words_;
  }

 private:
  void check_index(int j) const;

  int n_features_ = 0;
  std::vector<std::uint64_t> words_;
};

struct CoalitionHash {
  std::size_t operator()(const Coalition& s) const { return s.hash(); }
};

/// Summary statistic used to collapse model outputs over reference points.
/// Mean gives classical SHAP, Quantile(0.5) gives median-SHAP.
class SummaryStatistic {
 public:
  enum class Kind { kMean, kQuantile };

  static SummaryStatistic mean() { return SummaryStatistic(Kind::kMean, 0.5); }
  static SummaryStatistic median() { return quantile(0.5); }
  // Throws PreconditionError unless 0 < q < 1.
  static SummaryStatistic quantile(double q);

  Kind kind() const { return kind_; }
  bool is_mean() const { return kind_ == Kind::kMean; }
  bool is_quantile() const { return kind_ == Kind::kQuantile; }
  double q() const { return q_; }

  // Canonical spelling: "mean", "median" or "q=<value>".
  std::string to_string() const;

  friend bool operator==(const SummaryStatistic& a, const SummaryStatistic& b) {
    return a.kind_ == b.kind_ && (a.kind_ == Kind::kMean || a.q_ == b.q_);
  }

 private:
  SummaryStatistic(Kind kind, double q) : kind_(kind), q_(q) {}
  Kind kind_;
  double q_;
};

namespace detail {

// Quantile of an already sorted, non-empty range using linear interpolation
// between adjacent order statistics at h = (n-1)q.
template <typename Scalar>
Scalar sorted_quantile(const std::vector<Scalar>& sorted, double q) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted.front();
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const Scalar frac = static_cast<Scalar>(h - static_cast<double>(lo));
  if (frac == Scalar(0)) return sorted[lo];
  // Even-length median: plain midpoint of the two middle values.
  if (q == 0.5) return (sorted[lo] + sorted[hi]) / Scalar(2);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Collapses a non-empty, finite list of values with `stat`.
template <typename Derived>
typename Derived::Scalar apply_statistic(const Eigen::DenseBase<Derived>& values,
                                         const SummaryStatistic& stat) {
  using Scalar = typename Derived::Scalar;
  if (values.size() == 0) {
    throw PreconditionError("apply_statistic: empty value list");
  }
  if (!values.derived().array().isFinite().all()) {
    throw PreconditionError("apply_statistic: non-finite value");
  }
  if (stat.is_mean()) {
    // A constant input returns its value exactly rather than sum / n.
    const Scalar first = values.derived()(0, 0);
    if ((values.derived().array() == first).all()) return first;
    return values.derived().mean();
  }
  std::vector<Scalar> sorted;
  sorted.reserve(static_cast<std::size_t>(values.size()));
  for (Index c = 0; c < values.cols(); ++c)
    for (Index r = 0; r < values.rows(); ++r) sorted.push_back(values.derived()(r, c));
  std::sort(sorted.begin(), sorted.end());
  return detail::sorted_quantile(sorted, stat.q());
}

inline double apply_statistic(const std::vector<double>& values,
                              const SummaryStatistic& stat) {
  return apply_statistic(
      Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())),
      stat);
}

/// Every subset of {0..M-1}\{j}, ordered by size then lexicographically.
std::vector<Coalition> coalitions_excluding(int j, int n_features);

/// 1 / (M * C(M-1, s)): the weight of a coalition of size s in the exact
/// Shapley sum for one feature.
double shapley_weight(int coalition_size, int n_features);

/// Origin of a reference set.
enum class Provenance { kMarginal, kConditional, kFullTrainingSet };

std::string to_string(Provenance p);

/// Reference points r_1..r_m substituted for the features outside a coalition.
struct ReferenceSet {
  Matrix rows;
  Provenance provenance = Provenance::kFullTrainingSet;
  int k = 0;                      // neighbour count, conditional sets only
  std::optional<Coalition> coalition;  // conditioning coalition, if any
  std::uint64_t seed = 0;

  Index size() const { return rows.rows(); }
};

/// The instance attributions are measured against. For quantile statistics
/// it is an observed row of the reference population, for the mean it is
/// synthetic and only its prediction is known.
struct AnchorPoint {
  std::optional<Index> index;
  std::optional<Vector> values;
  double prediction = 0.0;

  bool synthetic() const { return !index.has_value(); }
};

struct EstimatorInfo {
  bool exact = true;
  int n_permutations = 0;

  std::string to_string() const;
};

struct AttributionReport {
  double phi0 = 0.0;
  Vector phi;
  SummaryStatistic statistic = SummaryStatistic::mean();
  double prediction = 0.0;
  Index n_references = 0;
  Provenance provenance = Provenance::kMarginal;
  EstimatorInfo method;
  std::optional<AnchorPoint> anchor;
  // Number of coalitions whose value was evaluated.
  std::size_t n_coalitions = 0;

  // f(x) - phi0 - sum(phi); zero up to rounding.
  double efficiency_residual() const {
    return prediction - phi0 - phi.sum();
  }
};

/// Black-box access to a model predicting one scalar per instance.
///
/// Implementations must be deterministic: the same batch yields the same
/// outputs. Batches are row-major in the sense of one instance per row.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;

  virtual Vector predict(const Matrix& batch) const = 0;
  virtual int n_features() const = 0;

  // False when concurrent predict() calls are not allowed (e.g. a handle
  // to an external process).
  virtual bool thread_safe() const { return true; }

  double predict_one(const Vector& x) const;
};

/// Adapts a scalar function of one instance to the model interface.
class FunctionModel final : public PredictiveModel {
 public:
  using Fn = std::function<double(const Eigen::Ref<const Vector>&)>;

  FunctionModel(int n_features, Fn fn) : n_features_(n_features), fn_(std::move(fn)) {}

  Vector predict(const Matrix& batch) const override;
  int n_features() const override { return n_features_; }

 private:
  int n_features_;
  Fn fn_;
};

}  // namespace medshap
