#include "medshap/core.hpp"

#include <bit>
#include <sstream>

namespace medshap {

Dataset::Dataset(std::vector<std::string> feature_names, Matrix features, Vector time,
                 std::vector<bool> event)
    : feature_names_(std::move(feature_names)),
      features_(std::move(features)),
      time_(std::move(time)),
      event_(std::move(event)) {
  if (features_.rows() < 1) throw PreconditionError("Dataset: no rows");
  if (features_.cols() < 1) throw PreconditionError("Dataset: no feature columns");
  if (static_cast<Index>(feature_names_.size()) != features_.cols()) {
    throw PreconditionError("Dataset: " + std::to_string(feature_names_.size()) +
                            " feature names for " + std::to_string(features_.cols()) +
                            " columns");
  }
  if (time_.size() != features_.rows()) {
    throw PreconditionError("Dataset: time column length does not match row count");
  }
  if (event_.empty()) event_.assign(static_cast<std::size_t>(features_.rows()), true);
  if (static_cast<Index>(event_.size()) != features_.rows()) {
    throw PreconditionError("Dataset: event column length does not match row count");
  }
  if (!features_.array().isFinite().all()) {
    throw PreconditionError("Dataset: non-finite feature value");
  }
  if (!(time_.array() > 0.0).all() || !time_.array().isFinite().all()) {
    throw PreconditionError("Dataset: survival times must be finite and positive");
  }
}

Dataset Dataset::from_features(Matrix features, std::vector<std::string> feature_names) {
  if (feature_names.empty()) {
    for (Index j = 0; j < features.cols(); ++j) feature_names.push_back("x" + std::to_string(j));
  }
  Vector time = Vector::Ones(features.rows());
  return Dataset(std::move(feature_names), std::move(features), std::move(time));
}

Dataset Dataset::select_features(const std::vector<int>& columns) const {
  Matrix sub(n_rows(), static_cast<Index>(columns.size()));
  std::vector<std::string> names;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const int j = columns[c];
    if (j < 0 || j >= n_features()) {
      throw PreconditionError("select_features: column " + std::to_string(j) + " out of range");
    }
    sub.col(static_cast<Index>(c)) = features_.col(j);
    names.push_back(feature_names_[static_cast<std::size_t>(j)]);
  }
  return Dataset(std::move(names), std::move(sub), time_, event_);
}

Dataset Dataset::with_time(Vector time) const {
  return Dataset(feature_names_, features_, std::move(time), event_);
}

// ---------------------------------------------------------------------------

Coalition::Coalition(int n_features)
    : n_features_(n_features), words_(static_cast<std::size_t>((n_features + 63) / 64), 0) {
  if (n_features < 0) throw PreconditionError("Coalition: negative feature count");
}

Coalition::Coalition(int n_features, std::initializer_list<int> members) : Coalition(n_features) {
  for (int j : members) insert(j);
}

Coalition Coalition::full(int n_features) {
  Coalition s(n_features);
  for (int j = 0; j < n_features; ++j) s.insert(j);
  return s;
}

Coalition Coalition::from_members(int n_features, const std::vector<int>& members) {
  Coalition s(n_features);
  for (int j : members) s.insert(j);
  return s;
}

void Coalition::check_index(int j) const {
  if (j < 0 || j >= n_features_) {
    throw PreconditionError("Coalition: feature index " + std::to_string(j) +
                            " outside [0, " + std::to_string(n_features_) + ")");
  }
}

bool Coalition::contains(int j) const {
  check_index(j);
  return (words_[static_cast<std::size_t>(j / 64)] >> (j % 64)) & 1U;
}

int Coalition::size() const {
  int n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

void Coalition::insert(int j) {
  check_index(j);
  words_[static_cast<std::size_t>(j / 64)] |= std::uint64_t{1} << (j % 64);
}

void Coalition::erase(int j) {
  check_index(j);
  words_[static_cast<std::size_t>(j / 64)] &= ~(std::uint64_t{1} << (j % 64));
}

Coalition Coalition::with(int j) const {
  Coalition s = *this;
  s.insert(j);
  return s;
}

Coalition Coalition::without(int j) const {
  Coalition s = *this;
  s.erase(j);
  return s;
}

Coalition Coalition::complement() const {
  Coalition s(n_features_);
  for (int j = 0; j < n_features_; ++j)
    if (!contains(j)) s.insert(j);
  return s;
}

std::vector<int> Coalition::members() const {
  std::vector<int> out;
  for (int j = 0; j < n_features_; ++j)
    if (contains(j)) out.push_back(j);
  return out;
}

std::string Coalition::to_string() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int j : members()) {
    os << (first ? "" : ",") << j;
    first = false;
  }
  os << '}';
  return os.str();
}

std::size_t Coalition::hash() const {
  // splitmix-style mixing of each word
  std::uint64_t h = static_cast<std::uint64_t>(n_features_) * 0x9E3779B97F4A7C15ULL;
  for (auto w : words_) {
    std::uint64_t z = w + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    h ^= z ^ (z >> 31);
  }
  return static_cast<std::size_t>(h);
}

// ---------------------------------------------------------------------------

SummaryStatistic SummaryStatistic::quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw PreconditionError("quantile level must lie in (0, 1), got " + std::to_string(q));
  }
  return SummaryStatistic(Kind::kQuantile, q);
}

std::string SummaryStatistic::to_string() const {
  if (is_mean()) return "mean";
  if (q_ == 0.5) return "median";
  std::ostringstream os;
  os.precision(17);
  os << "q=" << q_;
  return os.str();
}

std::vector<Coalition> coalitions_excluding(int j, int n_features) {
  if (j < 0 || j >= n_features) {
    throw PreconditionError("coalitions_excluding: feature index out of range");
  }
  std::vector<int> pool;
  for (int i = 0; i < n_features; ++i)
    if (i != j) pool.push_back(i);

  std::vector<Coalition> out;
  out.reserve(std::size_t{1} << pool.size());
  const int p = static_cast<int>(pool.size());
  // Combinations of each size in lexicographic order of positions.
  for (int size = 0; size <= p; ++size) {
    std::vector<int> pos(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) pos[static_cast<std::size_t>(i)] = i;
    while (true) {
      Coalition s(n_features);
      for (int i : pos) s.insert(pool[static_cast<std::size_t>(i)]);
      out.push_back(std::move(s));
      int i = size - 1;
      while (i >= 0 && pos[static_cast<std::size_t>(i)] == p - size + i) --i;
      if (i < 0) break;
      ++pos[static_cast<std::size_t>(i)];
      for (int t = i + 1; t < size; ++t)
        pos[static_cast<std::size_t>(t)] = pos[static_cast<std::size_t>(t - 1)] + 1;
    }
  }
  return out;
}

double shapley_weight(int coalition_size, int n_features) {
  if (n_features < 1 || coalition_size < 0 || coalition_size > n_features - 1) {
    throw PreconditionError("shapley_weight: coalition size " + std::to_string(coalition_size) +
                            " outside [0, " + std::to_string(n_features - 1) + "]");
  }
  // C(M-1, s) via the multiplicative formula, exact for the sizes used here.
  const int n = n_features - 1;
  const int k = std::min(coalition_size, n - coalition_size);
  double binom = 1.0;
  for (int i = 1; i <= k; ++i) binom = binom * (n - k + i) / i;
  return 1.0 / (static_cast<double>(n_features) * binom);
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kMarginal: return "marginal";
    case Provenance::kConditional: return "conditional";
    case Provenance::kFullTrainingSet: return "full-training-set";
  }
  return "unknown";
}

std::string EstimatorInfo::to_string() const {
  return exact ? "exact" : "sampled:" + std::to_string(n_permutations);
}

double PredictiveModel::predict_one(const Vector& x) const {
  Matrix batch(1, x.size());
  batch.row(0) = x.transpose();
  return predict(batch)(0);
}

Vector FunctionModel::predict(const Matrix& batch) const {
  if (batch.cols() != n_features_) {
    throw PreconditionError("FunctionModel: batch has " + std::to_string(batch.cols()) +
                            " columns, model expects " + std::to_string(n_features_));
  }
  Vector out(batch.rows());
  Vector row(batch.cols());
  for (Index i = 0; i < batch.rows(); ++i) {
    row = batch.row(i).transpose();
    out(i) = fn_(row);
  }
  return out;
}

}  // namespace medshap
