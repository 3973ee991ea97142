#pragma once

// Shapley attribution under an arbitrary summary statistic.
//
// The value of a coalition S is the statistic of model outputs over the
// concatenations (x_S, r_{not S}) for reference rows r. Each v(S) is
// evaluated once per report and cached in a ValueTable, so additivity
// (sum phi = f(x) - phi0) holds with respect to the cached values no matter
// how noisy the reference sampling is.

#include "medshap/core.hpp"
#include "medshap/reference.hpp"

#include <unordered_map>

namespace medshap {

/// Largest feature count accepted by exact enumeration (2^15 coalitions).
inline constexpr int kExactFeatureLimit = 15;

/// Raised when the model fails while evaluating a coalition.
class ModelEvaluationError : public std::runtime_error {
 public:
  ModelEvaluationError(const Coalition& s, const std::string& what)
      : std::runtime_error("model evaluation failed for coalition " + s.to_string() + ": " +
                           what) {}
};

/// Write-once cache of v(S) for one explained instance.
class ValueTable {
 public:
  ValueTable(int n_features, SummaryStatistic statistic)
      : n_features_(n_features), statistic_(statistic) {}

  int n_features() const { return n_features_; }
  const SummaryStatistic& statistic() const { return statistic_; }
  std::size_t size() const { return values_.size(); }

  bool contains(const Coalition& s) const { return values_.count(s) != 0; }
  double at(const Coalition& s) const;
  // Throws if S already has a value.
  void insert(const Coalition& s, double value);

  const std::unordered_map<Coalition, double, CoalitionHash>& entries() const { return values_; }

 private:
  int n_features_;
  SummaryStatistic statistic_;
  std::unordered_map<Coalition, double, CoalitionHash> values_;
};

/// Source of per-coalition reference sets for one explained instance.
class ReferenceProvider {
 public:
  // One fixed set shared by every coalition.
  explicit ReferenceProvider(ReferenceSet shared);
  // Sampler-backed; marginal configs are drawn once and shared.
  ReferenceProvider(const Dataset& dataset, Vector x, SamplerConfig config);

  ReferenceSet for_coalition(const Coalition& s) const;
  Provenance provenance() const;
  Index n_references() const;

 private:
  std::optional<ReferenceSet> shared_;
  const Dataset* dataset_ = nullptr;
  Vector x_;
  SamplerConfig config_;
};

struct EngineOptions {
  // Worker threads for building exact value tables. Models reporting
  // thread_safe() == false are always evaluated sequentially.
  int threads = 1;
};

/// Concatenations (x_S, r_{not S}), one row per reference row.
Matrix concatenate(const Vector& x, const Coalition& s, const Matrix& references);

double value_function(const PredictiveModel& model, const Vector& x, const Coalition& s,
                      const ReferenceSet& refs, const SummaryStatistic& stat);

/// v(S) for all 2^M coalitions.
ValueTable build_value_table(const PredictiveModel& model, const Vector& x,
                             const ReferenceProvider& refs, const SummaryStatistic& stat,
                             const EngineOptions& options = {});

/// phi_j = sum over S not containing j of weight(|S|, M) (v(S+j) - v(S)).
/// The table must be complete.
Vector shapley_from_table(const ValueTable& table);

AttributionReport exact_shapley(const PredictiveModel& model, const Vector& x,
                                const Dataset& dataset, const SamplerConfig& sampler,
                                const SummaryStatistic& stat, const EngineOptions& options = {});

// Same estimator with one reference set shared by every coalition.
AttributionReport exact_shapley(const PredictiveModel& model, const Vector& x,
                                const ReferenceSet& refs, const SummaryStatistic& stat,
                                const EngineOptions& options = {});

AttributionReport exact_shapley(const PredictiveModel& model, const Vector& x,
                                const ReferenceProvider& refs, const SummaryStatistic& stat,
                                const EngineOptions& options = {},
                                ValueTable* table_out = nullptr);

/// Monte Carlo over feature orderings. Every v(S) touched is memoised, so
/// each ordering's contributions telescope to f(x) - v({}).
AttributionReport sampled_shapley(const PredictiveModel& model, const Vector& x,
                                  const Dataset& dataset, const SamplerConfig& sampler,
                                  const SummaryStatistic& stat, int n_permutations,
                                  std::uint64_t seed);

AttributionReport sampled_shapley(const PredictiveModel& model, const Vector& x,
                                  const ReferenceProvider& refs, const SummaryStatistic& stat,
                                  int n_permutations, std::uint64_t seed,
                                  ValueTable* table_out = nullptr);

/// Exact enumeration when unset, permutation sampling otherwise.
struct EstimatorConfig {
  std::optional<int> n_permutations;
  std::uint64_t seed = 0;

  static EstimatorConfig exact() { return {}; }
  static EstimatorConfig sampled(int n, std::uint64_t seed = 0) { return {n, seed}; }
};

AttributionReport shapley(const PredictiveModel& model, const Vector& x, const Dataset& dataset,
                          const SamplerConfig& sampler, const SummaryStatistic& stat,
                          const EstimatorConfig& estimator = {});

/// Quantile(q) statistic with the anchor set to the observed individual at
/// that quantile of the population's predictions.
AttributionReport qshap(const PredictiveModel& model, const Vector& x, const Dataset& dataset,
                        const SamplerConfig& sampler, double q,
                        const EstimatorConfig& estimator = {});

/// median-SHAP: qshap at q = 0.5, observational references by default.
AttributionReport median_shap(const PredictiveModel& model, const Vector& x,
                              const Dataset& dataset,
                              const SamplerConfig& sampler = SamplerConfig::conditional(),
                              const EstimatorConfig& estimator = {});

/// The individual attributions are measured against. Quantile statistics
/// select the dataset row at order statistic floor((N-1)q) of the sorted
/// predictions (lower middle row for even-sized medians, ties to the lower
/// index). The mean yields a synthetic anchor carrying only the mean
/// prediction.
AnchorPoint find_anchor(const PredictiveModel& model, const Dataset& dataset,
                        const SummaryStatistic& stat);

}  // namespace medshap
