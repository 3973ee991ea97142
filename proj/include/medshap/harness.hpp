#pragma once

// Re-labelling validation experiment: explain a survival-time regressor f
// with mean-SHAP and median-SHAP, turn f's predictions into above/below the
// median labels, fit a classifier g on them and check which explanation of
// f agrees better with mean-SHAP on g.

#include "medshap/core.hpp"
#include "medshap/engine.hpp"
#include "medshap/models.hpp"

#include <functional>
#include <memory>

namespace medshap {

/// 1 where f(x_i) is strictly above the median of f over the dataset.
std::vector<int> relabel(const Dataset& dataset, const PredictiveModel& f);

enum class ImportanceMetric { kMeanSquaredError, kErrorRate };

struct ImportanceScores {
  Vector scores;           // mean metric increase per feature
  Vector standard_errors;  // over repeats
  double baseline = 0.0;
};

/// Permutation importance: metric after shuffling a column minus the
/// baseline metric, averaged over repeats. Error rate thresholds at 0.5.
ImportanceScores permutation_importance(const PredictiveModel& model, const Matrix& features,
                                        const Vector& target, ImportanceMetric metric,
                                        int n_repeats, std::uint64_t seed);

/// Indices of the k largest scores (ties to the lower index), ascending.
std::vector<int> select_top_k(const Vector& scores, int k);

struct ScaledAttributions {
  Vector values;
  bool degenerate = false;  // all-zero input
};

/// phi / sum |phi|.
ScaledAttributions scale_attributions(const Vector& phi);
inline ScaledAttributions scale_attributions(const AttributionReport& report) {
  return scale_attributions(report.phi);
}

struct AttributionComparison {
  Vector mean_difference;       // per feature, mean over individuals of a - b
  double mean_abs_difference;   // mean over individuals and features of |a - b|
};

AttributionComparison compare_attributions(const std::vector<Vector>& a,
                                           const std::vector<Vector>& b);

using RegressorFactory =
    std::function<std::unique_ptr<PredictiveModel>(const Dataset& dataset)>;

struct ExperimentConfig {
  int n_explained = 20;
  std::uint64_t seed = 0;
  SamplerConfig sampler = SamplerConfig::conditional();
  EstimatorConfig f_estimator;
  EstimatorConfig g_estimator;
  bool l1_scaling = true;
  ForestParams classifier;
  // When set, keep only the top-k features by permutation importance of f
  // and refit f on them before explaining.
  std::optional<int> top_k;
  int importance_repeats = 5;
  RegressorFactory regressor;
};

struct ExperimentReport {
  std::vector<std::string> feature_names;
  std::vector<Index> explained_rows;
  Vector mean_shap_vs_g;    // per-feature mean difference, mean-SHAP(f) - SHAP(g)
  Vector median_shap_vs_g;  // per-feature mean difference, median-SHAP(f) - SHAP(g)
  double mean_shap_abs = 0.0;
  double median_shap_abs = 0.0;
  AnchorPoint anchor;       // median individual under f
  double median_prediction = 0.0;
  int n_positive_labels = 0;
  int n_degenerate = 0;     // attribution vectors that were all zero
  std::vector<int> selected_features;  // into the input dataset's columns
  std::optional<ImportanceScores> importance;
};

ExperimentReport run_experiment(const Dataset& dataset, const ExperimentConfig& config);

/// Log-normal survival times time = exp(w.x + skew * eps) over
/// equicorrelated Gaussian features (correlation 0.3), with an independent
/// censoring indicator at the requested rate.
Dataset synth_survival(int n, int n_features, const Vector& effect_weights, double skew,
                       double censor_rate, std::uint64_t seed);

}  // namespace medshap
