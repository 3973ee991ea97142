#include "medshap/harness.hpp"

#include "medshap/random.hpp"

#include <Eigen/Cholesky>

#include <numeric>

namespace medshap {

std::vector<int> relabel(const Dataset& dataset, const PredictiveModel& f) {
  const Vector predictions = f.predict(dataset.features());
  const double med = apply_statistic(predictions, SummaryStatistic::median());
  std::vector<int> labels(static_cast<std::size_t>(predictions.size()));
  for (Index i = 0; i < predictions.size(); ++i) {
    labels[static_cast<std::size_t>(i)] = predictions(i) > med ? 1 : 0;
  }
  return labels;
}

namespace {

double score_predictions(const Vector& predictions, const Vector& target, ImportanceMetric metric) {
  if (metric == ImportanceMetric::kMeanSquaredError) {
    return (predictions - target).squaredNorm() / static_cast<double>(target.size());
  }
  Index wrong = 0;
  for (Index i = 0; i < target.size(); ++i) {
    const bool predicted = predictions(i) > 0.5;
    const bool actual = target(i) > 0.5;
    wrong += predicted != actual ? 1 : 0;
  }
  return static_cast<double>(wrong) / static_cast<double>(target.size());
}

}  // namespace

ImportanceScores permutation_importance(const PredictiveModel& model, const Matrix& features,
                                        const Vector& target, ImportanceMetric metric,
                                        int n_repeats, std::uint64_t seed) {
  if (n_repeats < 1) throw PreconditionError("permutation_importance: n_repeats must be >= 1");
  if (target.size() != features.rows()) {
    throw PreconditionError("permutation_importance: target length does not match row count");
  }
  const Index m = features.cols();
  ImportanceScores out;
  out.baseline = score_predictions(model.predict(features), target, metric);
  out.scores = Vector::Zero(m);
  out.standard_errors = Vector::Zero(m);

  std::vector<Index> perm(static_cast<std::size_t>(features.rows()));
  for (Index j = 0; j < m; ++j) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    Vector deltas(n_repeats);
    Matrix shuffled = features;
    for (int r = 0; r < n_repeats; ++r) {
      std::iota(perm.begin(), perm.end(), Index{0});
      shuffle(perm, rng);
      shuffled.col(j) = features.col(j)(perm);
      deltas(r) = score_predictions(model.predict(shuffled), target, metric) - out.baseline;
    }
    out.scores(j) = deltas.mean();
    if (n_repeats > 1) {
      const double var = (deltas.array() - deltas.mean()).square().sum() / (n_repeats - 1);
      out.standard_errors(j) = std::sqrt(var / n_repeats);
    }
  }
  return out;
}

std::vector<int> select_top_k(const Vector& scores, int k) {
  if (k < 1 || k > scores.size()) {
    throw PreconditionError("select_top_k: k = " + std::to_string(k) + " must lie in 1.." +
                            std::to_string(scores.size()));
  }
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores(a) > scores(b); });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

ScaledAttributions scale_attributions(const Vector& phi) {
  const double norm = phi.lpNorm<1>();
  if (!(norm > 0.0)) return {Vector::Zero(phi.size()), true};
  return {phi / norm, false};
}

AttributionComparison compare_attributions(const std::vector<Vector>& a,
                                           const std::vector<Vector>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw PreconditionError("compare_attributions: need two equally long, non-empty lists");
  }
  const Index m = a.front().size();
  Vector sum = Vector::Zero(m);
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != m || b[i].size() != m) {
      throw PreconditionError("compare_attributions: attribution vectors differ in length");
    }
    const Vector d = a[i] - b[i];
    sum += d;
    abs_sum += d.lpNorm<1>();
  }
  const auto n = static_cast<double>(a.size());
  return {sum / n, abs_sum / (n * static_cast<double>(m))};
}

ExperimentReport run_experiment(const Dataset& input, const ExperimentConfig& config) {
  if (config.n_explained < 1) throw PreconditionError("run_experiment: n_explained must be >= 1");
  if (!config.regressor) throw PreconditionError("run_experiment: no regressor factory configured");
  if (config.n_explained > input.n_rows()) {
    throw PreconditionError("run_experiment: n_explained exceeds the number of rows");
  }

  ExperimentReport report;

  // Step 1: fit f, optionally on the top-k features only.
  Dataset dataset = input;
  std::unique_ptr<PredictiveModel> f = config.regressor(dataset);
  if (config.top_k) {
    report.importance =
        permutation_importance(*f, dataset.features(), dataset.time(),
                               ImportanceMetric::kMeanSquaredError, config.importance_repeats,
                               derive_seed(config.seed, 1));
    report.selected_features = select_top_k(report.importance->scores, *config.top_k);
    dataset = input.select_features(report.selected_features);
    f = config.regressor(dataset);
  } else {
    report.selected_features.resize(static_cast<std::size_t>(input.n_features()));
    std::iota(report.selected_features.begin(), report.selected_features.end(), 0);
  }
  report.feature_names = dataset.feature_names();

  // Individuals to explain, without replacement.
  std::vector<Index> rows(static_cast<std::size_t>(dataset.n_rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  Rng rng(derive_seed(config.seed, 2));
  shuffle(rows, rng);
  rows.resize(static_cast<std::size_t>(config.n_explained));
  std::sort(rows.begin(), rows.end());
  report.explained_rows = rows;

  report.anchor = find_anchor(*f, dataset, SummaryStatistic::median());

  // Step 3: relabel around the median prediction; step 4: fit g.
  const std::vector<int> labels = relabel(dataset, *f);
  report.median_prediction =
      apply_statistic(f->predict(dataset.features()), SummaryStatistic::median());
  report.n_positive_labels = std::accumulate(labels.begin(), labels.end(), 0);
  ForestParams classifier = config.classifier;
  classifier.seed = derive_seed(config.seed, 3);
  const auto g = fit_classifier(dataset, labels, classifier);

  // Steps 2 and 5: explain each individual under f (mean and median) and g.
  std::vector<Vector> mean_f, median_f, mean_g;
  auto scaled = [&](const AttributionReport& r) {
    if (!config.l1_scaling) return r.phi;
    ScaledAttributions s = scale_attributions(r);
    report.n_degenerate += s.degenerate ? 1 : 0;
    return s.values;
  };
  for (Index row : rows) {
    const Vector x = dataset.features().row(row).transpose();
    SamplerConfig sampler = config.sampler;
    sampler.seed = derive_seed(config.seed, 100 + static_cast<std::uint64_t>(row));
    mean_f.push_back(scaled(
        shapley(*f, x, dataset, sampler, SummaryStatistic::mean(), config.f_estimator)));
    median_f.push_back(scaled(
        shapley(*f, x, dataset, sampler, SummaryStatistic::median(), config.f_estimator)));
    mean_g.push_back(scaled(
        shapley(*g, x, dataset, sampler, SummaryStatistic::mean(), config.g_estimator)));
  }

  const AttributionComparison mean_cmp = compare_attributions(mean_f, mean_g);
  const AttributionComparison median_cmp = compare_attributions(median_f, mean_g);
  report.mean_shap_vs_g = mean_cmp.mean_difference;
  report.median_shap_vs_g = median_cmp.mean_difference;
  report.mean_shap_abs = mean_cmp.mean_abs_difference;
  report.median_shap_abs = median_cmp.mean_abs_difference;
  return report;
}

Dataset synth_survival(int n, int n_features, const Vector& effect_weights, double skew,
                       double censor_rate, std::uint64_t seed) {
  if (n < 10) throw PreconditionError("synth_survival: n must be >= 10");
  if (n_features < 1) throw PreconditionError("synth_survival: need at least one feature");
  if (effect_weights.size() != n_features) {
    throw PreconditionError("synth_survival: " + std::to_string(effect_weights.size()) +
                            " effect weights for " + std::to_string(n_features) + " features");
  }
  if (!(skew >= 0.0)) throw PreconditionError("synth_survival: skew must be >= 0");
  if (!(censor_rate >= 0.0 && censor_rate < 1.0)) {
    throw PreconditionError("synth_survival: censor rate must lie in [0, 1)");
  }

  constexpr double kCorrelation = 0.3;
  Matrix corr = Matrix::Constant(n_features, n_features, kCorrelation);
  corr.diagonal().setOnes();
  const Matrix chol = corr.llt().matrixL();

  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix z(n, n_features);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n_features; ++j) z(i, j) = normal(rng);
  Matrix X = z * chol.transpose();

  Vector time(n);
  std::vector<bool> event(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    time(i) = std::exp(X.row(i).dot(effect_weights) + skew * normal(rng));
    event[static_cast<std::size_t>(i)] = uniform_unit(rng) >= censor_rate;
  }
  std::vector<std::string> names;
  for (int j = 0; j < n_features; ++j) names.push_back("x" + std::to_string(j));
  return Dataset(std::move(names), std::move(X), std::move(time), std::move(event));
}

}  // namespace medshap
