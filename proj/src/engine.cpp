#include "medshap/engine.hpp"

#include "medshap/random.hpp"

#include <exception>
#include <numeric>
#include <thread>

namespace medshap {

double ValueTable::at(const Coalition& s) const {
  auto it = values_.find(s);
  if (it == values_.end()) {
    throw std::out_of_range("ValueTable: no value for coalition " + s.to_string());
  }
  return it->second;
}

void ValueTable::insert(const Coalition& s, double value) {
  if (!values_.emplace(s, value).second) {
    throw std::logic_error("ValueTable: coalition " + s.to_string() + " evaluated twice");
  }
}

// ---------------------------------------------------------------------------

ReferenceProvider::ReferenceProvider(ReferenceSet shared) : shared_(std::move(shared)) {
  if (shared_->size() < 1) throw PreconditionError("reference set is empty");
}

ReferenceProvider::ReferenceProvider(const Dataset& dataset, Vector x, SamplerConfig config)
    : dataset_(&dataset), x_(std::move(x)), config_(config) {
  if (x_.size() != dataset.n_features()) {
    throw PreconditionError("instance has " + std::to_string(x_.size()) +
                            " values, dataset has " + std::to_string(dataset.n_features()) +
                            " features");
  }
  if (config_.mode == SamplingMode::kMarginal) {
    shared_ = marginal_references(dataset, config_);
  }
}

ReferenceSet ReferenceProvider::for_coalition(const Coalition& s) const {
  if (shared_) return *shared_;
  return conditional_references(*dataset_, x_, s, config_);
}

Provenance ReferenceProvider::provenance() const {
  if (shared_) return shared_->provenance;
  return Provenance::kConditional;
}

Index ReferenceProvider::n_references() const {
  if (shared_) return shared_->size();
  if (config_.m > 0) return config_.m;
  return config_.k.value_or(default_neighbor_count(dataset_->n_rows()));
}

// ---------------------------------------------------------------------------

Matrix concatenate(const Vector& x, const Coalition& s, const Matrix& references) {
  if (references.cols() != x.size() || s.n_features() != x.size()) {
    throw PreconditionError("concatenate: arity mismatch between instance, coalition and "
                            "reference rows");
  }
  Matrix out = references;
  for (int j : s.members()) out.col(j).setConstant(x(j));
  return out;
}

double value_function(const PredictiveModel& model, const Vector& x, const Coalition& s,
                      const ReferenceSet& refs, const SummaryStatistic& stat) {
  if (model.n_features() != x.size()) {
    throw PreconditionError("model expects " + std::to_string(model.n_features()) +
                            " features, instance has " + std::to_string(x.size()));
  }
  try {
    if (refs.size() < 1) throw PreconditionError("reference set is empty");
    const Vector outputs = model.predict(concatenate(x, s, refs.rows));
    if (outputs.size() != refs.size()) {
      throw std::runtime_error("model returned " + std::to_string(outputs.size()) +
                               " outputs for " + std::to_string(refs.size()) + " rows");
    }
    if (!outputs.array().isFinite().all()) throw std::runtime_error("non-finite model output");
    return apply_statistic(outputs, stat);
  } catch (const PreconditionError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelEvaluationError(s, e.what());
  }
}

namespace {

std::vector<Coalition> all_coalitions(int m) {
  std::vector<Coalition> out;
  out.reserve(std::size_t{1} << m);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    Coalition s(m);
    for (int j = 0; j < m; ++j)
      if ((mask >> j) & 1U) s.insert(j);
    out.push_back(std::move(s));
  }
  return out;
}

void check_arity(const PredictiveModel& model, const Vector& x) {
  if (model.n_features() != x.size()) {
    throw PreconditionError("model expects " + std::to_string(model.n_features()) +
                            " features, instance has " + std::to_string(x.size()));
  }
  if (!x.array().isFinite().all()) throw PreconditionError("instance has non-finite values");
}

AttributionReport make_report(const ValueTable& table, Vector phi, const ReferenceProvider& refs,
                              EstimatorInfo method) {
  const int m = table.n_features();
  AttributionReport report;
  report.phi0 = table.at(Coalition(m));
  report.prediction = table.at(Coalition::full(m));
  report.phi = std::move(phi);
  report.statistic = table.statistic();
  report.n_references = refs.n_references();
  report.provenance = refs.provenance();
  report.method = method;
  report.n_coalitions = table.size();
  return report;
}

}  // namespace

ValueTable build_value_table(const PredictiveModel& model, const Vector& x,
                             const ReferenceProvider& refs, const SummaryStatistic& stat,
                             const EngineOptions& options) {
  check_arity(model, x);
  const int m = static_cast<int>(x.size());
  if (m > kExactFeatureLimit) {
    throw PreconditionError("exact enumeration supports at most " +
                            std::to_string(kExactFeatureLimit) + " features (got " +
                            std::to_string(m) + "); use sampled_shapley instead");
  }
  const std::vector<Coalition> coalitions = all_coalitions(m);
  std::vector<double> values(coalitions.size());

  auto evaluate_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Coalition& s = coalitions[i];
      values[i] = value_function(model, x, s, refs.for_coalition(s), stat);
    }
  };

  const int threads = model.thread_safe() ? std::max(1, options.threads) : 1;
  if (threads == 1) {
    evaluate_range(0, coalitions.size());
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> workers;
    const std::size_t chunk = (coalitions.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(coalitions.size(), chunk * t);
      const std::size_t end = std::min(coalitions.size(), begin + chunk);
      workers.emplace_back([&, t, begin, end] {
        try {
          evaluate_range(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  ValueTable table(m, stat);
  for (std::size_t i = 0; i < coalitions.size(); ++i) table.insert(coalitions[i], values[i]);
  return table;
}

Vector shapley_from_table(const ValueTable& table) {
  const int m = table.n_features();
  Vector phi = Vector::Zero(m);
  for (int j = 0; j < m; ++j) {
    for (const Coalition& s : coalitions_excluding(j, m)) {
      phi(j) += shapley_weight(s.size(), m) * (table.at(s.with(j)) - table.at(s));
    }
  }
  return phi;
}

AttributionReport exact_shapley(const PredictiveModel& model, const Vector& x,
                                const ReferenceProvider& refs, const SummaryStatistic& stat,
                                const EngineOptions& options, ValueTable* table_out) {
  ValueTable table = build_value_table(model, x, refs, stat, options);
  AttributionReport report = make_report(table, shapley_from_table(table), refs, {true, 0});
  if (table_out) *table_out = std::move(table);
  return report;
}

AttributionReport exact_shapley(const PredictiveModel& model, const Vector& x,
                                const Dataset& dataset, const SamplerConfig& sampler,
                                const SummaryStatistic& stat, const EngineOptions& options) {
  return exact_shapley(model, x, ReferenceProvider(dataset, x, sampler), stat, options);
}

AttributionReport exact_shapley(const PredictiveModel& model, const Vector& x,
                                const ReferenceSet& refs, const SummaryStatistic& stat,
                                const EngineOptions& options) {
  return exact_shapley(model, x, ReferenceProvider(refs), stat, options);
}

AttributionReport sampled_shapley(const PredictiveModel& model, const Vector& x,
                                  const ReferenceProvider& refs, const SummaryStatistic& stat,
                                  int n_permutations, std::uint64_t seed,
                                  ValueTable* table_out) {
  if (n_permutations < 1) throw PreconditionError("sampled_shapley: n_permutations must be >= 1");
  check_arity(model, x);
  const int m = static_cast<int>(x.size());

  ValueTable table(m, stat);
  auto value = [&](const Coalition& s) {
    if (!table.contains(s)) table.insert(s, value_function(model, x, s, refs.for_coalition(s), stat));
    return table.at(s);
  };

  Vector total = Vector::Zero(m);
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  const double empty_value = value(Coalition(m));
  for (int p = 0; p < n_permutations; ++p) {
    shuffle(order, rng);
    Coalition prefix(m);
    double before = empty_value;
    for (int j : order) {
      prefix.insert(j);
      const double after = value(prefix);
      total(j) += after - before;
      before = after;
    }
  }

  AttributionReport report =
      make_report(table, total / static_cast<double>(n_permutations), refs, {false, n_permutations});
  if (table_out) *table_out = std::move(table);
  return report;
}

AttributionReport sampled_shapley(const PredictiveModel& model, const Vector& x,
                                  const Dataset& dataset, const SamplerConfig& sampler,
                                  const SummaryStatistic& stat, int n_permutations,
                                  std::uint64_t seed) {
  return sampled_shapley(model, x, ReferenceProvider(dataset, x, sampler), stat, n_permutations,
                         seed);
}

AttributionReport shapley(const PredictiveModel& model, const Vector& x, const Dataset& dataset,
                          const SamplerConfig& sampler, const SummaryStatistic& stat,
                          const EstimatorConfig& estimator) {
  if (estimator.n_permutations) {
    return sampled_shapley(model, x, dataset, sampler, stat, *estimator.n_permutations,
                           estimator.seed);
  }
  return exact_shapley(model, x, dataset, sampler, stat);
}

AttributionReport qshap(const PredictiveModel& model, const Vector& x, const Dataset& dataset,
                        const SamplerConfig& sampler, double q, const EstimatorConfig& estimator) {
  const SummaryStatistic stat = SummaryStatistic::quantile(q);
  AttributionReport report = shapley(model, x, dataset, sampler, stat, estimator);
  report.anchor = find_anchor(model, dataset, stat);
  return report;
}

AttributionReport median_shap(const PredictiveModel& model, const Vector& x,
                              const Dataset& dataset, const SamplerConfig& sampler,
                              const EstimatorConfig& estimator) {
  return qshap(model, x, dataset, sampler, 0.5, estimator);
}

AnchorPoint find_anchor(const PredictiveModel& model, const Dataset& dataset,
                        const SummaryStatistic& stat) {
  const Matrix& X = dataset.features();
  const Vector predictions = model.predict(X);
  AnchorPoint anchor;
  if (stat.is_mean()) {
    anchor.prediction = apply_statistic(predictions, stat);
    return anchor;
  }
  std::vector<Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return predictions(a) < predictions(b); });
  const auto pos = static_cast<std::size_t>(
      std::floor(static_cast<double>(X.rows() - 1) * stat.q()));
  // Among rows tied at the selected prediction, the lowest index wins.
  const double target = predictions(order[pos]);
  Index row = 0;
  while (predictions(row) != target) ++row;
  anchor.index = row;
  anchor.values = X.row(row).transpose();
  anchor.prediction = predictions(row);
  return anchor;
}

}  // namespace medshap
