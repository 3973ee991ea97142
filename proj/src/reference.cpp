#include "medshap/reference.hpp"

#include "medshap/random.hpp"

#include <numeric>

namespace medshap {

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::kMarginal ? "marginal" : "conditional";
}

int default_neighbor_count(Index n_rows) {
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_rows))));
}

std::uint64_t coalition_seed(std::uint64_t seed, const Coalition& s) {
  if (s.empty()) return seed;
  return derive_seed(seed, s.hash());
}

namespace {

Matrix draw_rows(const Matrix& source, const std::vector<Index>& pool, int m, Rng& rng) {
  Matrix out(m, source.cols());
  for (int i = 0; i < m; ++i) {
    const auto pick = uniform_index(rng, pool.size());
    out.row(i) = source.row(pool[static_cast<std::size_t>(pick)]);
  }
  return out;
}

}  // namespace

ReferenceSet marginal_references(const Dataset& dataset, const SamplerConfig& config) {
  if (config.m < 0) throw PreconditionError("marginal_references: negative m");
  ReferenceSet refs;
  refs.seed = config.seed;
  if (config.m == 0) {
    refs.rows = dataset.features();
    refs.provenance = Provenance::kFullTrainingSet;
    return refs;
  }
  std::vector<Index> all(static_cast<std::size_t>(dataset.n_rows()));
  std::iota(all.begin(), all.end(), Index{0});
  Rng rng(config.seed);
  refs.rows = draw_rows(dataset.features(), all, config.m, rng);
  refs.provenance = Provenance::kMarginal;
  return refs;
}

std::vector<Index> nearest_rows(const Dataset& dataset, const Vector& x, const Coalition& s,
                                int k) {
  const Index n = dataset.n_rows();
  if (k < 1) throw PreconditionError("conditional references need k >= 1");
  if (k > n) {
    throw PreconditionError("conditional references: k = " + std::to_string(k) +
                            " exceeds dataset size " + std::to_string(n));
  }
  if (x.size() != dataset.n_features()) {
    throw PreconditionError("conditional references: instance has " + std::to_string(x.size()) +
                            " values, dataset has " + std::to_string(dataset.n_features()) +
                            " features");
  }
  if (!x.array().isFinite().all()) {
    throw PreconditionError("conditional references: non-finite instance value");
  }
  if (s.n_features() != dataset.n_features()) {
    throw PreconditionError("conditional references: coalition arity mismatch");
  }

  const Matrix& X = dataset.features();
  Vector dist2 = Vector::Zero(n);
  for (int j : s.members()) {
    const auto col = X.col(j).array();
    const double mu = col.mean();
    const double sd = std::sqrt((col - mu).square().mean());
    if (!(sd > 0.0)) continue;
    dist2.array() += ((col - x(j)) / sd).square();
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    return dist2(a) < dist2(b) || (dist2(a) == dist2(b) && a < b);
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

ReferenceSet conditional_references(const Dataset& dataset, const Vector& x, const Coalition& s,
                                    const SamplerConfig& config) {
  if (config.m < 0) throw PreconditionError("conditional_references: negative m");
  const int k = config.k.value_or(default_neighbor_count(dataset.n_rows()));
  // Validates k, x and S even on the degenerate paths below.
  std::vector<Index> neighbours = nearest_rows(dataset, x, s, k);

  if (s.empty()) {
    ReferenceSet refs = marginal_references(dataset, config);
    refs.coalition = s;
    return refs;
  }

  ReferenceSet refs;
  refs.provenance = Provenance::kConditional;
  refs.k = k;
  refs.coalition = s;
  refs.seed = coalition_seed(config.seed, s);

  if (s.is_full()) {
    const int count = config.m == 0 ? k : config.m;
    refs.rows = x.transpose().replicate(count, 1);
    return refs;
  }
  if (config.m == 0) {
    refs.rows = dataset.features()(neighbours, Eigen::all);
    return refs;
  }
  Rng rng(refs.seed);
  refs.rows = draw_rows(dataset.features(), neighbours, config.m, rng);
  return refs;
}

ReferenceSet references_for(const Dataset& dataset, const Vector& x, const Coalition& s,
                            const SamplerConfig& config) {
  if (config.mode == SamplingMode::kMarginal) return marginal_references(dataset, config);
  return conditional_references(dataset, x, s, config);
}

}  // namespace medshap
