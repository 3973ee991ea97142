#pragma once

// Reference distributions: interventional (marginal resampling of dataset
// rows) and observational (k-nearest-neighbour empirical conditional).

#include "medshap/core.hpp"

#include <optional>

namespace medshap {

enum class SamplingMode { kMarginal, kConditional };

std::string to_string(SamplingMode mode);

struct SamplerConfig {
  SamplingMode mode = SamplingMode::kMarginal;
  // Number of reference rows; 0 uses the whole population (all N rows for
  // marginal sets, all k neighbours for conditional ones).
  int m = 0;
  // Neighbour count for conditional sets; unset means ceil(sqrt(N)).
  std::optional<int> k;
  std::uint64_t seed = 0;

  static SamplerConfig marginal(int m = 0, std::uint64_t seed = 0) {
    return {SamplingMode::kMarginal, m, std::nullopt, seed};
  }
  static SamplerConfig conditional(int m = 0, std::optional<int> k = std::nullopt,
                                   std::uint64_t seed = 0) {
    return {SamplingMode::kConditional, m, k, seed};
  }
};

int default_neighbor_count(Index n_rows);

/// Seed of the stream used for coalition S. The empty coalition keeps the
/// base seed so that conditioning on nothing reproduces the marginal draw.
std::uint64_t coalition_seed(std::uint64_t seed, const Coalition& s);

/// m rows drawn uniformly with replacement (m = 0: every row, in order).
ReferenceSet marginal_references(const Dataset& dataset, const SamplerConfig& config);

/// Rows drawn from the k dataset rows nearest to x on the features of S,
/// under Euclidean distance with each feature divided by its population
/// standard deviation. Ties go to the lower row index.
///
/// S = {} falls back to marginal_references; S = all features returns
/// copies of x.
ReferenceSet conditional_references(const Dataset& dataset, const Vector& x,
                                    const Coalition& s, const SamplerConfig& config);

/// Indices (ascending) of the k nearest rows used by conditional_references.
std::vector<Index> nearest_rows(const Dataset& dataset, const Vector& x, const Coalition& s,
                                int k);

/// Dispatches on config.mode. Marginal sets ignore x and S.
ReferenceSet references_for(const Dataset& dataset, const Vector& x, const Coalition& s,
                            const SamplerConfig& config);

}  // namespace medshap
