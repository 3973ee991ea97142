#include "medshap/core.hpp"

#include <gtest/gtest.h>

#include <random>
#include <unordered_set>

namespace medshap {
namespace {

// Oracle for the interpolated quantile: the sorted values sit at plotting
// positions p_i = i / (n - 1); q is located between two positions and the
// value is read off the connecting segment.
double quantile_by_plotting_positions(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 1) return v[0];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double p0 = static_cast<double>(i) / static_cast<double>(n - 1);
    const double p1 = static_cast<double>(i + 1) / static_cast<double>(n - 1);
    if (q >= p0 && q <= p1) {
      const double t = (q - p0) / (p1 - p0);
      return v[i] * (1.0 - t) + v[i + 1] * t;
    }
  }
  return v.back();
}

TEST(ApplyStatisticTest, Mean) {
  EXPECT_DOUBLE_EQ(apply_statistic(std::vector<double>{1, 2, 3}, SummaryStatistic::mean()), 2.0);
}

TEST(ApplyStatisticTest, EvenMedianAveragesMiddleValues) {
  EXPECT_DOUBLE_EQ(apply_statistic(std::vector<double>{1, 2, 3, 1000}, SummaryStatistic::median()),
                   2.5);
  EXPECT_DOUBLE_EQ(apply_statistic(std::vector<double>{1000, 3, 1, 2}, SummaryStatistic::median()),
                   2.5);
}

TEST(ApplyStatisticTest, LowerQuartile) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_by_plotting_positions(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(apply_statistic(v, SummaryStatistic::quantile(0.25)), 1.75);
}

TEST(ApplyStatisticTest, SingleValue) {
  EXPECT_EQ(apply_statistic(std::vector<double>{7.5}, SummaryStatistic::quantile(0.9)), 7.5);
}

TEST(ApplyStatisticTest, WorksOnEigenExpressions) {
  Vector v(4);
  v << 4, 1, 3, 2;
  EXPECT_DOUBLE_EQ(apply_statistic(v.array() * 2.0, SummaryStatistic::median()), 5.0);
  Eigen::VectorXf f(3);
  f << 1.f, 5.f, 9.f;
  EXPECT_FLOAT_EQ(apply_statistic(f, SummaryStatistic::median()), 5.f);
}

TEST(ApplyStatisticTest, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(apply_statistic(std::vector<double>{}, SummaryStatistic::mean()), PreconditionError);
  EXPECT_THROW(apply_statistic(std::vector<double>{1.0, std::nan("")}, SummaryStatistic::median()),
               PreconditionError);
}

TEST(SummaryStatisticTest, QuantileLevelMustBeInOpenUnitInterval) {
  EXPECT_THROW(SummaryStatistic::quantile(0.0), PreconditionError);
  EXPECT_THROW(SummaryStatistic::quantile(1.0), PreconditionError);
  EXPECT_THROW(SummaryStatistic::quantile(-0.2), PreconditionError);
  EXPECT_EQ(SummaryStatistic::quantile(0.5), SummaryStatistic::median());
  EXPECT_EQ(SummaryStatistic::quantile(0.5).to_string(), "median");
  EXPECT_EQ(SummaryStatistic::quantile(0.25).to_string(), "q=0.25");
}

TEST(ApplyStatisticProperty, MatchesPlottingPositionOracle) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> length(1, 40);
  std::uniform_real_distribution<double> level(0.01, 0.99);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(length(rng)));
    for (auto& x : v) x = normal(rng);
    const double q = level(rng);
    EXPECT_NEAR(apply_statistic(v, SummaryStatistic::quantile(q)),
                quantile_by_plotting_positions(v, q), 1e-12);
  }
}

TEST(ApplyStatisticProperty, MeanEqualsMedianOnSymmetricLists) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_int_distribution<int> half(1, 20);
  for (int trial = 0; trial < 500; ++trial) {
    const double centre = normal(rng);
    std::vector<double> v;
    const int h = half(rng);
    for (int i = 0; i < h; ++i) {
      const double d = std::abs(normal(rng));
      v.push_back(centre + d);
      v.push_back(centre - d);
    }
    if (trial % 2 == 0) v.push_back(centre);
    const double mean = apply_statistic(v, SummaryStatistic::mean());
    const double median = apply_statistic(v, SummaryStatistic::median());
    EXPECT_NEAR(mean, median, 1e-12 * (1.0 + std::abs(centre)));
  }
}

TEST(ApplyStatisticProperty, MedianIgnoresInflatedMaximum) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> length(3, 30);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(length(rng)));
    for (auto& x : v) x = normal(rng);
    const double before = apply_statistic(v, SummaryStatistic::median());
    *std::max_element(v.begin(), v.end()) += std::pow(10.0, trial % 12);
    EXPECT_EQ(apply_statistic(v, SummaryStatistic::median()), before);
  }
}

TEST(CoalitionTest, BasicSetOperations) {
  Coalition s(5, {0, 3});
  EXPECT_TRUE(s.contains(3));
  EXPECT_FALSE(s.contains(1));
  EXPECT_EQ(s.size(), 2);
  EXPECT_EQ(s.complement().members(), (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(s.with(1).members(), (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(s.without(0).members(), (std::vector<int>{3}));
  EXPECT_TRUE(Coalition::full(5).is_full());
  EXPECT_EQ(s.to_string(), "{0,3}");
  EXPECT_THROW(s.contains(5), PreconditionError);
}

TEST(CoalitionTest, WideCoalitionsHashAndCompare) {
  Coalition a(130), b(130);
  a.insert(129);
  b.insert(129);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hash(), b.hash());
  b.insert(64);
  EXPECT_FALSE(a == b);
  EXPECT_EQ(b.size(), 2);
}

TEST(CoalitionsExcludingTest, OrderBySizeThenLexicographic) {
  const auto all = coalitions_excluding(0, 3);
  ASSERT_EQ(all.size(), 4U);
  EXPECT_EQ(all[0].members(), (std::vector<int>{}));
  EXPECT_EQ(all[1].members(), (std::vector<int>{1}));
  EXPECT_EQ(all[2].members(), (std::vector<int>{2}));
  EXPECT_EQ(all[3].members(), (std::vector<int>{1, 2}));

  const auto five = coalitions_excluding(2, 5);
  EXPECT_EQ(five[5].members(), (std::vector<int>{0, 1}));
  EXPECT_EQ(five[6].members(), (std::vector<int>{0, 3}));
  EXPECT_EQ(five.back().members(), (std::vector<int>{0, 1, 3, 4}));
}

TEST(CoalitionsExcludingTest, SingleFeature) {
  const auto all = coalitions_excluding(0, 1);
  ASSERT_EQ(all.size(), 1U);
  EXPECT_TRUE(all[0].empty());
}

TEST(CoalitionsExcludingTest, CountAndUniqueness) {
  for (int m = 1; m <= 10; ++m) {
    for (int j = 0; j < m; ++j) {
      const auto all = coalitions_excluding(j, m);
      EXPECT_EQ(all.size(), std::size_t{1} << (m - 1));
      std::unordered_set<Coalition, CoalitionHash> seen(all.begin(), all.end());
      EXPECT_EQ(seen.size(), all.size());
      for (const auto& s : all) EXPECT_FALSE(s.contains(j));
    }
  }
  EXPECT_THROW(coalitions_excluding(3, 3), PreconditionError);
}

TEST(ShapleyWeightTest, Values) {
  EXPECT_DOUBLE_EQ(shapley_weight(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(shapley_weight(1, 3), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(shapley_weight(0, 1), 1.0);
  EXPECT_THROW(shapley_weight(3, 3), PreconditionError);
  EXPECT_THROW(shapley_weight(-1, 3), PreconditionError);
}

TEST(ShapleyWeightTest, SumsToOneOverEnumeration) {
  for (int m = 1; m <= 12; ++m) {
    double total = 0.0;
    for (const auto& s : coalitions_excluding(m / 2, m)) total += shapley_weight(s.size(), m);
    EXPECT_NEAR(total, 1.0, 1e-12) << "M=" << m;
  }
}

TEST(DatasetTest, ValidatesInvariants) {
  Matrix X(2, 2);
  X << 1, 2, 3, 4;
  EXPECT_NO_THROW(Dataset({"a", "b"}, X, Vector::Ones(2)));
  EXPECT_THROW(Dataset({"a"}, X, Vector::Ones(2)), PreconditionError);
  EXPECT_THROW(Dataset({"a", "b"}, X, Vector::Zero(2)), PreconditionError);
  Matrix bad = X;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Dataset({"a", "b"}, bad, Vector::Ones(2)), PreconditionError);
  EXPECT_THROW(Dataset({}, Matrix(0, 0), Vector(0)), PreconditionError);

  const Dataset d({"a", "b"}, X, Vector::Ones(2));
  EXPECT_EQ(d.event(), (std::vector<bool>{true, true}));
  const Dataset sub = d.select_features({1});
  EXPECT_EQ(sub.feature_names(), std::vector<std::string>{"b"});
  EXPECT_EQ(sub.features()(1, 0), 4.0);
}

TEST(FunctionModelTest, PredictsRowWise) {
  FunctionModel f(2, [](const auto& x) { return 2 * x(0) + 3 * x(1); });
  Matrix batch(2, 2);
  batch << 1, 0, 1, 2;
  EXPECT_EQ(f.predict(batch), (Vector(2) << 2, 8).finished());
  EXPECT_THROW(f.predict(Matrix(1, 3)), PreconditionError);
}

}  // namespace
}  // namespace medshap
