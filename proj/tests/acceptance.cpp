// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every tolerance and time budget is fixed below.

#include "medshap/bridge.hpp"
#include "medshap/engine.hpp"
#include "medshap/harness.hpp"
#include "medshap/models.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>

namespace {

using namespace medshap;
using Clock = std::chrono::steady_clock;

constexpr double kMisleadingPhi1Bound = 15.0;
constexpr double kMisleadingPhi2Tolerance = 0.05;
constexpr double kAdversarialMeanLow = 9.0;
constexpr double kAdversarialMeanHigh = 11.0;
constexpr double kAdversarialMedianBound = 0.1;
constexpr double kExampleSeconds = 5.0;
constexpr double kAxiomTolerance = 1e-9;
constexpr int kAxiomModels = 100;
constexpr int kConvergencePermutations = 5000;
constexpr double kConvergenceFraction = 0.02;
constexpr double kBreakdownMeanShift = 1e6;
constexpr double kCorruptValue = 1e9;
constexpr double kExperimentSeconds = 120.0;
constexpr int kBridgeTimeoutMs = 300;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buffer[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buffer, sizeof buffer, format, args);
  va_end(args);
  return buffer;
}

template <typename E, typename F>
bool throws_as(F&& body) {
  try {
    body();
  } catch (const E&) {
    return true;
  } catch (...) {
  }
  return false;
}

ReferenceSet shared(Matrix rows) {
  ReferenceSet refs;
  refs.rows = std::move(rows);
  refs.provenance = Provenance::kFullTrainingSet;
  return refs;
}

// ---------------------------------------------------------------------------

Outcome misleading_mean() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> normal;
  Matrix rows(100000, 2);
  for (Index i = 0; i < rows.size(); ++i) rows.data()[i] = normal(rng);
  const FunctionModel f(2, [](const auto& x) { return 1000.0 * x(0) + x(1); });
  const Vector x = (Vector(2) << 0.0, 1.0).finished();
  const auto report = exact_shapley(f, x, shared(std::move(rows)), SummaryStatistic::mean());
  const double elapsed = seconds_since(start);
  const bool pass = std::abs(report.phi(0)) <= kMisleadingPhi1Bound &&
                    std::abs(report.phi(1) - 1.0) <= kMisleadingPhi2Tolerance &&
                    elapsed < kExampleSeconds;
  return {pass, fmt("phi1=%.4f (|.|<=%.0f) phi2=%.6f (+-%.2f of 1) %.2fs (<%.0fs)", report.phi(0),
                    kMisleadingPhi1Bound, report.phi(1), kMisleadingPhi2Tolerance, elapsed,
                    kExampleSeconds)};
}

Outcome adversarial_spike() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240602);
  std::uniform_real_distribution<double> unit;
  Matrix rows(100000, 1);
  for (Index i = 0; i < rows.size(); ++i) rows.data()[i] = unit(rng);
  const ReferenceSet refs = shared(std::move(rows));
  const FunctionModel f(1, [](const auto& x) { return -x(0) - (x(0) > 0.99 ? 1000.0 : 0.0); });
  const Vector x = Vector::Constant(1, 0.5);
  const auto mean = exact_shapley(f, x, refs, SummaryStatistic::mean());
  const auto median = exact_shapley(f, x, refs, SummaryStatistic::median());
  const double elapsed = seconds_since(start);
  const bool pass = mean.phi(0) >= kAdversarialMeanLow && mean.phi(0) <= kAdversarialMeanHigh &&
                    std::abs(median.phi(0)) <= kAdversarialMedianBound &&
                    elapsed < kExampleSeconds;
  return {pass, fmt("mean phi=%.4f (in [%.0f,%.0f]) median phi=%.5f (|.|<=%.1f) %.2fs (<%.0fs)",
                    mean.phi(0), kAdversarialMeanLow, kAdversarialMeanHigh, median.phi(0),
                    kAdversarialMedianBound, elapsed, kExampleSeconds)};
}

// ---------------------------------------------------------------------------
// Random models for the axiom suite: sums of nonlinear terms over random
// feature subsets, optionally ignoring one feature and optionally symmetric
// in a pair of features.

using Term = std::function<double(const Eigen::Ref<const Vector>&)>;

Term random_term(std::mt19937_64& rng, const std::vector<int>& usable) {
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  std::normal_distribution<double> normal;
  const int a = usable[pick(rng)], b = usable[pick(rng)];
  const double w = normal(rng), c = normal(rng);
  switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
    case 0: return [=](const auto& x) { return w * x(a); };
    case 1: return [=](const auto& x) { return w * x(a) * x(b); };
    case 2: return [=](const auto& x) { return w * std::sin(x(a) + c); };
    case 3: return [=](const auto& x) { return w * (x(a) > c ? 1.0 : 0.0); };
    case 4: return [=](const auto& x) { return w * std::max(x(a), x(b)); };
    default: return [=](const auto& x) { return w * std::exp(0.3 * x(a)); };
  }
}

FunctionModel random_model(std::mt19937_64& rng, int m, int dummy) {
  std::vector<int> usable;
  for (int j = 0; j < m; ++j)
    if (j != dummy) usable.push_back(j);
  std::vector<Term> terms;
  const int n_terms = std::uniform_int_distribution<int>(1, 6)(rng);
  for (int t = 0; t < n_terms; ++t) terms.push_back(random_term(rng, usable));
  return FunctionModel(m, [terms](const auto& x) {
    double y = 0.0;
    for (const auto& t : terms) y += t(x);
    return y;
  });
}

// Symmetrises g in features i and j: f(x) = g(x) + g(x with i, j swapped).
FunctionModel symmetrised(FunctionModel g, int i, int j) {
  const int m = g.n_features();
  return FunctionModel(m, [g = std::move(g), i, j](const auto& x) {
    Vector swapped = x;
    std::swap(swapped(i), swapped(j));
    return g.predict_one(x) + g.predict_one(swapped);
  });
}

Outcome axiom_suite() {
  std::mt19937_64 rng(20240603);
  std::normal_distribution<double> normal;
  const std::vector<SummaryStatistic> stats{SummaryStatistic::mean(), SummaryStatistic::quantile(0.1),
                                            SummaryStatistic::quantile(0.5),
                                            SummaryStatistic::quantile(0.9)};
  double worst_efficiency = 0.0, worst_symmetry = 0.0, worst_linearity = 0.0,
         worst_homogeneity = 0.0;
  int dummy_failures = 0;
  for (int trial = 0; trial < kAxiomModels; ++trial) {
    const int m = std::uniform_int_distribution<int>(2, 6)(rng);
    const int n_refs = std::uniform_int_distribution<int>(5, 40)(rng);
    const int dummy = std::uniform_int_distribution<int>(0, m - 1)(rng);
    Matrix rows(n_refs, m);
    for (Index r = 0; r < rows.size(); ++r) rows.data()[r] = normal(rng);
    Vector x(m);
    for (auto& v : x) v = normal(rng);

    // Dummy, efficiency, homogeneity and linearity on the raw references.
    const ReferenceProvider refs(shared(rows));
    const FunctionModel f = random_model(rng, m, dummy);
    const FunctionModel g = random_model(rng, m, -1);
    const double alpha = std::abs(normal(rng)) + 0.1, beta = normal(rng);
    const FunctionModel scaled(m, [&](const auto& z) { return alpha * f.predict_one(z); });
    const FunctionModel combo(m, [&](const auto& z) {
      return alpha * f.predict_one(z) + beta * g.predict_one(z);
    });
    for (const auto& stat : stats) {
      ValueTable tf(m, stat), ts(m, stat);
      const auto rf = exact_shapley(f, x, refs, stat, {}, &tf);
      const auto rs = exact_shapley(scaled, x, refs, stat, {}, &ts);
      worst_efficiency = std::max(worst_efficiency, std::abs(rf.efficiency_residual()));
      if (rf.phi(dummy) != 0.0) ++dummy_failures;
      for (const auto& [s, v] : tf.entries()) {
        worst_homogeneity =
            std::max(worst_homogeneity, std::abs(ts.at(s) - alpha * v) / (1.0 + std::abs(alpha * v)));
      }
      worst_homogeneity = std::max(
          worst_homogeneity, (rs.phi - alpha * rf.phi).cwiseAbs().maxCoeff() / (1.0 + rs.phi.norm()));
      if (stat.is_mean()) {
        const auto rg = exact_shapley(g, x, refs, stat);
        const auto rc = exact_shapley(combo, x, refs, stat);
        const Vector expected = alpha * rf.phi + beta * rg.phi;
        worst_linearity = std::max(worst_linearity, (rc.phi - expected).cwiseAbs().maxCoeff());
      }
    }

    // Symmetry: interchangeable features i, j in model, instance and references.
    int i = 0, j = 1;
    if (m > 2) {
      i = std::uniform_int_distribution<int>(0, m - 1)(rng);
      do j = std::uniform_int_distribution<int>(0, m - 1)(rng); while (j == i);
    }
    Matrix sym_rows = rows;
    sym_rows.col(j) = sym_rows.col(i);
    Vector sym_x = x;
    sym_x(j) = sym_x(i);
    const ReferenceProvider sym_refs(shared(sym_rows));
    const FunctionModel h = symmetrised(random_model(rng, m, -1), i, j);
    for (const auto& stat : stats) {
      const auto r = exact_shapley(h, sym_x, sym_refs, stat);
      worst_symmetry = std::max(worst_symmetry, std::abs(r.phi(i) - r.phi(j)));
      worst_efficiency = std::max(worst_efficiency, std::abs(r.efficiency_residual()));
    }
  }
  const bool pass = worst_efficiency < kAxiomTolerance && dummy_failures == 0 &&
                    worst_symmetry < kAxiomTolerance && worst_linearity <= kAxiomTolerance &&
                    worst_homogeneity <= kAxiomTolerance;
  return {pass, fmt("%d models x 4 statistics: efficiency %.2e, dummy nonzero %d, symmetry %.2e, "
                    "linearity %.2e, homogeneity %.2e (tol %.0e)",
                    kAxiomModels, worst_efficiency, dummy_failures, worst_symmetry,
                    worst_linearity, worst_homogeneity, kAxiomTolerance)};
}

// ---------------------------------------------------------------------------

Outcome estimator_convergence() {
  const int m = 8;
  const Dataset data = synth_survival(400, m, Vector::LinSpaced(m, 1.0, 0.1), 0.5, 0.0, 20240604);
  ForestParams params;
  params.n_trees = 50;
  params.seed = 7;
  const auto forest = fit_forest(data, params);
  const Vector x = data.features().row(11).transpose();
  const ReferenceProvider refs(data, x, SamplerConfig::marginal(100, 8));
  std::string detail;
  bool pass = true;
  for (const auto& stat : {SummaryStatistic::mean(), SummaryStatistic::median()}) {
    const auto exact = exact_shapley(*forest, x, refs, stat);
    const auto sampled = sampled_shapley(*forest, x, refs, stat, kConvergencePermutations, 9);
    const double range = exact.phi.maxCoeff() - exact.phi.minCoeff();
    const double error = (sampled.phi - exact.phi).cwiseAbs().maxCoeff();
    pass = pass && range > 0.0 && error <= kConvergenceFraction * range;
    detail += fmt("%s max err %.4g / range %.4g = %.2f%%; ", stat.to_string().c_str(), error,
                  range, 100.0 * error / range);
  }
  return {pass, detail + fmt("limit %.0f%%, %d permutations", 100 * kConvergenceFraction,
                             kConvergencePermutations)};
}

// ---------------------------------------------------------------------------
// Reference rows form a comonotone chain (row i has every feature equal to
// t_i) so that under the monotone clean model the corrupted top rows stay
// on top of every coalition's outputs. Corrupted rows carry a marker in
// feature 0 and the model returns 1e9 on them.

Outcome median_breakdown() {
  std::mt19937_64 rng(20240605);
  std::normal_distribution<double> normal;
  constexpr double kMarker = 1e7;
  const FunctionModel f(3, [](const auto& z) {
    if (z(0) >= kMarker) return kCorruptValue;
    return z(0) + 2.0 * z(1) + 0.5 * z(2);
  });
  int median_changes = 0;
  double smallest_mean_shift = std::numeric_limits<double>::infinity();
  int cases = 0;
  for (int m : {3, 4, 11, 20, 51, 100}) {
    for (int rep = 0; rep < 5; ++rep, ++cases) {
      std::vector<double> t(static_cast<std::size_t>(m));
      for (auto& v : t) v = normal(rng);
      std::sort(t.begin(), t.end());
      Matrix rows(m, 3);
      for (int i = 0; i < m; ++i) rows.row(i).setConstant(t[static_cast<std::size_t>(i)]);
      Matrix corrupt = rows;
      for (int i = m - (m - 1) / 2; i < m; ++i) corrupt(i, 0) = kMarker;
      Vector x(3);
      for (auto& v : x) v = normal(rng);

      for (const auto& stat : {SummaryStatistic::median(), SummaryStatistic::mean()}) {
        ValueTable clean_table(3, stat), corrupt_table(3, stat);
        const auto a = exact_shapley(f, x, ReferenceProvider(shared(rows)), stat, {}, &clean_table);
        const auto b = exact_shapley(f, x, ReferenceProvider(shared(corrupt)), stat, {}, &corrupt_table);
        if (stat.is_mean()) {
          if (m >= 3 && (m - 1) / 2 > 0) {
            smallest_mean_shift =
                std::min(smallest_mean_shift, (a.phi - b.phi).cwiseAbs().maxCoeff());
          }
        } else {
          bool same = (a.phi.array() == b.phi.array()).all();
          for (const auto& [s, v] : clean_table.entries()) same = same && corrupt_table.at(s) == v;
          if (!same) ++median_changes;
        }
      }
    }
  }
  const bool pass = median_changes == 0 && smallest_mean_shift > kBreakdownMeanShift;
  return {pass, fmt("%d cases: median tables/phi changed in %d; smallest max mean |dphi| %.3g "
                    "(>%.0e)",
                    cases, median_changes, smallest_mean_shift, kBreakdownMeanShift)};
}

// ---------------------------------------------------------------------------

Outcome experiment_direction() {
  const auto start = Clock::now();
  const Dataset data = synth_survival(500, 4, Vector::LinSpaced(4, 1.0, 0.25), 1.0, 0.25, 20240606);
  ExperimentConfig config;
  config.seed = 20240606;
  config.regressor = [](const Dataset& d) -> std::unique_ptr<PredictiveModel> {
    ForestParams params;
    params.seed = 20240606;
    return fit_forest(d, params);
  };
  const ExperimentReport report = run_experiment(data, config);
  const double elapsed = seconds_since(start);
  const bool pass =
      report.median_shap_abs < report.mean_shap_abs && elapsed < kExperimentSeconds;
  return {pass, fmt("mean |d| median-SHAP %.4f vs mean-SHAP %.4f over %d individuals; %.1fs (<%.0fs)",
                    report.median_shap_abs, report.mean_shap_abs, config.n_explained, elapsed,
                    kExperimentSeconds)};
}

// ---------------------------------------------------------------------------

Outcome anchor_realism() {
  std::mt19937_64 rng(20240607);
  std::normal_distribution<double> normal;
  int checked = 0, failures = 0;
  auto check = [&](const PredictiveModel& model, const Dataset& d) {
    const AnchorPoint a = find_anchor(model, d, SummaryStatistic::median());
    ++checked;
    if (!a.index || *a.index < 0 || *a.index >= d.n_rows() || !a.values) { ++failures; return; }
    const Vector row = d.features().row(*a.index).transpose();
    if (*a.values != row || a.prediction != model.predict(d.features())(*a.index) ||
        a.prediction != model.predict_one(row)) {
      ++failures;
    }
  };
  for (int n : {1, 2, 3, 10, 51, 200, 501}) {
    for (int m : {1, 3, 5}) {
      Matrix X(n, m);
      for (Index i = 0; i < X.size(); ++i) X.data()[i] = std::round(4.0 * normal(rng)) / 4.0;
      Vector t(n);
      for (auto& v : t) v = std::exp(normal(rng));
      const Dataset d = Dataset::from_features(X).with_time(t);
      check(FunctionModel(m, [](const auto& z) { return z.sum(); }), d);
      check(FunctionModel(m, [](const auto& z) { return std::round(z(0)); }), d);
      check(*fit_tree(d, 4, 1), d);
      if (n > m + 1) {
        try {
          check(*fit_linear(d), d);
        } catch (const SingularDesignError&) {
        }
      }
      check(*fit_forest(d, 10, 4, static_cast<std::uint64_t>(n * 10 + m)), d);
    }
  }
  return {failures == 0, fmt("%d dataset/model pairs, %d failures", checked, failures)};
}

// ---------------------------------------------------------------------------

Outcome bridge_conformance() {
  std::vector<std::string> failed;
  auto expect = [&](const std::string& name, const std::function<bool()>& body) {
    try {
      if (!body()) failed.push_back(name);
    } catch (const std::exception& e) {
      failed.push_back(name + " (" + e.what() + ")");
    }
  };
  auto server = [](const std::string& mode, int timeout_ms = 5000) {
    return ExternalModel::connect({ECHO_SERVER_PATH, "2", mode}, timeout_ms);
  };
  const Matrix batch = (Matrix(2, 2) << 1, 2, 3, 4).finished();

  expect("handshake", [&] {
    const auto model = server("echo");
    return model.name() == "echo" && model.n_features() == 2;
  });
  expect("batch prediction", [&] {
    const auto model = server("echo");
    return model.predict(batch) == (Vector(2) << 1, 3).finished() &&
           model.predict(Matrix(0, 2)).size() == 0;
  });
  expect("malformed handshake", [&] {
    return throws_as<ProtocolError>([&] { server("bad-handshake"); });
  });
  expect("short response", [&] {
    return throws_as<LengthMismatchError>([&] { server("short").predict(batch); });
  });
  expect("non-finite response", [&] {
    return throws_as<NonFiniteOutputError>([&] { server("nan").predict(batch); }) &&
           throws_as<NonFiniteOutputError>([&] { server("null").predict(batch); });
  });
  expect("remote error", [&] {
    return throws_as<RemoteError>([&] { server("error").predict(batch); });
  });
  expect("timeout", [&] {
    const auto start = Clock::now();
    const auto model = server("hang-predict", kBridgeTimeoutMs);
    const bool timed_out = throws_as<TimeoutError>([&] { model.predict(batch); });
    return timed_out && !model.running() && seconds_since(start) < 5.0;
  });
  std::string detail = "handshake, batch, malformed, non-finite, remote error, timeout";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"misleading-mean example", misleading_mean},
      {"adversarial robustness", adversarial_spike},
      {"axiom suite", axiom_suite},
      {"estimator convergence", estimator_convergence},
      {"median breakdown", median_breakdown},
      {"experiment direction", experiment_direction},
      {"anchor realism", anchor_realism},
      {"bridge conformance", bridge_conformance},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::printf("%s  %s: %s\n", outcome.pass ? "PASS" : "FAIL", name, outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
  return failures == 0 ? 0 : 1;
}
