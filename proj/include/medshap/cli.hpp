#pragma once

// Command-line workflows: explain, anchor, importance, experiment, synth.

#include "medshap/engine.hpp"
#include "medshap/harness.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace medshap::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 2,
  kDataError = 3,
  kModelError = 4,
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on; echoed into every output.
struct RunConfig {
  std::string subcommand;
  std::string data_path;
  std::string model = "builtin:forest";  // builtin:{linear|tree|forest} or external:<command>
  std::string statistic = "median";      // mean | median | q=<value>
  std::string sampler = "auto";          // auto | marginal | conditional
  int m = 0;
  std::optional<int> k;
  std::string estimator = "exact";       // exact | sampled:<n>
  std::uint64_t seed = 0;
  std::string output;                    // empty: stdout
  std::string format = "json";           // json | table
  int timeout_ms = 30000;

  int trees = 100;
  int depth = 8;
  int min_leaf = 5;

  std::optional<long long> row;
  std::string values;

  int repeats = 5;
  std::optional<int> top_k;
  int n_explained = 20;

  int n = 500;
  int features = 4;
  std::string weights;
  double skew = 1.0;
  double censor = 0.25;
};

SummaryStatistic parse_statistic(const std::string& text);
EstimatorConfig parse_estimator(const std::string& text, std::uint64_t seed);
/// "auto" picks conditional references for quantile statistics and
/// marginal ones for the mean.
SamplerConfig make_sampler(const RunConfig& config, const SummaryStatistic& stat);
std::vector<double> parse_list(const std::string& text, const std::string& what);

std::unique_ptr<PredictiveModel> make_model(const RunConfig& config, const Dataset& dataset);

nlohmann::json config_echo(const RunConfig& config);

// Each returns the rendered output (JSON or table text).
std::string run_explain(const RunConfig& config);
std::string run_anchor(const RunConfig& config);
std::string run_importance(const RunConfig& config);
std::string run_experiment(const RunConfig& config);
std::string run_synth(const RunConfig& config);

/// Parses arguments, runs the subcommand and writes its output. Returns the
/// process exit code; diagnostics go to `err`.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace medshap::cli
