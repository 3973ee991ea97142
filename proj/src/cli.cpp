#include "medshap/cli.hpp"

#include "medshap/bridge.hpp"
#include "medshap/io.hpp"
#include "medshap/models.hpp"

#include <CLI11.hpp>

#include <numeric>
#include <sstream>

namespace medshap::cli {

using nlohmann::json;

SummaryStatistic parse_statistic(const std::string& text) {
  if (text == "mean") return SummaryStatistic::mean();
  if (text == "median") return SummaryStatistic::median();
  if (text.rfind("q=", 0) == 0) {
    double q = 0.0;
    try {
      std::size_t used = 0;
      q = std::stod(text.substr(2), &used);
      if (used != text.size() - 2) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw UsageError("--statistic: cannot parse quantile in '" + text + "'");
    }
    if (!(q > 0.0 && q < 1.0)) throw UsageError("--statistic: quantile must lie in (0, 1)");
    return SummaryStatistic::quantile(q);
  }
  throw UsageError("--statistic: expected mean, median or q=<value>, got '" + text + "'");
}

EstimatorConfig parse_estimator(const std::string& text, std::uint64_t seed) {
  if (text == "exact") return EstimatorConfig::exact();
  if (text.rfind("sampled:", 0) == 0) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(text.substr(8), &used);
      if (used == text.size() - 8 && n >= 1) return EstimatorConfig::sampled(n, seed);
    } catch (const std::exception&) {
    }
  }
  throw UsageError("--estimator: expected exact or sampled:<n> with n >= 1, got '" + text + "'");
}

SamplerConfig make_sampler(const RunConfig& config, const SummaryStatistic& stat) {
  SamplerConfig sampler;
  if (config.sampler == "marginal") {
    sampler.mode = SamplingMode::kMarginal;
  } else if (config.sampler == "conditional") {
    sampler.mode = SamplingMode::kConditional;
  } else if (config.sampler == "auto") {
    sampler.mode = stat.is_mean() ? SamplingMode::kMarginal : SamplingMode::kConditional;
  } else {
    throw UsageError("--sampler: expected auto, marginal or conditional, got '" + config.sampler + "'");
  }
  if (config.m < 0) throw UsageError("--m must be >= 0");
  if (config.k && *config.k < 1) throw UsageError("--k must be >= 1");
  sampler.m = config.m;
  sampler.k = config.k;
  sampler.seed = config.seed;
  return sampler;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

namespace {

std::vector<std::string> split_command(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string word;
  while (in >> word) out.push_back(word);
  return out;
}

}  // namespace

std::unique_ptr<PredictiveModel> make_model(const RunConfig& config, const Dataset& dataset) {
  const std::string& spec = config.model;
  if (spec == "builtin:linear") return fit_linear(dataset);
  if (spec == "builtin:tree") return fit_tree(dataset, config.depth, config.min_leaf);
  if (spec == "builtin:forest") {
    ForestParams params;
    params.n_trees = config.trees;
    params.tree.max_depth = config.depth;
    params.tree.min_leaf = config.min_leaf;
    params.seed = config.seed;
    return fit_forest(dataset, params);
  }
  if (spec.rfind("external:", 0) == 0) {
    const auto command = split_command(spec.substr(9));
    if (command.empty()) throw UsageError("--model external: needs a command");
    auto model = std::make_unique<ExternalModel>(ExternalModel::connect(command, config.timeout_ms));
    if (model->n_features() != dataset.n_features()) {
      throw DataError(config.data_path, 0,
                      "external model declares " + std::to_string(model->n_features()) +
                          " features, dataset has " + std::to_string(dataset.n_features()));
    }
    return model;
  }
  throw UsageError("--model: expected builtin:{linear|tree|forest} or external:<command>, got '" +
                   spec + "'");
}

json config_echo(const RunConfig& c) {
  json out;
  out["subcommand"] = c.subcommand;
  out["data"] = c.data_path;
  out["model"] = c.model;
  out["statistic"] = parse_statistic(c.statistic).to_string();
  out["sampler"] = c.sampler;
  out["m"] = c.m;
  out["k"] = c.k ? json(*c.k) : json(nullptr);
  out["estimator"] = c.estimator;
  out["seed"] = c.seed;
  out["trees"] = c.trees;
  out["depth"] = c.depth;
  out["min_leaf"] = c.min_leaf;
  if (c.subcommand == "explain") {
    out["row"] = c.row ? json(*c.row) : json(nullptr);
    out["values"] = c.values;
  }
  if (c.subcommand == "importance" || c.subcommand == "experiment") {
    out["repeats"] = c.repeats;
    out["top_k"] = c.top_k ? json(*c.top_k) : json(nullptr);
  }
  if (c.subcommand == "experiment") out["n_explained"] = c.n_explained;
  if (c.subcommand == "synth") {
    out["n"] = c.n;
    out["features"] = c.features;
    out["weights"] = c.weights;
    out["skew"] = c.skew;
    out["censor"] = c.censor;
  }
  return out;
}

namespace {

Dataset load(const RunConfig& config) {
  if (config.data_path.empty()) throw UsageError("--data is required");
  return read_csv(config.data_path);
}

std::string render(const RunConfig& config, const json& body, const std::string& table) {
  if (config.format == "table") return table;
  json out = body;
  out["config"] = config_echo(config);
  return out.dump(2) + "\n";
}

void check_format(const RunConfig& config) {
  if (config.format != "json" && config.format != "table") {
    throw UsageError("--format: expected json or table, got '" + config.format + "'");
  }
}

}  // namespace

std::string run_explain(const RunConfig& config) {
  check_format(config);
  const SummaryStatistic stat = parse_statistic(config.statistic);
  const EstimatorConfig estimator = parse_estimator(config.estimator, config.seed);
  const Dataset dataset = load(config);
  const SamplerConfig sampler = make_sampler(config, stat);

  Vector x;
  if (config.row && !config.values.empty()) throw UsageError("give either --row or --values, not both");
  if (config.row) {
    if (*config.row < 0 || *config.row >= dataset.n_rows()) {
      throw UsageError("--row " + std::to_string(*config.row) + " out of range; valid rows are 0.." +
                       std::to_string(dataset.n_rows() - 1));
    }
    x = dataset.features().row(static_cast<Index>(*config.row)).transpose();
  } else if (!config.values.empty()) {
    const auto values = parse_list(config.values, "--values");
    if (static_cast<Index>(values.size()) != dataset.n_features()) {
      throw DataError("--values", 0,
                      "instance has " + std::to_string(values.size()) + " values, dataset has " +
                          std::to_string(dataset.n_features()) + " features");
    }
    x = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  } else {
    throw UsageError("explain needs --row or --values");
  }

  const auto model = make_model(config, dataset);
  AttributionReport report = shapley(*model, x, dataset, sampler, stat, estimator);
  report.anchor = find_anchor(*model, dataset, stat);

  json body = to_json(report, dataset.feature_names());
  body["instance"] = std::vector<double>(x.data(), x.data() + x.size());
  return render(config, body, format_table(report, dataset.feature_names()));
}

std::string run_anchor(const RunConfig& config) {
  check_format(config);
  const SummaryStatistic stat = parse_statistic(config.statistic);
  const Dataset dataset = load(config);
  const auto model = make_model(config, dataset);
  const AnchorPoint anchor = find_anchor(*model, dataset, stat);

  json body;
  body["statistic"] = stat.to_string();
  body["anchor"] = to_json(anchor, dataset.feature_names());
  std::ostringstream table;
  table << "statistic   " << stat.to_string() << '\n';
  if (anchor.synthetic()) {
    table << "anchor      synthetic (no observed individual), prediction " << anchor.prediction << '\n';
  } else {
    table << "anchor      row " << *anchor.index << ", prediction " << anchor.prediction << '\n';
    for (Index j = 0; j < dataset.n_features(); ++j) {
      table << "  " << dataset.feature_names()[static_cast<std::size_t>(j)] << " = "
            << (*anchor.values)(j) << '\n';
    }
  }
  return render(config, body, table.str());
}

std::string run_importance(const RunConfig& config) {
  check_format(config);
  if (config.repeats < 1) throw UsageError("--repeats must be >= 1");
  const Dataset dataset = load(config);
  if (config.top_k && (*config.top_k < 1 || *config.top_k > dataset.n_features())) {
    throw UsageError("--top-k must lie in 1.." + std::to_string(dataset.n_features()));
  }
  const auto model = make_model(config, dataset);
  const ImportanceScores scores =
      permutation_importance(*model, dataset.features(), dataset.time(),
                             ImportanceMetric::kMeanSquaredError, config.repeats, config.seed);

  json body;
  body["metric"] = "mse";
  body["importance"] = to_json(scores, dataset.feature_names());
  std::ostringstream table;
  table << "feature  score  stderr\n";
  for (Index j = 0; j < dataset.n_features(); ++j) {
    table << dataset.feature_names()[static_cast<std::size_t>(j)] << "  " << scores.scores(j)
          << "  " << scores.standard_errors(j) << '\n';
  }
  if (config.top_k) {
    const std::vector<int> keep = select_top_k(scores.scores, *config.top_k);
    const Dataset restricted = dataset.select_features(keep);
    const auto refit = make_model(config, restricted);
    const Vector residual = refit->predict(restricted.features()) - restricted.time();
    body["selected"] = keep;
    body["retrained_features"] = restricted.feature_names();
    body["retrained_train_mse"] = residual.squaredNorm() / static_cast<double>(residual.size());
    table << "retained:";
    for (const auto& name : restricted.feature_names()) table << ' ' << name;
    table << '\n';
  }
  return render(config, body, table.str());
}

std::string run_experiment(const RunConfig& config) {
  check_format(config);
  const Dataset dataset = load(config);
  ExperimentConfig experiment;
  experiment.n_explained = config.n_explained;
  experiment.seed = config.seed;
  // Same sampler mode for every explanation so the comparison isolates the
  // statistic; "auto" resolves as for the median.
  experiment.sampler = make_sampler(config, SummaryStatistic::median());
  experiment.f_estimator = parse_estimator(config.estimator, config.seed);
  experiment.g_estimator = experiment.f_estimator;
  experiment.top_k = config.top_k;
  experiment.importance_repeats = config.repeats;
  experiment.classifier.n_trees = config.trees;
  experiment.classifier.tree.max_depth = config.depth;
  experiment.classifier.tree.min_leaf = config.min_leaf;
  experiment.regressor = [&config](const Dataset& d) { return make_model(config, d); };
  if (config.n_explained < 1 || config.n_explained > dataset.n_rows()) {
    throw UsageError("--n-explained must lie in 1.." + std::to_string(dataset.n_rows()));
  }
  const ExperimentReport report = medshap::run_experiment(dataset, experiment);
  return render(config, to_json(report), format_table(report));
}

std::string run_synth(const RunConfig& config) {
  if (config.features < 1) throw UsageError("--features must be >= 1");
  Vector weights;
  if (config.weights.empty()) {
    weights = Vector::LinSpaced(config.features, 1.0, 0.25);
    if (config.features == 1) weights(0) = 1.0;
  } else {
    const auto w = parse_list(config.weights, "--weights");
    if (static_cast<int>(w.size()) != config.features) {
      throw UsageError("--weights: expected " + std::to_string(config.features) + " values");
    }
    weights = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
  }
  if (config.n < 10) throw UsageError("--n must be >= 10");
  if (!(config.censor >= 0.0 && config.censor < 1.0)) throw UsageError("--censor must lie in [0, 1)");
  if (!(config.skew >= 0.0)) throw UsageError("--skew must be >= 0");
  return format_csv(
      synth_survival(config.n, config.features, weights, config.skew, config.censor, config.seed));
}

// ---------------------------------------------------------------------------

namespace {

void add_common(CLI::App* app, RunConfig& c, bool needs_data) {
  auto* data = app->add_option("--data", c.data_path, "CSV dataset (header row; 'time' and 'event' columns are outcomes)");
  if (needs_data) data->required();
  app->add_option("--model", c.model, "builtin:{linear|tree|forest} or external:<command>");
  app->add_option("--seed", c.seed, "Seed for every random stream");
  app->add_option("--output,-o", c.output, "Output file (default: stdout)");
  app->add_option("--format", c.format, "json or table");
  app->add_option("--timeout-ms", c.timeout_ms, "External model request timeout");
  app->add_option("--trees", c.trees, "Trees in builtin forests");
  app->add_option("--depth", c.depth, "Maximum tree depth");
  app->add_option("--min-leaf", c.min_leaf, "Minimum rows per leaf");
}

void add_shapley(CLI::App* app, RunConfig& c) {
  app->add_option("--statistic", c.statistic, "mean, median or q=<value>");
  app->add_option("--sampler", c.sampler, "auto, marginal or conditional");
  app->add_option("--m", c.m, "Reference rows per coalition (0: whole population)");
  app->add_option("--k", c.k, "Neighbours for conditional references (default ceil(sqrt(N)))");
  app->add_option("--estimator", c.estimator, "exact or sampled:<n_permutations>");
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig config;
  CLI::App app{"Shapley explanations with mean, median and quantile summary statistics"};
  app.require_subcommand(1);

  auto* explain = app.add_subcommand("explain", "Attribute one prediction to the features");
  add_common(explain, config, true);
  add_shapley(explain, config);
  explain->add_option("--row", config.row, "Dataset row to explain");
  explain->add_option("--values", config.values, "Comma-separated instance to explain");

  auto* anchor = app.add_subcommand("anchor", "Report the individual attributions are measured against");
  add_common(anchor, config, true);
  anchor->add_option("--statistic", config.statistic, "mean, median or q=<value>");

  auto* importance = app.add_subcommand("importance", "Permutation importance of the model's features");
  add_common(importance, config, true);
  importance->add_option("--repeats", config.repeats, "Shuffles per feature");
  importance->add_option("--top-k", config.top_k, "Keep the k best features and refit");

  auto* experiment = app.add_subcommand("experiment", "Re-labelling comparison of mean- and median-SHAP");
  add_common(experiment, config, true);
  add_shapley(experiment, config);
  experiment->add_option("--n-explained", config.n_explained, "Individuals to explain");
  experiment->add_option("--top-k", config.top_k, "Restrict f to its k most important features");
  experiment->add_option("--repeats", config.repeats, "Shuffles per feature for --top-k");

  auto* synth = app.add_subcommand("synth", "Generate right-skewed synthetic survival data");
  add_common(synth, config, false);
  synth->add_option("--n", config.n, "Rows");
  synth->add_option("--features", config.features, "Feature columns");
  synth->add_option("--weights", config.weights, "Comma-separated effect weights");
  synth->add_option("--skew", config.skew, "Log-scale noise level");
  synth->add_option("--censor", config.censor, "Censoring rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    config.subcommand = app.get_subcommands().front()->get_name();
    std::string text;
    if (config.subcommand == "explain") text = run_explain(config);
    else if (config.subcommand == "anchor") text = run_anchor(config);
    else if (config.subcommand == "importance") text = run_importance(config);
    else if (config.subcommand == "experiment") text = run_experiment(config);
    else text = run_synth(config);

    if (config.output.empty()) {
      out << text;
    } else {
      write_atomic(config.output, text);
    }
    return kSuccess;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const BridgeError& e) {
    err << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const ModelEvaluationError& e) {
    err << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const SingularDesignError& e) {
    err << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const PreconditionError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace medshap::cli
