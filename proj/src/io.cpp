#include "medshap/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unistd.h>

namespace medshap {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& field, double& value) {
  if (field.empty()) return false;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw DataError(source, 0, "missing header row");

  int time_col = -1, event_col = -1;
  std::vector<int> feature_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name.empty()) throw DataError(source, line_no, "empty column name in header");
    if (name == "time") {
      time_col = static_cast<int>(c);
    } else if (name == "event") {
      event_col = static_cast<int>(c);
    } else {
      feature_cols.push_back(static_cast<int>(c));
      names.push_back(name);
    }
  }
  if (feature_cols.empty()) throw DataError(source, line_no, "no feature columns");
  if (time_col < 0) throw DataError(source, line_no, "no 'time' column");

  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  std::vector<bool> events;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(source, line_no,
                      "expected " + std::to_string(header.size()) + " fields, found " +
                          std::to_string(fields.size()));
    }
    std::vector<double> values(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        throw DataError(source, line_no, "missing value in column '" + header[c] + "'");
      }
      if (!parse_double(fields[c], values[c]) || !std::isfinite(values[c])) {
        throw DataError(source, line_no,
                        "column '" + header[c] + "': not a finite number: '" + fields[c] + "'");
      }
    }
    std::vector<double> row;
    for (int c : feature_cols) row.push_back(values[static_cast<std::size_t>(c)]);
    rows.push_back(std::move(row));
    const double t = values[static_cast<std::size_t>(time_col)];
    if (!(t > 0.0)) throw DataError(source, line_no, "time must be positive");
    times.push_back(t);
    if (event_col >= 0) {
      const double e = values[static_cast<std::size_t>(event_col)];
      if (e != 0.0 && e != 1.0) throw DataError(source, line_no, "event must be 0 or 1");
      events.push_back(e == 1.0);
    }
  }
  if (rows.empty()) throw DataError(source, line_no, "no data rows");

  Matrix X(static_cast<Index>(rows.size()), static_cast<Index>(feature_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  Vector time = Eigen::Map<const Vector>(times.data(), static_cast<Index>(times.size()));
  return Dataset(std::move(names), std::move(X), std::move(time), std::move(events));
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string(), 0, "cannot open file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path.string());
}

std::string format_csv(const Dataset& dataset) {
  std::ostringstream os;
  for (const auto& name : dataset.feature_names()) os << name << ',';
  os << "time,event\n";
  for (Index i = 0; i < dataset.n_rows(); ++i) {
    for (Index j = 0; j < dataset.n_features(); ++j) os << format_double(dataset.features()(i, j)) << ',';
    os << format_double(dataset.time()(i)) << ',' << (dataset.event()[static_cast<std::size_t>(i)] ? 1 : 0)
       << '\n';
  }
  return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp =
      path.string() + ".tmp." + std::to_string(static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot move output into place at " + path.string() + ": " +
                             ec.message());
  }
}

// ---------------------------------------------------------------------------

namespace {

json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

json to_json(const AnchorPoint& anchor, const std::vector<std::string>& feature_names) {
  json out;
  out["synthetic"] = anchor.synthetic();
  out["prediction"] = anchor.prediction;
  out["index"] = anchor.index ? json(*anchor.index) : json(nullptr);
  if (anchor.values) {
    json values = json::object();
    for (Index j = 0; j < anchor.values->size(); ++j) {
      values[feature_names.at(static_cast<std::size_t>(j))] = (*anchor.values)(j);
    }
    out["values"] = values;
  } else {
    out["values"] = "synthetic";
  }
  return out;
}

json to_json(const AttributionReport& report, const std::vector<std::string>& feature_names) {
  json out;
  out["statistic"] = report.statistic.to_string();
  out["quantile"] = report.statistic.is_mean() ? json(nullptr) : json(report.statistic.q());
  out["method"] = report.method.to_string();
  out["provenance"] = to_string(report.provenance);
  out["n_references"] = report.n_references;
  out["n_coalitions"] = report.n_coalitions;
  out["prediction"] = report.prediction;
  out["phi0"] = report.phi0;
  out["feature_names"] = feature_names;
  out["phi"] = vector_json(report.phi);
  out["phi_sum"] = report.phi.sum();
  out["efficiency_residual"] = report.efficiency_residual();
  out["anchor"] = report.anchor ? to_json(*report.anchor, feature_names) : json(nullptr);
  return out;
}

json to_json(const ImportanceScores& scores, const std::vector<std::string>& feature_names) {
  json out;
  out["baseline"] = scores.baseline;
  out["feature_names"] = feature_names;
  out["scores"] = vector_json(scores.scores);
  out["standard_errors"] = vector_json(scores.standard_errors);
  return out;
}

json to_json(const ExperimentReport& report) {
  json out;
  out["feature_names"] = report.feature_names;
  out["selected_features"] = report.selected_features;
  out["explained_rows"] = report.explained_rows;
  out["median_prediction"] = report.median_prediction;
  out["n_positive_labels"] = report.n_positive_labels;
  out["n_degenerate"] = report.n_degenerate;
  out["anchor"] = to_json(report.anchor, report.feature_names);
  out["rows"] = json::array({
      json{{"method", "mean-SHAP(f) vs SHAP(g)"},
           {"mean_difference", vector_json(report.mean_shap_vs_g)},
           {"mean_abs_difference", report.mean_shap_abs}},
      json{{"method", "median-SHAP(f) vs SHAP(g)"},
           {"mean_difference", vector_json(report.median_shap_vs_g)},
           {"mean_abs_difference", report.median_shap_abs}},
  });
  if (report.importance) out["importance"] = to_json(*report.importance, {});
  return out;
}

std::vector<std::string> validate_report(const json& report) {
  std::vector<std::string> problems;
  if (!report.is_object()) return {"report is not a JSON object"};
  auto need = [&](const char* key, auto predicate, const char* type) {
    if (!report.contains(key)) {
      problems.push_back(std::string("missing field '") + key + "'");
      return false;
    }
    if (!predicate(report[key])) {
      problems.push_back(std::string("field '") + key + "' is not " + type);
      return false;
    }
    return true;
  };
  const auto is_number = [](const json& j) { return j.is_number(); };
  const auto is_string = [](const json& j) { return j.is_string(); };
  const auto is_number_array = [](const json& j) {
    if (!j.is_array()) return false;
    for (const auto& v : j)
      if (!v.is_number()) return false;
    return true;
  };
  const auto is_string_array = [](const json& j) {
    if (!j.is_array()) return false;
    for (const auto& v : j)
      if (!v.is_string()) return false;
    return true;
  };

  need("statistic", is_string, "a string");
  need("method", is_string, "a string");
  need("provenance", is_string, "a string");
  need("n_references", [](const json& j) { return j.is_number_integer(); }, "an integer");
  const bool have_prediction = need("prediction", is_number, "a number");
  const bool have_phi0 = need("phi0", is_number, "a number");
  const bool have_phi = need("phi", is_number_array, "an array of numbers");
  const bool have_names = need("feature_names", is_string_array, "an array of strings");
  const bool have_residual = need("efficiency_residual", is_number, "a number");
  need("anchor", [](const json& j) { return j.is_null() || j.is_object(); }, "an object or null");

  if (have_phi && have_names && report["phi"].size() != report["feature_names"].size()) {
    problems.push_back("phi and feature_names differ in length");
  }
  if (have_prediction && have_phi0 && have_phi && have_residual) {
    double sum = 0.0;
    for (const auto& v : report["phi"]) sum += v.get<double>();
    const double residual =
        report["prediction"].get<double>() - report["phi0"].get<double>() - sum;
    const double scale = 1.0 + std::abs(report["prediction"].get<double>()) +
                         std::abs(report["phi0"].get<double>());
    if (std::abs(residual - report["efficiency_residual"].get<double>()) > 1e-9 * scale) {
      problems.push_back("efficiency_residual is inconsistent with prediction, phi0 and phi");
    }
  }
  if (report.contains("anchor") && report["anchor"].is_object()) {
    const json& anchor = report["anchor"];
    if (!anchor.contains("synthetic") || !anchor["synthetic"].is_boolean()) {
      problems.push_back("anchor.synthetic must be a boolean");
    } else if (!anchor["synthetic"].get<bool>() &&
               (!anchor.contains("index") || !anchor["index"].is_number_integer())) {
      problems.push_back("observed anchor lacks a row index");
    }
  }
  return problems;
}

std::string format_table(const AttributionReport& report,
                         const std::vector<std::string>& feature_names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << "statistic   " << report.statistic.to_string() << '\n';
  os << "method      " << report.method.to_string() << '\n';
  os << "references  " << report.n_references << " (" << to_string(report.provenance) << ")\n";
  os << "f(x)        " << report.prediction << '\n';
  os << "phi0        " << report.phi0 << '\n';
  std::size_t width = 7;
  for (const auto& n : feature_names) width = std::max(width, n.size());
  os << '\n' << std::left << std::setw(static_cast<int>(width)) << "feature" << "  phi\n";
  for (Index j = 0; j < report.phi.size(); ++j) {
    os << std::left << std::setw(static_cast<int>(width)) << feature_names.at(static_cast<std::size_t>(j))
       << "  " << std::right << std::setw(14) << report.phi(j) << '\n';
  }
  os << std::scientific << std::setprecision(3);
  os << "\nefficiency residual  " << report.efficiency_residual() << '\n';
  if (report.anchor) {
    os << std::fixed << std::setprecision(6);
    if (report.anchor->synthetic()) {
      os << "anchor      synthetic, prediction " << report.anchor->prediction << '\n';
    } else {
      os << "anchor      row " << *report.anchor->index << ", prediction "
         << report.anchor->prediction << '\n';
    }
  }
  return os.str();
}

std::string format_table(const ExperimentReport& report) {
  std::ostringstream os;
  const std::string method_header = "Shapley type";
  const std::string rows[2] = {"mean-SHAP(f) vs SHAP(g)", "median-SHAP(f) vs SHAP(g)"};
  const Vector* values[2] = {&report.mean_shap_vs_g, &report.median_shap_vs_g};
  const double aggregate[2] = {report.mean_shap_abs, report.median_shap_abs};
  const int first = static_cast<int>(rows[1].size());

  os << '|' << std::left << std::setw(first) << method_header;
  for (const auto& name : report.feature_names) {
    os << " | " << std::setw(std::max<int>(10, static_cast<int>(name.size()))) << name;
  }
  os << " | " << std::setw(10) << "mean |d|" << " |\n";
  os << std::fixed << std::setprecision(4);
  for (int r = 0; r < 2; ++r) {
    os << '|' << std::left << std::setw(first) << rows[r];
    for (std::size_t j = 0; j < report.feature_names.size(); ++j) {
      os << " | " << std::right
         << std::setw(std::max<int>(10, static_cast<int>(report.feature_names[j].size())))
         << (*values[r])(static_cast<Index>(j));
    }
    os << " | " << std::setw(10) << aggregate[r] << " |\n";
  }
  return os.str();
}

}  // namespace medshap
