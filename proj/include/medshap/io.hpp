#pragma once

// File formats: CSV datasets, JSON reports and plain-text tables.

#include "medshap/core.hpp"
#include "medshap/harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace medshap {

/// Malformed input data. Carries the file and 1-based line when known.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " +
                           what) {}
};

/// Header row required. Columns named "time" and "event" are outcomes, all
/// others are features. Empty cells and non-numeric values are rejected.
Dataset read_csv(const std::filesystem::path& path);
Dataset parse_csv(const std::string& text, const std::string& source = "<csv>");

std::string format_csv(const Dataset& dataset);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

nlohmann::json to_json(const AnchorPoint& anchor, const std::vector<std::string>& feature_names);
nlohmann::json to_json(const AttributionReport& report,
                       const std::vector<std::string>& feature_names);
nlohmann::json to_json(const ImportanceScores& scores,
                       const std::vector<std::string>& feature_names);
nlohmann::json to_json(const ExperimentReport& report);

/// Checks a parsed attribution report against the report schema: required
/// fields with the right types, matching array lengths, and a residual
/// consistent with phi0, phi and prediction. Returns the problems found.
std::vector<std::string> validate_report(const nlohmann::json& report);

std::string format_table(const AttributionReport& report,
                         const std::vector<std::string>& feature_names);

/// Method x feature grid of mean scaled-attribution differences.
std::string format_table(const ExperimentReport& report);

}  // namespace medshap
