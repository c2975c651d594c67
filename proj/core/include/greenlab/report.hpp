#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace greenlab {

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

/// Named metrics of one experiment run. Everything except `wall_time` and
/// `solve_log` is deterministic for a fixed configuration and seed.
struct EstimateReport {
  std::string name;
  std::map<std::string, double> metrics;
  std::optional<std::pair<std::string, std::vector<double>>> sweep_axis;
  ReportTable table;
  std::string config_hash;
  std::vector<std::string> provenance;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;
  std::vector<std::string> failures;  // violated invariants
  nlohmann::json details = nlohmann::json::object();

  double wall_time = 0.0;
  std::vector<std::string> solve_log;  // SolveStats JSON lines
};

struct ReportPaths {
  std::filesystem::path json;
  std::filesystem::path csv;
  std::filesystem::path timing;
  std::filesystem::path solves;
};

/// "v<major>.<minor>.<patch>[-g<commit>]" fixed at build time.
std::string version_string();

/// FNV-1a 64 of the canonical JSON dump of {config, seed}, as 16 hex digits.
std::string config_hash(const nlohmann::json& config, std::uint64_t seed);

nlohmann::json report_json(const EstimateReport& report);
std::string report_csv(const EstimateReport& report);

/// Writes {name}_{hash}.json and .csv (byte-stable), plus {name}_{hash}.timing.json
/// (wall clock) and {name}_{hash}.solves.jsonl (solver statistics).
/// Throws ValidationError for non-finite metrics and IoError on write failures.
ReportPaths emit_report(const EstimateReport& report, const std::filesystem::path& dir);

}  // namespace greenlab
