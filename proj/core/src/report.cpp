#include "greenlab/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "greenlab/error.hpp"

#ifndef GREENLAB_VERSION
#define GREENLAB_VERSION "0.0.0"
#endif
#ifndef GREENLAB_GIT_DESCRIBE
#define GREENLAB_GIT_DESCRIBE ""
#endif

namespace greenlab {

std::string version_string() {
  const std::string describe = GREENLAB_GIT_DESCRIBE;
  if (!describe.empty()) return "v" GREENLAB_VERSION "-g" + describe;
  return "v" GREENLAB_VERSION;
}

std::string config_hash(const nlohmann::json& config, std::uint64_t seed) {
  const nlohmann::json doc = {{"config", config}, {"seed", seed}};
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

nlohmann::json report_json(const EstimateReport& report) {
  nlohmann::json j;
  j["name"] = report.name;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["version"] = version_string();
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : report.metrics) j["metrics"][k] = v;
  if (report.sweep_axis) {
    j["sweep_axis"] = {{"name", report.sweep_axis->first}, {"values", report.sweep_axis->second}};
  }
  j["provenance"] = report.provenance;
  j["notes"] = report.notes;
  j["failures"] = report.failures;
  j["details"] = report.details;
  const std::string stem = report.name + "_" + report.config_hash;
  j["wall_clock"] = stem + ".timing.json";
  j["table_rows"] = report.table.rows.size();
  return j;
}

std::string report_csv(const EstimateReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < report.table.columns.size(); ++i) os << (i ? "," : "") << report.table.columns[i];
  os << "\n";
  for (const auto& row : report.table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

ReportPaths emit_report(const EstimateReport& report, const std::filesystem::path& dir) {
  for (const auto& [k, v] : report.metrics) {
    if (!std::isfinite(v)) throw ValidationError("metric '" + k + "' is not finite");
  }
  for (const auto& row : report.table.rows) {
    if (row.size() != report.table.columns.size()) throw ValidationError("report table row has the wrong width");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const std::string stem = report.name + "_" + report.config_hash;
  ReportPaths paths{dir / (stem + ".json"), dir / (stem + ".csv"), dir / (stem + ".timing.json"),
                    dir / (stem + ".solves.jsonl")};
  write_text(paths.json, report_json(report).dump(2) + "\n");
  write_text(paths.csv, report_csv(report));
  const nlohmann::json timing = {{"wall_time_seconds", report.wall_time}, {"version", version_string()}};
  write_text(paths.timing, timing.dump(2) + "\n");
  std::string log;
  for (const auto& line : report.solve_log) log += line + "\n";
  write_text(paths.solves, log);
  return paths;
}

}  // namespace greenlab
