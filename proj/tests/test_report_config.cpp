#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "greenlab/config.hpp"
#include "greenlab/error.hpp"
#include "greenlab/report.hpp"

using namespace greenlab;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("greenlab_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

EstimateReport sample_report() {
  EstimateReport r;
  r.name = "bogovskii";
  r.config_hash = config_hash(json{{"grid", {{"cells", 8}}}}, 3);
  r.seed = 3;
  r.metrics = {{"norm_ratio_n8", 0.25}, {"norm_ratio_n16", 0.2500001}};
  r.sweep_axis = std::make_pair(std::string("cells"), std::vector<double>{8, 16, 32});
  r.table.columns = {"cells", "norm_ratio"};
  r.table.rows = {{8, 0.25}, {16, 0.2500001}, {32, 1.0 / 3.0}};
  r.wall_time = 1.5;
  return r;
}

const char* kToml = R"(
seed = 4
[grid]
n = 3
cells = 8
[domain]
kind = "box"
[coefficients]
kind = "smooth"
amplitude = 0.2
[solver]
tol = 1e-9
max_iter = 500
)";

}  // namespace

TEST_CASE("config hash is deterministic and sensitive") {
  const json a{{"grid", {{"cells", 8}}}};
  CHECK(config_hash(a, 1) == config_hash(a, 1));
  CHECK(config_hash(a, 1).size() == 16);
  CHECK(config_hash(a, 1) != config_hash(a, 2));
  CHECK(config_hash(a, 1) != config_hash(json{{"grid", {{"cells", 16}}}}, 1));
}

TEST_CASE("reports are byte-identical across reruns") {
  const auto dir = scratch("report_det");
  const EstimateReport r = sample_report();
  const ReportPaths a = emit_report(r, dir);
  const std::string j1 = slurp(a.json), c1 = slurp(a.csv);
  EstimateReport later = r;
  later.wall_time = 99.0;
  const ReportPaths b = emit_report(later, dir);
  CHECK(slurp(b.json) == j1);
  CHECK(slurp(b.csv) == c1);
  CHECK(slurp(b.timing) != "");
  const json j = json::parse(j1);
  CHECK(j.at("config_hash") == r.config_hash);
  CHECK(j.at("seed") == 3);
  CHECK(j.at("version").get<std::string>().rfind("v0.1.0", 0) == 0);
  CHECK(j.at("wall_clock") == a.timing.filename().string());
}

TEST_CASE("csv row count equals the sweep length") {
  const auto dir = scratch("report_csv");
  const EstimateReport r = sample_report();
  const ReportPaths p = emit_report(r, dir);
  std::ifstream in(p.csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "cells,norm_ratio");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == r.sweep_axis->second.size());
}

TEST_CASE("empty report is valid JSON with an empty metric map") {
  const auto dir = scratch("report_empty");
  EstimateReport r;
  r.name = "solve";
  r.config_hash = "0000000000000000";
  const ReportPaths p = emit_report(r, dir);
  const json j = json::parse(slurp(p.json));
  CHECK(j.at("metrics").is_object());
  CHECK(j.at("metrics").empty());
}

TEST_CASE("non-finite metrics and ragged tables are rejected") {
  EstimateReport r = sample_report();
  r.metrics["bad"] = std::nan("");
  CHECK_THROWS_AS(emit_report(r, scratch("report_bad")), ValidationError);
  EstimateReport s = sample_report();
  s.table.rows.push_back({1.0});
  CHECK_THROWS_AS(emit_report(s, scratch("report_bad2")), ValidationError);
}

TEST_CASE("unwritable output directory surfaces the path") {
  const auto blocker = scratch("report_blocker");
  std::ofstream(blocker) << "x";
  try {
    emit_report(sample_report(), blocker / "sub");
    FAIL("expected an IO error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("report_blocker") != std::string::npos);
  }
}

TEST_CASE("TOML and JSON configs parse to the same values") {
  const json doc = parse_toml(kToml);
  const ExperimentConfig a = parse_config(doc, "solve");
  const ExperimentConfig b = parse_config(json::parse(doc.dump()), "solve");
  CHECK(a.seed == 4);
  CHECK(a.grid.cells == 8);
  CHECK(a.coefficients.kind == CoefficientKind::smooth);
  CHECK(a.coefficients.amplitude == 0.2);
  CHECK(a.solver.tol == 1e-9);
  CHECK(a.solver.max_iter == 500);
  CHECK(b.document == a.document);
  const ExperimentConfig c = parse_config(doc, "solve", 99, std::filesystem::path("elsewhere"));
  CHECK(c.seed == 99);
  CHECK(c.output_dir == "elsewhere");
}

TEST_CASE("missing block is named in the error") {
  json doc = parse_toml(kToml);
  doc.erase("coefficients");
  try {
    parse_config(doc, "solve");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("[coefficients]") != std::string::npos);
  }
}

TEST_CASE("every violated field is listed") {
  json doc = parse_toml(kToml);
  doc["grid"]["cells"] = 2;
  doc["solver"]["tol"] = 1.0;
  doc["coefficients"]["kind"] = "marble";
  try {
    parse_config(doc, "lq-sweep");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("grid.cells") != std::string::npos);
    CHECK(msg.find("solver.tol") != std::string::npos);
    CHECK(msg.find("coefficients.kind") != std::string::npos);
    CHECK(msg.find("[sweep]") != std::string::npos);
  }
}

TEST_CASE("experiment tags and required blocks") {
  CHECK(experiment_tags().size() == 12);
  CHECK_THROWS_AS(parse_config(parse_toml(kToml), "plot"), ConfigError);
  const auto infsup = required_blocks("infsup");
  CHECK(std::find(infsup.begin(), infsup.end(), "coefficients") == infsup.end());
  CHECK_THROWS_AS(parse_toml("[grid\nn = 3"), ConfigError);
  json doc = parse_toml(kToml);
  doc["experiment"] = "infsup";
  CHECK_THROWS_AS(parse_config(doc, "solve"), ConfigError);
}
