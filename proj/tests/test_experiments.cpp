#include <doctest.h>

#include "greenlab/experiments.hpp"

using namespace greenlab;
using nlohmann::json;

namespace {

json base(Index cells = 8) {
  return json{{"seed", 5},
              {"grid", {{"n", 3}, {"cells", cells}}},
              {"domain", {{"kind", "box"}}},
              {"coefficients", {{"kind", "smooth"}, {"amplitude", 0.2}}},
              {"solver", {{"tol", 1e-10}}}};
}

RunResult run(const json& doc, const std::string& tag) { return run_experiment(parse_config(doc, tag)); }

}  // namespace

TEST_CASE("solve with zero data reports zero fields") {
  json doc = base();
  doc["rhs"] = {{"kind", "zero"}};
  const RunResult r = run(doc, "solve");
  CHECK(r.exit_code == kExitPass);
  CHECK(r.report.metrics.at("max_abs_velocity") == 0.0);
  CHECK(r.report.metrics.at("max_abs_pressure") == 0.0);
  CHECK(r.report.metrics.at("iterations") == 0.0);
}

TEST_CASE("solve with random data agrees with the dense oracle") {
  const RunResult r = run(base(), "solve");
  CHECK(r.exit_code == kExitPass);
  CHECK(r.report.metrics.at("dense_relative_error") <= 1e-8);
  CHECK(r.report.solve_log.size() == 1);
}

TEST_CASE("runs are deterministic") {
  const RunResult a = run(base(), "solve"), b = run(base(), "solve");
  CHECK(report_json(a.report) == report_json(b.report));
  CHECK(report_csv(a.report) == report_csv(b.report));
  json other = base();
  other["seed"] = 6;
  CHECK(run(other, "solve").report.config_hash != a.report.config_hash);
}

TEST_CASE("solver failure maps to exit code 3") {
  json doc = base();
  doc["solver"] = {{"tol", 1e-12}, {"max_iter", 2}, {"restart", 2}};
  const RunResult r = run(doc, "solve");
  CHECK(r.exit_code == kExitSolver);
  CHECK_FALSE(r.message.empty());
}

TEST_CASE("bad experiment parameters map to exit code 2") {
  json doc = base();
  doc["rhs"] = {{"kind", "sawtooth"}};
  CHECK(run(doc, "solve").exit_code == kExitConfig);
}

TEST_CASE("vmo modulus is monotone") {
  json doc = base();
  doc["sweep"] = {{"rho", {0.25, 0.375, 0.5}}};
  const RunResult r = run(doc, "vmo-modulus");
  CHECK(r.exit_code == kExitPass);
  CHECK(r.report.table.rows.size() == 3);
}

TEST_CASE("symmetry experiment on a small grid") {
  json doc = base();
  doc["sweep"] = {{"configurations", 4}, {"epsilon_h", {1.0}}};
  const RunResult r = run(doc, "symmetry");
  CHECK(r.exit_code == kExitPass);
  CHECK(r.report.metrics.at("max_defect") <= 1e-6);
  CHECK(r.report.table.rows.size() == 4);
}

TEST_CASE("infsup and bogovskii sweeps") {
  json doc = base();
  doc["sweep"] = {{"resolutions", {6, 8}}};
  const RunResult i = run(doc, "infsup");
  CHECK(i.exit_code == kExitPass);
  CHECK(i.report.metrics.at("beta_n8") > 0.0);
  const RunResult b = run(doc, "bogovskii");
  CHECK(b.exit_code == kExitPass);
  CHECK(b.report.metrics.at("divergence_residual_n8") <= 1e-8);
}

TEST_CASE("admissible balls avoid the pole and stay inside") {
  MaskSpec spec;
  spec.kind = MaskKind::half_space_graph;
  spec.offset = 0.2;
  const auto m = build_domain(build_grid(3, 16, 1.0), spec);
  const Point pole{0.5, 0.5, 0.5};
  const auto balls = admissible_balls({&m}, pole, 0.15, 0.1, 10, 3);
  CHECK(balls.size() == 10);
  for (const auto& b : balls) {
    CHECK(distance(b.center, pole) >= 0.25);
    CHECK(b.center[0] - 0.15 >= 0.2);
  }
  CHECK_THROWS(admissible_balls({&m}, pole, 0.6, 0.1, 1, 3));
  CHECK(nearest_cell(m.grid(), Point{0.99, 0.0, 0.5}) == m.grid().cell_index({15, 0, 8}));
}
