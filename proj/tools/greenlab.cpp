#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "greenlab/config.hpp"
#include "greenlab/error.hpp"
#include "greenlab/experiments.hpp"
#include "greenlab/report.hpp"

namespace gl = greenlab;

int main(int argc, char** argv) {
  CLI::App app{"greenlab: Stokes Green function experiments"};
  app.set_version_flag("--version", gl::version_string());

  std::string experiment;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<int> restart;

  std::string tags;
  for (const auto& t : gl::experiment_tags()) tags += (tags.empty() ? "" : ", ") + t;
  app.add_option("experiment", experiment, "one of: " + tags)->required();
  app.add_option("--config", config_path, "TOML or JSON config file")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out, "output directory");
  app.add_option("--tol", tol, "override solver.tol");
  app.add_option("--max-iter", max_iter, "override solver.max_iter");
  app.add_option("--restart", restart, "override solver.restart (GMRES cycle length)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : gl::kExitConfig;
  }

  gl::ExperimentConfig cfg;
  try {
    nlohmann::json doc = gl::load_config_document(config_path);
    if (doc.is_object() && (tol || max_iter || restart)) {
      auto& s = doc["solver"];
      if (!s.is_object()) s = nlohmann::json::object();
      if (tol) s["tol"] = *tol;
      if (max_iter) s["max_iter"] = *max_iter;
      if (restart) s["restart"] = *restart;
    }
    std::optional<std::filesystem::path> out_dir;
    if (out) out_dir = *out;
    cfg = gl::parse_config(doc, experiment, seed, out_dir);
  } catch (const gl::Error& e) {
    std::cerr << "greenlab: " << e.what() << "\n";
    return gl::kExitConfig;
  }

  gl::RunResult result = gl::run_experiment(cfg);
  result.report.provenance.push_back(config_path);
  if (result.exit_code == gl::kExitConfig || result.exit_code == gl::kExitSolver) {
    std::cerr << "greenlab: " << experiment << ": " << result.message << "\n";
    return result.exit_code;
  }

  gl::ReportPaths paths;
  try {
    paths = gl::emit_report(result.report, cfg.output_dir);
  } catch (const gl::Error& e) {
    std::cerr << "greenlab: " << e.what() << "\n";
    return gl::kExitInvariant;
  }
  for (const auto& n : result.report.notes) std::cerr << "warning: " << n << "\n";
  for (const auto& f : result.report.failures) std::cerr << "FAILED: " << f << "\n";
  std::cout << paths.json.string() << "\n" << paths.csv.string() << "\n";
  return result.exit_code;
}
