#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "greenlab/coefficients.hpp"
#include "greenlab/grid.hpp"
#include "greenlab/solver.hpp"

namespace greenlab {

/// The twelve experiment tags accepted by the runner.
const std::vector<std::string>& experiment_tags();

struct GridConfig {
  int n = 3;
  Index cells = 16;
  double extent = 1.0;
};

/// Parsed and validated experiment configuration. `document` is the input as
/// read (TOML converted to JSON) and feeds the config hash.
struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "greenlab-out";
  GridConfig grid;
  MaskSpec domain;
  CoefficientSpec coefficients;
  SolveOptions solver;
  nlohmann::json rhs = nlohmann::json::object();
  nlohmann::json green = nlohmann::json::object();
  nlohmann::json sweep = nlohmann::json::object();
  nlohmann::json document = nlohmann::json::object();
};

/// Reads a .toml or .json file into a JSON document. Throws ConfigError.
nlohmann::json load_config_document(const std::filesystem::path& path);
nlohmann::json parse_toml(const std::string& text);

/// Blocks that must be present for an experiment, e.g. {"grid", "domain"}.
std::vector<std::string> required_blocks(const std::string& experiment);

/// Validates the document for `experiment` (overriding any "experiment" key
/// only when it agrees). Every problem is collected; a ConfigError lists them all.
ExperimentConfig parse_config(const nlohmann::json& document, const std::string& experiment,
                              std::optional<std::uint64_t> seed_override = std::nullopt,
                              std::optional<std::filesystem::path> output_override = std::nullopt);

}  // namespace greenlab
