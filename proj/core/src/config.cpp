#include "greenlab/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "greenlab/error.hpp"

namespace greenlab {

const std::vector<std::string>& experiment_tags() {
  static const std::vector<std::string> tags{"solve",         "green-decay", "symmetry",    "representation",
                                             "caccioppoli",   "reverse-holder", "bogovskii", "infsup",
                                             "vmo-modulus",   "a1-probe",    "a2-probe",    "lq-sweep"};
  return tags;
}

namespace {

nlohmann::json to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(to_json(v));
    return j;
  }
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  if (const auto* v = node.as_string()) return v->get();
  throw ConfigError("unsupported TOML value (dates and times are not accepted)");
}

class Reader {
 public:
  Reader(const nlohmann::json& doc, std::vector<std::string>& errors) : doc_(doc), errors_(errors) {}

  const nlohmann::json* block(const std::string& name) const {
    auto it = doc_.find(name);
    if (it == doc_.end()) return nullptr;
    if (!it->is_object()) {
      errors_.push_back("[" + name + "] must be a table");
      return nullptr;
    }
    return &*it;
  }

  double number(const nlohmann::json* b, const std::string& block, const std::string& key, double fallback) const {
    if (b == nullptr || !b->contains(key)) return fallback;
    const auto& v = b->at(key);
    if (!v.is_number()) {
      errors_.push_back(block + "." + key + " must be a number");
      return fallback;
    }
    return v.get<double>();
  }

  std::int64_t integer(const nlohmann::json* b, const std::string& block, const std::string& key,
                       std::int64_t fallback) const {
    if (b == nullptr || !b->contains(key)) return fallback;
    const auto& v = b->at(key);
    if (!v.is_number_integer()) {
      errors_.push_back(block + "." + key + " must be an integer");
      return fallback;
    }
    return v.get<std::int64_t>();
  }

  std::string text(const nlohmann::json* b, const std::string& block, const std::string& key,
                   const std::string& fallback) const {
    if (b == nullptr || !b->contains(key)) return fallback;
    const auto& v = b->at(key);
    if (!v.is_string()) {
      errors_.push_back(block + "." + key + " must be a string");
      return fallback;
    }
    return v.get<std::string>();
  }

  void fail(const std::string& msg) const { errors_.push_back(msg); }

 private:
  const nlohmann::json& doc_;
  std::vector<std::string>& errors_;
};

}  // namespace

nlohmann::json parse_toml(const std::string& text) {
  try {
    const toml::table table = toml::parse(text);
    return to_json(table);
  } catch (const toml::parse_error& err) {
    std::ostringstream os;
    os << "TOML parse error: " << err.description() << " at line " << err.source().begin.line;
    throw ConfigError(os.str());
  }
}

nlohmann::json load_config_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (path.extension() == ".json") {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& err) {
      throw ConfigError(std::string("JSON parse error: ") + err.what());
    }
  }
  return parse_toml(text);
}

std::vector<std::string> required_blocks(const std::string& experiment) {
  if (experiment == "solve" || experiment == "green-decay") return {"grid", "domain", "coefficients", "solver"};
  if (experiment == "bogovskii") return {"grid", "domain", "solver", "sweep"};
  if (experiment == "infsup") return {"grid", "domain", "sweep"};
  if (experiment == "vmo-modulus") return {"grid", "domain", "coefficients", "sweep"};
  return {"grid", "domain", "coefficients", "solver", "sweep"};
}

ExperimentConfig parse_config(const nlohmann::json& document, const std::string& experiment,
                              std::optional<std::uint64_t> seed_override,
                              std::optional<std::filesystem::path> output_override) {
  std::vector<std::string> errors;
  if (!document.is_object()) throw ConfigError("config document must be a table");
  const auto& tags = experiment_tags();
  if (std::find(tags.begin(), tags.end(), experiment) == tags.end()) {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.document = document;
  Reader r(document, errors);

  if (document.contains("experiment")) {
    const auto& e = document.at("experiment");
    if (!e.is_string() || e.get<std::string>() != experiment) {
      r.fail("config names experiment " + e.dump() + " but '" + experiment + "' was requested");
    }
  }
  if (document.contains("seed")) {
    if (!document.at("seed").is_number_unsigned() && !(document.at("seed").is_number_integer() && document.at("seed").get<std::int64_t>() >= 0)) {
      r.fail("seed must be a non-negative integer");
    } else {
      cfg.seed = document.at("seed").get<std::uint64_t>();
    }
  }
  if (seed_override) cfg.seed = *seed_override;
  if (document.contains("output")) {
    if (document.at("output").is_string()) {
      cfg.output_dir = document.at("output").get<std::string>();
    } else {
      r.fail("output must be a string");
    }
  }
  if (output_override) cfg.output_dir = *output_override;

  for (const auto& name : required_blocks(experiment)) {
    if (!document.contains(name)) r.fail("missing [" + name + "] block required by experiment '" + experiment + "'");
  }

  if (const auto* g = r.block("grid")) {
    cfg.grid.n = static_cast<int>(r.integer(g, "grid", "n", 3));
    cfg.grid.cells = r.integer(g, "grid", "cells", 16);
    cfg.grid.extent = r.number(g, "grid", "extent", 1.0);
    if (cfg.grid.n != 2 && cfg.grid.n != 3) r.fail("grid.n must be 2 or 3");
    if (cfg.grid.cells < 4) r.fail("grid.cells must be at least 4");
    if (!(cfg.grid.extent > 0.0)) r.fail("grid.extent must be positive");
  }

  if (const auto* d = r.block("domain")) {
    try {
      cfg.domain.kind = mask_kind_from_string(r.text(d, "domain", "kind", "box"));
    } catch (const Error& err) {
      r.fail(std::string("domain.kind: ") + err.what());
    }
    cfg.domain.offset = r.number(d, "domain", "offset", 0.0);
    cfg.domain.lipschitz = r.number(d, "domain", "lipschitz", 0.0);
    cfg.domain.amplitude = r.number(d, "domain", "amplitude", 0.0);
    cfg.domain.wavelength = r.number(d, "domain", "wavelength", 1.0);
    if (!(cfg.domain.wavelength > 0.0)) r.fail("domain.wavelength must be positive");
    if (cfg.domain.lipschitz < 0.0) r.fail("domain.lipschitz must be non-negative");
  }

  if (const auto* c = r.block("coefficients")) {
    try {
      cfg.coefficients.kind = coefficient_kind_from_string(r.text(c, "coefficients", "kind", "identity"));
    } catch (const Error& err) {
      r.fail(std::string("coefficients.kind: ") + err.what());
    }
    cfg.coefficients.amplitude = r.number(c, "coefficients", "amplitude", 0.0);
    cfg.coefficients.wavelength = r.number(c, "coefficients", "wavelength", 1.0);
    cfg.coefficients.block_cells = r.integer(c, "coefficients", "block_cells", 4);
    cfg.coefficients.contrast = r.number(c, "coefficients", "contrast", 1.0);
    cfg.coefficients.anisotropy = r.number(c, "coefficients", "anisotropy", 0.25);
    cfg.coefficients.lambda_nominal = r.number(c, "coefficients", "lambda", 0.25);
    cfg.coefficients.seed = static_cast<std::uint64_t>(r.integer(c, "coefficients", "seed", static_cast<std::int64_t>(cfg.seed)));
    if (!(cfg.coefficients.lambda_nominal > 0.0 && cfg.coefficients.lambda_nominal <= 1.0)) {
      r.fail("coefficients.lambda must lie in (0, 1]");
    }
    if (cfg.coefficients.block_cells < 1) r.fail("coefficients.block_cells must be positive");
    if (!(cfg.coefficients.wavelength > 0.0)) r.fail("coefficients.wavelength must be positive");
  }

  if (const auto* s = r.block("solver")) {
    cfg.solver.tol = r.number(s, "solver", "tol", 1e-10);
    cfg.solver.max_iter = static_cast<int>(r.integer(s, "solver", "max_iter", 3000));
    cfg.solver.restart = static_cast<int>(r.integer(s, "solver", "restart", 120));
    if (!(cfg.solver.tol >= 1e-14 && cfg.solver.tol <= 1e-4)) r.fail("solver.tol must lie in [1e-14, 1e-4]");
    if (cfg.solver.max_iter < 1) r.fail("solver.max_iter must be positive");
    if (cfg.solver.restart < 2) r.fail("solver.restart must be at least 2");
  }

  if (const auto* b = r.block("rhs")) cfg.rhs = *b;
  if (const auto* b = r.block("green")) cfg.green = *b;
  if (const auto* b = r.block("sweep")) cfg.sweep = *b;

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace greenlab
