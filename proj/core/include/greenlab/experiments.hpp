#pragma once

#include <optional>
#include <string>
#include <vector>

#include "greenlab/config.hpp"
#include "greenlab/report.hpp"

namespace greenlab {

inline constexpr int kExitPass = 0;
inline constexpr int kExitInvariant = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;

struct RunResult {
  EstimateReport report;
  int exit_code = kExitPass;
  std::string message;  // error text for exit codes 2 and 3
};

/// Runs one experiment. Asserted invariants that fail are listed in
/// report.failures with exit code 1; trend-only observations go to report.notes.
RunResult run_experiment(const ExperimentConfig& config);

/// Cell whose centre is closest to `p` (clamped to the grid).
Index nearest_cell(const StaggeredGrid& grid, const Point& p);

struct Ball {
  Point center{};
  double radius = 0.0;
};

/// Seeded balls of a fixed radius that lie inside every mask in `masks` and keep
/// a distance of at least radius + clearance from `avoid`.
std::vector<Ball> admissible_balls(const std::vector<const DomainMask*>& masks, const Point& avoid, double radius,
                                   double clearance, std::size_t count, std::uint64_t seed);

}  // namespace greenlab
