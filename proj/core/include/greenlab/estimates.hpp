#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "greenlab/solver.hpp"

namespace greenlab {

// Scalar fields are full-grid cell arrays; regions are lists of grid cells.

/// (sum |v|^q h^n)^{1/q}; q = infinity gives max |v|.
double lq_norm(const StaggeredGrid& grid, std::span<const double> values, std::span<const Index> region, double q);

/// Measure of {x in region : |v(x)| > t} for each threshold.
std::vector<double> distribution_function(const StaggeredGrid& grid, std::span<const double> values,
                                          std::span<const Index> region, std::span<const double> thresholds);

inline constexpr std::size_t kHolderExhaustiveCells = 4000;
inline constexpr std::size_t kHolderSampledPairs = 100000;

/// max |v(x) - v(y)| / |x - y|^mu over cell pairs with |x - y| >= min_sep.
/// All pairs are scanned up to 4000 cells; larger regions use 1e5 seeded random pairs.
double holder_seminorm(const StaggeredGrid& grid, std::span<const double> values, double mu,
                       std::span<const Index> region, double min_sep, std::uint64_t seed = 0x9e3779b9);
/// Vector-valued version; `values` is (components x grid cells), |.| Euclidean.
double holder_seminorm(const StaggeredGrid& grid, const Eigen::MatrixXd& values, double mu,
                       std::span<const Index> region, double min_sep, std::uint64_t seed = 0x9e3779b9);

/// Cell-centred velocity vectors over the full grid (components x cells), zero outside the mask.
Eigen::MatrixXd cell_velocity_field(const StokesField& field);
/// |u| per grid cell from the cell-centred velocity.
std::vector<double> velocity_magnitude(const StokesField& field);
/// |D_h u| at every corner sample, laid out [q * 2^n + corner] over interior cells.
std::vector<double> corner_gradient_norms(const DofMap& dofs, const Vector& u);
/// ||D_h u||_{L^q} by corner quadrature.
double gradient_lq_norm(const DofMap& dofs, const Vector& u, double q);

/// True when the closed ball lies in the bounding box and every cell whose
/// centre is within `radius` is interior.
bool ball_inside_mask(const DomainMask& mask, const Point& center, double radius);
/// All grid cells (interior or not) with centres within `radius`.
std::vector<Index> grid_cells_in_ball(const StaggeredGrid& grid, const Point& center, double radius);

struct BallRatio {
  double ratio = 0.0;
  bool degenerate = false;
};

/// [int_{B_{R/2}} |p - (p)_{B_{R/2}}|^2 + int_{B_{R/2}} |D u|^2] / [R^{-2} int_{B_R} |u|^2].
BallRatio caccioppoli_ratio(const StokesField& solution, const Point& center, double radius);

/// (avg_{B_{R/2}} |Du|^{q0})^{1/q0} / (avg_{B_R} |Du|^2)^{1/2}, corner quadrature.
BallRatio reverse_holder_ratio(const StokesField& solution, const Point& center, double radius, double q0 = 2.5);

struct DecayFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double r_squared = 0.0;
};

/// Least-squares slope of log m against log r. Needs >= 5 samples and r_max >= 2 r_min.
DecayFit decay_exponent_fit(std::span<const double> r, std::span<const double> magnitude);

struct BallTrial {
  const StokesField* field = nullptr;
  Point center{};
  double radius = 0.0;
};

struct ProbeResult {
  double sup = 0.0;
  std::vector<double> values;  // one per evaluated trial
  Index skipped = 0;
};

/// sup over trials of R^mu [u]_{C^mu(B_{R/2})} / (avg_{B_R} |u|^2)^{1/2}, min pair separation 2h.
ProbeResult a1_constant_probe(std::span<const BallTrial> trials, double mu);

struct A2Trial {
  Point center{};
  double radius = 0.0;
  RhsData rhs;
};

/// sup over trials of ||u||_{L^inf(Omega_{R/2})} divided by
///   R^{-n/2} ||u||_{L^2(Omega_R)} + R^{1-n+n/t} ||p||_{L^{t/(t-1)}(Omega_R)}
///   + R^2 ||f||_{L^inf(Omega_R)} + R^{1-n/t} ||g||_{L^t(Omega_R)}.
/// Trials with zero data are skipped.
ProbeResult a2_bound_probe(const StokesSolver& solver, double t_exp, std::span<const A2Trial> trials);

struct LqSweepResult {
  double sup = 0.0;
  std::vector<double> ratios;
  std::vector<std::string> failures;  // failed trial index and message
};

/// (||p||_q + ||Du||_q) / (||f||_q + ||f_a||_q + ||g||_q) per trial and its sup.
/// A failing solve is recorded and the sweep continues.
LqSweepResult lq_constant_sweep(const StokesSolver& solver, double q, std::span<const RhsData> trials);
/// The same ratio for an already computed solution.
double lq_ratio(const SaddleSystem& system, const StokesField& field, const RhsData& rhs, double q);

}  // namespace greenlab
