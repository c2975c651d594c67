#pragma once

#include <cstddef>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <shared_mutex>
#include <tuple>
#include <vector>

#include "greenlab/solver.hpp"

namespace greenlab {

/// Column k of the averaged Green pair (G_eps(., y), Pi_eps(., y)): the
/// solution with f = e_k / |Omega_eps(y)| on the cell ball Omega_eps(y).
struct GreenColumn {
  Index pole_cell = -1;
  int component = 0;
  double epsilon = 0.0;
  bool adjoint = false;
  std::vector<Index> ball_cells;  // Omega_eps(y)
  double ball_measure = 0.0;
  StokesField field;
  SolveStats stats;
  /// ||Pi_eps||_2 + ||D G_eps||_2.
  double energy_norm = 0.0;
};

struct GreenMatrixSample {
  Index x_cell = -1;
  Index y_cell = -1;
  double epsilon = 0.0;
  Eigen::MatrixXd G;  // (i, k): component i of column k at x
};

/// Source of column k at pole y: f = 1_{Omega_eps(y)} e_k / |Omega_eps(y)|.
RhsData green_source(const DomainMask& mask, Index y, int k, double epsilon);

/// Validates the pole and radius: eps >= h and eps < d_y.
void check_pole(const DomainMask& mask, Index y, double epsilon);

/// Averaged Green columns of one saddle system with an LRU cache keyed by
/// (pole, component, eps). Lookups may run concurrently; the cache is the only
/// shared mutable state.
class GreenFunction {
 public:
  GreenFunction(const SaddleSystem& system, SolveOptions options = {}, std::size_t cache_capacity = 64);

  const SaddleSystem& system() const { return solver_.system(); }
  const StokesSolver& solver() const { return solver_; }
  std::size_t cache_size() const;

  std::shared_ptr<const GreenColumn> column(Index y, int k, double epsilon);
  /// The n columns at pole y.
  std::vector<std::shared_ptr<const GreenColumn>> columns(Index y, double epsilon);

 private:
  using Key = std::tuple<Index, int, double>;
  StokesSolver solver_;
  std::size_t capacity_;
  mutable std::shared_mutex mutex_;
  std::list<Key> order_;
  std::map<Key, std::pair<std::shared_ptr<const GreenColumn>, std::list<Key>::iterator>> cache_;
};

GreenColumn averaged_green_column(const StokesSolver& solver, Index y, int k, double epsilon);
GreenColumn averaged_green_column(const SaddleSystem& system, Index y, int k, double epsilon, double tol);

/// Point values G(x, y) from the cell-centred velocity of the n columns at y.
GreenMatrixSample green_matrix(GreenFunction& green, Index x, Index y, double epsilon);

/// Cell-ball mean over Omega_sigma(x) of the velocity of a column.
Eigen::VectorXd ball_mean_velocity(const GreenColumn& column, Index x, double sigma);

/// max |P - Q^T| / max(|P|, |Q|) with P[l][k] = avg_{Omega_eps(x)} G_eps^{lk}(., y) and
/// Q[k][l] = avg_{Omega_eps(y)} G*_eps^{kl}(., x), the columns of the adjoint system at pole x.
double symmetry_defect(GreenFunction& primal, GreenFunction& adjoint, Index x, Index y, double epsilon);

struct RepresentationTerms {
  double ball_mean = 0.0;      // avg_{Omega_eps(y)} u^k
  double force_term = 0.0;     // <G, f>
  double flux_term = 0.0;      // <D G, f_a>
  double pressure_term = 0.0;  // <Pi, g>
  double defect = 0.0;
};

/// Solves the adjoint problem with `trial` and compares avg_{Omega_eps(y)} u^k with
/// <G^{.k}_eps, f> - <D G^{.k}_eps, f_a> - <Pi^k_eps, g>. `adjoint_solver` must
/// belong to the adjoint of the system of `green`.
RepresentationTerms representation_defect(GreenFunction& green, const StokesSolver& adjoint_solver, Index y, int k,
                                          double epsilon, const RhsData& trial);

struct DecaySample {
  double r = 0.0;  // mean centre distance in the shell
  double max_magnitude = 0.0;
  double mean_magnitude = 0.0;
  Index count = 0;
};

/// Frobenius |G(x, y)| binned in shells of width h over r in [r_min, r_max].
std::vector<DecaySample> decay_samples(GreenFunction& green, Index y, double epsilon, double r_min, double r_max);
void write_decay_csv(const std::vector<DecaySample>& samples, const std::filesystem::path& path);

/// Frobenius |G(., y)| over all grid cells from the n columns.
std::vector<double> green_magnitude(const std::vector<std::shared_ptr<const GreenColumn>>& columns);
/// Euclidean |Pi(., y)| over all grid cells from the n columns.
std::vector<double> pressure_magnitude(const std::vector<std::shared_ptr<const GreenColumn>>& columns);

/// `<prefix>.bin`: face values for each axis (full grid) then cell pressure;
/// `<prefix>.json`: {pole, k, epsilon, stats, layout}.
void write_green_column(const GreenColumn& column, const std::filesystem::path& prefix);

/// Free-space Stokeslet (1/8 pi)(I/r + r r^T/r^3) for unit viscosity in 3D.
Eigen::Matrix3d stokeslet(const Point& x, const Point& y);

/// No-slip Green function of the ball B_R(y) for unit viscosity in 3D:
/// (1/8 pi)[(1/r - 3/R + 2 r^2/R^3) I + (1/r^3 - 1/R^3) d d^T], d = x - y.
/// Requires 0 < r <= R.
Eigen::Matrix3d ball_stokes_green(const Point& x, const Point& y, double R);

}  // namespace greenlab
