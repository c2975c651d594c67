#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "greenlab/assembly.hpp"

namespace greenlab {

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 3000;
  int restart = 120;
};

struct SolveStats {
  int iterations = 0;
  double final_relative_residual = 0.0;
  double wall_time = 0.0;
  std::string method;
  bool converged = true;
  /// (||p||_2 + ||D u||_2) / (||f||_2 + ||f_a||_2 + ||g||_2); 0 for zero data.
  double energy_ratio = 0.0;

  /// Single-line JSON record.
  std::string json_line() const;
};

/// Velocity on active faces and pressure on interior cells, pressure mean-zero.
struct StokesField {
  std::shared_ptr<const DofMap> dofs;
  Vector u;
  Vector p;

  FaceField velocity() const { return to_face_field(*dofs, u); }
  /// Pressure over all grid cells (zero outside the mask).
  std::vector<double> pressure() const;
};

/// Reusable iterative solver for one saddle system: restarted GMRES, right
/// preconditioned by the block upper-triangular matrix
///   [ A  -B^T ]
///   [ 0  -S   ]
/// with A the per-component diagonal blocks of sym(L) (sparse Cholesky) and
/// S = h^n / nu_c the cellwise viscosity-scaled pressure mass.
/// The system must outlive the solver.
class StokesSolver {
 public:
  explicit StokesSolver(const SaddleSystem& system, SolveOptions options = {});
  ~StokesSolver();
  StokesSolver(const StokesSolver&) = delete;
  StokesSolver& operator=(const StokesSolver&) = delete;

  const SaddleSystem& system() const { return system_; }
  const SolveOptions& options() const { return options_; }

  std::pair<StokesField, SolveStats> solve(const RhsData& rhs) const;
  /// Solves K x = b for an assembled load vector (pressure part summing to zero).
  std::pair<Vector, SolveStats> solve_vector(const Vector& b) const;

  /// Solve with the velocity preconditioner block only (A^{-1} r).
  Vector apply_velocity_block_inverse(const Vector& r) const;

 private:
  Vector apply_preconditioner(const Vector& r) const;

  const SaddleSystem& system_;
  SolveOptions options_;
  struct Factors;
  std::unique_ptr<Factors> factors_;
  Vector pressure_scale_;
  mutable std::mutex mutex_;
};

std::pair<StokesField, SolveStats> solve_stokes(const SaddleSystem& system, const RhsData& rhs, double tol);
std::pair<StokesField, SolveStats> solve_stokes(const SaddleSystem& system, const RhsData& rhs, const SolveOptions& options);

/// Discrete L^2 norms used in the energy estimate.
double cell_l2_norm(const StaggeredGrid& grid, std::span<const double> values);
double energy_ratio(const SaddleSystem& system, const StokesField& field, const RhsData& rhs);

inline constexpr Index kDenseOracleMaxDof = 20000;

/// Dense LU on [[K, c], [c^T, 0]] with c the pressure-mean row.
StokesField solve_dense_oracle(const SaddleSystem& system, const RhsData& rhs);

struct BogovskiiResult {
  StokesField field;  // velocity is the right inverse; pressure is the multiplier
  double norm_ratio = 0.0;
  double divergence_residual = 0.0;  // ||div_h u - g||_2 / ||g||_2
  SolveStats stats;
};

/// Minimum-energy right inverse of div_h with zero boundary values, computed
/// as the velocity of the identity-coefficient Stokes problem with data (0, 0, g).
/// `g` is a full-grid cell field.
BogovskiiResult bogovskii_solve(const DomainMask& mask, std::span<const double> g, double tol);
BogovskiiResult bogovskii_solve(const StokesSolver& identity_solver, std::span<const double> g);

struct InfSupResult {
  double beta = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Smallest singular value of h^{-n/2} B A_I^{-1/2} on mean-zero pressures,
/// A_I the identity-coefficient velocity block, by block inverse iteration on
/// the pressure Schur complement B A_I^{-1} B^T.
InfSupResult estimate_infsup(const SaddleSystem& system, int max_iter = 400, double tol = 1e-11);

}  // namespace greenlab
