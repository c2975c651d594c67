#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "greenlab/coefficients.hpp"
#include "greenlab/grid.hpp"

namespace greenlab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// One discrete partial derivative at a quadrature point: sum of w * u[dof]
/// over at most two velocity unknowns.
struct DerivativeStencil {
  std::array<Index, 2> dof{-1, -1};
  std::array<double, 2> weight{0.0, 0.0};
  int terms = 0;

  void add(Index d, double w);
  double apply(const Vector& u) const;
};

/// Unknown numbering on a masked MAC grid. Velocity unknowns are the active
/// faces (both neighbours interior), ordered by axis; pressure unknowns are
/// the interior cells. Boundary faces carry u = 0 and are eliminated.
///
/// Velocity gradients are sampled at the 2^n corners of every interior
/// cell. At a corner all n^2 derivatives d_beta u^i are available: the
/// diagonal ones are the cell-centred differences, the off-diagonal ones
/// are the edge differences on the edge through that corner. Across a wall
/// the missing tangential value is the reflection of the interior one.
class DofMap {
 public:
  explicit DofMap(std::shared_ptr<const DomainMask> mask);

  const DomainMask& mask() const { return *mask_; }
  std::shared_ptr<const DomainMask> mask_ptr() const { return mask_; }
  const StaggeredGrid& grid() const { return mask_->grid(); }
  int dim() const { return grid().dim(); }

  Index num_velocity() const { return static_cast<Index>(velocity_faces_.size()); }
  Index num_pressure() const { return static_cast<Index>(pressure_cells_.size()); }
  Index num_total() const { return num_velocity() + num_pressure(); }
  /// [begin, end) of the velocity unknowns normal to `axis`.
  std::pair<Index, Index> velocity_range(int axis) const;

  Index velocity_dof(int axis, Index face) const { return face_dof_[static_cast<std::size_t>(axis)][static_cast<std::size_t>(face)]; }
  Index pressure_dof(Index cell) const { return cell_dof_[static_cast<std::size_t>(cell)]; }
  const std::vector<std::pair<int, Index>>& velocity_faces() const { return velocity_faces_; }
  const std::vector<Index>& pressure_cells() const { return pressure_cells_; }

  int corners_per_cell() const { return 1 << dim(); }
  double corner_weight() const { return grid().cell_volume() / corners_per_cell(); }

  /// Fills out[i*n + beta] with the stencil of d_beta u^i at `corner` of `cell`.
  /// Corner bit a set means the upper side along axis a.
  void corner_gradient(Index cell, int corner, std::span<DerivativeStencil> out) const;

  /// Sparse operator mapping velocity unknowns to corner gradient samples;
  /// row ((q * 2^n + corner) * n + i) * n + beta for the q-th interior cell.
  SparseMatrix gradient_operator() const;

  /// Per interior cell (pressure order): mean over corners of |D_h u|^2.
  Vector cell_gradient_sq(const Vector& u) const;
  /// ||D_h u||_2^2 = sum over corners of w |xi|^2.
  double gradient_energy(const Vector& u) const;

  /// Cell-centred average of velocity component `axis` (faces on either side).
  double cell_velocity(const Vector& u, Index cell, int axis) const;
  /// n x (interior cells): face-to-cell averaged velocity components.
  Eigen::MatrixXd cell_velocities(const Vector& u) const;

  /// Cell (interior order) to active-face averaging, I[f, c] = 1/2 for both neighbours.
  SparseMatrix cell_to_face() const;

 private:
  std::shared_ptr<const DomainMask> mask_;
  std::array<std::vector<Index>, 3> face_dof_;
  std::vector<Index> cell_dof_;
  std::vector<std::pair<int, Index>> velocity_faces_;
  std::vector<Index> pressure_cells_;
  std::array<Index, 4> axis_begin_{0, 0, 0, 0};
};

/// Full-grid face arrays (one per axis); used where callers hand in raw fields.
struct FaceField {
  std::array<std::vector<double>, 3> values;

  static FaceField zeros(const StaggeredGrid& grid);
};

/// Right-hand side of the saddle problem. Cell-based, stored over all grid
/// cells (zero outside the mask):
///   f[k * cells + c]              force density component k,
///   f_alpha[(i * n + a) * cells + c]  flux datum f^i_a in the D_a f_a term,
///   g[c]                          divergence datum, mean-zero over the mask.
struct RhsData {
  std::vector<double> f;
  std::vector<double> f_alpha;
  std::vector<double> g;

  static RhsData zeros(const StaggeredGrid& grid);
  bool is_zero() const;
};

/// Checks that the data vanish outside the mask and that g is mean-zero
/// within 1e-12 * ||g||. Throws PreconditionError otherwise.
void validate_rhs(const DomainMask& mask, const RhsData& rhs);
double mask_mean(const DomainMask& mask, std::span<const double> cell_values);

/// Discretized Stokes saddle problem
///   [ L   -B^T ] [u]   [ (f, .) - (f_a, D_a .) ]
///   [ -B   0   ] [p] = [ -(g, .)               ]
/// with B = h^n div_h. L is the corner-quadrature form of
/// sum A_{ab} D_b u . D_a phi; for the adjoint problem L is replaced by L^T.
struct SaddleSystem {
  std::shared_ptr<const DofMap> dofs;
  std::shared_ptr<const CoefficientField> coefficients;
  SparseMatrix L;
  SparseMatrix B;
  bool adjoint = false;
  double lambda_eff = 0.0;

  Index velocity_dof() const { return dofs->num_velocity(); }
  Index pressure_dof() const { return dofs->num_pressure(); }
  const DomainMask& mask() const { return dofs->mask(); }
  const StaggeredGrid& grid() const { return dofs->grid(); }

  /// K = [[L, -B^T], [-B, 0]].
  SparseMatrix saddle_matrix() const;
  Vector apply(const Vector& x) const;
};

SaddleSystem assemble_system(std::shared_ptr<const CoefficientField> field, std::shared_ptr<const DomainMask> mask,
                             bool adjoint);
/// Same system with the L block transposed (the problem for L*).
SaddleSystem adjoint_system(const SaddleSystem& system);
/// Identity-coefficient system on a mask (Laplacian velocity block).
SaddleSystem identity_system(std::shared_ptr<const DomainMask> mask);

/// Load vector [(f, .) - (f_a, D_a .); -h^n g] for the saddle system.
Vector build_rhs(const SaddleSystem& system, const RhsData& rhs);

/// Cellwise flux balance sum_a (u(c,+a) - u(c,-a)) / h over the full grid.
/// Throws PreconditionError if u is nonzero on a boundary or exterior face.
std::vector<double> apply_divergence(const SaddleSystem& system, const FaceField& u);
/// div_h on velocity unknowns, interior-cell order.
Vector divergence(const DofMap& dofs, const Vector& u);
/// (grad_h p) on active faces: -B^T p / h^n.
Vector gradient(const SaddleSystem& system, const Vector& p);

FaceField to_face_field(const DofMap& dofs, const Vector& u);
Vector from_face_field(const DofMap& dofs, const FaceField& u);

/// Coordinate-format dump: header "rows cols nnz" then "i j value" lines.
void write_coo(const SparseMatrix& m, const std::filesystem::path& path);

}  // namespace greenlab
