#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace greenlab {

using Index = std::int64_t;
using Point = std::array<double, 3>;
using CellCoord = std::array<Index, 3>;

double distance(const Point& a, const Point& b);

/// Uniform MAC grid on an axis-aligned box. Pressure lives at cell centers,
/// velocity component a on the faces normal to axis a. In 2D the third axis
/// has a single cell and is never used as a direction.
class StaggeredGrid {
 public:
  StaggeredGrid(int dim, std::array<Index, 3> cells, double h, Point origin);

  int dim() const { return dim_; }
  Index cells(int axis) const { return cells_[static_cast<std::size_t>(axis)]; }
  const std::array<Index, 3>& cells() const { return cells_; }
  double h() const { return h_; }
  const Point& origin() const { return origin_; }
  double extent(int axis) const { return static_cast<double>(cells(axis)) * h_; }

  Index num_cells() const { return cells_[0] * cells_[1] * cells_[2]; }
  double cell_volume() const;

  Index cell_index(const CellCoord& c) const { return c[0] + cells_[0] * (c[1] + cells_[1] * c[2]); }
  CellCoord cell_coord(Index cell) const;
  bool contains(const CellCoord& c) const;
  Point cell_center(Index cell) const;
  Point cell_center(const CellCoord& c) const;

  /// Faces normal to `axis` are indexed by the coordinate of the cell on
  /// their upper side, with coordinate `axis` ranging over [0, cells(axis)].
  Index num_faces(int axis) const;
  Index face_index(int axis, const CellCoord& c) const;
  CellCoord face_coord(int axis, Index face) const;
  Point face_center(int axis, Index face) const;

  /// Face of `cell` normal to `axis` on `side` (-1 lower, +1 upper).
  Index cell_face(Index cell, int axis, int side) const;

  bool operator==(const StaggeredGrid& other) const = default;

 private:
  int dim_;
  std::array<Index, 3> cells_;
  double h_;
  Point origin_;
};

/// Isotropic grid with `cells` per axis on [0, extent]^n.
StaggeredGrid build_grid(int n, Index cells, double extent);

enum class MaskKind { box, half_space_graph, staircase_lipschitz, reifenberg_perturbed };

std::string to_string(MaskKind kind);
MaskKind mask_kind_from_string(const std::string& name);

/// Parameters of a domain carved from the bounding box. The carved boundary
/// is the graph x_1 = offset + phi(x_2[, x_3]) with
///   half_space_graph:      phi = 0
///   staircase_lipschitz:   phi = lipschitz * |x_2 - mid|  (tent, constant L)
///   reifenberg_perturbed:  phi = amplitude * sin(2 pi x_2 / wavelength)
/// and the domain is the side x_1 > offset + phi.
struct MaskSpec {
  MaskKind kind = MaskKind::box;
  double offset = 0.0;
  double lipschitz = 0.0;
  double amplitude = 0.0;
  double wavelength = 1.0;
};

enum class FaceState : std::uint8_t { exterior, boundary, active };

struct BoundaryFace {
  Index cell;  // interior cell owning the face
  int axis;
  int side;    // -1 lower, +1 upper
};

class DomainMask {
 public:
  DomainMask(StaggeredGrid grid, std::vector<std::uint8_t> interior, MaskKind kind);

  const StaggeredGrid& grid() const { return grid_; }
  MaskKind kind() const { return kind_; }

  bool is_interior(Index cell) const { return interior_[static_cast<std::size_t>(cell)] != 0; }
  bool is_interior(const CellCoord& c) const { return grid_.contains(c) && is_interior(grid_.cell_index(c)); }
  std::span<const std::uint8_t> interior() const { return interior_; }
  const std::vector<Index>& interior_cells() const { return interior_cells_; }
  Index interior_count() const { return static_cast<Index>(interior_cells_.size()); }
  double measure() const { return static_cast<double>(interior_count()) * grid_.cell_volume(); }

  const std::vector<BoundaryFace>& boundary_faces() const { return boundary_faces_; }
  /// Boundary faces owned by an interior cell (empty for cells away from the boundary).
  std::span<const BoundaryFace> boundary_faces_of(Index cell) const;
  /// Interior cells that own at least one boundary face.
  const std::vector<Index>& boundary_cells() const { return boundary_cells_; }

  FaceState face_state(int axis, Index face) const;
  Point boundary_face_center(const BoundaryFace& f) const;
  /// True when the boundary face lies on the bounding box rather than on a carved surface.
  bool on_bounding_box(const BoundaryFace& f) const;

  /// Discrete flatness defect of the carved boundary; a heuristic surrogate
  /// for Reifenberg flatness, not a certified constant.
  double flatness_defect() const { return flatness_defect_; }
  /// c in |Omega_R(x)| >= c R^n over boundary cells and dyadic R.
  double measure_constant() const { return measure_constant_; }

  void set_diagnostics(double flatness_defect, double measure_constant) {
    flatness_defect_ = flatness_defect;
    measure_constant_ = measure_constant;
  }

 private:
  StaggeredGrid grid_;
  std::vector<std::uint8_t> interior_;
  MaskKind kind_;
  std::vector<Index> interior_cells_;
  std::vector<BoundaryFace> boundary_faces_;
  std::vector<Index> boundary_offsets_;  // CSR over cells into boundary_faces_
  std::vector<Index> boundary_cells_;
  double flatness_defect_ = 0.0;
  double measure_constant_ = 0.0;
};

DomainMask build_domain(const StaggeredGrid& grid, const MaskSpec& spec);

/// Euclidean distance from the cell center to the nearest boundary-face centroid.
double distance_to_boundary(const DomainMask& mask, Index cell);

/// Radii R0, R0/2, ... down to 4h with R0 = extent/4. When R0 < 4h only R0 is used.
std::vector<double> validation_radii(const StaggeredGrid& grid);

/// Heuristic flatness defect: sup over boundary cells x and validation radii R of
/// the max deviation of carved boundary-face centroids in B_R(x) from their
/// least-squares plane, divided by R.
double compute_flatness_defect(const DomainMask& mask);

/// min over boundary cells x and validation radii R of |Omega_R(x)| / R^n.
double compute_measure_constant(const DomainMask& mask);

/// Interior cells whose centers lie within `radius` of `center`.
std::vector<Index> cells_in_ball(const DomainMask& mask, const Point& center, double radius);

/// Writes `<prefix>.bin` (uint8 per cell) and `<prefix>.json` {n, cells_per_axis, h, origin}.
void write_mask(const DomainMask& mask, const std::filesystem::path& prefix);
DomainMask read_mask(const std::filesystem::path& prefix);

}  // namespace greenlab
