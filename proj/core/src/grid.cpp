#include "greenlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <queue>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "greenlab/error.hpp"

namespace greenlab {

double distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

StaggeredGrid::StaggeredGrid(int dim, std::array<Index, 3> cells, double h, Point origin)
    : dim_(dim), cells_(cells), h_(h), origin_(origin) {
  if (dim != 2 && dim != 3) throw PreconditionError("grid dimension must be 2 or 3");
  if (!(h > 0.0) || !std::isfinite(h)) throw PreconditionError("grid spacing must be positive");
  for (int a = 0; a < dim; ++a) {
    if (cells_[static_cast<std::size_t>(a)] < 4) {
      throw PreconditionError("grid needs at least 4 cells per axis");
    }
  }
  if (dim == 2) {
    cells_[2] = 1;
    origin_[2] = 0.0;
  }
}

double StaggeredGrid::cell_volume() const { return std::pow(h_, dim_); }

CellCoord StaggeredGrid::cell_coord(Index cell) const {
  CellCoord c;
  c[0] = cell % cells_[0];
  const Index rest = cell / cells_[0];
  c[1] = rest % cells_[1];
  c[2] = rest / cells_[1];
  return c;
}

bool StaggeredGrid::contains(const CellCoord& c) const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (c[a] < 0 || c[a] >= cells_[a]) return false;
  }
  return true;
}

Point StaggeredGrid::cell_center(const CellCoord& c) const {
  Point p{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) {
    const auto s = static_cast<std::size_t>(a);
    p[s] = origin_[s] + (static_cast<double>(c[s]) + 0.5) * h_;
  }
  return p;
}

Point StaggeredGrid::cell_center(Index cell) const { return cell_center(cell_coord(cell)); }

Index StaggeredGrid::num_faces(int axis) const {
  auto dims = cells_;
  dims[static_cast<std::size_t>(axis)] += 1;
  return dims[0] * dims[1] * dims[2];
}

Index StaggeredGrid::face_index(int axis, const CellCoord& c) const {
  auto dims = cells_;
  dims[static_cast<std::size_t>(axis)] += 1;
  return c[0] + dims[0] * (c[1] + dims[1] * c[2]);
}

CellCoord StaggeredGrid::face_coord(int axis, Index face) const {
  auto dims = cells_;
  dims[static_cast<std::size_t>(axis)] += 1;
  CellCoord c;
  c[0] = face % dims[0];
  const Index rest = face / dims[0];
  c[1] = rest % dims[1];
  c[2] = rest / dims[1];
  return c;
}

Point StaggeredGrid::face_center(int axis, Index face) const {
  const CellCoord c = face_coord(axis, face);
  Point p = cell_center(c);
  p[static_cast<std::size_t>(axis)] -= 0.5 * h_;
  return p;
}

Index StaggeredGrid::cell_face(Index cell, int axis, int side) const {
  CellCoord c = cell_coord(cell);
  if (side > 0) c[static_cast<std::size_t>(axis)] += 1;
  return face_index(axis, c);
}

StaggeredGrid build_grid(int n, Index cells, double extent) {
  if (n != 2 && n != 3) throw PreconditionError("dimension must be 2 or 3, got " + std::to_string(n));
  if (!(extent > 0.0) || !std::isfinite(extent)) throw PreconditionError("extent must be positive");
  if (cells < 4) throw PreconditionError("at least 4 cells per axis are required, got " + std::to_string(cells));
  const std::array<Index, 3> counts{cells, cells, n == 3 ? cells : 1};
  return StaggeredGrid(n, counts, extent / static_cast<double>(cells), Point{0.0, 0.0, 0.0});
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::box: return "box";
    case MaskKind::half_space_graph: return "half_space_graph";
    case MaskKind::staircase_lipschitz: return "staircase_lipschitz";
    case MaskKind::reifenberg_perturbed: return "reifenberg_perturbed";
  }
  return "box";
}

MaskKind mask_kind_from_string(const std::string& name) {
  if (name == "box") return MaskKind::box;
  if (name == "half_space_graph" || name == "half-space") return MaskKind::half_space_graph;
  if (name == "staircase_lipschitz" || name == "lipschitz") return MaskKind::staircase_lipschitz;
  if (name == "reifenberg_perturbed" || name == "sinusoid") return MaskKind::reifenberg_perturbed;
  throw ConfigError("unknown domain kind '" + name + "'");
}

DomainMask::DomainMask(StaggeredGrid grid, std::vector<std::uint8_t> interior, MaskKind kind)
    : grid_(std::move(grid)), interior_(std::move(interior)), kind_(kind) {
  if (static_cast<Index>(interior_.size()) != grid_.num_cells()) {
    throw ValidationError("mask size does not match grid");
  }
  const int n = grid_.dim();
  boundary_offsets_.assign(static_cast<std::size_t>(grid_.num_cells()) + 1, 0);
  for (Index cell = 0; cell < grid_.num_cells(); ++cell) {
    boundary_offsets_[static_cast<std::size_t>(cell)] = static_cast<Index>(boundary_faces_.size());
    if (!is_interior(cell)) continue;
    interior_cells_.push_back(cell);
    const CellCoord c = grid_.cell_coord(cell);
    bool owns = false;
    for (int a = 0; a < n; ++a) {
      for (int side : {-1, 1}) {
        CellCoord nb = c;
        nb[static_cast<std::size_t>(a)] += side;
        if (!is_interior(nb)) {
          boundary_faces_.push_back({cell, a, side});
          owns = true;
        }
      }
    }
    if (owns) boundary_cells_.push_back(cell);
  }
  boundary_offsets_.back() = static_cast<Index>(boundary_faces_.size());
}

std::span<const BoundaryFace> DomainMask::boundary_faces_of(Index cell) const {
  const auto b = static_cast<std::size_t>(boundary_offsets_[static_cast<std::size_t>(cell)]);
  const auto e = static_cast<std::size_t>(boundary_offsets_[static_cast<std::size_t>(cell) + 1]);
  return std::span<const BoundaryFace>(boundary_faces_).subspan(b, e - b);
}

FaceState DomainMask::face_state(int axis, Index face) const {
  const CellCoord upper = grid_.face_coord(axis, face);
  CellCoord lower = upper;
  lower[static_cast<std::size_t>(axis)] -= 1;
  const bool a = is_interior(lower);
  const bool b = is_interior(upper);
  if (a && b) return FaceState::active;
  if (a || b) return FaceState::boundary;
  return FaceState::exterior;
}

Point DomainMask::boundary_face_center(const BoundaryFace& f) const {
  Point p = grid_.cell_center(f.cell);
  p[static_cast<std::size_t>(f.axis)] += 0.5 * f.side * grid_.h();
  return p;
}

bool DomainMask::on_bounding_box(const BoundaryFace& f) const {
  CellCoord nb = grid_.cell_coord(f.cell);
  nb[static_cast<std::size_t>(f.axis)] += f.side;
  return !grid_.contains(nb);
}

namespace {

bool face_connected(const StaggeredGrid& grid, const std::vector<std::uint8_t>& interior, Index count) {
  Index start = -1;
  for (Index c = 0; c < grid.num_cells(); ++c) {
    if (interior[static_cast<std::size_t>(c)]) {
      start = c;
      break;
    }
  }
  if (start < 0) return false;
  std::vector<std::uint8_t> seen(interior.size(), 0);
  std::queue<Index> todo;
  todo.push(start);
  seen[static_cast<std::size_t>(start)] = 1;
  Index visited = 0;
  while (!todo.empty()) {
    const Index cell = todo.front();
    todo.pop();
    ++visited;
    const CellCoord c = grid.cell_coord(cell);
    for (int a = 0; a < grid.dim(); ++a) {
      for (int side : {-1, 1}) {
        CellCoord nb = c;
        nb[static_cast<std::size_t>(a)] += side;
        if (!grid.contains(nb)) continue;
        const Index j = grid.cell_index(nb);
        if (interior[static_cast<std::size_t>(j)] && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          todo.push(j);
        }
      }
    }
  }
  return visited == count;
}

double graph_height(const MaskSpec& spec, const StaggeredGrid& grid, const Point& x) {
  const double mid = grid.origin()[1] + 0.5 * grid.extent(1);
  switch (spec.kind) {
    case MaskKind::box:
    case MaskKind::half_space_graph:
      return spec.offset;
    case MaskKind::staircase_lipschitz:
      return spec.offset + spec.lipschitz * std::abs(x[1] - mid);
    case MaskKind::reifenberg_perturbed:
      return spec.offset + spec.amplitude * std::sin(2.0 * std::numbers::pi * (x[1] - grid.origin()[1]) / spec.wavelength);
  }
  return spec.offset;
}

}  // namespace

DomainMask build_domain(const StaggeredGrid& grid, const MaskSpec& spec) {
  std::vector<std::uint8_t> interior(static_cast<std::size_t>(grid.num_cells()), 1);
  if (spec.kind != MaskKind::box) {
    if (spec.kind == MaskKind::reifenberg_perturbed && !(spec.wavelength > 0.0)) {
      throw PreconditionError("sinusoid wavelength must be positive");
    }
    const double lo = grid.origin()[0];
    const double hi = lo + grid.extent(0);
    for (Index cell = 0; cell < grid.num_cells(); ++cell) {
      const Point x = grid.cell_center(cell);
      const double height = graph_height(spec, grid, x);
      if (height < lo || height > hi) {
        throw ValidationError("boundary graph leaves the bounding box (height " + std::to_string(height) + ")");
      }
      interior[static_cast<std::size_t>(cell)] = x[0] > height ? 1 : 0;
    }
  }
  const auto count = static_cast<Index>(std::count(interior.begin(), interior.end(), std::uint8_t{1}));
  if (count == 0) throw ValidationError("domain mask has an empty interior");
  if (!face_connected(grid, interior, count)) throw ValidationError("domain mask interior is disconnected");

  DomainMask mask(grid, std::move(interior), spec.kind);
  mask.set_diagnostics(compute_flatness_defect(mask), compute_measure_constant(mask));
  return mask;
}

double distance_to_boundary(const DomainMask& mask, Index cell) {
  const StaggeredGrid& grid = mask.grid();
  if (cell < 0 || cell >= grid.num_cells() || !mask.is_interior(cell)) {
    throw PreconditionError("distance_to_boundary requires an interior cell");
  }
  const Point x = grid.cell_center(cell);
  const CellCoord c = grid.cell_coord(cell);
  const int n = grid.dim();
  Index max_shell = 0;
  for (int a = 0; a < n; ++a) max_shell = std::max(max_shell, grid.cells(a));

  // Search Chebyshev shells of cells around x; faces owned by a cell at
  // shell k are at least (k - 1/2) h away.
  double best = std::numeric_limits<double>::infinity();
  for (Index k = 0; k <= max_shell; ++k) {
    if ((static_cast<double>(k) - 0.5) * grid.h() > best) break;
    const Index zk = n == 3 ? k : 0;
    for (Index dz = -zk; dz <= zk; ++dz) {
      for (Index dy = -k; dy <= k; ++dy) {
        for (Index dx = -k; dx <= k; ++dx) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != k) continue;
          const CellCoord nb{c[0] + dx, c[1] + dy, c[2] + dz};
          if (!grid.contains(nb)) continue;
          const Index j = grid.cell_index(nb);
          for (const BoundaryFace& f : mask.boundary_faces_of(j)) {
            best = std::min(best, distance(x, mask.boundary_face_center(f)));
          }
        }
      }
    }
  }
  return best;
}

std::vector<double> validation_radii(const StaggeredGrid& grid) {
  const double r0 = 0.25 * grid.extent(0);
  std::vector<double> radii;
  for (double r = r0; r >= 4.0 * grid.h() * (1.0 - 1e-12); r *= 0.5) radii.push_back(r);
  if (radii.empty()) radii.push_back(r0);
  std::reverse(radii.begin(), radii.end());
  return radii;
}

std::vector<Index> cells_in_ball(const DomainMask& mask, const Point& center, double radius) {
  const StaggeredGrid& grid = mask.grid();
  const int n = grid.dim();
  std::array<Index, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < n; ++a) {
    const auto s = static_cast<std::size_t>(a);
    const double rel = (center[s] - grid.origin()[s]) / grid.h() - 0.5;
    lo[s] = std::max<Index>(0, static_cast<Index>(std::floor(rel - radius / grid.h())) - 1);
    hi[s] = std::min<Index>(grid.cells(a) - 1, static_cast<Index>(std::ceil(rel + radius / grid.h())) + 1);
  }
  std::vector<Index> out;
  const double r2 = radius * radius * (1.0 + 1e-12);
  for (Index k = lo[2]; k <= hi[2]; ++k) {
    for (Index j = lo[1]; j <= hi[1]; ++j) {
      for (Index i = lo[0]; i <= hi[0]; ++i) {
        const CellCoord c{i, j, k};
        const Index cell = grid.cell_index(c);
        if (!mask.is_interior(cell)) continue;
        const Point p = grid.cell_center(c);
        double d2 = 0.0;
        for (int a = 0; a < n; ++a) {
          const double d = p[static_cast<std::size_t>(a)] - center[static_cast<std::size_t>(a)];
          d2 += d * d;
        }
        if (d2 <= r2) out.push_back(cell);
      }
    }
  }
  return out;
}

double compute_measure_constant(const DomainMask& mask) {
  const StaggeredGrid& grid = mask.grid();
  const auto radii = validation_radii(grid);
  double c = std::numeric_limits<double>::infinity();
  for (Index cell : mask.boundary_cells()) {
    const Point x = grid.cell_center(cell);
    for (double r : radii) {
      const double vol = static_cast<double>(cells_in_ball(mask, x, r).size()) * grid.cell_volume();
      c = std::min(c, vol / std::pow(r, grid.dim()));
    }
  }
  return std::isfinite(c) ? c : 0.0;
}

double compute_flatness_defect(const DomainMask& mask) {
  const StaggeredGrid& grid = mask.grid();
  const int n = grid.dim();
  const auto radii = validation_radii(grid);
  const double reach = radii.back();
  const auto reach_cells = static_cast<Index>(std::ceil(reach / grid.h())) + 1;

  double defect = 0.0;
  std::vector<Point> pts;
  for (Index cell : mask.boundary_cells()) {
    bool carved = false;
    for (const BoundaryFace& f : mask.boundary_faces_of(cell)) carved = carved || !mask.on_bounding_box(f);
    if (!carved) continue;

    const Point x = grid.cell_center(cell);
    const CellCoord c = grid.cell_coord(cell);
    const Index zr = n == 3 ? reach_cells : 0;
    std::vector<std::pair<double, Point>> nearby;
    for (Index dz = -zr; dz <= zr; ++dz) {
      for (Index dy = -reach_cells; dy <= reach_cells; ++dy) {
        for (Index dx = -reach_cells; dx <= reach_cells; ++dx) {
          const CellCoord nb{c[0] + dx, c[1] + dy, c[2] + dz};
          if (!grid.contains(nb)) continue;
          for (const BoundaryFace& f : mask.boundary_faces_of(grid.cell_index(nb))) {
            if (mask.on_bounding_box(f)) continue;
            const Point p = mask.boundary_face_center(f);
            nearby.emplace_back(distance(x, p), p);
          }
        }
      }
    }
    for (double r : radii) {
      pts.clear();
      for (const auto& [d, p] : nearby) {
        if (d <= r * (1.0 + 1e-12)) pts.push_back(p);
      }
      if (static_cast<int>(pts.size()) < n) continue;
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
      for (const Point& p : pts) {
        for (int a = 0; a < n; ++a) mean(a) += p[static_cast<std::size_t>(a)];
      }
      mean /= static_cast<double>(pts.size());
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
      for (const Point& p : pts) {
        Eigen::VectorXd d(n);
        for (int a = 0; a < n; ++a) d(a) = p[static_cast<std::size_t>(a)] - mean(a);
        cov += d * d.transpose();
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
      const Eigen::VectorXd normal = eig.eigenvectors().col(0);
      double dev = 0.0;
      for (const Point& p : pts) {
        double s = 0.0;
        for (int a = 0; a < n; ++a) s += (p[static_cast<std::size_t>(a)] - mean(a)) * normal(a);
        dev = std::max(dev, std::abs(s));
      }
      defect = std::max(defect, dev / r);
    }
  }
  return defect;
}

void write_mask(const DomainMask& mask, const std::filesystem::path& prefix) {
  const StaggeredGrid& grid = mask.grid();
  auto bin_path = prefix;
  bin_path += ".bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  const auto data = mask.interior();
  bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));

  nlohmann::json meta;
  meta["n"] = grid.dim();
  std::vector<Index> cells(grid.cells().begin(), grid.cells().begin() + grid.dim());
  meta["cells_per_axis"] = cells;
  meta["h"] = grid.h();
  std::vector<double> origin(grid.origin().begin(), grid.origin().begin() + grid.dim());
  meta["origin"] = origin;
  meta["kind"] = to_string(mask.kind());
  auto json_path = prefix;
  json_path += ".json";
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write " + json_path.string());
  js << meta.dump(2) << "\n";
}

DomainMask read_mask(const std::filesystem::path& prefix) {
  auto json_path = prefix;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw IoError("cannot read " + json_path.string());
  const auto meta = nlohmann::json::parse(js);
  const int n = meta.at("n").get<int>();
  const auto cells = meta.at("cells_per_axis").get<std::vector<Index>>();
  const auto origin = meta.at("origin").get<std::vector<double>>();
  if (static_cast<int>(cells.size()) != n || static_cast<int>(origin.size()) != n) {
    throw IoError("mask sidecar " + json_path.string() + " has inconsistent dimensions");
  }
  std::array<Index, 3> counts{1, 1, 1};
  Point o{0.0, 0.0, 0.0};
  for (int a = 0; a < n; ++a) {
    counts[static_cast<std::size_t>(a)] = cells[static_cast<std::size_t>(a)];
    o[static_cast<std::size_t>(a)] = origin[static_cast<std::size_t>(a)];
  }
  StaggeredGrid grid(n, counts, meta.at("h").get<double>(), o);

  auto bin_path = prefix;
  bin_path += ".bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot read " + bin_path.string());
  std::vector<std::uint8_t> interior(static_cast<std::size_t>(grid.num_cells()));
  bin.read(reinterpret_cast<char*>(interior.data()), static_cast<std::streamsize>(interior.size()));
  if (bin.gcount() != static_cast<std::streamsize>(interior.size())) {
    throw IoError("mask payload " + bin_path.string() + " is truncated");
  }
  DomainMask mask(grid, std::move(interior), mask_kind_from_string(meta.value("kind", std::string("box"))));
  mask.set_diagnostics(compute_flatness_defect(mask), compute_measure_constant(mask));
  return mask;
}

}  // namespace greenlab
