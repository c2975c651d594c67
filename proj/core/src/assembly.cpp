#include "greenlab/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "greenlab/error.hpp"

namespace greenlab {

void DerivativeStencil::add(Index d, double w) {
  for (int t = 0; t < terms; ++t) {
    if (dof[static_cast<std::size_t>(t)] == d) {
      weight[static_cast<std::size_t>(t)] += w;
      return;
    }
  }
  dof[static_cast<std::size_t>(terms)] = d;
  weight[static_cast<std::size_t>(terms)] = w;
  ++terms;
}

double DerivativeStencil::apply(const Vector& u) const {
  double s = 0.0;
  for (int t = 0; t < terms; ++t) s += weight[static_cast<std::size_t>(t)] * u(dof[static_cast<std::size_t>(t)]);
  return s;
}

DofMap::DofMap(std::shared_ptr<const DomainMask> mask) : mask_(std::move(mask)) {
  const StaggeredGrid& g = grid();
  for (int a = 0; a < g.dim(); ++a) {
    auto& map = face_dof_[static_cast<std::size_t>(a)];
    map.assign(static_cast<std::size_t>(g.num_faces(a)), -1);
    axis_begin_[static_cast<std::size_t>(a)] = static_cast<Index>(velocity_faces_.size());
    for (Index f = 0; f < g.num_faces(a); ++f) {
      if (mask_->face_state(a, f) == FaceState::active) {
        map[static_cast<std::size_t>(f)] = static_cast<Index>(velocity_faces_.size());
        velocity_faces_.emplace_back(a, f);
      }
    }
  }
  for (int a = g.dim(); a < 4; ++a) axis_begin_[static_cast<std::size_t>(a)] = static_cast<Index>(velocity_faces_.size());
  cell_dof_.assign(static_cast<std::size_t>(g.num_cells()), -1);
  for (Index cell : mask_->interior_cells()) {
    cell_dof_[static_cast<std::size_t>(cell)] = static_cast<Index>(pressure_cells_.size());
    pressure_cells_.push_back(cell);
  }
}

std::pair<Index, Index> DofMap::velocity_range(int axis) const {
  return {axis_begin_[static_cast<std::size_t>(axis)], axis_begin_[static_cast<std::size_t>(axis) + 1]};
}

void DofMap::corner_gradient(Index cell, int corner, std::span<DerivativeStencil> out) const {
  const StaggeredGrid& g = grid();
  const int n = g.dim();
  const double inv_h = 1.0 / g.h();
  const CellCoord c = g.cell_coord(cell);
  for (auto& s : out) s = DerivativeStencil{};

  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    // d_i u^i: cell-centred difference.
    {
      DerivativeStencil& d = out[static_cast<std::size_t>(i * n + i)];
      const Index up = velocity_dof(i, g.cell_face(cell, i, +1));
      const Index lo = velocity_dof(i, g.cell_face(cell, i, -1));
      if (up >= 0) d.add(up, inv_h);
      if (lo >= 0) d.add(lo, -inv_h);
    }
    const int side_i = (corner >> i) & 1 ? 1 : -1;
    const Index own = velocity_dof(i, g.cell_face(cell, i, side_i));
    for (int b = 0; b < n; ++b) {
      if (b == i) continue;
      const int side_b = (corner >> b) & 1 ? 1 : -1;
      DerivativeStencil& d = out[static_cast<std::size_t>(i * n + b)];
      const double w = side_b * inv_h;
      CellCoord nb = c;
      nb[static_cast<std::size_t>(b)] += side_b;
      FaceState far_state = FaceState::exterior;
      Index far = -1;
      if (g.contains(nb)) {
        CellCoord fc = nb;
        if (side_i > 0) fc[si] += 1;
        const Index face = g.face_index(i, fc);
        far_state = mask_->face_state(i, face);
        far = velocity_dof(i, face);
      }
      // derivative = side_b * (far - own) / h, far reflected when it lies outside
      switch (far_state) {
        case FaceState::active:
          d.add(far, w);
          if (own >= 0) d.add(own, -w);
          break;
        case FaceState::boundary:
          if (own >= 0) d.add(own, -w);
          break;
        case FaceState::exterior:
          if (own >= 0) d.add(own, -2.0 * w);
          break;
      }
    }
  }
}

SparseMatrix DofMap::gradient_operator() const {
  const int n = dim();
  const int corners = corners_per_cell();
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<DerivativeStencil> st(static_cast<std::size_t>(n * n));
  const Index rows = num_pressure() * corners * n * n;
  trip.reserve(static_cast<std::size_t>(rows) * 2);
  for (Index q = 0; q < num_pressure(); ++q) {
    const Index cell = pressure_cells_[static_cast<std::size_t>(q)];
    for (int k = 0; k < corners; ++k) {
      corner_gradient(cell, k, st);
      for (int r = 0; r < n * n; ++r) {
        const Index row = (q * corners + k) * n * n + r;
        const auto& s = st[static_cast<std::size_t>(r)];
        for (int t = 0; t < s.terms; ++t) {
          trip.emplace_back(row, s.dof[static_cast<std::size_t>(t)], s.weight[static_cast<std::size_t>(t)]);
        }
      }
    }
  }
  SparseMatrix d(rows, num_velocity());
  d.setFromTriplets(trip.begin(), trip.end());
  return d;
}

Vector DofMap::cell_gradient_sq(const Vector& u) const {
  const int n = dim();
  const int corners = corners_per_cell();
  std::vector<DerivativeStencil> st(static_cast<std::size_t>(n * n));
  Vector out(num_pressure());
  for (Index q = 0; q < num_pressure(); ++q) {
    double acc = 0.0;
    for (int k = 0; k < corners; ++k) {
      corner_gradient(pressure_cells_[static_cast<std::size_t>(q)], k, st);
      for (const auto& s : st) {
        const double v = s.apply(u);
        acc += v * v;
      }
    }
    out(q) = acc / corners;
  }
  return out;
}

double DofMap::gradient_energy(const Vector& u) const { return cell_gradient_sq(u).sum() * grid().cell_volume(); }

double DofMap::cell_velocity(const Vector& u, Index cell, int axis) const {
  const Index up = velocity_dof(axis, grid().cell_face(cell, axis, +1));
  const Index lo = velocity_dof(axis, grid().cell_face(cell, axis, -1));
  return 0.5 * ((up >= 0 ? u(up) : 0.0) + (lo >= 0 ? u(lo) : 0.0));
}

Eigen::MatrixXd DofMap::cell_velocities(const Vector& u) const {
  Eigen::MatrixXd out(dim(), num_pressure());
  for (Index q = 0; q < num_pressure(); ++q) {
    for (int a = 0; a < dim(); ++a) out(a, q) = cell_velocity(u, pressure_cells_[static_cast<std::size_t>(q)], a);
  }
  return out;
}

SparseMatrix DofMap::cell_to_face() const {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(num_velocity()) * 2);
  const StaggeredGrid& g = grid();
  for (Index d = 0; d < num_velocity(); ++d) {
    const auto [axis, face] = velocity_faces_[static_cast<std::size_t>(d)];
    const CellCoord upper = g.face_coord(axis, face);
    CellCoord lower = upper;
    lower[static_cast<std::size_t>(axis)] -= 1;
    trip.emplace_back(d, pressure_dof(g.cell_index(upper)), 0.5);
    trip.emplace_back(d, pressure_dof(g.cell_index(lower)), 0.5);
  }
  SparseMatrix m(num_velocity(), num_pressure());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

FaceField FaceField::zeros(const StaggeredGrid& grid) {
  FaceField f;
  for (int a = 0; a < grid.dim(); ++a) f.values[static_cast<std::size_t>(a)].assign(static_cast<std::size_t>(grid.num_faces(a)), 0.0);
  return f;
}

RhsData RhsData::zeros(const StaggeredGrid& grid) {
  const auto cells = static_cast<std::size_t>(grid.num_cells());
  const auto n = static_cast<std::size_t>(grid.dim());
  return RhsData{std::vector<double>(n * cells, 0.0), std::vector<double>(n * n * cells, 0.0), std::vector<double>(cells, 0.0)};
}

bool RhsData::is_zero() const {
  auto zero = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }); };
  return zero(f) && zero(f_alpha) && zero(g);
}

double mask_mean(const DomainMask& mask, std::span<const double> cell_values) {
  double s = 0.0;
  for (Index c : mask.interior_cells()) s += cell_values[static_cast<std::size_t>(c)];
  return s / static_cast<double>(mask.interior_count());
}

void validate_rhs(const DomainMask& mask, const RhsData& rhs) {
  const StaggeredGrid& grid = mask.grid();
  const auto cells = static_cast<std::size_t>(grid.num_cells());
  const auto n = static_cast<std::size_t>(grid.dim());
  if (rhs.f.size() != n * cells || rhs.f_alpha.size() != n * n * cells || rhs.g.size() != cells) {
    throw PreconditionError("right-hand side arrays do not match the grid");
  }
  auto check_outside = [&](const std::vector<double>& v, std::size_t comps, const char* name) {
    for (std::size_t k = 0; k < comps; ++k)
      for (Index c = 0; c < grid.num_cells(); ++c) {
        const double x = v[k * cells + static_cast<std::size_t>(c)];
        if (!std::isfinite(x)) throw PreconditionError(std::string(name) + " has non-finite entries");
        if (!mask.is_interior(c) && x != 0.0) throw PreconditionError(std::string(name) + " is nonzero outside the domain");
      }
  };
  check_outside(rhs.f, n, "f");
  check_outside(rhs.f_alpha, n * n, "f_alpha");
  check_outside(rhs.g, 1, "g");
  double sum = 0.0, sq = 0.0;
  for (Index c : mask.interior_cells()) {
    sum += rhs.g[static_cast<std::size_t>(c)] * grid.cell_volume();
    sq += rhs.g[static_cast<std::size_t>(c)] * rhs.g[static_cast<std::size_t>(c)] * grid.cell_volume();
  }
  if (std::abs(sum) > 1e-12 * std::sqrt(sq) * std::sqrt(mask.measure()) + 1e-300) {
    throw PreconditionError("g must have zero mean over the domain (integral " + std::to_string(sum) + ")");
  }
}

SparseMatrix SaddleSystem::saddle_matrix() const {
  const Index nv = velocity_dof();
  const Index np = pressure_dof();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(L.nonZeros() + 2 * B.nonZeros()));
  for (Index r = 0; r < L.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(L, r); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (Index r = 0; r < B.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(B, r); it; ++it) {
      trip.emplace_back(nv + it.row(), it.col(), -it.value());
      trip.emplace_back(it.col(), nv + it.row(), -it.value());
    }
  SparseMatrix k(nv + np, nv + np);
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

Vector SaddleSystem::apply(const Vector& x) const {
  const Index nv = velocity_dof();
  const Index np = pressure_dof();
  Vector y(nv + np);
  y.head(nv) = L * x.head(nv) - B.transpose() * x.tail(np);
  y.tail(np) = -(B * x.head(nv));
  return y;
}

namespace {

SparseMatrix assemble_velocity_block(const DofMap& dofs, const CoefficientField& field) {
  const int n = dofs.dim();
  const int nn = n * n;
  const int corners = dofs.corners_per_cell();
  const double w = dofs.corner_weight();
  const Index nv = dofs.num_velocity();
  SparseMatrix L(nv, nv);
  std::vector<DerivativeStencil> st(static_cast<std::size_t>(nn));
  std::vector<Eigen::Triplet<double>> trip;
  const auto& cells = dofs.pressure_cells();
  constexpr std::size_t kChunk = 4096;

  for (std::size_t begin = 0; begin < cells.size(); begin += kChunk) {
    const std::size_t end = std::min(cells.size(), begin + kChunk);
    trip.clear();
    for (std::size_t q = begin; q < end; ++q) {
      const Index cell = cells[q];
      const Eigen::MatrixXd m = field.cell_matrix(cell);
      for (int k = 0; k < corners; ++k) {
        dofs.corner_gradient(cell, k, st);
        for (int r = 0; r < nn; ++r) {
          const auto& sr = st[static_cast<std::size_t>(r)];
          for (int c = 0; c < nn; ++c) {
            const double mrc = m(r, c);
            if (mrc == 0.0) continue;
            const auto& sc = st[static_cast<std::size_t>(c)];
            for (int a = 0; a < sr.terms; ++a)
              for (int b = 0; b < sc.terms; ++b) {
                trip.emplace_back(sr.dof[static_cast<std::size_t>(a)], sc.dof[static_cast<std::size_t>(b)],
                                  w * mrc * sr.weight[static_cast<std::size_t>(a)] * sc.weight[static_cast<std::size_t>(b)]);
              }
          }
        }
      }
    }
    SparseMatrix part(nv, nv);
    part.setFromTriplets(trip.begin(), trip.end());
    if (begin == 0) {
      L = std::move(part);
    } else {
      L += part;
    }
  }
  L.makeCompressed();
  return L;
}

SparseMatrix assemble_divergence(const DofMap& dofs) {
  const StaggeredGrid& g = dofs.grid();
  const double scale = std::pow(g.h(), g.dim() - 1);
  std::vector<Eigen::Triplet<double>> trip;
  for (Index q = 0; q < dofs.num_pressure(); ++q) {
    const Index cell = dofs.pressure_cells()[static_cast<std::size_t>(q)];
    for (int a = 0; a < g.dim(); ++a) {
      const Index up = dofs.velocity_dof(a, g.cell_face(cell, a, +1));
      const Index lo = dofs.velocity_dof(a, g.cell_face(cell, a, -1));
      if (up >= 0) trip.emplace_back(q, up, scale);
      if (lo >= 0) trip.emplace_back(q, lo, -scale);
    }
  }
  SparseMatrix b(dofs.num_pressure(), dofs.num_velocity());
  b.setFromTriplets(trip.begin(), trip.end());
  return b;
}

void spot_check_coercivity(const SaddleSystem& sys) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 2; ++trial) {
    Vector u(sys.velocity_dof());
    for (Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
    const double form = u.dot(sys.L * u);
    const double energy = sys.dofs->gradient_energy(u);
    if (form < (sys.lambda_eff - 1e-10) * energy) {
      throw ValidationError("assembled velocity block is not coercive on a random probe");
    }
  }
}

}  // namespace

SaddleSystem assemble_system(std::shared_ptr<const CoefficientField> field, std::shared_ptr<const DomainMask> mask,
                             bool adjoint) {
  if (!field || !mask) throw PreconditionError("assemble_system needs a coefficient field and a mask");
  if (!(field->grid() == mask->grid())) throw PreconditionError("coefficient field and mask use different grids");
  const auto bounds = check_ellipticity(*field);
  if (bounds.lambda_eff < field->lambda_nominal() * (1.0 - 1e-12) ||
      bounds.upper_eff > (1.0 + 1e-12) / field->lambda_nominal()) {
    throw ValidationError("coefficient field fails the ellipticity check (lambda_eff=" +
                          std::to_string(bounds.lambda_eff) + ", upper_eff=" + std::to_string(bounds.upper_eff) + ")");
  }
  SaddleSystem sys;
  sys.dofs = std::make_shared<const DofMap>(std::move(mask));
  sys.coefficients = field;
  sys.adjoint = adjoint;
  sys.lambda_eff = bounds.lambda_eff;
  if (adjoint) {
    const CoefficientField star = field->adjoint();
    sys.L = assemble_velocity_block(*sys.dofs, star);
  } else {
    sys.L = assemble_velocity_block(*sys.dofs, *field);
  }
  sys.B = assemble_divergence(*sys.dofs);
  spot_check_coercivity(sys);
  return sys;
}

SaddleSystem adjoint_system(const SaddleSystem& system) {
  SaddleSystem out = system;
  out.L = SparseMatrix(system.L.transpose());
  out.L.makeCompressed();
  out.adjoint = !system.adjoint;
  return out;
}

SaddleSystem identity_system(std::shared_ptr<const DomainMask> mask) {
  CoefficientSpec spec;
  spec.kind = CoefficientKind::identity;
  spec.lambda_nominal = 1.0;
  auto field = std::make_shared<const CoefficientField>(generate_coefficients(mask->grid(), spec));
  return assemble_system(std::move(field), std::move(mask), false);
}

Vector build_rhs(const SaddleSystem& system, const RhsData& rhs) {
  const DofMap& dofs = *system.dofs;
  const StaggeredGrid& g = dofs.grid();
  validate_rhs(dofs.mask(), rhs);
  const int n = g.dim();
  const auto cells = static_cast<std::size_t>(g.num_cells());
  const double vol = g.cell_volume();
  Vector b = Vector::Zero(dofs.num_total());

  for (Index d = 0; d < dofs.num_velocity(); ++d) {
    const auto [axis, face] = dofs.velocity_faces()[static_cast<std::size_t>(d)];
    const CellCoord upper = g.face_coord(axis, face);
    CellCoord lower = upper;
    lower[static_cast<std::size_t>(axis)] -= 1;
    const std::size_t base = static_cast<std::size_t>(axis) * cells;
    b(d) = 0.5 * vol *
           (rhs.f[base + static_cast<std::size_t>(g.cell_index(upper))] +
            rhs.f[base + static_cast<std::size_t>(g.cell_index(lower))]);
  }

  const bool any_flux = std::any_of(rhs.f_alpha.begin(), rhs.f_alpha.end(), [](double x) { return x != 0.0; });
  if (any_flux) {
    const double w = dofs.corner_weight();
    std::vector<DerivativeStencil> st(static_cast<std::size_t>(n * n));
    for (Index cell : dofs.pressure_cells()) {
      for (int k = 0; k < dofs.corners_per_cell(); ++k) {
        dofs.corner_gradient(cell, k, st);
        for (int r = 0; r < n * n; ++r) {
          const double fa = rhs.f_alpha[static_cast<std::size_t>(r) * cells + static_cast<std::size_t>(cell)];
          if (fa == 0.0) continue;
          const auto& s = st[static_cast<std::size_t>(r)];
          for (int t = 0; t < s.terms; ++t) {
            b(s.dof[static_cast<std::size_t>(t)]) -= w * fa * s.weight[static_cast<std::size_t>(t)];
          }
        }
      }
    }
  }

  for (Index q = 0; q < dofs.num_pressure(); ++q) {
    b(dofs.num_velocity() + q) = -vol * rhs.g[static_cast<std::size_t>(dofs.pressure_cells()[static_cast<std::size_t>(q)])];
  }
  return b;
}

std::vector<double> apply_divergence(const SaddleSystem& system, const FaceField& u) {
  const DofMap& dofs = *system.dofs;
  const StaggeredGrid& g = dofs.grid();
  for (int a = 0; a < g.dim(); ++a) {
    const auto& v = u.values[static_cast<std::size_t>(a)];
    if (static_cast<Index>(v.size()) != g.num_faces(a)) throw PreconditionError("face field does not match the grid");
    for (Index f = 0; f < g.num_faces(a); ++f) {
      if (dofs.velocity_dof(a, f) < 0 && v[static_cast<std::size_t>(f)] != 0.0) {
        throw PreconditionError("velocity must vanish on boundary and exterior faces");
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(g.num_cells()), 0.0);
  const double inv_h = 1.0 / g.h();
  for (Index cell : dofs.pressure_cells()) {
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      const auto& v = u.values[static_cast<std::size_t>(a)];
      s += v[static_cast<std::size_t>(g.cell_face(cell, a, +1))] - v[static_cast<std::size_t>(g.cell_face(cell, a, -1))];
    }
    out[static_cast<std::size_t>(cell)] = s * inv_h;
  }
  return out;
}

Vector divergence(const DofMap& dofs, const Vector& u) {
  const StaggeredGrid& g = dofs.grid();
  Vector out(dofs.num_pressure());
  const double inv_h = 1.0 / g.h();
  for (Index q = 0; q < dofs.num_pressure(); ++q) {
    const Index cell = dofs.pressure_cells()[static_cast<std::size_t>(q)];
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
      const Index up = dofs.velocity_dof(a, g.cell_face(cell, a, +1));
      const Index lo = dofs.velocity_dof(a, g.cell_face(cell, a, -1));
      if (up >= 0) s += u(up);
      if (lo >= 0) s -= u(lo);
    }
    out(q) = s * inv_h;
  }
  return out;
}

Vector gradient(const SaddleSystem& system, const Vector& p) {
  return -(system.B.transpose() * p) / system.grid().cell_volume();
}

FaceField to_face_field(const DofMap& dofs, const Vector& u) {
  FaceField out = FaceField::zeros(dofs.grid());
  for (Index d = 0; d < dofs.num_velocity(); ++d) {
    const auto [axis, face] = dofs.velocity_faces()[static_cast<std::size_t>(d)];
    out.values[static_cast<std::size_t>(axis)][static_cast<std::size_t>(face)] = u(d);
  }
  return out;
}

Vector from_face_field(const DofMap& dofs, const FaceField& u) {
  Vector out(dofs.num_velocity());
  for (Index d = 0; d < dofs.num_velocity(); ++d) {
    const auto [axis, face] = dofs.velocity_faces()[static_cast<std::size_t>(d)];
    out(d) = u.values[static_cast<std::size_t>(axis)][static_cast<std::size_t>(face)];
  }
  return out;
}

void write_coo(const SparseMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  out << std::setprecision(17);
  for (Index r = 0; r < m.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) out << it.row() << " " << it.col() << " " << it.value() << "\n";
}

}  // namespace greenlab
