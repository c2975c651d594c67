#include "support.hpp"

#include <algorithm>
#include <cmath>

namespace greenlab::testing {

std::shared_ptr<const DomainMask> make_mask(int n, Index cells, const MaskSpec& spec, double extent) {
  return std::make_shared<const DomainMask>(build_domain(build_grid(n, cells, extent), spec));
}

std::shared_ptr<const DomainMask> box_mask(int n, Index cells, double extent) {
  return make_mask(n, cells, MaskSpec{}, extent);
}

std::shared_ptr<const CoefficientField> make_field(const StaggeredGrid& grid, CoefficientKind kind, std::uint64_t seed) {
  CoefficientSpec spec;
  spec.kind = kind;
  spec.amplitude = 0.3;
  spec.wavelength = 0.5;
  spec.contrast = 3.0;
  spec.block_cells = 2;
  spec.seed = seed;
  return std::make_shared<const CoefficientField>(generate_coefficients(grid, spec));
}

Problem make_problem(int n, Index cells, CoefficientKind kind, std::uint64_t seed) {
  Problem p;
  p.mask = box_mask(n, cells);
  p.field = make_field(p.mask->grid(), kind, seed);
  return p;
}

RhsData gaussian_rhs(const DomainMask& mask, std::uint64_t seed, bool force, bool flux, bool divergence) {
  const StaggeredGrid& grid = mask.grid();
  const int n = grid.dim();
  const Index cells = grid.num_cells();
  RhsData rhs = RhsData::zeros(grid);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (Index c : mask.interior_cells()) {
    for (int k = 0; k < n; ++k)
      if (force) rhs.f[static_cast<std::size_t>(k * cells + c)] = nd(rng);
    for (int k = 0; k < n * n; ++k)
      if (flux) rhs.f_alpha[static_cast<std::size_t>(k * cells + c)] = nd(rng);
    if (divergence) rhs.g[static_cast<std::size_t>(c)] = nd(rng);
  }
  if (divergence) {
    const double m = mask_mean(mask, rhs.g);
    for (Index c : mask.interior_cells()) rhs.g[static_cast<std::size_t>(c)] -= m;
  }
  return rhs;
}

Vector gaussian_vector(Index size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = nd(rng);
  return v;
}

double brute_lq(const StaggeredGrid& grid, const std::vector<double>& v, const std::vector<Index>& region, double q) {
  double s = 0.0;
  if (std::isinf(q)) {
    for (Index c : region) s = std::max(s, std::abs(v[static_cast<std::size_t>(c)]));
    return s;
  }
  for (Index c : region) s += std::pow(std::abs(v[static_cast<std::size_t>(c)]), q) * grid.cell_volume();
  return std::pow(s, 1.0 / q);
}

double brute_measure_above(const StaggeredGrid& grid, const std::vector<double>& v, const std::vector<Index>& region,
                           double t) {
  Index count = 0;
  for (Index c : region) count += std::abs(v[static_cast<std::size_t>(c)]) > t;
  return static_cast<double>(count) * grid.cell_volume();
}

double brute_holder(const StaggeredGrid& grid, const std::vector<double>& v, double mu, const std::vector<Index>& region,
                    double min_sep) {
  double best = 0.0;
  for (Index a : region)
    for (Index b : region) {
      const double d = distance(grid.cell_center(a), grid.cell_center(b));
      if (d < min_sep) continue;
      best = std::max(best, std::abs(v[static_cast<std::size_t>(a)] - v[static_cast<std::size_t>(b)]) / std::pow(d, mu));
    }
  return best;
}

}  // namespace greenlab::testing
