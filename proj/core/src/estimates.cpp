#include "greenlab/estimates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "greenlab/error.hpp"
#include "greenlab/parallel.hpp"

namespace greenlab {

namespace {

void require_region(std::span<const Index> region) {
  if (region.empty()) throw PreconditionError("empty region");
}

double vector_lq(const StaggeredGrid& grid, std::span<const double> comps, int ncomp, std::span<const Index> region,
                 double q) {
  const auto cells = static_cast<std::size_t>(grid.num_cells());
  std::vector<double> mag(cells, 0.0);
  for (Index c : region) {
    double s = 0.0;
    for (int k = 0; k < ncomp; ++k) {
      const double v = comps[static_cast<std::size_t>(k) * cells + static_cast<std::size_t>(c)];
      s += v * v;
    }
    mag[static_cast<std::size_t>(c)] = std::sqrt(s);
  }
  return lq_norm(grid, mag, region, q);
}

template <class Diff>
double holder_scan(const StaggeredGrid& grid, double mu, std::span<const Index> region, double min_sep,
                   std::uint64_t seed, Diff diff) {
  if (!(mu > 0.0 && mu <= 1.0)) throw PreconditionError("Hoelder exponent must lie in (0, 1]");
  if (min_sep < 2.0 * grid.h() * (1.0 - 1e-12)) throw PreconditionError("min_sep must be at least 2h");
  require_region(region);
  std::vector<Point> centers(region.size());
  for (std::size_t i = 0; i < region.size(); ++i) centers[i] = grid.cell_center(region[i]);

  double best = 0.0;
  bool any = false;
  if (region.size() <= kHolderExhaustiveCells) {
    for (std::size_t a = 0; a < region.size(); ++a)
      for (std::size_t b = a + 1; b < region.size(); ++b) {
        const double d = distance(centers[a], centers[b]);
        if (d < min_sep) continue;
        any = true;
        best = std::max(best, diff(region[a], region[b]) / std::pow(d, mu));
      }
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, region.size() - 1);
    std::size_t accepted = 0, attempts = 0;
    while (accepted < kHolderSampledPairs && attempts < 50 * kHolderSampledPairs) {
      ++attempts;
      const std::size_t a = pick(rng), b = pick(rng);
      const double d = distance(centers[a], centers[b]);
      if (d < min_sep) continue;
      ++accepted;
      any = true;
      best = std::max(best, diff(region[a], region[b]) / std::pow(d, mu));
    }
  }
  if (!any) throw PreconditionError("region too small for the requested pair separation");
  return best;
}

double ball_average_sq_velocity(const Eigen::MatrixXd& vel, std::span<const Index> cells) {
  double s = 0.0;
  for (Index c : cells) s += vel.col(c).squaredNorm();
  return s / static_cast<double>(cells.size());
}

void require_ball(const DomainMask& mask, const Point& center, double radius) {
  if (!(radius > 0.0)) throw PreconditionError("ball radius must be positive");
  if (!ball_inside_mask(mask, center, radius)) throw PreconditionError("ball leaves the domain");
}

}  // namespace

double lq_norm(const StaggeredGrid& grid, std::span<const double> values, std::span<const Index> region, double q) {
  require_region(region);
  if (!(q >= 1.0)) throw PreconditionError("q must be >= 1");
  if (std::isinf(q)) {
    double m = 0.0;
    for (Index c : region) m = std::max(m, std::abs(values[static_cast<std::size_t>(c)]));
    return m;
  }
  double s = 0.0;
  for (Index c : region) s += std::pow(std::abs(values[static_cast<std::size_t>(c)]), q);
  return std::pow(s * grid.cell_volume(), 1.0 / q);
}

std::vector<double> distribution_function(const StaggeredGrid& grid, std::span<const double> values,
                                          std::span<const Index> region, std::span<const double> thresholds) {
  require_region(region);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw PreconditionError("thresholds must be positive");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw PreconditionError("thresholds must be ascending");
  }
  std::vector<double> mags;
  mags.reserve(region.size());
  for (Index c : region) mags.push_back(std::abs(values[static_cast<std::size_t>(c)]));
  std::sort(mags.begin(), mags.end());
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto above = mags.end() - std::upper_bound(mags.begin(), mags.end(), t);
    out.push_back(static_cast<double>(above) * grid.cell_volume());
  }
  return out;
}

double holder_seminorm(const StaggeredGrid& grid, std::span<const double> values, double mu,
                       std::span<const Index> region, double min_sep, std::uint64_t seed) {
  return holder_scan(grid, mu, region, min_sep, seed, [&](Index a, Index b) {
    return std::abs(values[static_cast<std::size_t>(a)] - values[static_cast<std::size_t>(b)]);
  });
}

double holder_seminorm(const StaggeredGrid& grid, const Eigen::MatrixXd& values, double mu,
                       std::span<const Index> region, double min_sep, std::uint64_t seed) {
  return holder_scan(grid, mu, region, min_sep, seed, [&](Index a, Index b) { return (values.col(a) - values.col(b)).norm(); });
}

Eigen::MatrixXd cell_velocity_field(const StokesField& field) {
  const DofMap& dofs = *field.dofs;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dofs.dim(), dofs.grid().num_cells());
  for (Index cell : dofs.pressure_cells())
    for (int a = 0; a < dofs.dim(); ++a) out(a, cell) = dofs.cell_velocity(field.u, cell, a);
  return out;
}

std::vector<double> velocity_magnitude(const StokesField& field) {
  const Eigen::MatrixXd v = cell_velocity_field(field);
  std::vector<double> out(static_cast<std::size_t>(v.cols()));
  for (Index c = 0; c < v.cols(); ++c) out[static_cast<std::size_t>(c)] = v.col(c).norm();
  return out;
}

std::vector<double> corner_gradient_norms(const DofMap& dofs, const Vector& u) {
  const int n = dofs.dim();
  const int corners = dofs.corners_per_cell();
  std::vector<double> out(static_cast<std::size_t>(dofs.num_pressure() * corners));
  std::vector<DerivativeStencil> st(static_cast<std::size_t>(n * n));
  for (Index q = 0; q < dofs.num_pressure(); ++q) {
    for (int k = 0; k < corners; ++k) {
      dofs.corner_gradient(dofs.pressure_cells()[static_cast<std::size_t>(q)], k, st);
      double s = 0.0;
      for (const auto& d : st) {
        const double v = d.apply(u);
        s += v * v;
      }
      out[static_cast<std::size_t>(q * corners + k)] = std::sqrt(s);
    }
  }
  return out;
}

double gradient_lq_norm(const DofMap& dofs, const Vector& u, double q) {
  const std::vector<double> norms = corner_gradient_norms(dofs, u);
  if (std::isinf(q)) return norms.empty() ? 0.0 : *std::max_element(norms.begin(), norms.end());
  double s = 0.0;
  for (double v : norms) s += std::pow(v, q);
  return std::pow(s * dofs.corner_weight(), 1.0 / q);
}

std::vector<Index> grid_cells_in_ball(const StaggeredGrid& grid, const Point& center, double radius) {
  std::vector<Index> out;
  std::array<Index, 3> lo{0, 0, 0}, hi{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const auto sa = static_cast<std::size_t>(a);
    if (a >= grid.dim()) continue;
    lo[sa] = std::max<Index>(0, static_cast<Index>(std::floor((center[sa] - radius - grid.origin()[sa]) / grid.h() - 0.5)));
    hi[sa] = std::min<Index>(grid.cells(a) - 1,
                             static_cast<Index>(std::ceil((center[sa] + radius - grid.origin()[sa]) / grid.h() - 0.5)));
  }
  for (Index k = lo[2]; k <= hi[2]; ++k)
    for (Index j = lo[1]; j <= hi[1]; ++j)
      for (Index i = lo[0]; i <= hi[0]; ++i) {
        const CellCoord c{i, j, k};
        if (distance(grid.cell_center(c), center) <= radius) out.push_back(grid.cell_index(c));
      }
  return out;
}

bool ball_inside_mask(const DomainMask& mask, const Point& center, double radius) {
  const StaggeredGrid& grid = mask.grid();
  for (int a = 0; a < grid.dim(); ++a) {
    const auto sa = static_cast<std::size_t>(a);
    if (center[sa] - radius < grid.origin()[sa] || center[sa] + radius > grid.origin()[sa] + grid.extent(a)) return false;
  }
  const auto cells = grid_cells_in_ball(grid, center, radius);
  if (cells.empty()) return false;
  return std::all_of(cells.begin(), cells.end(), [&](Index c) { return mask.is_interior(c); });
}

BallRatio caccioppoli_ratio(const StokesField& solution, const Point& center, double radius) {
  const DofMap& dofs = *solution.dofs;
  const StaggeredGrid& grid = dofs.grid();
  require_ball(dofs.mask(), center, radius);
  const auto outer = grid_cells_in_ball(grid, center, radius);
  const auto inner = grid_cells_in_ball(grid, center, 0.5 * radius);
  if (inner.empty()) throw PreconditionError("inner ball contains no cells");
  const double vol = grid.cell_volume();
  const Eigen::MatrixXd vel = cell_velocity_field(solution);
  const Vector grad_sq = dofs.cell_gradient_sq(solution.u);

  double p_mean = 0.0;
  for (Index c : inner) p_mean += solution.p(dofs.pressure_dof(c));
  p_mean /= static_cast<double>(inner.size());
  double numerator = 0.0;
  for (Index c : inner) {
    const double dp = solution.p(dofs.pressure_dof(c)) - p_mean;
    numerator += (dp * dp + grad_sq(dofs.pressure_dof(c))) * vol;
  }
  double mass = 0.0;
  for (Index c : outer) mass += vel.col(c).squaredNorm() * vol;
  const double denominator = mass / (radius * radius);
  if (denominator == 0.0) return BallRatio{0.0, true};
  return BallRatio{numerator / denominator, false};
}

BallRatio reverse_holder_ratio(const StokesField& solution, const Point& center, double radius, double q0) {
  if (!(q0 > 2.0)) throw PreconditionError("reverse Hoelder exponent must exceed 2");
  const DofMap& dofs = *solution.dofs;
  const StaggeredGrid& grid = dofs.grid();
  require_ball(dofs.mask(), center, radius);
  const auto outer = grid_cells_in_ball(grid, center, radius);
  const auto inner = grid_cells_in_ball(grid, center, 0.5 * radius);
  if (inner.empty()) throw PreconditionError("inner ball contains no cells");
  const std::vector<double> norms = corner_gradient_norms(dofs, solution.u);
  const int corners = dofs.corners_per_cell();
  auto mean_power = [&](const std::vector<Index>& cells, double q) {
    double s = 0.0;
    for (Index c : cells) {
      const Index base = dofs.pressure_dof(c) * corners;
      for (int k = 0; k < corners; ++k) s += std::pow(norms[static_cast<std::size_t>(base + k)], q);
    }
    return s / static_cast<double>(cells.size() * static_cast<std::size_t>(corners));
  };
  const double rhs = std::sqrt(mean_power(outer, 2.0));
  if (rhs == 0.0) return BallRatio{0.0, true};
  return BallRatio{std::pow(mean_power(inner, q0), 1.0 / q0) / rhs, false};
}

DecayFit decay_exponent_fit(std::span<const double> r, std::span<const double> magnitude) {
  if (r.size() != magnitude.size()) throw PreconditionError("sample arrays differ in length");
  if (r.size() < 5) throw PreconditionError("decay fit needs at least 5 samples");
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] > 0.0) || !(magnitude[i] > 0.0)) throw PreconditionError("decay samples must be positive");
    rmin = std::min(rmin, r[i]);
    rmax = std::max(rmax, r[i]);
  }
  if (rmax < 2.0 * rmin) throw PreconditionError("decay samples must span at least one octave");
  const auto m = static_cast<double>(r.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    sx += std::log(r[i]);
    sy += std::log(magnitude[i]);
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double dx = std::log(r[i]) - mx, dy = std::log(magnitude[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  DecayFit fit;
  fit.exponent = sxy / sxx;
  fit.prefactor = std::exp(my - fit.exponent * mx);
  const double ss_res = std::max(0.0, syy - fit.exponent * sxy);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

ProbeResult a1_constant_probe(std::span<const BallTrial> trials, double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw PreconditionError("mu must lie in (0, 1]");
  ProbeResult out;
  for (const BallTrial& t : trials) {
    if (t.field == nullptr) throw PreconditionError("trial without a solution");
    const DofMap& dofs = *t.field->dofs;
    const StaggeredGrid& grid = dofs.grid();
    require_ball(dofs.mask(), t.center, t.radius);
    const Eigen::MatrixXd vel = cell_velocity_field(*t.field);
    const auto outer = grid_cells_in_ball(grid, t.center, t.radius);
    const auto inner = grid_cells_in_ball(grid, t.center, 0.5 * t.radius);
    const double mean_sq = ball_average_sq_velocity(vel, outer);
    if (mean_sq == 0.0) {
      ++out.skipped;
      continue;
    }
    const double semi = holder_seminorm(grid, vel, mu, inner, 2.0 * grid.h());
    const double v = std::pow(t.radius, mu) * semi / std::sqrt(mean_sq);
    out.values.push_back(v);
    out.sup = std::max(out.sup, v);
  }
  if (out.values.empty()) throw PreconditionError("no valid balls for the A1 probe");
  return out;
}

ProbeResult a2_bound_probe(const StokesSolver& solver, double t_exp, std::span<const A2Trial> trials) {
  const SaddleSystem& system = solver.system();
  const StaggeredGrid& grid = system.grid();
  const int n = grid.dim();
  if (!(t_exp > n)) throw PreconditionError("the A2 exponent t must exceed the dimension");
  ProbeResult out;
  for (const A2Trial& t : trials) {
    if (t.rhs.is_zero()) {
      ++out.skipped;
      continue;
    }
    if (std::any_of(t.rhs.f_alpha.begin(), t.rhs.f_alpha.end(), [](double x) { return x != 0.0; })) {
      throw PreconditionError("A2 trials take f and g only");
    }
    auto [field, stats] = solver.solve(t.rhs);
    const auto outer = cells_in_ball(system.mask(), t.center, t.radius);
    const auto inner = cells_in_ball(system.mask(), t.center, 0.5 * t.radius);
    if (outer.empty() || inner.empty()) {
      ++out.skipped;
      continue;
    }
    const std::vector<double> umag = velocity_magnitude(field);
    const std::vector<double> p = field.pressure();
    const double R = t.radius;
    const double lhs = lq_norm(grid, umag, inner, std::numeric_limits<double>::infinity());
    const double rhs = std::pow(R, -0.5 * n) * lq_norm(grid, umag, outer, 2.0) +
                       std::pow(R, 1.0 - n + n / t_exp) * lq_norm(grid, p, outer, t_exp / (t_exp - 1.0)) +
                       R * R * vector_lq(grid, t.rhs.f, n, outer, std::numeric_limits<double>::infinity()) +
                       std::pow(R, 1.0 - n / t_exp) * lq_norm(grid, t.rhs.g, outer, t_exp);
    if (rhs == 0.0) {
      ++out.skipped;
      continue;
    }
    out.values.push_back(lhs / rhs);
    out.sup = std::max(out.sup, lhs / rhs);
  }
  return out;
}

double lq_ratio(const SaddleSystem& system, const StokesField& field, const RhsData& rhs, double q) {
  const StaggeredGrid& grid = system.grid();
  const int n = grid.dim();
  const auto& region = system.mask().interior_cells();
  const std::vector<double> p = field.pressure();
  const double num = lq_norm(grid, p, region, q) + gradient_lq_norm(*system.dofs, field.u, q);
  const double den = vector_lq(grid, rhs.f, n, region, q) + vector_lq(grid, rhs.f_alpha, n * n, region, q) +
                     lq_norm(grid, rhs.g, region, q);
  if (den == 0.0) throw PreconditionError("trial right-hand side is zero");
  return num / den;
}

LqSweepResult lq_constant_sweep(const StokesSolver& solver, double q, std::span<const RhsData> trials) {
  if (!(q > 1.0) || std::isinf(q)) throw PreconditionError("q must lie in (1, infinity)");
  LqSweepResult out;
  std::vector<double> ratios(trials.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(trials.size());
  parallel_chunks(static_cast<Index>(trials.size()), [&](int, Index b, Index e) {
    for (Index i = b; i < e; ++i) {
      const auto si = static_cast<std::size_t>(i);
      try {
        auto [field, stats] = solver.solve(trials[si]);
        ratios[si] = lq_ratio(solver.system(), field, trials[si], q);
      } catch (const Error& err) {
        errors[si] = err.what();
      }
    }
  });
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (!errors[i].empty()) {
      out.failures.push_back("trial " + std::to_string(i) + ": " + errors[i]);
      continue;
    }
    out.ratios.push_back(ratios[i]);
    out.sup = std::max(out.sup, ratios[i]);
  }
  return out;
}

}  // namespace greenlab
