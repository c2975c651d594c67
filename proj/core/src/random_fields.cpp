#include "greenlab/random_fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "greenlab/error.hpp"

namespace greenlab {

std::vector<double> smooth_random_field(const DomainMask& mask, std::uint64_t seed, int max_wavenumber, double clamp) {
  if (max_wavenumber < 1) throw PreconditionError("max_wavenumber must be positive");
  const StaggeredGrid& grid = mask.grid();
  const int n = grid.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  struct Mode {
    std::array<double, 3> k;
    double amp;
    double phi;
  };
  std::vector<Mode> modes;
  const int K = max_wavenumber;
  for (int a = 0; a <= K; ++a)
    for (int b = -K; b <= K; ++b)
      for (int c = (n == 3 ? -K : 0); c <= (n == 3 ? K : 0); ++c) {
        if (a == 0 && (b < 0 || (b == 0 && c <= 0))) continue;
        const double k2 = a * a + b * b + c * c;
        Mode m;
        m.k = {2.0 * std::numbers::pi * a / grid.extent(0), 2.0 * std::numbers::pi * b / grid.extent(1),
               n == 3 ? 2.0 * std::numbers::pi * c / grid.extent(2) : 0.0};
        m.amp = normal(rng) / (1.0 + k2);
        m.phi = phase(rng);
        modes.push_back(m);
      }

  std::vector<double> out(static_cast<std::size_t>(grid.num_cells()), 0.0);
  for (Index cell : mask.interior_cells()) {
    const Point x = grid.cell_center(cell);
    double v = 0.0;
    for (const Mode& m : modes) {
      const double arg = m.k[0] * (x[0] - grid.origin()[0]) + m.k[1] * (x[1] - grid.origin()[1]) +
                         m.k[2] * (x[2] - grid.origin()[2]) + m.phi;
      v += m.amp * std::cos(arg);
    }
    out[static_cast<std::size_t>(cell)] = v;
  }
  double power = 0.0;
  for (const Mode& m : modes) power += 0.5 * m.amp * m.amp;
  const double scale = power > 0.0 ? 1.0 / std::sqrt(power) : 0.0;
  for (Index cell : mask.interior_cells()) {
    double& v = out[static_cast<std::size_t>(cell)];
    v = std::clamp(v * scale, -clamp, clamp);
  }
  return out;
}

void remove_mask_mean(const DomainMask& mask, std::vector<double>& g) {
  const double m = mask_mean(mask, g);
  for (Index c : mask.interior_cells()) g[static_cast<std::size_t>(c)] -= m;
}

RhsData random_rhs(const DomainMask& mask, std::uint64_t seed, const RandomRhsSpec& spec) {
  const StaggeredGrid& grid = mask.grid();
  const int n = grid.dim();
  const auto cells = static_cast<std::size_t>(grid.num_cells());
  RhsData rhs = RhsData::zeros(grid);
  std::seed_seq seq{seed, std::uint64_t{0x51ab}};
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n + n * n + 1));
  {
    std::vector<std::uint32_t> raw(seeds.size() * 2);
    seq.generate(raw.begin(), raw.end());
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = (std::uint64_t{raw[2 * i]} << 32) | raw[2 * i + 1];
  }
  std::size_t next = 0;
  auto fill = [&](std::vector<double>& target, std::size_t comp, bool enabled) {
    const std::uint64_t s = seeds[next++];
    if (!enabled) return;
    const auto field = smooth_random_field(mask, s, spec.max_wavenumber);
    std::copy(field.begin(), field.end(), target.begin() + static_cast<std::ptrdiff_t>(comp * cells));
  };
  for (int k = 0; k < n; ++k) fill(rhs.f, static_cast<std::size_t>(k), spec.force);
  for (int k = 0; k < n * n; ++k) fill(rhs.f_alpha, static_cast<std::size_t>(k), spec.flux);
  fill(rhs.g, 0, spec.divergence);
  if (spec.divergence) remove_mask_mean(mask, rhs.g);
  return rhs;
}

}  // namespace greenlab
