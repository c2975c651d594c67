#pragma once

#include <memory>
#include <random>

#include "greenlab/assembly.hpp"
#include "greenlab/coefficients.hpp"
#include "greenlab/grid.hpp"

namespace greenlab::testing {

struct Problem {
  std::shared_ptr<const DomainMask> mask;
  std::shared_ptr<const CoefficientField> field;
};

std::shared_ptr<const DomainMask> box_mask(int n, Index cells, double extent = 1.0);
std::shared_ptr<const DomainMask> make_mask(int n, Index cells, const MaskSpec& spec, double extent = 1.0);

/// Coefficients of `kind` with moderate amplitude/contrast and a fixed seed.
std::shared_ptr<const CoefficientField> make_field(const StaggeredGrid& grid, CoefficientKind kind,
                                                    std::uint64_t seed = 11);

Problem make_problem(int n, Index cells, CoefficientKind kind, std::uint64_t seed = 11);

/// Gaussian rhs on the interior, g made mean-zero.
RhsData gaussian_rhs(const DomainMask& mask, std::uint64_t seed, bool force = true, bool flux = true,
                     bool divergence = true);

Vector gaussian_vector(Index size, std::uint64_t seed);

/// Brute-force metric oracles over an explicit cell list.
double brute_lq(const StaggeredGrid& grid, const std::vector<double>& v, const std::vector<Index>& region, double q);
double brute_measure_above(const StaggeredGrid& grid, const std::vector<double>& v, const std::vector<Index>& region,
                           double t);
double brute_holder(const StaggeredGrid& grid, const std::vector<double>& v, double mu, const std::vector<Index>& region,
                    double min_sep);

inline constexpr CoefficientKind kAllKinds[] = {CoefficientKind::identity, CoefficientKind::smooth,
                                                CoefficientKind::checkerboard, CoefficientKind::random};

}  // namespace greenlab::testing
