#pragma once

#include <cstdint>
#include <vector>

#include "greenlab/assembly.hpp"

namespace greenlab {

/// Smooth random field: a sum of cosines with Gaussian amplitudes over integer
/// wave vectors |k|_inf <= max_wavenumber on the bounding box, evaluated at
/// physical cell centres (so the same seed gives the same function on every
/// grid), normalized to unit RMS and clamped to [-clamp, clamp]. Zero outside the mask.
std::vector<double> smooth_random_field(const DomainMask& mask, std::uint64_t seed, int max_wavenumber = 3,
                                        double clamp = 3.0);

struct RandomRhsSpec {
  bool force = true;
  bool flux = true;
  bool divergence = true;
  int max_wavenumber = 3;
};

/// Independent smooth fields for every component of f, f_a and g; g is made mean-zero.
RhsData random_rhs(const DomainMask& mask, std::uint64_t seed, const RandomRhsSpec& spec = {});

/// Subtracts the mask mean from a cell field (outside entries stay zero).
void remove_mask_mean(const DomainMask& mask, std::vector<double>& g);

}  // namespace greenlab
