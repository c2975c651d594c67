#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "greenlab/grid.hpp"

namespace greenlab {

enum class CoefficientKind { identity, smooth, checkerboard, random };

std::string to_string(CoefficientKind kind);
CoefficientKind coefficient_kind_from_string(const std::string& name);

/// Generator parameters. Each family is a perturbation of the identity
/// tensor delta_{alpha beta} delta_{ij}:
///   smooth:       I + amplitude * phi(x) * T,  |phi| <= 1 trigonometric
///   checkerboard: I + anisotropy * T on white blocks, contrast * (I - anisotropy * T) on black
///   random:       I + amplitude * R_cell with per-cell seeded R
/// T and R are non-symmetric with per-(alpha,beta) block l1 norm <= 1.
struct CoefficientSpec {
  CoefficientKind kind = CoefficientKind::identity;
  double amplitude = 0.0;
  double wavelength = 1.0;
  Index block_cells = 4;
  double contrast = 1.0;
  double anisotropy = 0.25;
  double lambda_nominal = 0.25;
  std::uint64_t seed = 0;
};

struct EllipticityBounds {
  double lambda_eff;  // min over cells of the smallest eigenvalue of sym(M)
  double upper_eff;   // max over cells of the spectral norm of M
};

/// Cellwise tensor a^{ij}_{alpha beta}. Per cell the n^4 entries are stored
/// in (alpha, beta, i, j) order. The n^2 x n^2 matrix M[(i,alpha),(j,beta)]
/// = a^{ij}_{alpha beta} is the form acting on gradients xi^i_alpha.
class CoefficientField {
 public:
  CoefficientField(StaggeredGrid grid, std::vector<double> data, double lambda_nominal, std::uint64_t seed);

  const StaggeredGrid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  double lambda_nominal() const { return lambda_nominal_; }
  std::uint64_t seed() const { return seed_; }
  /// True when every cell matrix M equals its transpose (L = L*).
  bool symmetric() const { return symmetric_; }

  double operator()(Index cell, int alpha, int beta, int i, int j) const {
    const int n = dim();
    return data_[static_cast<std::size_t>(cell * block_size() + ((alpha * n + beta) * n + i) * n + j)];
  }
  Index block_size() const { return static_cast<Index>(dim()) * dim() * dim() * dim(); }
  std::span<const double> data() const { return data_; }

  /// M[(i,alpha),(j,beta)] at one cell, rows/cols indexed i*n + alpha.
  Eigen::MatrixXd cell_matrix(Index cell) const;

  /// Coefficients of the adjoint operator: a*^{ij}_{alpha beta} = a^{ji}_{beta alpha}.
  CoefficientField adjoint() const;
  CoefficientField scaled(double factor) const;

 private:
  StaggeredGrid grid_;
  std::vector<double> data_;
  double lambda_nominal_;
  std::uint64_t seed_;
  bool symmetric_;
};

/// Fixed non-symmetric pattern tensor used by the generators (n^2 x n^2).
Eigen::MatrixXd pattern_tensor(int n);

CoefficientField generate_coefficients(const StaggeredGrid& grid, const CoefficientSpec& spec);

EllipticityBounds check_ellipticity(const CoefficientField& field);

/// Ellipticity of a single n^2 x n^2 form matrix.
EllipticityBounds matrix_ellipticity(const Eigen::MatrixXd& m);

struct OscillationReport {
  std::vector<double> rho_values;
  std::vector<double> omega;
  std::vector<Index> sup_center;  // mask cell achieving the sup (-1 if none)
  std::vector<double> sup_radius;
  std::string note = "balls restricted to the bounding box";
};

/// Discrete mean-oscillation modulus
///   omega_rho = sup_{x in Omega} sup_{s <= rho} max_{alpha,beta} avg_{B_s(x)} sum_{ij} |a - (a)_{B_s(x)}|,
/// balls realized as grid cells whose centers lie within distance s (clipped to the box).
OscillationReport bmo_modulus(const CoefficientField& field, const DomainMask& mask, std::span<const double> rho_list);

/// Writes `<prefix>.bin` (float64) and `<prefix>.json`
/// {n, cells_per_axis, layout, lambda_nominal, seed}.
void write_coefficients(const CoefficientField& field, const std::filesystem::path& prefix);
CoefficientField read_coefficients(const StaggeredGrid& grid, const std::filesystem::path& prefix);

}  // namespace greenlab
