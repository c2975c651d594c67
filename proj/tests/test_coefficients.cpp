#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <Eigen/Dense>

#include "greenlab/coefficients.hpp"
#include "greenlab/error.hpp"
#include "support.hpp"

using namespace greenlab;
using testing::box_mask;
using testing::make_field;

namespace {

EllipticityBounds dense_bounds(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return {es.eigenvalues().minCoeff(), svd.singularValues().maxCoeff()};
}

// Brute-force modulus: every centre, every distinct discrete radius up to rho,
// ball = grid cells with centres within the radius.
double brute_bmo(const CoefficientField& a, const DomainMask& mask, double rho) {
  const auto& g = a.grid();
  const int n = g.dim();
  double best = 0.0;
  std::set<double> radii;
  for (Index c = 0; c < g.num_cells(); ++c) {
    const double d = distance(g.cell_center(c), g.cell_center(0));
    if (d <= rho * (1 + 1e-12)) radii.insert(d);
  }
  for (Index x : mask.interior_cells()) {
    for (double s : radii) {
      std::vector<Index> ball;
      for (Index c = 0; c < g.num_cells(); ++c)
        if (distance(g.cell_center(c), g.cell_center(x)) <= s * (1 + 1e-12)) ball.push_back(c);
      for (int al = 0; al < n; ++al)
        for (int be = 0; be < n; ++be) {
          double osc = 0.0;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              double mean = 0.0;
              for (Index c : ball) mean += a(c, al, be, i, j);
              mean /= static_cast<double>(ball.size());
              double dev = 0.0;
              for (Index c : ball) dev += std::abs(a(c, al, be, i, j) - mean);
              osc += dev / static_cast<double>(ball.size());
            }
          best = std::max(best, osc);
        }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("identity coefficients") {
  const auto g = build_grid(3, 4, 1.0);
  const auto a = make_field(g, CoefficientKind::identity);
  const auto e = check_ellipticity(*a);
  CHECK(e.lambda_eff == doctest::Approx(1.0));
  CHECK(e.upper_eff == doctest::Approx(1.0));
  CHECK(a->symmetric());
  CHECK((*a)(5, 0, 0, 1, 1) == 1.0);
  CHECK((*a)(5, 0, 1, 0, 1) == 0.0);
  CHECK((*a)(5, 1, 1, 2, 2) == 1.0);
}

TEST_CASE("ellipticity agrees with a dense eigen oracle") {
  const auto g = build_grid(3, 6, 1.0);
  for (auto kind : testing::kAllKinds) {
    const auto a = make_field(g, kind, 5);
    double lo = 1e300, hi = 0.0;
    for (Index c = 0; c < g.num_cells(); ++c) {
      const auto e = dense_bounds(a->cell_matrix(c));
      lo = std::min(lo, e.lambda_eff);
      hi = std::max(hi, e.upper_eff);
      const auto m = matrix_ellipticity(a->cell_matrix(c));
      CHECK(m.lambda_eff == doctest::Approx(e.lambda_eff).epsilon(1e-12));
      CHECK(m.upper_eff == doctest::Approx(e.upper_eff).epsilon(1e-12));
    }
    const auto e = check_ellipticity(*a);
    CHECK(e.lambda_eff == doctest::Approx(lo).epsilon(1e-12));
    CHECK(e.upper_eff == doctest::Approx(hi).epsilon(1e-12));
    CHECK(e.lambda_eff >= a->lambda_nominal());
    CHECK(e.upper_eff <= 1.0 / a->lambda_nominal());
  }
}

TEST_CASE("cell matrix layout and adjoint") {
  const auto g = build_grid(3, 4, 1.0);
  const auto a = make_field(g, CoefficientKind::random, 3);
  const CoefficientField b = a->adjoint();
  const int n = 3;
  for (Index c = 0; c < g.num_cells(); c += 7) {
    const Eigen::MatrixXd m = a->cell_matrix(c);
    for (int al = 0; al < n; ++al)
      for (int be = 0; be < n; ++be)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            CHECK(m(i * n + al, j * n + be) == (*a)(c, al, be, i, j));
            CHECK(b(c, al, be, i, j) == (*a)(c, be, al, j, i));
          }
    CHECK((b.cell_matrix(c) - m.transpose()).norm() == 0.0);
  }
  CHECK_FALSE(a->symmetric());
}

TEST_CASE("generation is deterministic in the seed") {
  const auto g = build_grid(3, 6, 1.0);
  const auto a = make_field(g, CoefficientKind::random, 9);
  const auto b = make_field(g, CoefficientKind::random, 9);
  const auto c = make_field(g, CoefficientKind::random, 10);
  CHECK(std::equal(a->data().begin(), a->data().end(), b->data().begin()));
  CHECK_FALSE(std::equal(a->data().begin(), a->data().end(), c->data().begin()));
}

TEST_CASE("ellipticity violation is rejected") {
  CoefficientSpec spec;
  spec.kind = CoefficientKind::checkerboard;
  spec.contrast = 50.0;
  spec.block_cells = 1;
  spec.lambda_nominal = 0.25;
  CHECK_THROWS_AS(generate_coefficients(build_grid(3, 4, 1.0), spec), ValidationError);
  CHECK_THROWS_AS(coefficient_kind_from_string("laminated"), ConfigError);
}

TEST_CASE("oscillation modulus matches a brute-force scan") {
  auto mask = box_mask(3, 6);
  const auto& g = mask->grid();
  const std::vector<double> rho{2 * g.h(), 2.5 * g.h()};
  for (auto kind : {CoefficientKind::smooth, CoefficientKind::checkerboard, CoefficientKind::random}) {
    const auto a = make_field(g, kind, 4);
    const auto rep = bmo_modulus(*a, *mask, rho);
    for (std::size_t i = 0; i < rho.size(); ++i) {
      CHECK(rep.omega[i] == doctest::Approx(brute_bmo(*a, *mask, rho[i])).epsilon(1e-12));
      CHECK(rep.omega[i] > 0.0);
    }
    CHECK(rep.omega[1] >= rep.omega[0]);
  }
  const auto id = make_field(g, CoefficientKind::identity);
  for (double w : bmo_modulus(*id, *mask, rho).omega) CHECK(w == 0.0);
  CHECK_THROWS_AS(bmo_modulus(*id, *mask, std::vector<double>{g.h()}), PreconditionError);
}

TEST_CASE("oscillation modulus is homogeneous of degree one") {
  auto mask = box_mask(3, 6);
  const auto a = make_field(mask->grid(), CoefficientKind::random, 8);
  const CoefficientField b = a->scaled(7.0);
  const std::vector<double> rho{0.4};
  CHECK(bmo_modulus(b, *mask, rho).omega[0] == doctest::Approx(7.0 * bmo_modulus(*a, *mask, rho).omega[0]).epsilon(1e-12));
}

TEST_CASE("coefficient round trip") {
  const auto g = build_grid(3, 4, 1.0);
  const auto a = make_field(g, CoefficientKind::smooth, 2);
  const auto prefix = std::filesystem::temp_directory_path() / "greenlab_coeff_rt";
  write_coefficients(*a, prefix);
  const CoefficientField b = read_coefficients(g, prefix);
  CHECK(std::equal(a->data().begin(), a->data().end(), b.data().begin()));
  CHECK(b.lambda_nominal() == a->lambda_nominal());
}
