#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "greenlab/error.hpp"
#include "greenlab/random_fields.hpp"
#include "greenlab/solver.hpp"
#include "support.hpp"

using namespace greenlab;
using testing::gaussian_rhs;

namespace {

Vector stacked(const StokesField& f) {
  Vector x(f.u.size() + f.p.size());
  x << f.u, f.p;
  return x;
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("iterative solve matches the dense oracle") {
  for (Index cells : {6, 8}) {
    for (auto kind : testing::kAllKinds) {
      const auto p = testing::make_problem(3, cells, kind, 2);
      const SaddleSystem sys = assemble_system(p.field, p.mask, false);
      const RhsData rhs = gaussian_rhs(*p.mask, 17);
      const auto [f, stats] = solve_stokes(sys, rhs, 1e-11);
      CHECK(stats.converged);
      const StokesField ref = solve_dense_oracle(sys, rhs);
      CHECK(rel(stacked(f), stacked(ref)) <= 1e-8);
      CHECK(std::abs(f.p.mean()) < 1e-12 * f.p.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("solution satisfies the saddle system") {
  MaskSpec spec;
  spec.kind = MaskKind::staircase_lipschitz;
  spec.offset = 0.2;
  spec.lipschitz = 0.6;
  auto mask = testing::make_mask(3, 8, spec);
  const auto a = testing::make_field(mask->grid(), CoefficientKind::random, 3);
  const SaddleSystem sys = assemble_system(a, mask, false);
  const RhsData rhs = gaussian_rhs(*mask, 5);
  const auto [f, stats] = solve_stokes(sys, rhs, 1e-12);
  const Vector b = build_rhs(sys, rhs);
  CHECK((sys.apply(stacked(f)) - b).norm() <= 1e-10 * b.norm());
  CHECK(stats.final_relative_residual <= 1e-12);
  CHECK(stats.energy_ratio == doctest::Approx(energy_ratio(sys, f, rhs)).epsilon(1e-14));
}

TEST_CASE("zero data give the zero solution without iterating") {
  const auto p = testing::make_problem(3, 6, CoefficientKind::smooth);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  const auto [f, stats] = solve_stokes(sys, RhsData::zeros(p.mask->grid()), 1e-10);
  CHECK(stats.iterations == 0);
  CHECK(f.u.norm() == 0.0);
  CHECK(f.p.norm() == 0.0);
}

TEST_CASE("linearity") {
  const auto p = testing::make_problem(3, 8, CoefficientKind::checkerboard);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  const StokesSolver solver(sys, SolveOptions{1e-12, 3000, 120});
  const RhsData r1 = gaussian_rhs(*p.mask, 1), r2 = gaussian_rhs(*p.mask, 2);
  const double al = 0.7, be = -2.3;
  RhsData r3 = r1;
  for (auto [dst, a, b] : {std::tuple{&r3.f, &r1.f, &r2.f}, std::tuple{&r3.f_alpha, &r1.f_alpha, &r2.f_alpha},
                           std::tuple{&r3.g, &r1.g, &r2.g}})
    for (std::size_t i = 0; i < dst->size(); ++i) (*dst)[i] = al * (*a)[i] + be * (*b)[i];
  const Vector x1 = stacked(solver.solve(r1).first), x2 = stacked(solver.solve(r2).first);
  const Vector x3 = stacked(solver.solve(r3).first);
  CHECK(rel(x3, al * x1 + be * x2) <= 1e-9);
}

TEST_CASE("adjoint duality") {
  for (auto kind : testing::kAllKinds) {
    const auto p = testing::make_problem(3, 8, kind, 13);
    const SaddleSystem sys = assemble_system(p.field, p.mask, false);
    const SaddleSystem adj = assemble_system(p.field, p.mask, true);
    for (int t = 0; t < 3; ++t) {
      const RhsData r1 = gaussian_rhs(*p.mask, 100 + t), r2 = gaussian_rhs(*p.mask, 200 + t);
      const Vector x1 = stacked(solve_stokes(sys, r1, 1e-12).first);
      const Vector x2 = stacked(solve_stokes(adj, r2, 1e-12).first);
      const double lhs = x1.dot(build_rhs(adj, r2)), rhs = build_rhs(sys, r1).dot(x2);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
  }
}

TEST_CASE("solver options are validated") {
  const auto p = testing::make_problem(3, 6, CoefficientKind::identity);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  CHECK_THROWS_AS(StokesSolver(sys, SolveOptions{1e-20, 100, 30}), PreconditionError);
  CHECK_THROWS_AS(StokesSolver(sys, SolveOptions{1e-2, 100, 30}), PreconditionError);
  RhsData bad = gaussian_rhs(*p.mask, 1);
  bad.g[0] += 1.0;
  CHECK_THROWS_AS(solve_stokes(sys, bad, 1e-10), PreconditionError);
}

TEST_CASE("iteration cap surfaces as a solver error") {
  const auto p = testing::make_problem(3, 8, CoefficientKind::random);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  CHECK_THROWS_AS(solve_stokes(sys, gaussian_rhs(*p.mask, 3), SolveOptions{1e-12, 2, 2}), SolverError);
}

TEST_CASE("solve stats are a json line") {
  const auto p = testing::make_problem(3, 6, CoefficientKind::identity);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  const auto [f, stats] = solve_stokes(sys, gaussian_rhs(*p.mask, 2), 1e-10);
  const std::string line = stats.json_line();
  CHECK(line.find('\n') == std::string::npos);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("iterations").get<int>() == stats.iterations);
  CHECK(j.contains("final_relative_residual"));
  CHECK(j.contains("wall_time"));
  CHECK(j.contains("method"));
}

TEST_CASE("Bogovskii right inverse") {
  auto mask = testing::box_mask(3, 8);
  std::vector<double> g = smooth_random_field(*mask, 4, 2);
  remove_mask_mean(*mask, g);
  const BogovskiiResult r = bogovskii_solve(*mask, g, 1e-12);
  CHECK(r.divergence_residual <= 1e-10);
  CHECK(r.norm_ratio > 0.0);
  // Minimal energy: perturbing by a discretely divergence-free field raises ||Du||.
  const SaddleSystem sys = identity_system(mask);
  const Vector& u = r.field.u;
  const double e0 = sys.dofs->gradient_energy(u);
  for (int t = 0; t < 5; ++t) {
    const Vector z = testing::gaussian_vector(sys.velocity_dof(), 50 + t);
    // Project z onto ker(div) with the identity Stokes solve: w = z - u_z, div u_z = div z.
    std::vector<double> dz(static_cast<std::size_t>(mask->grid().num_cells()), 0.0);
    const Vector div = divergence(*sys.dofs, z);
    for (Index q = 0; q < div.size(); ++q) dz[static_cast<std::size_t>(sys.dofs->pressure_cells()[static_cast<std::size_t>(q)])] = div(q);
    const Vector w = z - bogovskii_solve(*mask, dz, 1e-12).field.u;
    CHECK(divergence(*sys.dofs, w).norm() < 1e-8 * z.norm());
    CHECK(sys.dofs->gradient_energy(u + 0.1 * w) >= e0);
    CHECK(std::abs(u.dot(sys.L * w)) <= 1e-8 * std::sqrt(e0 * sys.dofs->gradient_energy(w)));
  }
  // Linear in g.
  std::vector<double> g2 = g;
  for (double& v : g2) v *= 3.0;
  CHECK(rel(bogovskii_solve(*mask, g2, 1e-12).field.u, 3.0 * u) <= 1e-9);
  CHECK_THROWS_AS(bogovskii_solve(*mask, std::vector<double>(3, 0.0), 1e-10), PreconditionError);
}

TEST_CASE("inf-sup constant matches a dense SVD") {
  for (int n : {2, 3}) {
    auto mask = testing::box_mask(n, 6);
    const SaddleSystem sys = identity_system(mask);
    const double hn = mask->grid().cell_volume();
    const Eigen::MatrixXd L(sys.L), B(sys.B);
    const Eigen::LLT<Eigen::MatrixXd> llt(L);
    const Eigen::MatrixXd R = llt.matrixU();
    // Singular values of h^{-n/2} B R^{-1}.
    const Eigen::MatrixXd M = (R.transpose().triangularView<Eigen::Lower>().solve(B.transpose())).transpose() / std::sqrt(hn);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const Eigen::VectorXd s = svd.singularValues();
    // The smallest singular value belongs to the constant pressure and is zero.
    CHECK(s(s.size() - 1) < 1e-10);
    const double beta = s(s.size() - 2);
    const InfSupResult r = estimate_infsup(sys);
    CHECK(r.converged);
    CHECK(r.beta == doctest::Approx(beta).epsilon(1e-6));
  }
}

TEST_CASE("inf-sup constant on a one-cell slab is small but finite") {
  MaskSpec spec;
  spec.kind = MaskKind::half_space_graph;
  spec.offset = 1.0 - 1.0 / 8.0;
  auto slab = testing::make_mask(3, 8, spec);
  const InfSupResult thin = estimate_infsup(identity_system(slab));
  const InfSupResult full = estimate_infsup(identity_system(testing::box_mask(3, 8)));
  CHECK(thin.beta > 0.0);
  CHECK(thin.beta < full.beta);
}

TEST_CASE("dense oracle size guard") {
  auto mask = testing::box_mask(3, 24);
  const SaddleSystem sys = identity_system(mask);
  REQUIRE(sys.velocity_dof() + sys.pressure_dof() > kDenseOracleMaxDof);
  CHECK_THROWS_AS(solve_dense_oracle(sys, RhsData::zeros(mask->grid())), PreconditionError);
}
