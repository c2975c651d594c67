#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "greenlab/error.hpp"
#include "greenlab/green.hpp"
#include "greenlab/random_fields.hpp"
#include "support.hpp"

using namespace greenlab;

namespace {

Index center_cell(const StaggeredGrid& g) { return g.cell_index({g.cells(0) / 2, g.cells(1) / 2, g.dim() == 3 ? g.cells(2) / 2 : 0}); }

// Centred-difference divergence of a matrix field column at x.
double fd_divergence(const std::function<Eigen::Matrix3d(const Point&)>& G, const Point& x, int k) {
  const double d = 1e-5;
  double s = 0.0;
  for (int a = 0; a < 3; ++a) {
    Point p = x, m = x;
    p[static_cast<std::size_t>(a)] += d;
    m[static_cast<std::size_t>(a)] -= d;
    s += (G(p)(a, k) - G(m)(a, k)) / (2 * d);
  }
  return s;
}

}  // namespace

TEST_CASE("source is a normalized ball indicator") {
  auto mask = testing::box_mask(3, 8);
  const auto& g = mask->grid();
  const Index y = center_cell(g);
  for (double eps : {g.h(), 1.5 * g.h(), 2.0 * g.h()}) {
    const RhsData src = green_source(*mask, y, 1, eps);
    double total = 0.0;
    for (int k = 0; k < 3; ++k)
      for (Index c = 0; c < g.num_cells(); ++c) {
        const double v = src.f[static_cast<std::size_t>(k * g.num_cells() + c)];
        if (k != 1) CHECK(v == 0.0);
        if (v != 0.0) CHECK(distance(g.cell_center(c), g.cell_center(y)) <= eps);
        total += v * g.cell_volume();
      }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(check_pole(*mask, y, 0.5 * g.h()), PreconditionError);
  CHECK_THROWS_AS(check_pole(*mask, y, 0.6), PreconditionError);
}

TEST_CASE("column solves the saddle system with the ball source") {
  const auto p = testing::make_problem(3, 8, CoefficientKind::smooth);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  const Index y = center_cell(p.mask->grid());
  const GreenColumn col = averaged_green_column(sys, y, 2, 1.5 * p.mask->grid().h(), 1e-12);
  Vector x(col.field.u.size() + col.field.p.size());
  x << col.field.u, col.field.p;
  const Vector b = build_rhs(sys, green_source(*p.mask, y, 2, col.epsilon));
  CHECK((sys.apply(x) - b).norm() <= 1e-10 * b.norm());
  CHECK(divergence(*sys.dofs, col.field.u).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(col.energy_norm > 0.0);
  CHECK(col.ball_measure == doctest::Approx(static_cast<double>(col.ball_cells.size()) * p.mask->grid().cell_volume()));
}

TEST_CASE("green function symmetry") {
  for (auto kind : testing::kAllKinds) {
    const auto p = testing::make_problem(3, 8, kind, 3);
    const SaddleSystem sys = assemble_system(p.field, p.mask, false);
    const SaddleSystem adj = assemble_system(p.field, p.mask, true);
    GreenFunction gp(sys, SolveOptions{1e-11}), ga(adj, SolveOptions{1e-11});
    const auto& g = p.mask->grid();
    const Index x = g.cell_index({2, 2, 3}), y = g.cell_index({5, 5, 4});
    CHECK(symmetry_defect(gp, ga, x, y, g.h()) <= 1e-6);
    CHECK(symmetry_defect(gp, ga, x, y, 1.5 * g.h()) <= 1e-6);
  }
}

TEST_CASE("representation identity for each data component") {
  const auto p = testing::make_problem(3, 8, CoefficientKind::random, 5);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  const SaddleSystem adj = assemble_system(p.field, p.mask, true);
  GreenFunction green(sys, SolveOptions{1e-11});
  const StokesSolver dual(adj, SolveOptions{1e-11});
  const Index y = center_cell(p.mask->grid());
  const bool flags[4][3] = {{true, false, false}, {false, true, false}, {false, false, true}, {true, true, true}};
  for (int v = 0; v < 4; ++v) {
    RandomRhsSpec spec;
    spec.force = flags[v][0];
    spec.flux = flags[v][1];
    spec.divergence = flags[v][2];
    const RhsData trial = random_rhs(*p.mask, 40 + v, spec);
    for (int k = 0; k < 3; ++k) {
      const RepresentationTerms t = representation_defect(green, dual, y, k, p.mask->grid().h(), trial);
      CHECK(t.defect <= 1e-6);
      CHECK(std::abs(t.ball_mean) > 0.0);
    }
  }
  CHECK_THROWS_AS(representation_defect(green, green.solver(), y, 0, p.mask->grid().h(), RhsData::zeros(p.mask->grid())),
                  PreconditionError);
}

TEST_CASE("green cache") {
  const auto p = testing::make_problem(3, 6, CoefficientKind::identity);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  GreenFunction green(sys, SolveOptions{}, 2);
  const Index y = center_cell(p.mask->grid());
  const double h = p.mask->grid().h();
  const auto a = green.column(y, 0, h);
  CHECK(green.column(y, 0, h) == a);
  CHECK(green.cache_size() == 1);
  green.column(y, 1, h);
  green.column(y, 2, h);
  CHECK(green.cache_size() == 2);
  CHECK(green.column(y, 0, h) != a);  // evicted and recomputed
  CHECK(green.column(y, 0, h)->field.u.isApprox(a->field.u));
}

TEST_CASE("identity Green matrix is nearly symmetric under swapping the points") {
  const auto p = testing::make_problem(3, 8, CoefficientKind::identity);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  GreenFunction green(sys, SolveOptions{1e-12});
  const auto& g = p.mask->grid();
  const Index x = g.cell_index({2, 3, 5}), y = g.cell_index({5, 4, 3});
  const auto gxy = green_matrix(green, x, y, g.h());
  const auto gyx = green_matrix(green, y, x, g.h());
  CHECK(gxy.G.rows() == 3);
  CHECK((gxy.G - gyx.G.transpose()).cwiseAbs().maxCoeff() < 0.05 * gxy.G.cwiseAbs().maxCoeff());
}

TEST_CASE("decay samples and csv") {
  const auto p = testing::make_problem(3, 12, CoefficientKind::identity);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  GreenFunction green(sys);
  const auto& g = p.mask->grid();
  const Index y = center_cell(g);
  const auto s = decay_samples(green, y, g.h(), 2 * g.h(), 5 * g.h());
  REQUIRE(s.size() >= 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(s[i].count > 0);
    CHECK(s[i].max_magnitude >= s[i].mean_magnitude);
    if (i) CHECK(s[i].r > s[i - 1].r);
    if (i) CHECK(s[i].max_magnitude < s[i - 1].max_magnitude);
  }
  const auto path = std::filesystem::temp_directory_path() / "greenlab_decay.csv";
  write_decay_csv(s, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "r,G_max_on_shell,G_mean_on_shell,cells");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == s.size());
}

TEST_CASE("column export") {
  const auto p = testing::make_problem(3, 6, CoefficientKind::identity);
  const SaddleSystem sys = assemble_system(p.field, p.mask, false);
  const GreenColumn col = averaged_green_column(sys, center_cell(p.mask->grid()), 0, p.mask->grid().h(), 1e-10);
  const auto prefix = std::filesystem::temp_directory_path() / "greenlab_column";
  write_green_column(col, prefix);
  auto meta_path = prefix;
  meta_path += ".json";
  std::ifstream in(meta_path);
  const auto meta = nlohmann::json::parse(in);
  CHECK(meta.at("k").get<int>() == 0);
  auto bin = prefix;
  bin += ".bin";
  const auto& g = p.mask->grid();
  CHECK(std::filesystem::file_size(bin) == sizeof(double) * static_cast<std::size_t>(3 * (g.num_faces(0)) + g.num_cells()));
}

TEST_CASE("Stokeslet and ball Green function") {
  const Point y{0.1, -0.2, 0.3};
  const Point x{0.5, 0.1, 0.0};
  const Eigen::Matrix3d s = stokeslet(x, y);
  CHECK((s - s.transpose()).norm() < 1e-15);
  Point x2 = y;
  for (int a = 0; a < 3; ++a) x2[static_cast<std::size_t>(a)] += 2 * (x[static_cast<std::size_t>(a)] - y[static_cast<std::size_t>(a)]);
  CHECK((stokeslet(x2, y) - 0.5 * s).norm() < 1e-14);
  const auto sl = [&](const Point& p) { return stokeslet(p, y); };
  const auto ball = [&](const Point& p) { return ball_stokes_green(p, y, 1.0); };
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(fd_divergence(sl, x, k)) < 1e-6);
    CHECK(std::abs(fd_divergence(ball, x, k)) < 1e-6);
  }
  Point edge = y;
  edge[1] += 1.0;
  CHECK(ball_stokes_green(edge, y, 1.0).norm() < 1e-14);
  CHECK_THROWS_AS(stokeslet(y, y), PreconditionError);
}
