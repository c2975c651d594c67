#include "greenlab/solver.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <limits>
#include <cmath>
#include <random>

#include <Eigen/CholmodSupport>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "greenlab/error.hpp"

namespace greenlab {

namespace {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using Cholesky = Eigen::CholmodSupernodalLLT<ColMatrix, Eigen::Lower>;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void project_mean_zero(Eigen::Ref<Vector> p) {
  if (p.size() > 0) p.array() -= p.mean();
}

}  // namespace

std::string SolveStats::json_line() const {
  nlohmann::json j;
  j["iterations"] = iterations;
  j["final_relative_residual"] = final_relative_residual;
  j["wall_time"] = wall_time;
  j["method"] = method;
  j["converged"] = converged;
  j["energy_ratio"] = energy_ratio;
  return j.dump();
}

std::vector<double> StokesField::pressure() const {
  std::vector<double> out(static_cast<std::size_t>(dofs->grid().num_cells()), 0.0);
  for (Index q = 0; q < dofs->num_pressure(); ++q) out[static_cast<std::size_t>(dofs->pressure_cells()[static_cast<std::size_t>(q)])] = p(q);
  return out;
}

struct StokesSolver::Factors {
  std::array<std::unique_ptr<Cholesky>, 3> blocks;
  std::array<std::pair<Index, Index>, 3> ranges;
};

StokesSolver::StokesSolver(const SaddleSystem& system, SolveOptions options)
    : system_(system), options_(options), factors_(std::make_unique<Factors>()) {
  if (!(options_.tol >= 1e-14 && options_.tol <= 1e-4)) {
    throw PreconditionError("solver tolerance must lie in [1e-14, 1e-4]");
  }
  if (options_.max_iter < 1 || options_.restart < 2) throw PreconditionError("invalid iteration limits");
  const DofMap& dofs = *system_.dofs;
  const ColMatrix sym = ColMatrix(0.5 * (system_.L + SparseMatrix(system_.L.transpose())));
  for (int a = 0; a < dofs.dim(); ++a) {
    const auto [b, e] = dofs.velocity_range(a);
    factors_->ranges[static_cast<std::size_t>(a)] = {b, e};
    if (e == b) continue;
    ColMatrix block = sym.block(b, b, e - b, e - b);
    auto chol = std::make_unique<Cholesky>();
    chol->compute(block);
    if (chol->info() != Eigen::Success) throw SolverError("Cholesky factorization of a velocity block failed");
    factors_->blocks[static_cast<std::size_t>(a)] = std::move(chol);
  }

  const CoefficientField& field = *system_.coefficients;
  const int n = dofs.dim();
  const double vol = dofs.grid().cell_volume();
  pressure_scale_.resize(dofs.num_pressure());
  for (Index q = 0; q < dofs.num_pressure(); ++q) {
    const Index cell = dofs.pressure_cells()[static_cast<std::size_t>(q)];
    double nu = 0.0;
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < n; ++a) nu += field(cell, a, a, i, i);
    nu /= n * n;
    pressure_scale_(q) = nu / vol;
  }
}

StokesSolver::~StokesSolver() = default;

Vector StokesSolver::apply_velocity_block_inverse(const Vector& r) const {
  Vector z(r.size());
  std::lock_guard<std::mutex> lock(mutex_);
  for (int a = 0; a < system_.dofs->dim(); ++a) {
    const auto [b, e] = factors_->ranges[static_cast<std::size_t>(a)];
    if (e == b) continue;
    z.segment(b, e - b) = factors_->blocks[static_cast<std::size_t>(a)]->solve(r.segment(b, e - b));
  }
  return z;
}

Vector StokesSolver::apply_preconditioner(const Vector& r) const {
  const Index nv = system_.velocity_dof();
  const Index np = system_.pressure_dof();
  Vector z(nv + np);
  Vector zp = -(pressure_scale_.array() * r.tail(np).array()).matrix();
  project_mean_zero(zp);
  z.tail(np) = zp;
  z.head(nv) = apply_velocity_block_inverse(r.head(nv) + system_.B.transpose() * zp);
  return z;
}

std::pair<Vector, SolveStats> StokesSolver::solve_vector(const Vector& b) const {
  const auto t0 = std::chrono::steady_clock::now();
  const Index nv = system_.velocity_dof();
  const Index np = system_.pressure_dof();
  const Index total = nv + np;
  if (b.size() != total) throw PreconditionError("load vector has the wrong length");
  SolveStats stats;
  stats.method = "gmres+block-triangular";
  Vector x = Vector::Zero(total);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    stats.wall_time = seconds_since(t0);
    return {x, stats};
  }
  const double tol = options_.tol;
  const int m = options_.restart;
  std::vector<Vector> basis(static_cast<std::size_t>(m + 1));
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(m + 1, m);
  Vector cs(m), sn(m), gvec(m + 1);
  int iters = 0;
  double rel = 1.0;
  double previous_cycle = std::numeric_limits<double>::infinity();

  while (true) {
    Vector r = b - system_.apply(x);
    const double beta = r.norm();
    rel = beta / bnorm;
    if (rel <= tol) break;
    if (iters >= options_.max_iter) {
      stats.converged = false;
      break;
    }
    if (rel > 0.999 * previous_cycle) {
      stats.converged = false;
      break;
    }
    previous_cycle = rel;
    basis[0] = r / beta;
    gvec.setZero();
    gvec(0) = beta;
    hess.setZero();
    int j = 0;
    for (; j < m && iters < options_.max_iter; ++j) {
      Vector w = system_.apply(apply_preconditioner(basis[static_cast<std::size_t>(j)]));
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= j; ++i) {
          const double hij = basis[static_cast<std::size_t>(i)].dot(w);
          hess(i, j) += hij;
          w -= hij * basis[static_cast<std::size_t>(i)];
        }
      }
      const double wn = w.norm();
      hess(j + 1, j) = wn;
      for (int i = 0; i < j; ++i) {
        const double t = cs(i) * hess(i, j) + sn(i) * hess(i + 1, j);
        hess(i + 1, j) = -sn(i) * hess(i, j) + cs(i) * hess(i + 1, j);
        hess(i, j) = t;
      }
      const double denom = std::hypot(hess(j, j), hess(j + 1, j));
      cs(j) = denom == 0.0 ? 1.0 : hess(j, j) / denom;
      sn(j) = denom == 0.0 ? 0.0 : hess(j + 1, j) / denom;
      hess(j, j) = denom;
      hess(j + 1, j) = 0.0;
      gvec(j + 1) = -sn(j) * gvec(j);
      gvec(j) = cs(j) * gvec(j);
      ++iters;
      const bool breakdown = wn <= 1e-14 * beta;
      if (!breakdown) basis[static_cast<std::size_t>(j + 1)] = w / wn;
      if (std::abs(gvec(j + 1)) / bnorm <= 0.5 * tol || breakdown) {
        ++j;
        break;
      }
    }
    if (j == 0) break;
    const Vector y = hess.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(gvec.head(j));
    Vector update = Vector::Zero(total);
    for (int i = 0; i < j; ++i) update += y(i) * basis[static_cast<std::size_t>(i)];
    x += apply_preconditioner(update);
    project_mean_zero(x.tail(np));
  }
  stats.iterations = iters;
  stats.final_relative_residual = rel;
  if (rel > tol) stats.converged = false;
  stats.wall_time = seconds_since(t0);
  if (!stats.converged) {
    throw SolverError("GMRES stopped at relative residual " + std::to_string(rel) + " after " +
                      std::to_string(iters) + " iterations (" + stats.json_line() + ")");
  }
  return {x, stats};
}

std::pair<StokesField, SolveStats> StokesSolver::solve(const RhsData& rhs) const {
  const Vector b = build_rhs(system_, rhs);
  auto [x, stats] = solve_vector(b);
  StokesField field{system_.dofs, x.head(system_.velocity_dof()), x.tail(system_.pressure_dof())};
  stats.energy_ratio = energy_ratio(system_, field, rhs);
  return {std::move(field), stats};
}

std::pair<StokesField, SolveStats> solve_stokes(const SaddleSystem& system, const RhsData& rhs, double tol) {
  SolveOptions opts;
  opts.tol = tol;
  return solve_stokes(system, rhs, opts);
}

std::pair<StokesField, SolveStats> solve_stokes(const SaddleSystem& system, const RhsData& rhs, const SolveOptions& options) {
  validate_rhs(system.mask(), rhs);
  if (rhs.is_zero()) {
    if (!(options.tol >= 1e-14 && options.tol <= 1e-4)) throw PreconditionError("solver tolerance must lie in [1e-14, 1e-4]");
    SolveStats stats;
    stats.method = "gmres+block-triangular";
    return {StokesField{system.dofs, Vector::Zero(system.velocity_dof()), Vector::Zero(system.pressure_dof())}, stats};
  }
  const StokesSolver solver(system, options);
  return solver.solve(rhs);
}

double cell_l2_norm(const StaggeredGrid& grid, std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s * grid.cell_volume());
}

double energy_ratio(const SaddleSystem& system, const StokesField& field, const RhsData& rhs) {
  const StaggeredGrid& g = system.grid();
  const double data = cell_l2_norm(g, rhs.f) + cell_l2_norm(g, rhs.f_alpha) + cell_l2_norm(g, rhs.g);
  if (data == 0.0) return 0.0;
  const double p = std::sqrt(field.p.squaredNorm() * g.cell_volume());
  const double du = std::sqrt(system.dofs->gradient_energy(field.u));
  return (p + du) / data;
}

StokesField solve_dense_oracle(const SaddleSystem& system, const RhsData& rhs) {
  const Index nv = system.velocity_dof();
  const Index np = system.pressure_dof();
  if (nv + np > kDenseOracleMaxDof) throw PreconditionError("dense oracle limited to 20000 unknowns");
  const Vector b = build_rhs(system, rhs);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nv + np + 1, nv + np + 1);
  k.topLeftCorner(nv + np, nv + np) = Eigen::MatrixXd(system.saddle_matrix());
  k.block(nv, nv + np, np, 1).setOnes();
  k.block(nv + np, nv, 1, np).setOnes();
  Vector rhs_aug = Vector::Zero(nv + np + 1);
  rhs_aug.head(nv + np) = b;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
  if (!(lu.rcond() > 1e-14)) throw SolverError("dense saddle matrix is singular");
  const Vector x = lu.solve(rhs_aug);
  return StokesField{system.dofs, x.head(nv), x.segment(nv, np)};
}

BogovskiiResult bogovskii_solve(const StokesSolver& identity_solver, std::span<const double> g) {
  const SaddleSystem& system = identity_solver.system();
  const StaggeredGrid& grid = system.grid();
  RhsData rhs = RhsData::zeros(grid);
  if (static_cast<Index>(g.size()) != grid.num_cells()) throw PreconditionError("g does not match the grid");
  std::copy(g.begin(), g.end(), rhs.g.begin());
  validate_rhs(system.mask(), rhs);
  BogovskiiResult out;
  const double gnorm = cell_l2_norm(grid, rhs.g);
  if (gnorm == 0.0) {
    out.field = StokesField{system.dofs, Vector::Zero(system.velocity_dof()), Vector::Zero(system.pressure_dof())};
    out.stats.method = "gmres+block-triangular";
    return out;
  }
  auto [field, stats] = identity_solver.solve(rhs);
  const Vector div = divergence(*system.dofs, field.u);
  Vector gv(system.pressure_dof());
  for (Index q = 0; q < gv.size(); ++q) gv(q) = rhs.g[static_cast<std::size_t>(system.dofs->pressure_cells()[static_cast<std::size_t>(q)])];
  out.divergence_residual = (div - gv).norm() / gv.norm();
  out.norm_ratio = std::sqrt(system.dofs->gradient_energy(field.u)) / gnorm;
  out.field = std::move(field);
  out.stats = stats;
  return out;
}

BogovskiiResult bogovskii_solve(const DomainMask& mask, std::span<const double> g, double tol) {
  auto mask_ptr = std::make_shared<const DomainMask>(mask);
  const SaddleSystem system = identity_system(mask_ptr);
  SolveOptions opts;
  opts.tol = tol;
  const StokesSolver solver(system, opts);
  return bogovskii_solve(solver, g);
}

namespace {

/// CG for S x = b on mean-zero vectors, S symmetric positive semidefinite.
Vector schur_cg(const std::function<Vector(const Vector&)>& apply_s, const Vector& b, double tol, int max_iter) {
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  project_mean_zero(r);
  const double bn = r.norm();
  if (bn == 0.0) return x;
  Vector d = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iter && std::sqrt(rr) > tol * bn; ++it) {
    Vector sd = apply_s(d);
    const double dsd = d.dot(sd);
    if (!(dsd > 0.0)) break;
    const double alpha = rr / dsd;
    x += alpha * d;
    r -= alpha * sd;
    project_mean_zero(r);
    const double rr_new = r.squaredNorm();
    d = r + (rr_new / rr) * d;
    rr = rr_new;
  }
  project_mean_zero(x);
  return x;
}

}  // namespace

InfSupResult estimate_infsup(const SaddleSystem& system, int max_iter, double tol) {
  const SaddleSystem ident = identity_system(system.dofs->mask_ptr());
  const StokesSolver solver(ident, SolveOptions{});
  const Index np = ident.pressure_dof();
  const double vol = ident.grid().cell_volume();
  InfSupResult out;
  if (np < 2) throw PreconditionError("inf-sup estimate needs at least two pressure unknowns");

  auto apply_s = [&](const Vector& p) -> Vector {
    Vector y = ident.B * solver.apply_velocity_block_inverse(ident.B.transpose() * p);
    y /= vol;
    project_mean_zero(y);
    return y;
  };

  const int k = static_cast<int>(std::min<Index>(4, np - 1));
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(np, k);
  for (Index i = 0; i < np; ++i)
    for (int j = 0; j < k; ++j) x(i, j) = normal(rng);
  auto orthonormalize = [](Eigen::MatrixXd& m) {
    for (int j = 0; j < m.cols(); ++j) m.col(j).array() -= m.col(j).mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    m = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  };
  orthonormalize(x);

  const int cg_iter = static_cast<int>(std::min<Index>(5000, 4 * np));
  double theta = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    for (int j = 0; j < k; ++j) x.col(j) = schur_cg(apply_s, x.col(j), 1e-13, cg_iter);
    orthonormalize(x);
    Eigen::MatrixXd sx(np, k);
    for (int j = 0; j < k; ++j) sx.col(j) = apply_s(x.col(j));
    Eigen::MatrixXd h = x.transpose() * sx;
    h = 0.5 * (h + h.transpose()).eval();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
    x = (x * eig.eigenvectors()).eval();
    sx = (sx * eig.eigenvectors()).eval();
    theta = std::max(0.0, eig.eigenvalues()(0));
    const double residual = (sx.col(0) - eig.eigenvalues()(0) * x.col(0)).norm();
    out.iterations = it;
    if (residual <= tol) {
      out.converged = true;
      break;
    }
  }
  out.beta = std::sqrt(theta);
  if (!out.converged) throw SolverError("inf-sup inverse iteration did not converge");
  return out;
}

}  // namespace greenlab
