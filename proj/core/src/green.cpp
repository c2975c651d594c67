#include "greenlab/green.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>

#include <nlohmann/json.hpp>

#include "greenlab/error.hpp"
#include "greenlab/estimates.hpp"

namespace greenlab {

void check_pole(const DomainMask& mask, Index y, double epsilon) {
  const StaggeredGrid& grid = mask.grid();
  if (y < 0 || y >= grid.num_cells() || !mask.is_interior(y)) throw PreconditionError("pole cell is not interior");
  if (epsilon < grid.h() * (1.0 - 1e-12)) throw PreconditionError("epsilon is below the grid spacing");
  const double dy = distance_to_boundary(mask, y);
  if (!(epsilon < dy)) {
    throw PreconditionError("pole too close to the boundary for epsilon (d_y=" + std::to_string(dy) + ")");
  }
}

RhsData green_source(const DomainMask& mask, Index y, int k, double epsilon) {
  const StaggeredGrid& grid = mask.grid();
  if (k < 0 || k >= grid.dim()) throw PreconditionError("component index out of range");
  check_pole(mask, y, epsilon);
  const auto ball = cells_in_ball(mask, grid.cell_center(y), epsilon);
  RhsData rhs = RhsData::zeros(grid);
  const double density = 1.0 / (static_cast<double>(ball.size()) * grid.cell_volume());
  const auto cells = static_cast<std::size_t>(grid.num_cells());
  for (Index c : ball) rhs.f[static_cast<std::size_t>(k) * cells + static_cast<std::size_t>(c)] = density;
  return rhs;
}

GreenColumn averaged_green_column(const StokesSolver& solver, Index y, int k, double epsilon) {
  const SaddleSystem& system = solver.system();
  const DomainMask& mask = system.mask();
  const StaggeredGrid& grid = mask.grid();
  GreenColumn col;
  col.pole_cell = y;
  col.component = k;
  col.epsilon = epsilon;
  col.adjoint = system.adjoint;
  const RhsData rhs = green_source(mask, y, k, epsilon);
  col.ball_cells = cells_in_ball(mask, grid.cell_center(y), epsilon);
  col.ball_measure = static_cast<double>(col.ball_cells.size()) * grid.cell_volume();
  auto [field, stats] = solver.solve(rhs);
  col.energy_norm = std::sqrt(field.p.squaredNorm() * grid.cell_volume()) + std::sqrt(system.dofs->gradient_energy(field.u));
  col.field = std::move(field);
  col.stats = stats;
  return col;
}

GreenColumn averaged_green_column(const SaddleSystem& system, Index y, int k, double epsilon, double tol) {
  SolveOptions opts;
  opts.tol = tol;
  const StokesSolver solver(system, opts);
  return averaged_green_column(solver, y, k, epsilon);
}

GreenFunction::GreenFunction(const SaddleSystem& system, SolveOptions options, std::size_t cache_capacity)
    : solver_(system, options), capacity_(std::max<std::size_t>(1, cache_capacity)) {}

std::size_t GreenFunction::cache_size() const {
  std::shared_lock lock(mutex_);
  return cache_.size();
}

std::shared_ptr<const GreenColumn> GreenFunction::column(Index y, int k, double epsilon) {
  const Key key{y, k, epsilon};
  {
    std::unique_lock lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      order_.splice(order_.begin(), order_, it->second.second);
      return it->second.first;
    }
  }
  auto col = std::make_shared<const GreenColumn>(averaged_green_column(solver_, y, k, epsilon));
  std::unique_lock lock(mutex_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second.first;
  order_.push_front(key);
  cache_.emplace(key, std::make_pair(col, order_.begin()));
  while (cache_.size() > capacity_) {
    cache_.erase(order_.back());
    order_.pop_back();
  }
  return col;
}

std::vector<std::shared_ptr<const GreenColumn>> GreenFunction::columns(Index y, double epsilon) {
  std::vector<std::shared_ptr<const GreenColumn>> out;
  for (int k = 0; k < system().grid().dim(); ++k) out.push_back(column(y, k, epsilon));
  return out;
}

GreenMatrixSample green_matrix(GreenFunction& green, Index x, Index y, double epsilon) {
  const DomainMask& mask = green.system().mask();
  if (x == y) throw PreconditionError("green_matrix needs distinct cells");
  if (x < 0 || x >= mask.grid().num_cells() || !mask.is_interior(x)) throw PreconditionError("x is not interior");
  const int n = mask.grid().dim();
  GreenMatrixSample s;
  s.x_cell = x;
  s.y_cell = y;
  s.epsilon = epsilon;
  s.G.resize(n, n);
  const auto cols = green.columns(y, epsilon);
  const DofMap& dofs = *green.system().dofs;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) s.G(i, k) = dofs.cell_velocity(cols[static_cast<std::size_t>(k)]->field.u, x, i);
  return s;
}

Eigen::VectorXd ball_mean_velocity(const GreenColumn& column, Index x, double sigma) {
  const DofMap& dofs = *column.field.dofs;
  const auto ball = cells_in_ball(dofs.mask(), dofs.grid().cell_center(x), sigma);
  if (ball.empty()) throw PreconditionError("empty averaging ball");
  Eigen::VectorXd m = Eigen::VectorXd::Zero(dofs.dim());
  for (Index c : ball)
    for (int a = 0; a < dofs.dim(); ++a) m(a) += dofs.cell_velocity(column.field.u, c, a);
  return m / static_cast<double>(ball.size());
}

double symmetry_defect(GreenFunction& primal, GreenFunction& adjoint, Index x, Index y, double epsilon) {
  if (x == y) throw PreconditionError("symmetry_defect needs distinct cells");
  if (!(primal.system().grid() == adjoint.system().grid())) throw PreconditionError("systems use different grids");
  const int n = primal.system().grid().dim();
  const auto gy = primal.columns(y, epsilon);
  const auto gx = adjoint.columns(x, epsilon);
  Eigen::MatrixXd p(n, n), q(n, n);
  for (int k = 0; k < n; ++k) p.col(k) = ball_mean_velocity(*gy[static_cast<std::size_t>(k)], x, epsilon);
  for (int l = 0; l < n; ++l) q.col(l) = ball_mean_velocity(*gx[static_cast<std::size_t>(l)], y, epsilon);
  // p(l, k) = avg G^{lk}(., y) near x;  q(k, l) = avg G*^{kl}(., x) near y.
  const double scale = std::max(p.cwiseAbs().maxCoeff(), q.cwiseAbs().maxCoeff());
  if (scale == 0.0) return 0.0;
  return (p - q.transpose()).cwiseAbs().maxCoeff() / scale;
}

RepresentationTerms representation_defect(GreenFunction& green, const StokesSolver& adjoint_solver, Index y, int k,
                                          double epsilon, const RhsData& trial) {
  const SaddleSystem& primal = green.system();
  const SaddleSystem& dual = adjoint_solver.system();
  if (!(primal.grid() == dual.grid()) || primal.adjoint == dual.adjoint) {
    throw PreconditionError("representation_defect needs a primal/adjoint system pair");
  }
  validate_rhs(primal.mask(), trial);
  RepresentationTerms t;
  const auto col = green.column(y, k, epsilon);
  const StaggeredGrid& grid = primal.grid();
  const Index nv = primal.velocity_dof();

  RhsData only_f = RhsData::zeros(grid);
  only_f.f = trial.f;
  RhsData only_flux = RhsData::zeros(grid);
  only_flux.f_alpha = trial.f_alpha;
  t.force_term = col->field.u.dot(build_rhs(primal, only_f).head(nv));
  t.flux_term = -col->field.u.dot(build_rhs(primal, only_flux).head(nv));
  const std::vector<double> pi = col->field.pressure();
  for (Index c : primal.mask().interior_cells())
    t.pressure_term += pi[static_cast<std::size_t>(c)] * trial.g[static_cast<std::size_t>(c)] * grid.cell_volume();

  if (!trial.is_zero()) {
    auto [u, stats] = adjoint_solver.solve(trial);
    double s = 0.0;
    for (Index c : col->ball_cells) s += dual.dofs->cell_velocity(u.u, c, k);
    t.ball_mean = s / static_cast<double>(col->ball_cells.size());
  }
  const double rhs = t.force_term - t.flux_term - t.pressure_term;
  const double scale = std::max(std::abs(t.ball_mean), std::abs(t.force_term) + std::abs(t.flux_term) + std::abs(t.pressure_term));
  t.defect = scale == 0.0 ? 0.0 : std::abs(t.ball_mean - rhs) / scale;
  return t;
}

std::vector<double> green_magnitude(const std::vector<std::shared_ptr<const GreenColumn>>& columns) {
  if (columns.empty()) return {};
  const DofMap& dofs = *columns.front()->field.dofs;
  std::vector<double> out(static_cast<std::size_t>(dofs.grid().num_cells()), 0.0);
  for (const auto& col : columns)
    for (Index c : dofs.pressure_cells())
      for (int a = 0; a < dofs.dim(); ++a) {
        const double v = dofs.cell_velocity(col->field.u, c, a);
        out[static_cast<std::size_t>(c)] += v * v;
      }
  for (double& v : out) v = std::sqrt(v);
  return out;
}

std::vector<double> pressure_magnitude(const std::vector<std::shared_ptr<const GreenColumn>>& columns) {
  if (columns.empty()) return {};
  const DofMap& dofs = *columns.front()->field.dofs;
  std::vector<double> out(static_cast<std::size_t>(dofs.grid().num_cells()), 0.0);
  for (const auto& col : columns)
    for (Index q = 0; q < dofs.num_pressure(); ++q) {
      out[static_cast<std::size_t>(dofs.pressure_cells()[static_cast<std::size_t>(q)])] += col->field.p(q) * col->field.p(q);
    }
  for (double& v : out) v = std::sqrt(v);
  return out;
}

std::vector<DecaySample> decay_samples(GreenFunction& green, Index y, double epsilon, double r_min, double r_max) {
  if (!(r_min > 0.0 && r_max > r_min)) throw PreconditionError("invalid shell range");
  const DomainMask& mask = green.system().mask();
  const StaggeredGrid& grid = mask.grid();
  const std::vector<double> mag = green_magnitude(green.columns(y, epsilon));
  const Point py = grid.cell_center(y);
  const auto shells = static_cast<std::size_t>(std::floor((r_max - r_min) / grid.h())) + 1;
  std::vector<DecaySample> acc(shells);
  std::vector<double> rsum(shells, 0.0), msum(shells, 0.0);
  for (Index c : mask.interior_cells()) {
    const double r = distance(grid.cell_center(c), py);
    if (r < r_min || r > r_max) continue;
    const auto s = std::min(shells - 1, static_cast<std::size_t>(std::floor((r - r_min) / grid.h())));
    acc[s].count += 1;
    rsum[s] += r;
    msum[s] += mag[static_cast<std::size_t>(c)];
    acc[s].max_magnitude = std::max(acc[s].max_magnitude, mag[static_cast<std::size_t>(c)]);
  }
  std::vector<DecaySample> out;
  for (std::size_t s = 0; s < shells; ++s) {
    if (acc[s].count == 0) continue;
    acc[s].r = rsum[s] / static_cast<double>(acc[s].count);
    acc[s].mean_magnitude = msum[s] / static_cast<double>(acc[s].count);
    out.push_back(acc[s]);
  }
  return out;
}

void write_decay_csv(const std::vector<DecaySample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "r,G_max_on_shell,G_mean_on_shell,cells\n" << std::setprecision(17);
  for (const auto& s : samples) out << s.r << "," << s.max_magnitude << "," << s.mean_magnitude << "," << s.count << "\n";
}

void write_green_column(const GreenColumn& column, const std::filesystem::path& prefix) {
  const DofMap& dofs = *column.field.dofs;
  const StaggeredGrid& grid = dofs.grid();
  const FaceField u = column.field.velocity();
  const std::vector<double> p = column.field.pressure();
  const std::filesystem::path bin = prefix.string() + ".bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write " + bin.string());
  for (int a = 0; a < grid.dim(); ++a) {
    const auto& v = u.values[static_cast<std::size_t>(a)];
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw IoError("write failed for " + bin.string());

  nlohmann::json meta;
  meta["pole"] = column.pole_cell;
  meta["k"] = column.component;
  meta["epsilon"] = column.epsilon;
  meta["adjoint"] = column.adjoint;
  meta["stats"] = nlohmann::json::parse(column.stats.json_line());
  std::vector<Index> faces;
  for (int a = 0; a < grid.dim(); ++a) faces.push_back(grid.num_faces(a));
  meta["layout"] = {{"face_counts", faces}, {"cells", grid.num_cells()}, {"dtype", "float64"},
                    {"order", "velocity faces per axis, then cell pressure"}};
  const std::filesystem::path json = prefix.string() + ".json";
  std::ofstream js(json);
  if (!js) throw IoError("cannot write " + json.string());
  js << meta.dump(2) << "\n";
}

Eigen::Matrix3d stokeslet(const Point& x, const Point& y) {
  Eigen::Vector3d d(x[0] - y[0], x[1] - y[1], x[2] - y[2]);
  const double r = d.norm();
  if (r == 0.0) throw PreconditionError("Stokeslet is singular at r = 0");
  return (Eigen::Matrix3d::Identity() / r + d * d.transpose() / (r * r * r)) / (8.0 * std::numbers::pi);
}

Eigen::Matrix3d ball_stokes_green(const Point& x, const Point& y, double R) {
  Eigen::Vector3d d(x[0] - y[0], x[1] - y[1], x[2] - y[2]);
  const double r = d.norm();
  if (!(r > 0.0 && r <= R)) throw PreconditionError("ball Green function needs 0 < r <= R");
  const double a = 1.0 / r - 3.0 / R + 2.0 * r * r / (R * R * R);
  const double b = 1.0 / (r * r * r) - 1.0 / (R * R * R);
  return (a * Eigen::Matrix3d::Identity() + b * d * d.transpose()) / (8.0 * std::numbers::pi);
}

}  // namespace greenlab
