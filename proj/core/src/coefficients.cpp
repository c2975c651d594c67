#include "greenlab/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "greenlab/error.hpp"
#include "greenlab/parallel.hpp"

namespace greenlab {

std::string to_string(CoefficientKind kind) {
  switch (kind) {
    case CoefficientKind::identity: return "identity";
    case CoefficientKind::smooth: return "smooth";
    case CoefficientKind::checkerboard: return "checkerboard";
    case CoefficientKind::random: return "random";
  }
  return "identity";
}

CoefficientKind coefficient_kind_from_string(const std::string& name) {
  if (name == "identity" || name == "laplace") return CoefficientKind::identity;
  if (name == "smooth") return CoefficientKind::smooth;
  if (name == "checkerboard") return CoefficientKind::checkerboard;
  if (name == "random") return CoefficientKind::random;
  throw ConfigError("unknown coefficient kind '" + name + "'");
}

namespace {

int row_of(int n, int i, int alpha) { return i * n + alpha; }

bool matrix_symmetric(std::span<const double> block, int n) {
  // M[(i,a),(j,b)] = a^{ij}_{ab} must equal a^{ji}_{ba}
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double x = block[static_cast<std::size_t>(((a * n + b) * n + i) * n + j)];
          const double y = block[static_cast<std::size_t>(((b * n + a) * n + j) * n + i)];
          if (x != y) return false;
        }
  return true;
}

void store_matrix(const Eigen::MatrixXd& m, int n, std::span<double> block) {
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          block[static_cast<std::size_t>(((a * n + b) * n + i) * n + j)] = m(row_of(n, i, a), row_of(n, j, b));
}

double max_block_l1(const Eigen::MatrixXd& m, int n) {
  double worst = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s += std::abs(m(row_of(n, i, a), row_of(n, j, b)));
      worst = std::max(worst, s);
    }
  return worst;
}

// Uniform in [-1, 1) from the top 53 bits; independent of the standard
// library's distribution implementation.
double uniform_pm1(std::mt19937_64& rng) {
  return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
}

}  // namespace

CoefficientField::CoefficientField(StaggeredGrid grid, std::vector<double> data, double lambda_nominal,
                                   std::uint64_t seed)
    : grid_(std::move(grid)), data_(std::move(data)), lambda_nominal_(lambda_nominal), seed_(seed) {
  if (static_cast<Index>(data_.size()) != grid_.num_cells() * block_size()) {
    throw ValidationError("coefficient data size does not match the grid");
  }
  if (!(lambda_nominal_ > 0.0 && lambda_nominal_ <= 1.0)) {
    throw PreconditionError("lambda_nominal must lie in (0, 1]");
  }
  symmetric_ = true;
  const auto bs = static_cast<std::size_t>(block_size());
  for (Index cell = 0; cell < grid_.num_cells() && symmetric_; ++cell) {
    symmetric_ = matrix_symmetric(std::span<const double>(data_).subspan(static_cast<std::size_t>(cell) * bs, bs), dim());
  }
}

Eigen::MatrixXd CoefficientField::cell_matrix(Index cell) const {
  const int n = dim();
  Eigen::MatrixXd m(n * n, n * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(row_of(n, i, a), row_of(n, j, b)) = (*this)(cell, a, b, i, j);
  return m;
}

CoefficientField CoefficientField::adjoint() const {
  const int n = dim();
  std::vector<double> out(data_.size());
  const auto bs = static_cast<std::size_t>(block_size());
  for (Index cell = 0; cell < grid_.num_cells(); ++cell) {
    const std::size_t base = static_cast<std::size_t>(cell) * bs;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            out[base + static_cast<std::size_t>(((a * n + b) * n + i) * n + j)] = (*this)(cell, b, a, j, i);
  }
  return CoefficientField(grid_, std::move(out), lambda_nominal_, seed_);
}

CoefficientField CoefficientField::scaled(double factor) const {
  std::vector<double> out(data_);
  for (double& v : out) v *= factor;
  return CoefficientField(grid_, std::move(out), std::min(1.0, lambda_nominal_ * factor), seed_);
}

Eigen::MatrixXd pattern_tensor(int n) {
  const int m = n * n;
  Eigen::MatrixXd t(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) t(r, c) = std::sin(1.3 + 0.7 * r + 1.9 * c + 0.37 * r * c);
  return t / max_block_l1(t, n);
}

EllipticityBounds matrix_ellipticity(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return {eig.eigenvalues().minCoeff(), svd.singularValues()(0)};
}

EllipticityBounds check_ellipticity(const CoefficientField& field) {
  for (double v : field.data()) {
    if (!std::isfinite(v)) throw ValidationError("coefficient field has non-finite entries");
  }
  // Generated fields repeat a handful of distinct cell matrices; evaluate each once.
  EllipticityBounds out{std::numeric_limits<double>::infinity(), 0.0};
  const auto bs = static_cast<std::size_t>(field.block_size());
  const auto data = field.data();
  std::vector<Index> seen;
  for (Index cell = 0; cell < field.grid().num_cells(); ++cell) {
    const auto block = data.subspan(static_cast<std::size_t>(cell) * bs, bs);
    bool duplicate = false;
    for (auto it = seen.rbegin(); it != seen.rend() && it - seen.rbegin() < 8; ++it) {
      const auto other = data.subspan(static_cast<std::size_t>(*it) * bs, bs);
      if (std::equal(block.begin(), block.end(), other.begin())) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    seen.push_back(cell);
    const auto e = matrix_ellipticity(field.cell_matrix(cell));
    out.lambda_eff = std::min(out.lambda_eff, e.lambda_eff);
    out.upper_eff = std::max(out.upper_eff, e.upper_eff);
  }
  return out;
}

CoefficientField generate_coefficients(const StaggeredGrid& grid, const CoefficientSpec& spec) {
  const int n = grid.dim();
  const int m = n * n;
  if (!(spec.lambda_nominal > 0.0 && spec.lambda_nominal <= 1.0)) {
    throw PreconditionError("lambda_nominal must lie in (0, 1]");
  }
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd t = pattern_tensor(n);
  const auto bs = static_cast<std::size_t>(m * m);
  std::vector<double> data(static_cast<std::size_t>(grid.num_cells()) * bs);
  std::mt19937_64 rng(spec.seed);

  for (Index cell = 0; cell < grid.num_cells(); ++cell) {
    Eigen::MatrixXd a = id;
    switch (spec.kind) {
      case CoefficientKind::identity:
        break;
      case CoefficientKind::smooth: {
        if (!(spec.wavelength > 0.0)) throw PreconditionError("smooth wavelength must be positive");
        const Point x = grid.cell_center(cell);
        double phi = 1.0;
        for (int d = 0; d < n; ++d) {
          phi *= std::cos(2.0 * std::numbers::pi * x[static_cast<std::size_t>(d)] / spec.wavelength + 0.5 * d);
        }
        if (spec.amplitude != 0.0) a += spec.amplitude * phi * t;
        break;
      }
      case CoefficientKind::checkerboard: {
        if (spec.block_cells < 1) throw PreconditionError("checkerboard block size must be >= 1 cell");
        if (!(spec.contrast > 0.0)) throw PreconditionError("checkerboard contrast must be positive");
        const CellCoord c = grid.cell_coord(cell);
        Index parity = 0;
        for (int d = 0; d < n; ++d) parity += c[static_cast<std::size_t>(d)] / spec.block_cells;
        if (parity % 2 == 0) {
          a = id + spec.anisotropy * t;
        } else {
          a = spec.contrast * (id - spec.anisotropy * t);
        }
        break;
      }
      case CoefficientKind::random: {
        Eigen::MatrixXd r(m, m);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) r(i, j) = uniform_pm1(rng);
        r /= max_block_l1(r, n);
        a += spec.amplitude * r;
        break;
      }
    }
    store_matrix(a, n, std::span<double>(data).subspan(static_cast<std::size_t>(cell) * bs, bs));
  }

  CoefficientField field(grid, std::move(data), spec.lambda_nominal, spec.seed);
  const auto bounds = check_ellipticity(field);
  if (bounds.lambda_eff < spec.lambda_nominal || bounds.upper_eff > 1.0 / spec.lambda_nominal) {
    throw ValidationError("coefficient spec violates ellipticity: lambda_eff=" + std::to_string(bounds.lambda_eff) +
                          " upper_eff=" + std::to_string(bounds.upper_eff) +
                          " lambda_nominal=" + std::to_string(spec.lambda_nominal));
  }
  return field;
}

OscillationReport bmo_modulus(const CoefficientField& field, const DomainMask& mask, std::span<const double> rho_list) {
  const StaggeredGrid& grid = field.grid();
  if (!(mask.grid() == grid)) throw PreconditionError("coefficient field and mask use different grids");
  const int n = grid.dim();
  const double h = grid.h();
  OscillationReport report;
  report.rho_values.assign(rho_list.begin(), rho_list.end());
  if (rho_list.empty()) return report;
  double rho_max = 0.0;
  for (double r : rho_list) {
    if (r < 2.0 * h * (1.0 - 1e-12)) {
      throw PreconditionError("rho " + std::to_string(r) + " is below the grid resolution 2h");
    }
    rho_max = std::max(rho_max, r);
  }

  // Entries that vary somewhere; constant entries contribute no oscillation.
  const Index bs = field.block_size();
  const auto data = field.data();
  std::vector<int> varying;
  for (Index e = 0; e < bs; ++e) {
    double lo = data[static_cast<std::size_t>(e)], hi = lo;
    for (Index cell = 1; cell < grid.num_cells(); ++cell) {
      const double v = data[static_cast<std::size_t>(cell * bs + e)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) varying.push_back(static_cast<int>(e));
  }
  const std::size_t nr = rho_list.size();
  report.omega.assign(nr, 0.0);
  report.sup_center.assign(nr, -1);
  report.sup_radius.assign(nr, 0.0);
  if (varying.empty()) return report;
  const int blocks = n * n;
  const int per_block = n * n;

  // Integer offsets grouped by squared length.
  const auto reach = static_cast<Index>(std::floor(rho_max / h + 1e-9));
  struct Offset {
    Index d2;
    CellCoord o;
  };
  std::vector<Offset> offsets;
  const Index zr = n == 3 ? reach : 0;
  for (Index z = -zr; z <= zr; ++z)
    for (Index y = -reach; y <= reach; ++y)
      for (Index x = -reach; x <= reach; ++x) {
        const Index d2 = x * x + y * y + z * z;
        if (static_cast<double>(d2) * h * h <= rho_max * rho_max * (1.0 + 1e-12)) offsets.push_back({d2, {x, y, z}});
      }
  std::stable_sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) { return a.d2 < b.d2; });

  const auto& centers = mask.interior_cells();
  const int workers = thread_count();
  struct Best {
    std::vector<double> omega;
    std::vector<Index> center;
    std::vector<double> radius;
  };
  std::vector<Best> best(static_cast<std::size_t>(workers),
                         Best{std::vector<double>(nr, 0.0), std::vector<Index>(nr, -1), std::vector<double>(nr, 0.0)});

  parallel_chunks(static_cast<Index>(centers.size()), [&](int w, Index b, Index e) {
    Best& mine = best[static_cast<std::size_t>(w)];
    std::vector<Index> ball;
    std::vector<double> sum(varying.size());
    std::vector<double> block_dev(static_cast<std::size_t>(blocks));
    for (Index ci = b; ci < e; ++ci) {
      const Index center = centers[static_cast<std::size_t>(ci)];
      const CellCoord c = grid.cell_coord(center);
      ball.clear();
      std::fill(sum.begin(), sum.end(), 0.0);
      double running = 0.0;
      double running_radius = 0.0;
      std::size_t k = 0;
      while (k < offsets.size()) {
        const Index d2 = offsets[k].d2;
        for (; k < offsets.size() && offsets[k].d2 == d2; ++k) {
          const CellCoord p{c[0] + offsets[k].o[0], c[1] + offsets[k].o[1], c[2] + offsets[k].o[2]};
          if (!grid.contains(p)) continue;
          const Index cell = grid.cell_index(p);
          ball.push_back(cell);
          for (std::size_t v = 0; v < varying.size(); ++v) sum[v] += data[static_cast<std::size_t>(cell * bs + varying[v])];
        }
        const double s = std::sqrt(static_cast<double>(d2)) * h;
        const double count = static_cast<double>(ball.size());
        std::fill(block_dev.begin(), block_dev.end(), 0.0);
        for (std::size_t v = 0; v < varying.size(); ++v) {
          const double mean = sum[v] / count;
          double dev = 0.0;
          for (Index cell : ball) dev += std::abs(data[static_cast<std::size_t>(cell * bs + varying[v])] - mean);
          block_dev[static_cast<std::size_t>(varying[v] / per_block)] += dev / count;
        }
        const double osc = *std::max_element(block_dev.begin(), block_dev.end());
        if (osc > running) {
          running = osc;
          running_radius = s;
        }
        for (std::size_t r = 0; r < nr; ++r) {
          if (s <= rho_list[r] * (1.0 + 1e-12) && running > mine.omega[r]) {
            mine.omega[r] = running;
            mine.center[r] = center;
            mine.radius[r] = running_radius;
          }
        }
      }
    }
  });

  for (const Best& b : best) {
    for (std::size_t r = 0; r < nr; ++r) {
      if (b.omega[r] > report.omega[r]) {
        report.omega[r] = b.omega[r];
        report.sup_center[r] = b.center[r];
        report.sup_radius[r] = b.radius[r];
      }
    }
  }
  return report;
}

void write_coefficients(const CoefficientField& field, const std::filesystem::path& prefix) {
  auto bin_path = prefix;
  bin_path += ".bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + bin_path.string());
  const auto data = field.data();
  bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));

  const StaggeredGrid& grid = field.grid();
  nlohmann::json meta;
  meta["n"] = grid.dim();
  meta["cells_per_axis"] = std::vector<Index>(grid.cells().begin(), grid.cells().begin() + grid.dim());
  meta["layout"] = "alpha,beta,i,j";
  meta["lambda_nominal"] = field.lambda_nominal();
  meta["seed"] = field.seed();
  auto json_path = prefix;
  json_path += ".json";
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write " + json_path.string());
  js << meta.dump(2) << "\n";
}

CoefficientField read_coefficients(const StaggeredGrid& grid, const std::filesystem::path& prefix) {
  auto json_path = prefix;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw IoError("cannot read " + json_path.string());
  const auto meta = nlohmann::json::parse(js);
  if (meta.at("n").get<int>() != grid.dim()) throw ValidationError("coefficient sidecar dimension mismatch");
  const auto cells = meta.at("cells_per_axis").get<std::vector<Index>>();
  for (int a = 0; a < grid.dim(); ++a) {
    if (cells.at(static_cast<std::size_t>(a)) != grid.cells(a)) throw ValidationError("coefficient sidecar grid mismatch");
  }
  if (meta.at("layout").get<std::string>() != "alpha,beta,i,j") throw ValidationError("unsupported coefficient layout");

  const auto n = static_cast<std::size_t>(grid.dim());
  std::vector<double> data(static_cast<std::size_t>(grid.num_cells()) * n * n * n * n);
  auto bin_path = prefix;
  bin_path += ".bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot read " + bin_path.string());
  bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double))) {
    throw IoError("coefficient payload " + bin_path.string() + " is truncated");
  }
  return CoefficientField(grid, std::move(data), meta.at("lambda_nominal").get<double>(),
                          meta.at("seed").get<std::uint64_t>());
}

}  // namespace greenlab
