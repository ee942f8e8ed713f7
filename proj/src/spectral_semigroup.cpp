#include "wnash/spectral_semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "wnash/errors.hpp"

namespace wnash {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_time(const SpectralDecomposition& dec, double t, const char* where) {
  if (!(t >= dec.t_min) || !std::isfinite(t)) {
    throw DomainError(std::string(where) + ": t = " + std::to_string(t) +
                      " below t_min = " + std::to_string(dec.t_min));
  }
}

void check_node(const SpectralDecomposition& dec, std::size_t i, const char* where) {
  if (i >= dec.size()) {
    throw ShapeError(std::string(where) + ": node index " + std::to_string(i) +
                     " out of range for " + std::to_string(dec.size()) + " nodes");
  }
}

void check_shape(const GridFunction& f, const Grid& grid, const char* where) {
  if (static_cast<std::size_t>(f.size()) != grid.n_points) {
    throw ShapeError(std::string(where) + ": function has " + std::to_string(f.size()) +
                     " values, grid has " + std::to_string(grid.n_points) + " nodes");
  }
}

Eigen::VectorXd decay_factors(const SpectralDecomposition& dec, double t) {
  return (-t * dec.eigenvalues.array()).exp().matrix();
}

// Modes with exp(-lambda t) below this contribute nothing representable; cutting
// them also keeps subnormals out of the products.
constexpr double kNegligibleDecay = 1e-250;

// Number of leading modes with exp(-lambda t) >= kNegligibleDecay.
Eigen::Index active_modes(const SpectralDecomposition& dec, double t) {
  const double limit = -std::log(kNegligibleDecay);
  Eigen::Index k = 0;
  while (k < dec.eigenvalues.size() && dec.eigenvalues[k] * t <= limit) ++k;
  return std::max<Eigen::Index>(k, 1);
}

Eigen::VectorXd masses(const Grid& grid) {
  return Eigen::Map<const Eigen::VectorXd>(grid.node_masses.data(), idx(grid.n_points));
}

}  // namespace

double Grid::total_mass() const {
  double s = 0.0;
  for (double m : node_masses) s += m;
  return s;
}

Grid make_grid(const MeasureModel& model, std::size_t n_points) {
  if (n_points < 3) {
    throw DegenerateGridError("make_grid: need at least 3 nodes, got " +
                              std::to_string(n_points));
  }
  Grid g;
  g.radius = model.radius();
  g.n_points = n_points;
  g.spacing = 2.0 * g.radius / static_cast<double>(n_points - 1);
  g.points.resize(n_points);
  g.node_masses.resize(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    g.points[i] = -g.radius + g.spacing * static_cast<double>(i);
  }
  g.points.back() = g.radius;
  for (std::size_t i = 0; i < n_points; ++i) {
    const double w = (i == 0 || i + 1 == n_points) ? 0.5 : 1.0;
    g.node_masses[i] = w * model.density(g.points[i]) * g.spacing;
  }
  return g;
}

OperatorData discretize(const MeasureModel& model, const Grid& grid) {
  const std::size_t n = grid.n_points;
  if (n < 3 || grid.points.size() != n || grid.node_masses.size() != n) {
    throw DegenerateGridError("discretize: inconsistent grid");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(grid.node_masses[i] > 0.0) || !std::isfinite(grid.node_masses[i])) {
      throw DegenerateGridError("discretize: node mass at x = " +
                                std::to_string(grid.points[i]) + " is not positive");
    }
  }
  OperatorData op;
  op.grid = grid;
  const double h = grid.spacing;
  op.edge_weights.resize(idx(n - 1));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    op.edge_weights[idx(i)] = model.density(0.5 * (grid.points[i] + grid.points[i + 1]));
  }
  op.stiffness_diag = Eigen::VectorXd::Zero(idx(n));
  op.stiffness_off.resize(idx(n - 1));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double c = op.edge_weights[idx(i)] / h;
    op.stiffness_off[idx(i)] = -c;
    op.stiffness_diag[idx(i)] += c;
    op.stiffness_diag[idx(i + 1)] += c;
  }
  op.symmetric_diag.resize(idx(n));
  op.symmetric_off.resize(idx(n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    op.symmetric_diag[idx(i)] = op.stiffness_diag[idx(i)] / grid.node_masses[i];
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    op.symmetric_off[idx(i)] =
        op.stiffness_off[idx(i)] / std::sqrt(grid.node_masses[i] * grid.node_masses[i + 1]);
  }
  return op;
}

SpectralDecomposition eigendecompose(const OperatorData& op, double t_min) {
  if (!(t_min > 0.0)) throw ParameterError("eigendecompose: t_min must be positive");
  const std::size_t n = op.grid.n_points;
  if (static_cast<std::size_t>(op.symmetric_diag.size()) != n ||
      static_cast<std::size_t>(op.symmetric_off.size()) + 1 != n) {
    throw ShapeError("eigendecompose: operator data does not match its grid");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(op.symmetric_diag, op.symmetric_off, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigendecompose: tridiagonal QR iteration did not converge (n = " +
                       std::to_string(n) + ", diag range [" +
                       std::to_string(op.symmetric_diag.minCoeff()) + ", " +
                       std::to_string(op.symmetric_diag.maxCoeff()) + "])");
  }

  SpectralDecomposition dec;
  dec.grid = op.grid;
  dec.t_min = t_min;
  dec.eigenvalues = solver.eigenvalues();
  dec.solver_ground_eigenvalue = dec.eigenvalues[0];
  dec.eigenvalues[0] = 0.0;

  const Eigen::VectorXd m = masses(op.grid);
  const Eigen::ArrayXd inv_sqrt_m = m.array().sqrt().inverse();
  dec.eigenvectors = inv_sqrt_m.matrix().asDiagonal() * solver.eigenvectors();

  // Exact constant ground state; remove its trace from the other modes.
  const double total = m.sum();
  dec.eigenvectors.col(0).setConstant(1.0 / std::sqrt(total));
  const Eigen::VectorXd e0 = dec.eigenvectors.col(0);
  const Eigen::VectorXd me0 = m.cwiseProduct(e0);
  for (Eigen::Index k = 1; k < idx(n); ++k) {
    auto col = dec.eigenvectors.col(k);
    col -= me0.dot(col) * e0;
    const double norm = std::sqrt(m.dot(col.cwiseAbs2()));
    col /= norm;
  }
  return dec;
}

double kernel(const SpectralDecomposition& dec, double t, std::size_t i, std::size_t j) {
  check_time(dec, t, "kernel");
  check_node(dec, i, "kernel");
  check_node(dec, j, "kernel");
  const Eigen::Index k = active_modes(dec, t);
  const Eigen::VectorXd w = decay_factors(dec, t).head(k);
  const Eigen::VectorXd prod = dec.eigenvectors.row(idx(i)).head(k).transpose().cwiseProduct(
      dec.eigenvectors.row(idx(j)).head(k).transpose());
  return w.dot(prod);
}

Eigen::VectorXd kernel_row(const SpectralDecomposition& dec, double t, std::size_t i) {
  check_time(dec, t, "kernel_row");
  check_node(dec, i, "kernel_row");
  const Eigen::Index k = active_modes(dec, t);
  const Eigen::VectorXd w = decay_factors(dec, t).head(k);
  return dec.eigenvectors.leftCols(k) *
         w.cwiseProduct(dec.eigenvectors.row(idx(i)).head(k).transpose());
}

Eigen::MatrixXd kernel_matrix(const SpectralDecomposition& dec, double t) {
  check_time(dec, t, "kernel_matrix");
  const Eigen::Index k = active_modes(dec, t);
  const Eigen::VectorXd w = decay_factors(dec, t).head(k);
  const auto modes = dec.eigenvectors.leftCols(k);
  const Eigen::MatrixXd scaled = modes * w.asDiagonal();
  Eigen::MatrixXd p = scaled * modes.transpose();
  p.triangularView<Eigen::StrictlyUpper>() = p.transpose();
  return p;
}

std::vector<std::size_t> default_sample_nodes(const Grid& grid, std::size_t max_nodes) {
  std::vector<std::size_t> inner;
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    if (std::abs(grid.points[i]) <= 0.25 * grid.radius) inner.push_back(i);
  }
  if (max_nodes == 0 || inner.size() <= max_nodes) return inner;
  const std::size_t stride = (inner.size() + max_nodes - 1) / max_nodes;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < inner.size(); k += stride) out.push_back(inner[k]);
  return out;
}

double chapman_kolmogorov_residual(const SpectralDecomposition& dec, double s, double t,
                                   std::span<const std::size_t> sample) {
  check_time(dec, s, "chapman_kolmogorov_residual");
  check_time(dec, t, "chapman_kolmogorov_residual");
  std::vector<std::size_t> nodes(sample.begin(), sample.end());
  if (nodes.empty()) nodes = default_sample_nodes(dec.grid);
  for (std::size_t i : nodes) check_node(dec, i, "chapman_kolmogorov_residual");

  const Eigen::VectorXd m = masses(dec.grid);
  std::vector<Eigen::VectorXd> rows_t, rows_s;
  rows_t.reserve(nodes.size());
  rows_s.reserve(nodes.size());
  for (std::size_t i : nodes) {
    rows_t.push_back(kernel_row(dec, t, i).cwiseProduct(m));
    rows_s.push_back(kernel_row(dec, s, i));
  }
  double worst = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const Eigen::VectorXd direct = kernel_row(dec, s + t, nodes[a]);
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      const double composed = rows_t[a].dot(rows_s[b]);
      const double target = direct[idx(nodes[b])];
      worst = std::max(worst, std::abs(composed - target) / std::abs(target));
    }
  }
  return worst;
}

GridFunction apply_semigroup(const SpectralDecomposition& dec, const GridFunction& f,
                             double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw DomainError("apply_semigroup: t must be nonnegative, got " + std::to_string(t));
  }
  check_shape(f, dec.grid, "apply_semigroup");
  const Eigen::VectorXd m = masses(dec.grid);
  const double mean = m.dot(f) / m.sum();
  const Eigen::VectorXd centered = (f.array() - mean).matrix();
  Eigen::VectorXd coeff = dec.eigenvectors.transpose() * m.cwiseProduct(centered);
  coeff[0] = 0.0;
  const Eigen::Index k = t > 0.0 ? active_modes(dec, t) : coeff.size();
  const Eigen::VectorXd damped = coeff.head(k).cwiseProduct(decay_factors(dec, t).head(k));
  return (dec.eigenvectors.leftCols(k) * damped).array() + mean;
}

double trace(const SpectralDecomposition& dec, double t) {
  check_time(dec, t, "trace");
  return decay_factors(dec, t).sum();
}

double hs_norm_sq(const SpectralDecomposition& dec, double t) {
  check_time(dec, t, "hs_norm_sq");
  return decay_factors(dec, 2.0 * t).sum();
}

double l2_norm(const GridFunction& f, const Grid& grid) {
  check_shape(f, grid, "l2_norm");
  return std::sqrt(masses(grid).dot(f.cwiseAbs2()));
}

double weighted_l1(const GridFunction& f, const Weight& weight, const Grid& grid) {
  check_shape(f, grid, "weighted_l1");
  double s = 0.0;
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    s += grid.node_masses[i] * std::abs(f[idx(i)]) * weight.value(grid.points[i]);
  }
  return s;
}

double dirichlet_energy(const GridFunction& f, const OperatorData& op) {
  check_shape(f, op.grid, "dirichlet_energy");
  const double h = op.grid.spacing;
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < op.grid.n_points; ++i) {
    const double d = f[idx(i + 1)] - f[idx(i)];
    s += op.edge_weights[idx(i)] * d * d;
  }
  return s / h;
}

double ground_state_transform_residual(const MeasureModel& model, const Grid& grid,
                                       const GridFunction& g) {
  check_shape(g, grid, "ground_state_transform_residual");
  const std::size_t n = grid.n_points;
  const double peak = g.cwiseAbs().maxCoeff();
  const double edge = std::max(std::abs(g[0]), std::abs(g[idx(n - 1)]));
  if (edge > 1e-12 * peak) {
    throw PreconditionError("ground_state_transform_residual: g does not vanish at the window "
                            "edges (|g| = " + std::to_string(edge) + ")");
  }
  if (peak == 0.0) return 0.0;

  // f' = sqrt(rho) (g' + b g / 2) with g' and g taken at edge midpoints.
  const double h = grid.spacing;
  double flat = 0.0;
  double energy = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double xm = 0.5 * (grid.points[i] + grid.points[i + 1]);
    const double rho = model.density(xm);
    const double dg = (g[idx(i + 1)] - g[idx(i)]) / h;
    const double gm = 0.5 * (g[idx(i)] + g[idx(i + 1)]);
    const double df = dg + 0.5 * model.drift(xm) * gm;
    flat += rho * df * df;
    energy += rho * dg * dg;
  }
  flat *= h;
  energy *= h;

  // LV/V for V = rho^{-1/2}: -b'/2 - b^2/4.
  double potential = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = grid.points[i];
    const double b = model.drift(x);
    const double lv = -0.5 * model.drift_derivative(x) - 0.25 * b * b;
    potential += grid.node_masses[i] * lv * g[idx(i)] * g[idx(i)];
  }
  return std::abs(flat - energy - potential) / std::max(1.0, energy);
}

}  // namespace wnash
