#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wnash/measure_models.hpp"

namespace wnash {

/// Default floor on t for pointwise kernel evaluations.
inline constexpr double kDefaultTMin = 1e-3;

/// Uniform nodes on [-R, R] with trapezoid masses m_i = rho(x_i) h (half
/// weights at the two end nodes).
struct Grid {
  double radius = 0.0;
  std::size_t n_points = 0;
  double spacing = 0.0;
  std::vector<double> points;
  std::vector<double> node_masses;

  double total_mass() const;
};

/// Builds the grid on the model's window. Throws DegenerateGridError for
/// fewer than three nodes.
Grid make_grid(const MeasureModel& model, std::size_t n_points);

/// Values at the grid nodes.
using GridFunction = Eigen::VectorXd;

/// Samples f at the grid nodes.
template <class F>
GridFunction sample(const Grid& grid, F&& f) {
  GridFunction g(static_cast<Eigen::Index>(grid.n_points));
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    g[static_cast<Eigen::Index>(i)] = f(grid.points[i]);
  }
  return g;
}

/// Discrete Dirichlet form E_h(f,f) = sum_i rho(x_{i+1/2}) h ((f_{i+1}-f_i)/h)^2
/// with reflecting ends. `stiffness_*` is the tridiagonal matrix A of the
/// form (row sums zero); `symmetric_*` is M^{-1/2} A M^{-1/2} with M the
/// diagonal of node masses.
struct OperatorData {
  Grid grid;
  Eigen::VectorXd edge_weights;      // rho(x_{i+1/2}), n-1 entries
  Eigen::VectorXd stiffness_diag;    // n entries
  Eigen::VectorXd stiffness_off;     // n-1 entries
  Eigen::VectorXd symmetric_diag;    // n entries
  Eigen::VectorXd symmetric_off;     // n-1 entries
};

/// Throws DegenerateGridError if a node mass vanishes.
OperatorData discretize(const MeasureModel& model, const Grid& grid);

/// Eigenpairs of -L_h. Eigenvectors are stored column-wise, sampled on the
/// grid and orthonormal for the node masses. The ground state is the exact
/// constant 1/sqrt(sum m_i) with eigenvalue 0, since A annihilates constants
/// by construction; `solver_ground_eigenvalue` keeps the value the
/// tridiagonal solver produced for it.
struct SpectralDecomposition {
  Grid grid;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  double solver_ground_eigenvalue = 0.0;
  double t_min = kDefaultTMin;

  std::size_t size() const { return grid.n_points; }
};

/// Full eigensystem of the symmetric tridiagonal problem (implicit-shift QR).
/// Throws NumericError if the iteration does not converge.
SpectralDecomposition eigendecompose(const OperatorData& op, double t_min = kDefaultTMin);

/// p_t(x_i, x_j) with respect to the node masses. Throws DomainError for
/// t < t_min and ShapeError for node indices out of range.
double kernel(const SpectralDecomposition& dec, double t, std::size_t i, std::size_t j);

/// Row p_t(x_i, .) over all nodes.
Eigen::VectorXd kernel_row(const SpectralDecomposition& dec, double t, std::size_t i);

/// Full matrix p_t(x_i, x_j).
Eigen::MatrixXd kernel_matrix(const SpectralDecomposition& dec, double t);

/// Nodes used by default for sampled residuals: at most `max_nodes` evenly
/// strided nodes with |x| <= R/4. Farther out the kernel entries between
/// opposite sides fall below eps sqrt(m_i m_j) and relative residuals only
/// measure roundoff.
std::vector<std::size_t> default_sample_nodes(const Grid& grid, std::size_t max_nodes = 24);

/// max over sampled (i, j) of the relative Chapman-Kolmogorov defect
/// |sum_k m_k p_t(i,k) p_s(k,j) - p_{t+s}(i,j)| / p_{t+s}(i,j).
double chapman_kolmogorov_residual(const SpectralDecomposition& dec, double s, double t,
                                   std::span<const std::size_t> sample = {});

/// Spectral synthesis of P_t f. The mean of f is carried exactly by the
/// constant mode. Throws DomainError for t < 0.
GridFunction apply_semigroup(const SpectralDecomposition& dec, const GridFunction& f,
                             double t);

/// sum_n exp(-lambda_n t).
double trace(const SpectralDecomposition& dec, double t);

/// sum_n exp(-2 lambda_n t), the squared Hilbert-Schmidt norm of P_t.
double hs_norm_sq(const SpectralDecomposition& dec, double t);

double l2_norm(const GridFunction& f, const Grid& grid);

/// sum_i m_i |f_i| V(x_i).
double weighted_l1(const GridFunction& f, const Weight& weight, const Grid& grid);

/// E_h(f, f).
double dirichlet_energy(const GridFunction& f, const OperatorData& op);

/// Relative defect of the ground-state identity
///   int (f')^2 dx = E(g,g) + int (LV/V) g^2 dmu,  f = g sqrt(rho), V = rho^{-1/2},
/// with every term evaluated by grid quadrature: f' = sqrt(rho)(g' + b g/2)
/// from midpoint differences of g, LV/V = -b'/2 - b^2/4 by the trapezoid
/// rule. Second order in h. `g` must vanish (relative
/// 1e-12) at both end nodes, else PreconditionError.
double ground_state_transform_residual(const MeasureModel& model, const Grid& grid,
                                       const GridFunction& g);

}  // namespace wnash
