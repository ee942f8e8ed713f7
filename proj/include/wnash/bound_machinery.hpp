#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wnash/measure_models.hpp"
#include "wnash/spectral_semigroup.hpp"

namespace wnash {

/// A rate function phi on (M, inf) with phi(x)/x nondecreasing.
///
/// Besides phi itself every kind carries log phi(e^s), so that tails far
/// beyond the double range (x = exp(e^7)) can be probed, and, where it
/// exists, the closed form of U(x) = int_x^inf du / phi(u).
struct RateFunction {
  enum class Kind { kPower, kLogPower, kEmpiricalEnvelope, kConverse, kSuperPoincare };

  Kind kind = Kind::kPower;
  std::string name;
  double floor = 0.0;
  std::function<double(double)> phi;
  std::function<double(double)> log_phi_at_log;
  /// Closed-form U on [floor, inf); +inf where the integral diverges. Empty
  /// when only quadrature is available.
  std::function<double(double)> closed_form_u;

  // Descriptive parameters (meaning depends on the kind).
  double coefficient = 0.0;
  double exponent = 0.0;
  double log_exponent = 0.0;
  double shift = 0.0;
  bool degenerate = false;

  double operator()(double x) const { return phi(x); }
  double log_at_log(double s) const { return log_phi_at_log(s); }
};

std::string to_string(RateFunction::Kind kind);

/// phi(x) = C x^r on (M, inf); C > 0, r >= 1, M >= 0.
RateFunction power_rate(double coefficient, double exponent, double floor = 0.0);

/// phi(x) = C x^{1+2/n}, M = 0.
RateFunction classical_nash_rate(double n, double coefficient = 1.0);

/// phi(x) = C x (log x)^p on (M, inf); p >= 0, M > 1.
RateFunction log_power_rate(double coefficient, double log_exponent, double floor);

/// The log rate attached to mu_a with V = 1: p = 2(1 - 1/a); a > 1, M > 1.
RateFunction log_rate(double a, double coefficient = 1.0, double floor = 2.718281828459045);

/// phi(x) = C^{-1/lambda} (x - C)^{1/lambda} on (max(C, M), inf).
RateFunction envelope_rate(double shift, double lambda, double floor);

/// True when int^inf dx / phi converges. Decided from the slope of
/// log W(r), W(r) = exp(r + e^r) / phi(exp(e^r)), over r in [4, 7.5]:
/// convergent iff every window slope is below -1e-3.
bool integrability_test(const RateFunction& rate);

/// U(x) = int_x^inf du / phi(u) for x > M. Closed form when available,
/// otherwise adaptive quadrature in log(u - M) up to u = 16 and in
/// log log u beyond, up to log u = 1e8 and geometric extrapolation of the
/// last unit step after that. Throws DomainError for x <= M and IntegrabilityError
/// when the tail diverges.
double u_integral(const RateFunction& rate, double x);

/// U(M), possibly +inf. Finite iff 1/phi is integrable at the floor.
double u_at_floor(const RateFunction& rate);

/// K(t) = sqrt(U^{-1}(t)) for 0 < t < U(M), sqrt(M) for t >= U(M).
class KProfile {
 public:
  explicit KProfile(RateFunction rate);

  const RateFunction& rate() const { return rate_; }
  double u_at_floor() const { return u_at_floor_; }

  /// U^{-1}(t) for 0 < t < U(M), by bisection in log(x - M) on a bracket
  /// grown geometrically; relative tolerance 1e-12.
  double u_inverse(double t) const;

  double operator()(double t) const;
  double log_value(double t) const;

 private:
  double log_u_inverse(double t) const;

  RateFunction rate_;
  double u_at_floor_;
};

/// Throws IntegrabilityError if 1/phi is not integrable at infinity.
KProfile k_profile(const RateFunction& rate);

/// Weight V with constant c such that LV <= c V on the grid.
struct LyapunovCertificate {
  Weight weight;
  double constant = 0.0;
  double argmax = 0.0;
  bool closed_form = false;
  std::vector<double> points;
  /// (LV/V)(x_i) - c at the grid nodes.
  std::vector<double> residual_profile;

  double max_residual() const;
};

/// L(log V) + (log V)'^2 for the mu_a weight on mu_a with the same a.
double mu_a_lyapunov_expression(double a, double beta, double x);

/// L(log V) + (log V)'^2 = (log V)'' + b (log V)' + (log V)'^2, with finite
/// differences for missing derivative slots.
double lyapunov_expression(const MeasureModel& model, const Weight& weight, double x);

/// c = sup of LV/V over the grid, refined by golden-section search around
/// the best node. The closed form is used for the mu_a weight on mu_a.
/// Throws NoCertificateError when the largest value sits at a window edge
/// and still grows outward.
LyapunovCertificate lyapunov_constant(const MeasureModel& model, const Weight& weight,
                                      const Grid& grid);

/// K(2t) e^{ct}.
double l2_bound(const KProfile& kp, const LyapunovCertificate& cert, double t);
double log_l2_bound(const KProfile& kp, const LyapunovCertificate& cert, double t);

/// K(2t)^2 e^{2ct} V(x) V(y).
double kernel_bound(const KProfile& kp, const LyapunovCertificate& cert, double t, double x,
                    double y);
double log_kernel_bound(const KProfile& kp, const LyapunovCertificate& cert, double t,
                        double x, double y);

/// int V^2 dmu over the window. Throws IntegrabilityError when V^2 rho does
/// not decay faster than |x|^{-1-1e-3} between R/2 and R on either side.
double weight_l2_mass(const MeasureModel& model, const Weight& weight);

/// K(2t)^2 e^{2ct} int V^2 dmu.
double trace_bound(const KProfile& kp, const LyapunovCertificate& cert,
                   const MeasureModel& model, const Weight& weight, double t);

/// Default time grid for the converse construction: 64 log-spaced points on
/// [1e-3, 1e2].
std::vector<double> default_converse_times();

/// phi(x) = sup_t (x / 2t) log(x / K(t)^2), clipped at 0, M = 0. With
/// `interpolate`, log K is taken piecewise linear in log t between samples
/// and each piece is maximized in closed form; otherwise the sup runs over
/// the sample times only (a lower bound on the true sup). Throws
/// ParameterError for unsorted times or nonpositive K.
RateFunction converse_rate(std::span<const double> times, std::span<const double> k_values,
                           bool interpolate = true);

/// psi(x) = min_j (a_j x + b_j) and its inverse phi(y) = max_j (y - b_j) / a_j
/// on (min b, inf). Throws InversionError if some a_j <= 0 and ParameterError
/// for negative b_j or mismatched lengths.
RateFunction super_poincare_envelope(std::span<const double> a_grid,
                                     std::span<const double> b_values);

/// min_j (a_j x + b_j).
double super_poincare_psi(std::span<const double> a_grid, std::span<const double> b_values,
                          double x);

/// (||f||_2^2, E(f,f)) / ||f V||_1^2.
struct NashQuotient {
  double x = 0.0;
  double y = 0.0;
};

/// Throws ParameterError when ||f V||_1 = 0.
NashQuotient nash_quotient(const GridFunction& f, const Weight& weight, const OperatorData& op);

/// 1.5 / (int V dmu_h)^2, i.e. 1.5 times the x-quotient of the constant.
double default_envelope_floor(const Weight& weight, const Grid& grid);

/// Greatest C^{-1/lambda}(x - C)^{1/lambda} below all pairs with x > M.
struct EmpiricalFit {
  RateFunction rate;
  double shift = 0.0;
  double lambda = 0.0;
  double floor = 0.0;
  std::size_t constrained = 0;
  bool degenerate = false;
};

/// Fits C by bisection on the monotone feasibility gap. With no pair above
/// M the fit is degenerate and C := M. Throws CalibrationError for
/// non-finite quotients or when C reaches the largest constrained x.
EmpiricalFit empirical_rate(std::span<const NashQuotient> pairs, double lambda, double floor);

EmpiricalFit empirical_rate(std::span<const GridFunction> family, const Weight& weight,
                            const OperatorData& op, double lambda, double floor);

/// Admissible theta for the comparison step: (1/alpha_max, 1) with
/// alpha_max = min(3/2, 1 + (beta - (3 - a)/2) / a).
std::pair<double, double> admissible_theta_interval(double a, double beta);

struct MuAExponents {
  double a = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double theta = 0.0;
  double lambda = 0.0;
  double delta = 0.0;
  bool theta_admissible = false;
};

/// gamma = 1 - 2(a-1)/(3(a-1)+2 beta), lambda = gamma + theta (1 - gamma),
/// delta = 2 lambda / (1 - lambda). A NaN theta selects the midpoint of the
/// admissible interval. Throws ParameterError unless a > 1,
/// beta > max(0, (3-a)/2) and theta in (0, 1).
MuAExponents mu_a_exponents(double a, double beta,
                            double theta = std::numeric_limits<double>::quiet_NaN());

/// K(t) = max_i p_{2t}(x_i, x_i)^{1/2} / V(x_i), the smallest K with
/// ||P_t f||_2 <= K ||f V||_1 for the discrete semigroup.
std::vector<double> measured_k(const SpectralDecomposition& dec, const Weight& weight,
                               std::span<const double> times);

}  // namespace wnash
