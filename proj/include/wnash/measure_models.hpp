#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

namespace wnash {

/// Mass allowed outside the truncation window [-R, R].
inline constexpr double kTailTol = 1e-10;

enum class Family { kMuA, kCauchy, kOrnsteinUhlenbeck, kLebesgue, kCustom };

std::string to_string(Family family);

/// Family parameters: `a` for mu_a, `beta` for the Cauchy-type density.
struct FamilyParams {
  double a = 0.0;
  double beta = 0.0;
};

/// A measure rho(x) dx on the window [-R, R], described by its log-density
/// up to an additive constant, the drift b = (log rho)' of the associated
/// Sturm-Liouville generator L f = f'' + b f', and b'.
///
/// For finite-mass families the normalization C is computed once at
/// construction so that the density integrates to one over the window.
/// Objects are immutable after construction.
class MeasureModel {
 public:
  struct Functions {
    std::function<double(double)> log_unnormalized;
    std::function<double(double)> drift;
    std::function<double(double)> drift_derivative;
  };

  /// Panels used by the trapezoid rule that computes the normalization.
  static constexpr std::size_t kNormalizationPanels = 1 << 15;

  MeasureModel(std::string name, Family family, FamilyParams params,
               double radius, Functions functions, bool finite_mass);

  const std::string& name() const { return name_; }
  Family family() const { return family_; }
  const FamilyParams& params() const { return params_; }
  double radius() const { return radius_; }
  bool finite_mass() const { return finite_mass_; }

  /// C in rho = C * exp(log_unnormalized); 1 for infinite-mass models.
  double normalization() const { return normalization_; }

  double log_density(double x) const { return log_norm_ + fns_.log_unnormalized(x); }
  double density(double x) const;
  double drift(double x) const { return fns_.drift(x); }
  double drift_derivative(double x) const { return fns_.drift_derivative(x); }

 private:
  std::string name_;
  Family family_;
  FamilyParams params_;
  double radius_;
  Functions fns_;
  bool finite_mass_;
  double normalization_ = 1.0;
  double log_norm_ = 0.0;
};

/// T(x) = (1 + x^2)^{1/2}.
inline double bracket_t(double x) { return std::hypot(1.0, x); }

/// mu_a(dx) = C_a exp(-T(x)^a) dx on [-R, R]; a > 0, R > 0.
MeasureModel make_mu_a(double a, double radius);

/// Cauchy-type density C (1 + x^2)^{-beta}; beta > 1, R > 0.
MeasureModel make_cauchy(double beta, double radius);

/// Standard Gaussian measure; generator f'' - x f'.
MeasureModel make_ornstein_uhlenbeck(double radius);

/// Lebesgue measure on the window (infinite mass on the line).
MeasureModel make_lebesgue(double radius);

/// Smallest radius on a 0.5 lattice with tail_mass(R) < tail_tol for the
/// mu_a family.
double suggest_radius_mu_a(double a, double tail_tol = kTailTol);

/// A positive weight V given through log V and, when available, the closed
/// forms of (log V)' and (log V)''. Empty derivative slots fall back to
/// finite differences where they are needed.
struct Weight {
  enum class Kind { kMuA, kUniversal, kUnit, kCustom };

  std::string name;
  Kind kind = Kind::kCustom;
  double a = 0.0;
  double beta = 0.0;
  std::function<double(double)> log_value;
  std::function<double(double)> d_log;
  std::function<double(double)> d2_log;

  double value(double x) const;
};

/// V(x) = exp(T^a / 2) T^{-beta}; a > 0.
Weight weight_mu_a(double a, double beta);

/// V = rho^{-1/2} for the (normalized) density of `model`.
Weight universal_weight(const MeasureModel& model);

/// V = 1.
Weight unit_weight();

/// q(x) = mu([x, R]). Throws DomainError for x outside [-R, R].
double tail_mass(const MeasureModel& model, double x);

/// Ornstein-Uhlenbeck kernel density with respect to the standard Gaussian
/// (one dimension). Throws DomainError for t <= 0.
double mehler_kernel(double t, double x, double y);

/// Cauchy-Schwarz bound p_{2t}(x,x)^{1/2} p_{2t}(y,y)^{1/2} on the Mehler
/// kernel; equality on the diagonal. Throws DomainError for t <= 0.
double mehler_diag_bound(double t, double x, double y);

}  // namespace wnash
