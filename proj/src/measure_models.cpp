#include "wnash/measure_models.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "wnash/errors.hpp"
#include "wnash/numerics.hpp"

namespace wnash {

std::string to_string(Family family) {
  switch (family) {
    case Family::kMuA:
      return "mu_a";
    case Family::kCauchy:
      return "cauchy";
    case Family::kOrnsteinUhlenbeck:
      return "ou";
    case Family::kLebesgue:
      return "lebesgue";
    case Family::kCustom:
      return "custom";
  }
  return "unknown";
}

MeasureModel::MeasureModel(std::string name, Family family, FamilyParams params,
                           double radius, Functions functions, bool finite_mass)
    : name_(std::move(name)),
      family_(family),
      params_(params),
      radius_(radius),
      fns_(std::move(functions)),
      finite_mass_(finite_mass) {
  if (!(radius_ > 0.0) || !std::isfinite(radius_)) {
    throw ParameterError("measure model '" + name_ + "': window radius must be positive");
  }
  if (!fns_.log_unnormalized || !fns_.drift || !fns_.drift_derivative) {
    throw ParameterError("measure model '" + name_ + "': missing density functions");
  }
  if (finite_mass_) {
    // Shift by the log-density at the origin so that the exponentials stay
    // in range for steep families.
    const double shift = fns_.log_unnormalized(0.0);
    const double mass = numerics::trapezoid(
        [&](double x) { return std::exp(fns_.log_unnormalized(x) - shift); },
        -radius_, radius_, kNormalizationPanels);
    log_norm_ = -shift - std::log(mass);
    normalization_ = std::exp(log_norm_);
  }
}

double MeasureModel::density(double x) const { return std::exp(log_density(x)); }

MeasureModel make_mu_a(double a, double radius) {
  if (!(a > 0.0)) throw ParameterError("mu_a: a must be positive");
  if (!(radius > 0.0)) throw ParameterError("mu_a: window radius must be positive");
  MeasureModel::Functions fns;
  fns.log_unnormalized = [a](double x) { return -std::pow(bracket_t(x), a); };
  // b = -a T^{a-1} T' with T' = x / T.
  fns.drift = [a](double x) { return -a * std::pow(bracket_t(x), a - 2.0) * x; };
  fns.drift_derivative = [a](double x) {
    const double t = bracket_t(x);
    return -a * (std::pow(t, a - 2.0) + (a - 2.0) * std::pow(t, a - 4.0) * x * x);
  };
  return MeasureModel("mu_a(a=" + std::to_string(a) + ")", Family::kMuA, {a, 0.0}, radius,
                      std::move(fns), true);
}

MeasureModel make_cauchy(double beta, double radius) {
  if (!(beta > 1.0)) throw ParameterError("cauchy: beta must exceed 1 for finite mass");
  if (!(radius > 0.0)) throw ParameterError("cauchy: window radius must be positive");
  MeasureModel::Functions fns;
  fns.log_unnormalized = [beta](double x) { return -beta * std::log1p(x * x); };
  fns.drift = [beta](double x) { return -2.0 * beta * x / (1.0 + x * x); };
  fns.drift_derivative = [beta](double x) {
    const double s = 1.0 + x * x;
    return -2.0 * beta * (1.0 - x * x) / (s * s);
  };
  return MeasureModel("cauchy(beta=" + std::to_string(beta) + ")", Family::kCauchy,
                      {0.0, beta}, radius, std::move(fns), true);
}

MeasureModel make_ornstein_uhlenbeck(double radius) {
  if (!(radius > 0.0)) throw ParameterError("ou: window radius must be positive");
  MeasureModel::Functions fns;
  fns.log_unnormalized = [](double x) { return -0.5 * x * x; };
  fns.drift = [](double x) { return -x; };
  fns.drift_derivative = [](double) { return -1.0; };
  return MeasureModel("ou", Family::kOrnsteinUhlenbeck, {}, radius, std::move(fns), true);
}

MeasureModel make_lebesgue(double radius) {
  if (!(radius > 0.0)) throw ParameterError("lebesgue: window radius must be positive");
  MeasureModel::Functions fns;
  fns.log_unnormalized = [](double) { return 0.0; };
  fns.drift = [](double) { return 0.0; };
  fns.drift_derivative = [](double) { return 0.0; };
  return MeasureModel("lebesgue", Family::kLebesgue, {}, radius, std::move(fns), false);
}

double suggest_radius_mu_a(double a, double tail_tol) {
  if (!(a > 0.0)) throw ParameterError("suggest_radius_mu_a: a must be positive");
  if (!(tail_tol > 0.0 && tail_tol < 0.5)) {
    throw ParameterError("suggest_radius_mu_a: tail tolerance must lie in (0, 1/2)");
  }
  // Beyond this radius exp(-T^a) underflows, so the reference window holds
  // all representable mass.
  const double wide = std::sqrt(std::pow(745.0, 2.0 / a) - 1.0);
  const MeasureModel reference = make_mu_a(a, wide);
  for (double r = 0.5; r < wide; r += 0.5) {
    if (tail_mass(reference, r) < tail_tol) return r;
  }
  return wide;
}

double Weight::value(double x) const { return std::exp(log_value(x)); }

Weight weight_mu_a(double a, double beta) {
  if (!(a > 0.0)) throw ParameterError("weight_mu_a: a must be positive");
  Weight w;
  w.name = "mu_a_weight(a=" + std::to_string(a) + ",beta=" + std::to_string(beta) + ")";
  w.kind = Weight::Kind::kMuA;
  w.a = a;
  w.beta = beta;
  w.log_value = [a, beta](double x) {
    const double t = bracket_t(x);
    return 0.5 * std::pow(t, a) - beta * std::log(t);
  };
  w.d_log = [a, beta](double x) {
    const double t = bracket_t(x);
    return 0.5 * a * std::pow(t, a - 2.0) * x - beta * x / (t * t);
  };
  w.d2_log = [a, beta](double x) {
    const double t = bracket_t(x);
    const double t2 = t * t;
    return 0.5 * a * (std::pow(t, a - 2.0) + (a - 2.0) * std::pow(t, a - 4.0) * x * x) -
           beta * (1.0 - x * x) / (t2 * t2);
  };
  return w;
}

Weight universal_weight(const MeasureModel& model) {
  Weight w;
  w.name = "universal(" + model.name() + ")";
  w.kind = Weight::Kind::kUniversal;
  // The weight keeps its own copy of the model so that it can outlive it.
  auto m = std::make_shared<const MeasureModel>(model);
  w.log_value = [m](double x) { return -0.5 * m->log_density(x); };
  w.d_log = [m](double x) { return -0.5 * m->drift(x); };
  w.d2_log = [m](double x) { return -0.5 * m->drift_derivative(x); };
  return w;
}

Weight unit_weight() {
  Weight w;
  w.name = "unit";
  w.kind = Weight::Kind::kUnit;
  w.log_value = [](double) { return 0.0; };
  w.d_log = [](double) { return 0.0; };
  w.d2_log = [](double) { return 0.0; };
  return w;
}

double tail_mass(const MeasureModel& model, double x) {
  const double r = model.radius();
  if (!(x >= -r && x <= r)) {
    throw DomainError("tail_mass: x = " + std::to_string(x) + " outside window [-" +
                      std::to_string(r) + ", " + std::to_string(r) + "]");
  }
  if (x == r) return 0.0;
  // Integrate relative to the largest sampled density on [x, R] so that
  // deep-tail masses keep their relative accuracy without overflow.
  double ref = model.log_density(x);
  constexpr int kProbes = 64;
  for (int k = 1; k <= kProbes; ++k) {
    ref = std::max(ref, model.log_density(x + (r - x) * k / kProbes));
  }
  const double scaled = numerics::integrate(
      [&](double y) { return std::exp(model.log_density(y) - ref); }, x, r);
  return std::exp(ref) * scaled;
}

double mehler_kernel(double t, double x, double y) {
  if (!(t > 0.0)) throw DomainError("mehler_kernel: t must be positive");
  const double one_minus = -std::expm1(-2.0 * t);
  const double e1 = std::exp(-t);
  const double e2 = e1 * e1;
  const double quad = (x * x + y * y) * e2 - 2.0 * x * y * e1;
  return std::exp(-quad / (2.0 * one_minus)) / std::sqrt(one_minus);
}

double mehler_diag_bound(double t, double x, double y) {
  if (!(t > 0.0)) throw DomainError("mehler_diag_bound: t must be positive");
  const double denom = 1.0 + std::exp(2.0 * t);
  return std::exp((x * x + y * y) / (2.0 * denom)) / std::sqrt(-std::expm1(-4.0 * t));
}

}  // namespace wnash
