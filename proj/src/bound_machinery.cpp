#include "wnash/bound_machinery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "wnash/errors.hpp"
#include "wnash/numerics.hpp"

namespace wnash {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Beyond this point the u-integral switches to the variable r = log log u.
constexpr double kTailStart = 16.0;

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Beyond r = log(1e8) the difference log u - log phi(u) loses more than
// eight digits to cancellation; the tail is extrapolated from there.
const double kTailCancellation = std::log(1e8);

// A chunk contributes negligibly once it falls below this fraction of the sum.
constexpr double kChunkTol = 1e-17;

double log_add_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Largest of 17 equispaced samples of f on [a, b].
template <class F>
double sampled_max(const F& f, double a, double b) {
  double best = 0.0;
  for (int k = 0; k <= 16; ++k) best = std::max(best, f(a + (b - a) * k / 16.0));
  return best;
}

// int_{x}^{kTailStart} du / phi(u) in v = log(u - M), for x < kTailStart.
double body_integral(const RateFunction& rate, double x, double top) {
  if (x >= top) return 0.0;
  const double m = rate.floor;
  const auto g = [&](double v) {
    const double p = rate.phi(m + std::exp(v));
    return std::exp(v) / p;
  };
  return numerics::integrate(g, std::log(x - m), std::log(top - m));
}

// int_{X}^{inf} du / phi(u) in r = log log u.
double tail_integral(const RateFunction& rate, double x_start) {
  const auto log_w = [&](double r) {
    const double s = std::exp(r);
    return r + s - rate.log_at_log(s);
  };
  const auto w = [&](double r) { return std::exp(log_w(r)); };
  double r = std::log(std::log(x_start));
  double total = 0.0;
  for (;;) {
    if (total > 0.0 && sampled_max(w, r, r + 1.0) <= kChunkTol * total) return total;
    if (r + 1.0 > kTailCancellation) break;
    // Relative noise of w is about eps * e^r.
    const double tol = std::max(1e-13, 1e3 * kEps * std::exp(r + 1.0));
    const double chunk = numerics::integrate(w, r, r + 1.0, tol);
    total += chunk;
    if (chunk <= kChunkTol * total) return total;
    r += 1.0;
  }
  // Remainder with the decay rate of the last unit step held fixed.
  const double kappa = log_w(r - 1.0) - log_w(r);
  if (!(kappa > 0.0)) {
    throw NumericError("u_integral: 1/phi does not decay in log log u before u = exp(1e8)");
  }
  return total + w(r) / kappa;
}

double lyapunov_fd_first(const Weight& w, double x) {
  const double h = 1e-5 * std::max(1.0, std::abs(x));
  return (w.log_value(x + h) - w.log_value(x - h)) / (2.0 * h);
}

double lyapunov_fd_second(const Weight& w, double x) {
  const double h = 1e-4 * std::max(1.0, std::abs(x));
  return (w.log_value(x + h) - 2.0 * w.log_value(x) + w.log_value(x - h)) / (h * h);
}

}  // namespace

std::string to_string(RateFunction::Kind kind) {
  switch (kind) {
    case RateFunction::Kind::kPower:
      return "power";
    case RateFunction::Kind::kLogPower:
      return "log_power";
    case RateFunction::Kind::kEmpiricalEnvelope:
      return "empirical_envelope";
    case RateFunction::Kind::kConverse:
      return "converse";
    case RateFunction::Kind::kSuperPoincare:
      return "super_poincare";
  }
  return "unknown";
}

RateFunction power_rate(double coefficient, double exponent, double floor) {
  if (!(coefficient > 0.0) || !std::isfinite(coefficient)) {
    throw ParameterError("power_rate: coefficient must be positive");
  }
  if (!(exponent >= 1.0) || !std::isfinite(exponent)) {
    throw ParameterError("power_rate: exponent must be >= 1 for phi(x)/x to be nondecreasing");
  }
  if (!(floor >= 0.0) || !std::isfinite(floor)) {
    throw ParameterError("power_rate: floor must be nonnegative");
  }
  RateFunction r;
  r.kind = RateFunction::Kind::kPower;
  r.name = "power(C=" + std::to_string(coefficient) + ",r=" + std::to_string(exponent) + ")";
  r.floor = floor;
  r.coefficient = coefficient;
  r.exponent = exponent;
  r.phi = [coefficient, exponent](double x) { return coefficient * std::pow(x, exponent); };
  const double log_c = std::log(coefficient);
  r.log_phi_at_log = [log_c, exponent](double s) { return log_c + exponent * s; };
  if (exponent > 1.0) {
    r.closed_form_u = [coefficient, exponent](double x) {
      if (x <= 0.0) return kInf;
      return std::pow(x, 1.0 - exponent) / (coefficient * (exponent - 1.0));
    };
  }
  return r;
}

RateFunction classical_nash_rate(double n, double coefficient) {
  if (!(n > 0.0)) throw ParameterError("classical_nash_rate: dimension must be positive");
  RateFunction r = power_rate(coefficient, 1.0 + 2.0 / n, 0.0);
  r.name = "classical_nash(n=" + std::to_string(n) + ")";
  return r;
}

RateFunction log_power_rate(double coefficient, double log_exponent, double floor) {
  if (!(coefficient > 0.0) || !std::isfinite(coefficient)) {
    throw ParameterError("log_power_rate: coefficient must be positive");
  }
  if (!(log_exponent >= 0.0) || !std::isfinite(log_exponent)) {
    throw ParameterError("log_power_rate: log exponent must be nonnegative");
  }
  if (!(floor > 1.0) || !std::isfinite(floor)) {
    throw ParameterError("log_power_rate: floor must exceed 1");
  }
  RateFunction r;
  r.kind = RateFunction::Kind::kLogPower;
  r.name = "log_power(C=" + std::to_string(coefficient) + ",p=" + std::to_string(log_exponent) +
           ")";
  r.floor = floor;
  r.coefficient = coefficient;
  r.exponent = 1.0;
  r.log_exponent = log_exponent;
  r.phi = [coefficient, log_exponent](double x) {
    return coefficient * x * std::pow(std::log(x), log_exponent);
  };
  const double log_c = std::log(coefficient);
  r.log_phi_at_log = [log_c, log_exponent](double s) {
    return log_c + s + log_exponent * std::log(s);
  };
  if (log_exponent > 1.0) {
    r.closed_form_u = [coefficient, log_exponent](double x) {
      return std::pow(std::log(x), 1.0 - log_exponent) / (coefficient * (log_exponent - 1.0));
    };
  }
  return r;
}

RateFunction log_rate(double a, double coefficient, double floor) {
  if (!(a > 1.0)) throw ParameterError("log_rate: a must exceed 1");
  RateFunction r = log_power_rate(coefficient, 2.0 * (1.0 - 1.0 / a), floor);
  r.name = "log_rate(a=" + std::to_string(a) + ")";
  return r;
}

RateFunction envelope_rate(double shift, double lambda, double floor) {
  if (!(shift > 0.0) || !std::isfinite(shift)) {
    throw ParameterError("envelope_rate: shift C must be positive");
  }
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ParameterError("envelope_rate: lambda must lie in (0, 1)");
  }
  if (!(floor >= 0.0) || !std::isfinite(floor)) {
    throw ParameterError("envelope_rate: floor must be nonnegative");
  }
  RateFunction r;
  r.kind = RateFunction::Kind::kEmpiricalEnvelope;
  r.name = "envelope(C=" + std::to_string(shift) + ",lambda=" + std::to_string(lambda) + ")";
  r.floor = std::max(floor, shift);
  r.coefficient = std::pow(shift, -1.0 / lambda);
  r.exponent = 1.0 / lambda;
  r.shift = shift;
  const double inv = 1.0 / lambda;
  const double log_c = std::log(shift);
  r.phi = [shift, inv, log_c](double x) {
    if (x <= shift) return 0.0;
    return std::exp(inv * (std::log(x - shift) - log_c));
  };
  r.log_phi_at_log = [shift, inv, log_c](double s) {
    const double log_excess = s + std::log1p(-shift * std::exp(-s));
    return inv * (log_excess - log_c);
  };
  const double log_scale = inv * log_c + std::log(lambda / (1.0 - lambda));
  r.closed_form_u = [shift, inv, log_scale](double x) {
    if (x <= shift) return kInf;
    return std::exp(log_scale + (1.0 - inv) * std::log(x - shift));
  };
  return r;
}

bool integrability_test(const RateFunction& rate) {
  const auto log_w = [&](double r) {
    const double s = std::exp(r);
    return r + s - rate.log_at_log(s);
  };
  constexpr double kStep = 0.5;
  double worst = -kInf;
  for (double r = 4.0; r < 7.5 - 1e-12; r += kStep) {
    const double slope = (log_w(r + kStep) - log_w(r)) / kStep;
    if (!std::isfinite(slope)) return false;
    worst = std::max(worst, slope);
  }
  return worst < -1e-3;
}

double u_integral(const RateFunction& rate, double x) {
  if (!(x > rate.floor)) {
    throw DomainError("u_integral: x = " + std::to_string(x) + " not above the floor " +
                      std::to_string(rate.floor));
  }
  if (!integrability_test(rate)) {
    throw IntegrabilityError("u_integral: 1/phi is not integrable at infinity for " +
                             rate.name);
  }
  if (rate.closed_form_u) return rate.closed_form_u(x);
  if (!(rate.phi(x) > 0.0)) return kInf;
  const double top = std::max(x, kTailStart);
  return body_integral(rate, x, top) + tail_integral(rate, top);
}

double u_at_floor(const RateFunction& rate) {
  if (!integrability_test(rate)) {
    throw IntegrabilityError("u_at_floor: 1/phi is not integrable at infinity for " +
                             rate.name);
  }
  if (rate.closed_form_u) return rate.closed_form_u(rate.floor);
  const double m = rate.floor;
  const auto log_g = [&](double v) { return v - std::log(rate.phi(m + std::exp(v))); };
  const double v1 = std::log(std::max(m, 1.0) * 1e-6);
  const double v2 = v1 - 2.0;
  const double slope = (log_g(v1) - log_g(v2)) / 2.0;
  if (!std::isfinite(slope) || !(slope > 1e-3)) return kInf;

  const double top = std::max(m + 1.0, kTailStart);
  const auto g = [&](double v) { return std::exp(log_g(v)); };
  double v = std::log(top - m);
  double total = 0.0;
  for (int k = 0;; ++k) {
    if (total > 0.0 && 2.0 * sampled_max(g, v - 2.0, v) <= kChunkTol * total) break;
    const double chunk = numerics::integrate(g, v - 2.0, v);
    total += chunk;
    if (chunk <= kChunkTol * total) break;
    v -= 2.0;
    if (k > 400) throw NumericError("u_at_floor: integral at the floor not converged");
  }
  return total + tail_integral(rate, top);
}

KProfile::KProfile(RateFunction rate) : rate_(std::move(rate)) {
  u_at_floor_ = wnash::u_at_floor(rate_);
}

double KProfile::log_u_inverse(double t) const {
  const double m = rate_.floor;
  const auto excess_u = [&](double w) {
    const double x = m + std::exp(w);
    if (!(x > m)) return u_at_floor_;
    return u_integral(rate_, x);
  };
  const auto f = [&](double w) { return excess_u(w) - t; };

  double lo = 0.0;
  double hi = 0.0;
  if (f(0.0) > 0.0) {
    double step = 1.0;
    hi = step;
    while (f(hi) > 0.0) {
      lo = hi;
      step *= 2.0;
      hi = lo + step;
      if (hi > 709.0) throw NumericError("KProfile: U^{-1}(t) exceeds the double range");
    }
  } else {
    double step = 1.0;
    lo = -step;
    while (f(lo) <= 0.0) {
      hi = lo;
      step *= 2.0;
      lo = hi - step;
      if (lo < -745.0) throw NumericError("KProfile: U^{-1}(t) below the double range");
    }
  }
  const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13; };
  boost::uintmax_t iters = 200;
  const auto bracket = boost::math::tools::bisect(f, lo, hi, tol, iters);
  const double w = 0.5 * (bracket.first + bracket.second);
  return m > 0.0 ? log_add_exp(std::log(m), w) : w;
}

double KProfile::u_inverse(double t) const {
  if (!(t > 0.0)) throw DomainError("KProfile: t must be positive");
  if (t >= u_at_floor_) return rate_.floor;
  return std::exp(log_u_inverse(t));
}

double KProfile::operator()(double t) const { return std::exp(log_value(t)); }

double KProfile::log_value(double t) const {
  if (!(t > 0.0)) throw DomainError("KProfile: t must be positive");
  if (t >= u_at_floor_) return 0.5 * std::log(rate_.floor);
  return 0.5 * log_u_inverse(t);
}

KProfile k_profile(const RateFunction& rate) { return KProfile(rate); }

double LyapunovCertificate::max_residual() const {
  double r = -kInf;
  for (double v : residual_profile) r = std::max(r, v);
  return r;
}

double mu_a_lyapunov_expression(double a, double beta, double x) {
  const double t = bracket_t(x);
  const double x2 = x * x;
  const double t4 = std::pow(t, -4.0);
  return 0.25 * a * std::pow(t, a - 4.0) * (2.0 * (a - 1.0) * x2 - a * std::pow(t, a) * x2 + 2.0) +
         beta * (beta + 1.0) * x2 * t4 - beta * t4;
}

double lyapunov_expression(const MeasureModel& model, const Weight& weight, double x) {
  const double d1 = weight.d_log ? weight.d_log(x) : lyapunov_fd_first(weight, x);
  const double d2 = weight.d2_log ? weight.d2_log(x) : lyapunov_fd_second(weight, x);
  return d2 + model.drift(x) * d1 + d1 * d1;
}

LyapunovCertificate lyapunov_constant(const MeasureModel& model, const Weight& weight,
                                      const Grid& grid) {
  if (!weight.log_value) throw ParameterError("lyapunov_constant: weight has no log_value");
  const bool closed = model.family() == Family::kMuA && weight.kind == Weight::Kind::kMuA &&
                      weight.a == model.params().a;
  const double a = weight.a;
  const double beta = weight.beta;
  const auto expr = [&](double x) {
    return closed ? mu_a_lyapunov_expression(a, beta, x) : lyapunov_expression(model, weight, x);
  };

  const std::size_t n = grid.n_points;
  std::vector<double> vals(n);
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    vals[i] = expr(grid.points[i]);
    if (!std::isfinite(vals[i])) {
      throw NoCertificateError("lyapunov_constant: LV/V not finite at x = " +
                               std::to_string(grid.points[i]));
    }
    if (vals[i] > vals[best]) best = i;
  }
  if (n > 1 && ((best == 0 && vals[0] > vals[1]) ||
                (best == n - 1 && vals[n - 1] > vals[n - 2]))) {
    throw NoCertificateError("lyapunov_constant: LV/V grows toward the window edge x = " +
                             std::to_string(grid.points[best]) + "; no finite constant");
  }

  const double lo = grid.points[best == 0 ? 0 : best - 1];
  const double hi = grid.points[best + 1 == n ? n - 1 : best + 1];
  const auto refined = boost::math::tools::brent_find_minima(
      [&](double x) { return -expr(x); }, lo, hi, 40);
  double c = vals[best];
  double arg = grid.points[best];
  if (-refined.second > c) {
    c = -refined.second;
    arg = refined.first;
  }

  LyapunovCertificate cert;
  cert.weight = weight;
  cert.constant = c;
  cert.argmax = arg;
  cert.closed_form = closed;
  cert.points = grid.points;
  cert.residual_profile.resize(n);
  for (std::size_t i = 0; i < n; ++i) cert.residual_profile[i] = vals[i] - c;
  return cert;
}

double log_l2_bound(const KProfile& kp, const LyapunovCertificate& cert, double t) {
  if (!(t > 0.0)) throw DomainError("l2_bound: t must be positive");
  return kp.log_value(2.0 * t) + cert.constant * t;
}

double l2_bound(const KProfile& kp, const LyapunovCertificate& cert, double t) {
  return std::exp(log_l2_bound(kp, cert, t));
}

double log_kernel_bound(const KProfile& kp, const LyapunovCertificate& cert, double t,
                        double x, double y) {
  return 2.0 * log_l2_bound(kp, cert, t) + cert.weight.log_value(x) + cert.weight.log_value(y);
}

double kernel_bound(const KProfile& kp, const LyapunovCertificate& cert, double t, double x,
                    double y) {
  return std::exp(log_kernel_bound(kp, cert, t, x, y));
}

double weight_l2_mass(const MeasureModel& model, const Weight& weight) {
  const double r = model.radius();
  const auto log_integrand = [&](double x) {
    return 2.0 * weight.log_value(x) + model.log_density(x);
  };
  for (double side : {-1.0, 1.0}) {
    const double slope =
        (log_integrand(side * r) - log_integrand(0.5 * side * r)) / std::log(2.0);
    if (!(slope < -1.0 - 1e-3)) {
      throw IntegrabilityError("weight_l2_mass: V^2 rho decays like |x|^" +
                               std::to_string(slope) + " near x = " +
                               std::to_string(side * r) + "; V is not in L2(mu)");
    }
  }
  double ref = -kInf;
  constexpr int kProbes = 64;
  for (int k = 0; k <= kProbes; ++k) {
    ref = std::max(ref, log_integrand(-r + 2.0 * r * k / kProbes));
  }
  const auto f = [&](double x) { return std::exp(log_integrand(x) - ref); };
  const double mass = numerics::integrate(f, -r, 0.0) + numerics::integrate(f, 0.0, r);
  return std::exp(ref) * mass;
}

double trace_bound(const KProfile& kp, const LyapunovCertificate& cert,
                   const MeasureModel& model, const Weight& weight, double t) {
  const double mass = weight_l2_mass(model, weight);
  return std::exp(2.0 * log_l2_bound(kp, cert, t)) * mass;
}

std::vector<double> default_converse_times() {
  constexpr int kCount = 64;
  std::vector<double> ts(kCount);
  const double lo = std::log(1e-3);
  const double hi = std::log(1e2);
  for (int k = 0; k < kCount; ++k) ts[k] = std::exp(lo + (hi - lo) * k / (kCount - 1));
  ts.front() = 1e-3;
  ts.back() = 1e2;
  return ts;
}

RateFunction converse_rate(std::span<const double> times, std::span<const double> k_values,
                           bool interpolate) {
  if (times.size() != k_values.size() || times.empty()) {
    throw ParameterError("converse_rate: need matching, nonempty time and K samples");
  }
  if (interpolate && times.size() < 2) {
    throw ParameterError("converse_rate: interpolation needs at least two samples");
  }
  const std::size_t n = times.size();
  std::vector<double> tau(n), ell(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (!(times[j] > 0.0) || !std::isfinite(times[j])) {
      throw ParameterError("converse_rate: sample times must be positive");
    }
    if (j > 0 && !(times[j] > times[j - 1])) {
      throw ParameterError("converse_rate: sample times must be strictly increasing");
    }
    if (!(k_values[j] > 0.0) || !std::isfinite(k_values[j])) {
      throw ParameterError("converse_rate: K samples must be positive and finite");
    }
    tau[j] = std::log(times[j]);
    ell[j] = std::log(k_values[j]);
  }
  // phi(x) = x Q(log x); every candidate in Q is increasing in s.
  const auto q = [tau, ell, interpolate](double s) {
    double best = 0.0;
    for (std::size_t j = 0; j < tau.size(); ++j) {
      best = std::max(best, 0.5 * (s - 2.0 * ell[j]) * std::exp(-tau[j]));
    }
    if (interpolate) {
      for (std::size_t j = 0; j + 1 < tau.size(); ++j) {
        const double kappa = (ell[j + 1] - ell[j]) / (tau[j + 1] - tau[j]);
        if (!(kappa < 0.0)) continue;
        const double alpha = ell[j] - kappa * tau[j];
        const double star = (s - 2.0 * alpha) / (2.0 * kappa) + 1.0;
        if (star > tau[j] && star < tau[j + 1]) {
          best = std::max(best, -kappa * std::exp(-star));
        }
      }
    }
    return best;
  };
  RateFunction r;
  r.kind = RateFunction::Kind::kConverse;
  r.name = interpolate ? "converse(interpolated)" : "converse(grid)";
  r.floor = 0.0;
  r.phi = [q](double x) { return x > 0.0 ? x * q(std::log(x)) : 0.0; };
  r.log_phi_at_log = [q](double s) { return s + std::log(q(s)); };
  return r;
}

double super_poincare_psi(std::span<const double> a_grid, std::span<const double> b_values,
                          double x) {
  if (a_grid.size() != b_values.size() || a_grid.empty()) {
    throw ParameterError("super_poincare_psi: need matching, nonempty a and b samples");
  }
  double best = kInf;
  for (std::size_t j = 0; j < a_grid.size(); ++j) {
    best = std::min(best, a_grid[j] * x + b_values[j]);
  }
  return best;
}

RateFunction super_poincare_envelope(std::span<const double> a_grid,
                                     std::span<const double> b_values) {
  if (a_grid.size() != b_values.size() || a_grid.empty()) {
    throw ParameterError("super_poincare_envelope: need matching, nonempty a and b samples");
  }
  std::vector<double> as(a_grid.begin(), a_grid.end());
  std::vector<double> bs(b_values.begin(), b_values.end());
  double floor = kInf;
  for (std::size_t j = 0; j < as.size(); ++j) {
    if (!(as[j] > 0.0) || !std::isfinite(as[j])) {
      throw InversionError("super_poincare_envelope: slope a = " + std::to_string(as[j]) +
                           " makes psi not strictly increasing");
    }
    if (!(bs[j] >= 0.0) || !std::isfinite(bs[j])) {
      throw ParameterError("super_poincare_envelope: b(a) must be nonnegative and finite");
    }
    floor = std::min(floor, bs[j]);
  }
  RateFunction r;
  r.kind = RateFunction::Kind::kSuperPoincare;
  r.name = "super_poincare";
  r.floor = floor;
  r.phi = [as, bs](double y) {
    double best = -kInf;
    for (std::size_t j = 0; j < as.size(); ++j) best = std::max(best, (y - bs[j]) / as[j]);
    return best;
  };
  r.log_phi_at_log = [as, bs](double s) {
    double best = -kInf;
    for (std::size_t j = 0; j < as.size(); ++j) {
      const double frac = bs[j] * std::exp(-s);
      if (frac < 1.0) best = std::max(best, s + std::log1p(-frac) - std::log(as[j]));
    }
    return best;
  };
  return r;
}

NashQuotient nash_quotient(const GridFunction& f, const Weight& weight, const OperatorData& op) {
  const double l1 = weighted_l1(f, weight, op.grid);
  if (!(l1 > 0.0)) throw ParameterError("nash_quotient: ||f V||_1 vanishes");
  const double l2 = l2_norm(f, op.grid);
  const double l1sq = l1 * l1;
  return {l2 * l2 / l1sq, dirichlet_energy(f, op) / l1sq};
}

double default_envelope_floor(const Weight& weight, const Grid& grid) {
  double mass = 0.0;
  for (std::size_t i = 0; i < grid.n_points; ++i) {
    mass += grid.node_masses[i] * weight.value(grid.points[i]);
  }
  return 1.5 / (mass * mass);
}

EmpiricalFit empirical_rate(std::span<const NashQuotient> pairs, double lambda, double floor) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ParameterError("empirical_rate: lambda must lie in (0, 1)");
  }
  if (!(floor >= 0.0) || !std::isfinite(floor)) {
    throw ParameterError("empirical_rate: floor must be nonnegative");
  }
  if (pairs.empty()) throw CalibrationError("empirical_rate: empty family");
  std::vector<NashQuotient> active;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0) {
      throw CalibrationError("empirical_rate: non-finite or negative Nash quotient");
    }
    if (p.x > floor) active.push_back(p);
  }

  EmpiricalFit fit;
  fit.lambda = lambda;
  fit.constrained = active.size();
  if (active.empty()) {
    if (!(floor > 0.0)) {
      throw CalibrationError("empirical_rate: no constrained pair and zero floor");
    }
    fit.shift = floor;
    fit.degenerate = true;
  } else {
    double x_max = 0.0;
    for (const auto& p : active) x_max = std::max(x_max, p.x);
    // Largest violation of x <= C (1 + y^lambda); decreasing in C.
    const auto gap = [&](double c) {
      double g = -kInf;
      for (const auto& p : active) g = std::max(g, p.x - c * (1.0 + std::pow(p.y, lambda)));
      return g;
    };
    if (!(gap(x_max) < 0.0)) {
      throw CalibrationError("empirical_rate: no envelope of the fitted shape lies below the "
                             "pairs (a pair with zero energy sits above the floor)");
    }
    const auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-15 * std::abs(b); };
    boost::uintmax_t iters = 200;
    const auto bracket = boost::math::tools::bisect(gap, 0.0, x_max, tol, iters);
    fit.shift = bracket.second;
    if (!(fit.shift < x_max)) {
      throw CalibrationError("empirical_rate: fitted C reaches the largest quotient");
    }
  }
  fit.rate = envelope_rate(fit.shift, lambda, floor);
  fit.rate.degenerate = fit.degenerate;
  fit.floor = fit.rate.floor;
  return fit;
}

EmpiricalFit empirical_rate(std::span<const GridFunction> family, const Weight& weight,
                            const OperatorData& op, double lambda, double floor) {
  std::vector<NashQuotient> pairs;
  pairs.reserve(family.size());
  for (const auto& f : family) pairs.push_back(nash_quotient(f, weight, op));
  return empirical_rate(pairs, lambda, floor);
}

std::pair<double, double> admissible_theta_interval(double a, double beta) {
  if (!(a > 0.0)) throw ParameterError("admissible_theta_interval: a must be positive");
  const double alpha_max = std::min(1.5, 1.0 + (beta - 0.5 * (3.0 - a)) / a);
  if (!(alpha_max > 1.0)) {
    throw ParameterError("admissible_theta_interval: beta must exceed (3 - a)/2");
  }
  return {1.0 / alpha_max, 1.0};
}

MuAExponents mu_a_exponents(double a, double beta, double theta) {
  if (!(a > 1.0) || !std::isfinite(a)) throw ParameterError("mu_a_exponents: a must exceed 1");
  if (!(beta > std::max(0.0, 0.5 * (3.0 - a))) || !std::isfinite(beta)) {
    throw ParameterError("mu_a_exponents: beta must exceed max(0, (3 - a)/2)");
  }
  const auto interval = admissible_theta_interval(a, beta);
  if (std::isnan(theta)) theta = 0.5 * (interval.first + interval.second);
  if (!(theta > 0.0 && theta < 1.0)) {
    throw ParameterError("mu_a_exponents: theta must lie in (0, 1)");
  }
  MuAExponents e;
  e.a = a;
  e.beta = beta;
  e.theta = theta;
  e.gamma = 1.0 - 2.0 * (a - 1.0) / (3.0 * (a - 1.0) + 2.0 * beta);
  e.lambda = e.gamma + theta * (1.0 - e.gamma);
  e.delta = 2.0 * e.lambda / (1.0 - e.lambda);
  e.theta_admissible = theta > interval.first && theta < interval.second;
  return e;
}

std::vector<double> measured_k(const SpectralDecomposition& dec, const Weight& weight,
                               std::span<const double> times) {
  const std::size_t n = dec.size();
  std::vector<double> log_v(n);
  for (std::size_t i = 0; i < n; ++i) log_v[i] = weight.log_value(dec.grid.points[i]);
  const Eigen::MatrixXd sq = dec.eigenvectors.cwiseAbs2();
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    if (!(2.0 * t >= dec.t_min)) {
      throw DomainError("measured_k: 2t = " + std::to_string(2.0 * t) + " below t_min");
    }
    const Eigen::VectorXd w = (-2.0 * t * dec.eigenvalues.array()).exp().matrix();
    const Eigen::VectorXd diag = sq * w;
    double best = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      best = std::max(best, std::log(diag[static_cast<Eigen::Index>(i)]) - 2.0 * log_v[i]);
    }
    out.push_back(std::exp(0.5 * best));
  }
  return out;
}

}  // namespace wnash
