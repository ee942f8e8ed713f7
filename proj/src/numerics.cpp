#include "wnash/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "wnash/errors.hpp"

namespace wnash::numerics {

double trapezoid(const std::function<double(double)>& f, double a, double b,
                 std::size_t panels) {
  if (panels == 0) throw ParameterError("trapezoid: zero panels");
  const double h = (b - a) / static_cast<double>(panels);
  double sum = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < panels; ++i) {
    sum += f(a + h * static_cast<double>(i));
  }
  return sum * h;
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
  if (a == b) return 0.0;
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
      f, a, b, 15, rel_tol, &error, &l1);
  if (!std::isfinite(value)) {
    throw NumericError("integrate: non-finite result on [" + std::to_string(a) +
                       ", " + std::to_string(b) + "]");
  }
  if (error > 1e-6 * std::max(l1, 1e-300) && error > 1e-300) {
    throw NumericError("integrate: error estimate " + std::to_string(error) +
                       " too large for integral " + std::to_string(value));
  }
  return value;
}

}  // namespace wnash::numerics
