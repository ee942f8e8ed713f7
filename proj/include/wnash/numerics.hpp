#pragma once

#include <cstddef>
#include <functional>

namespace wnash::numerics {

/// Composite trapezoid rule with `panels` equal panels on [a, b].
double trapezoid(const std::function<double(double)>& f, double a, double b,
                 std::size_t panels);

/// Adaptive Gauss-Kronrod (7/15) quadrature on a finite interval. Throws
/// NumericError if the estimated relative error stays above 1e-6 after
/// refinement.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-13);

}  // namespace wnash::numerics
