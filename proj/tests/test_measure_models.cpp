#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "wnash/errors.hpp"
#include "wnash/measure_models.hpp"

using namespace wnash;

namespace {

double mass_by_simpson(const MeasureModel& m, std::size_t panels) {
  return oracle::simpson([&](double x) { return m.density(x); }, -m.radius(), m.radius(),
                         panels);
}

std::vector<MeasureModel> all_models() {
  return {make_mu_a(1.0, 30.0),        make_mu_a(1.5, suggest_radius_mu_a(1.5)),
          make_mu_a(2.0, 6.0),         make_mu_a(3.0, 4.0),
          make_cauchy(2.0, 50.0),      make_cauchy(1.5, 40.0),
          make_ornstein_uhlenbeck(8.0), make_lebesgue(10.0)};
}

}  // namespace

TEST(MuA, DensityAtOriginIsNormalizationOverE) {
  const MeasureModel m = make_mu_a(2.0, 6.0);
  EXPECT_NEAR(m.log_density(0.0), std::log(m.normalization()) - 1.0, 1e-14);
  EXPECT_NEAR(m.density(0.0), m.normalization() * std::exp(-1.0), 1e-14);
}

TEST(MuA, MassIsOneAgainstDoubledResolutionSimpson) {
  const MeasureModel m = make_mu_a(1.5, 12.0);
  const double coarse = mass_by_simpson(m, 1 << 14);
  const double fine = mass_by_simpson(m, 1 << 15);
  EXPECT_NEAR(coarse, fine, 1e-12);
  EXPECT_NEAR(fine, 1.0, 1e-9);
}

TEST(MuA, DriftVanishesAtOrigin) {
  for (double a : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    EXPECT_EQ(make_mu_a(a, 10.0).drift(0.0), 0.0) << "a=" << a;
  }
}

TEST(MuA, DriftIsClosedForm) {
  const double a = 1.5;
  const MeasureModel m = make_mu_a(a, 8.0);
  for (double x : {-3.0, -0.7, 0.2, 1.0, 5.5}) {
    const double t = std::sqrt(1.0 + x * x);
    EXPECT_NEAR(m.drift(x), -a * std::pow(t, a - 1.0) * x / t, 1e-13);
  }
}

TEST(MuA, RejectsBadParameters) {
  EXPECT_THROW(make_mu_a(0.0, 5.0), ParameterError);
  EXPECT_THROW(make_mu_a(-1.0, 5.0), ParameterError);
  EXPECT_THROW(make_mu_a(1.5, 0.0), ParameterError);
  EXPECT_THROW(make_mu_a(1.5, -2.0), ParameterError);
}

TEST(MuA, SuggestedRadiusLeavesTailBelowTolerance) {
  for (double a : {1.0, 1.5, 2.0, 3.0}) {
    const double r = suggest_radius_mu_a(a);
    const MeasureModel m = make_mu_a(a, r + 20.0);
    const double tail = oracle::simpson([&](double x) { return m.density(x); }, r, r + 20.0,
                                        1 << 14);
    EXPECT_LT(tail, kTailTol) << "a=" << a;
  }
}

TEST(Cauchy, DriftAndDensityRatio) {
  const MeasureModel m = make_cauchy(2.0, 50.0);
  EXPECT_EQ(m.drift(0.0), 0.0);
  EXPECT_NEAR(m.density(1.0) / m.density(0.0), 0.25, 1e-14);
  EXPECT_NEAR(m.drift(2.0), -2.0 * 2.0 * 2.0 / 5.0, 1e-14);
}

TEST(Cauchy, MassIsOneAgainstSimpson) {
  const MeasureModel m = make_cauchy(2.0, 50.0);
  EXPECT_NEAR(mass_by_simpson(m, 1 << 16), 1.0, 1e-6);
}

TEST(Cauchy, RejectsInfiniteMass) {
  EXPECT_THROW(make_cauchy(1.0, 50.0), ParameterError);
  EXPECT_THROW(make_cauchy(0.5, 50.0), ParameterError);
}

TEST(WeightMuA, ValueAtOrigin) {
  EXPECT_NEAR(weight_mu_a(1.5, 1.0).value(0.0), std::exp(0.5), 1e-14);
  EXPECT_NEAR(weight_mu_a(3.0, -2.0).value(0.0), std::exp(0.5), 1e-14);
}

TEST(WeightMuA, GaussianCase) {
  const Weight v = weight_mu_a(2.0, 0.0);
  for (double x : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
    EXPECT_NEAR(v.value(x) / std::exp(0.5 * (1.0 + x * x)), 1.0, 1e-13);
  }
}

TEST(WeightMuA, SquareIntegrableForBetaAboveOneHalf) {
  const MeasureModel m = make_mu_a(1.5, 40.0);
  const Weight v = weight_mu_a(1.5, 1.0);
  const auto integrand = [&](double x) { return std::exp(2.0 * v.log_value(x) + m.log_density(x)); };
  const double coarse = oracle::simpson(integrand, -40.0, 40.0, 1 << 14);
  const double fine = oracle::simpson(integrand, -40.0, 40.0, 1 << 15);
  EXPECT_TRUE(std::isfinite(fine));
  EXPECT_NEAR(coarse / fine, 1.0, 1e-6);
}

TEST(WeightMuA, ValueMatchesLogValue) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const Weight v = weight_mu_a(1.5, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double x = u(gen);
    EXPECT_NEAR(v.value(x) / std::exp(v.log_value(x)), 1.0, 1e-12);
    EXPECT_GT(v.value(x), 0.0);
  }
}

TEST(WeightMuA, ShapeIsMonotoneOrSingleMinimum) {
  for (double a : {1.0, 1.5, 2.0, 3.0}) {
    for (double beta : {0.1, 0.25, 0.5, 2.0, 3.0}) {
      const Weight v = weight_mu_a(a, beta);
      std::vector<double> vals;
      for (int k = 1; k <= 2000; ++k) vals.push_back(v.log_value(0.005 * k));
      int turns = 0;
      bool decreasing = vals[1] < vals[0];
      for (std::size_t k = 2; k < vals.size(); ++k) {
        const bool dec = vals[k] < vals[k - 1];
        if (dec != decreasing) {
          ++turns;
          decreasing = dec;
        }
      }
      if (2.0 * beta <= 1.0) {
        for (std::size_t k = 1; k < vals.size(); ++k) {
          ASSERT_GE(vals[k], vals[k - 1]) << "a=" << a << " beta=" << beta;
        }
      } else {
        // Decreases from the origin, then increases: one turn.
        EXPECT_LT(vals[1], vals[0]) << "a=" << a << " beta=" << beta;
        EXPECT_EQ(turns, 1) << "a=" << a << " beta=" << beta;
      }
    }
  }
}

TEST(UniversalWeight, SquareTimesDensityIsOne) {
  for (const auto& m : all_models()) {
    const Weight v = universal_weight(m);
    for (double x : {-3.0, -1.0, 0.0, 0.5, 2.5}) {
      EXPECT_NEAR(v.value(x) * v.value(x) * m.density(x), 1.0, 1e-12) << m.name();
    }
  }
}

TEST(UniversalWeight, OrnsteinUhlenbeckGrowth) {
  const MeasureModel m = make_ornstein_uhlenbeck(8.0);
  const Weight v = universal_weight(m);
  for (double x : {-2.0, 0.5, 1.0, 3.0}) {
    EXPECT_NEAR(v.value(x) / v.value(0.0), std::exp(0.25 * x * x), 1e-12);
  }
}

TEST(UniversalWeight, CauchyClosedForm) {
  const MeasureModel m = make_cauchy(2.0, 50.0);
  const Weight v = universal_weight(m);
  for (double x : {-2.0, 0.0, 1.0, 7.0}) {
    EXPECT_NEAR(v.value(x) / (std::pow(m.normalization(), -0.5) * (1.0 + x * x)), 1.0, 1e-12);
  }
}

TEST(TailMass, FullMassSymmetryAndMonotonicity) {
  const MeasureModel m = make_mu_a(1.5, suggest_radius_mu_a(1.5));
  const double r = m.radius();
  EXPECT_NEAR(tail_mass(m, -r), 1.0, kTailTol);
  EXPECT_NEAR(tail_mass(m, 0.0), 0.5, 1e-9);
  double prev = 2.0;
  for (int k = 0; k <= 100; ++k) {
    const double q = tail_mass(m, -r + 2.0 * r * k / 100.0);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, prev);
    prev = q;
  }
}

TEST(TailMass, MatchesSimpson) {
  const MeasureModel m = make_cauchy(2.0, 50.0);
  for (double x : {-3.0, 0.5, 4.0}) {
    const double ref =
        oracle::simpson([&](double y) { return m.density(y); }, x, 50.0, 1 << 16);
    EXPECT_NEAR(tail_mass(m, x), ref, 1e-9);
  }
}

TEST(TailMass, OutsideWindowThrows) {
  const MeasureModel m = make_mu_a(1.5, 8.0);
  EXPECT_THROW(tail_mass(m, 8.5), DomainError);
  EXPECT_THROW(tail_mass(m, -9.0), DomainError);
}

TEST(TailMass, RatioToDensityOverPowerIsBounded) {
  for (double a : {1.0, 1.5, 2.0}) {
    const MeasureModel m = make_mu_a(a, suggest_radius_mu_a(a));
    const double r = m.radius();
    double first_half = 0.0;
    double second_half = 0.0;
    for (int k = 0; k <= 400; ++k) {
      const double x = (r - 1.0) * k / 400.0;
      const double ratio = tail_mass(m, x) * std::pow(bracket_t(x), a - 1.0) / m.density(x);
      ASSERT_TRUE(std::isfinite(ratio));
      (k <= 200 ? first_half : second_half) = std::max(k <= 200 ? first_half : second_half, ratio);
    }
    // No blow-up: the outer half does not exceed the inner maximum by much.
    EXPECT_LT(second_half, 2.0 * first_half) << "a=" << a;
  }
}

TEST(Mehler, DiagonalAtOrigin) {
  for (double t : {0.1, 0.5, 2.0}) {
    EXPECT_NEAR(mehler_kernel(t, 0.0, 0.0), 1.0 / std::sqrt(1.0 - std::exp(-2.0 * t)), 1e-14);
  }
}

TEST(Mehler, SymmetricAndErgodic) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const double x = u(gen);
    const double y = u(gen);
    EXPECT_EQ(mehler_kernel(0.3, x, y), mehler_kernel(0.3, y, x));
  }
  // The cross term decays like e^{-t}: p_t(1,-1) - 1 ~ -e^{-t}.
  const double dev10 = mehler_kernel(10.0, 1.0, -1.0) - 1.0;
  EXPECT_NEAR(dev10 / -std::exp(-10.0), 1.0, 1e-4);
  EXPECT_LT(std::abs(mehler_kernel(20.0, 1.0, -1.0) - 1.0), 1e-7);
}

TEST(Mehler, RejectsNonpositiveTime) {
  EXPECT_THROW(mehler_kernel(0.0, 0.0, 0.0), DomainError);
  EXPECT_THROW(mehler_diag_bound(-1.0, 0.0, 0.0), DomainError);
}

TEST(Mehler, DiagonalBound) {
  EXPECT_NEAR(mehler_diag_bound(0.5, 1.0, 1.0), mehler_kernel(1.0, 1.0, 1.0), 1e-12);
  EXPECT_GE(mehler_diag_bound(0.5, 1.0, -1.0), mehler_kernel(1.0, 1.0, -1.0));
  for (double t : {0.2, 0.7}) {
    for (double x : {-1.5, 0.3, 2.0}) {
      for (double y : {-2.0, 0.0, 1.1}) {
        const double cs = std::sqrt(mehler_kernel(2.0 * t, x, x) * mehler_kernel(2.0 * t, y, y));
        EXPECT_NEAR(mehler_diag_bound(t, x, y) / cs, 1.0, 1e-13);
        EXPECT_GE(mehler_diag_bound(t, x, y) * (1.0 + 1e-14), mehler_kernel(2.0 * t, x, y));
      }
    }
  }
  for (double t : {0.1, 0.5, 3.0}) {
    EXPECT_NEAR(mehler_diag_bound(t, 0.0, 0.0), 1.0 / std::sqrt(1.0 - std::exp(-4.0 * t)), 1e-14);
  }
}

TEST(Mehler, ChapmanKolmogorovUnderGaussHermite) {
  const auto [nodes, weights] = oracle::gauss_hermite(120);
  for (double t : {0.25, 0.5}) {
    for (double s : {0.25, 0.5}) {
      for (double x : {-2.0, -0.5, 1.0, 2.0}) {
        for (double z : {-2.0, 0.0, 1.5, 2.0}) {
          double conv = 0.0;
          for (std::size_t k = 0; k < nodes.size(); ++k) {
            conv += weights[k] * mehler_kernel(t, x, nodes[k]) * mehler_kernel(s, nodes[k], z);
          }
          const double exact = mehler_kernel(t + s, x, z);
          EXPECT_LT(std::abs(conv - exact) / exact, 1e-4)
              << "t=" << t << " s=" << s << " x=" << x << " z=" << z;
        }
      }
    }
  }
}

TEST(MeasureModel, MutualConsistencyOnRandomPoints) {
  std::mt19937_64 gen(11);
  for (const auto& m : all_models()) {
    std::uniform_real_distribution<double> u(-0.9 * m.radius(), 0.9 * m.radius());
    for (int k = 0; k < 100; ++k) {
      const double x = u(gen);
      ASSERT_GT(m.density(x), 0.0) << m.name();
      EXPECT_NEAR(m.density(x) / std::exp(m.log_density(x)), 1.0, 1e-12) << m.name();
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      const double fd = (m.log_density(x + h) - m.log_density(x - h)) / (2.0 * h);
      EXPECT_NEAR(m.drift(x), fd, 1e-6 * std::max(1.0, std::abs(m.drift(x)))) << m.name();
      const double fd2 = (m.drift(x + h) - m.drift(x - h)) / (2.0 * h);
      EXPECT_NEAR(m.drift_derivative(x), fd2, 1e-5 * std::max(1.0, std::abs(fd2))) << m.name();
    }
  }
}

TEST(MeasureModel, ProbabilityModelsIntegrateToOneOnWindow) {
  for (const auto& m : all_models()) {
    if (!m.finite_mass()) continue;
    const double mass = mass_by_simpson(m, 1 << 16);
    EXPECT_GE(mass, 1.0 - kTailTol - 1e-9) << m.name();
    EXPECT_LE(mass, 1.0 + 1e-9) << m.name();
  }
}
