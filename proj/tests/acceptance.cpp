// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "wnash/bound_machinery.hpp"
#include "wnash/cli_report.hpp"
#include "wnash/measure_models.hpp"
#include "wnash/spectral_semigroup.hpp"

using namespace wnash;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Lab {
  MeasureModel model;
  Grid grid;
  OperatorData op;
  SpectralDecomposition dec;
};

Lab build(MeasureModel model, std::size_t n) {
  Grid grid = make_grid(model, n);
  OperatorData op = discretize(model, grid);
  SpectralDecomposition dec = eigendecompose(op);
  return {std::move(model), std::move(grid), std::move(op), std::move(dec)};
}

MeasureModel mu15() { return make_mu_a(1.5, suggest_radius_mu_a(1.5)); }

GridFunction bump(const Grid& grid, double center, double width) {
  return sample(grid, [=](double x) {
    const double z = (x - center) / width;
    return std::exp(-0.5 * z * z);
  });
}

std::vector<double> geometric(double lo, double hi, int count) {
  std::vector<double> out;
  for (int k = 0; k < count; ++k) {
    out.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1)));
  }
  return out;
}

Outcome ou_spectrum() {
  const auto t0 = Clock::now();
  const Lab lab = build(make_ornstein_uhlenbeck(8.0), 800);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (int k = 0; k < 6; ++k) worst = std::max(worst, std::abs(lab.dec.eigenvalues[k] - k));
  return {worst <= 1e-2 && secs < 30.0,
          fmt("max |lambda_k - k|, k<6 = %.3e (tol 1e-2); runtime %.2f s (limit 30 s)", worst,
              secs)};
}

Outcome mehler_oracle() {
  const Lab lab = build(make_ornstein_uhlenbeck(8.0), 1600);
  double worst = 0.0;
  for (double t : {0.25, 0.5, 1.0}) {
    for (std::size_t i = 0; i < lab.grid.n_points; ++i) {
      if (std::abs(lab.grid.points[i]) > 2.0) continue;
      const Eigen::VectorXd row = kernel_row(lab.dec, t, i);
      for (std::size_t j = 0; j < lab.grid.n_points; ++j) {
        if (std::abs(lab.grid.points[j]) > 2.0) continue;
        const double ref = mehler_kernel(t, lab.grid.points[i], lab.grid.points[j]);
        worst = std::max(worst, std::abs(row[static_cast<Eigen::Index>(j)] / ref - 1.0));
      }
    }
  }
  double diag = 0.0;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (double t : {0.1, 0.25, 0.5, 1.0, 2.0}) {
    for (int k = 0; k < 50; ++k) {
      const double x = u(gen);
      const double b = mehler_diag_bound(t, x, x);
      diag = std::max(diag, std::abs(b / mehler_kernel(2.0 * t, x, x) - 1.0));
    }
  }
  return {worst <= 1e-2 && diag <= 1e-12,
          fmt("n=1600, |x|,|y|<=2, t in {0.25,0.5,1}: max rel dev %.3e (tol 1e-2); "
              "diagonal bound vs p_2t(x,x): %.1e (tol 1e-12)",
              worst, diag)};
}

Outcome chapman_kolmogorov() {
  double ck = 0.0;
  double stoch = 0.0;
  for (const Lab& lab : {build(make_ornstein_uhlenbeck(8.0), 800), build(mu15(), 800)}) {
    ck = std::max(ck, chapman_kolmogorov_residual(lab.dec, 0.5, 0.5));
    const Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(
        lab.grid.node_masses.data(), static_cast<Eigen::Index>(lab.grid.n_points));
    for (double t : {lab.dec.t_min, 0.5, 1.0}) {
      const Eigen::VectorXd rows = kernel_matrix(lab.dec, t) * m;
      stoch = std::max(stoch, (rows.array() - 1.0).abs().maxCoeff());
    }
  }
  return {ck < 1e-6 && stoch <= 1e-6,
          fmt("OU and mu_1.5, n=800: CK residual (s=t=0.5) %.3e (tol 1e-6); "
              "max |int p_t(x,.) dmu - 1| %.3e (tol 1e-6)",
              ck, stoch)};
}

Outcome log_convexity() {
  const Lab lab = build(mu15(), 800);
  std::mt19937_64 gen(2024);
  const auto fam = cli::gaussian_bumps(lab.grid, 20, gen, 0.05, 2.0);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& f : fam) {
    std::vector<double> logh;
    for (int j = 1; j <= 10; ++j) {
      logh.push_back(2.0 * std::log(l2_norm(apply_semigroup(lab.dec, f, 0.1 * j), lab.grid)));
    }
    for (std::size_t j = 1; j + 1 < logh.size(); ++j) {
      worst = std::min(worst, logh[j + 1] - 2.0 * logh[j] + logh[j - 1]);
    }
  }
  return {worst >= -1e-8,
          fmt("mu_1.5, 20 bumps (seed 2024), t = 0.1..1.0: min second difference %.3e "
              "(tol -1e-8)",
              worst)};
}

Outcome k_closed_forms() {
  const KProfile sq(power_rate(1.0, 2.0));
  double dev = 0.0;
  for (double t : geometric(1e-3, 1e3, 61)) dev = std::max(dev, std::abs(sq(t) - 1.0 / std::sqrt(t)));
  double slope_dev = 0.0;
  for (double c : {0.5, 2.0}) {
    for (double r : {1.5, 2.0, 3.0, 4.0}) {
      const KProfile kp(power_rate(c, r));
      std::vector<double> lt, lk;
      for (double t : geometric(1e-2, 1e2, 41)) {
        lt.push_back(std::log(t));
        lk.push_back(kp.log_value(t));
      }
      slope_dev = std::max(slope_dev, std::abs(oracle::ls_slope(lt, lk) - 1.0 / (2.0 * (1.0 - r))));
    }
  }
  return {dev <= 1e-10 && slope_dev <= 1e-6,
          fmt("phi=x^2: max |K(t) - t^-1/2| on [1e-3,1e3] = %.2e (tol 1e-10); "
              "phi=Cx^r slope error %.2e (tol 1e-6)",
              dev, slope_dev)};
}

Outcome converse() {
  const auto ts = default_converse_times();
  std::vector<double> ks;
  for (double t : ts) ks.push_back(1.0 / std::sqrt(t));
  const RateFunction phi = converse_rate(ts, ks, true);
  double worst = 0.0;
  double oracle_gap = 0.0;
  for (double x : geometric(0.1, 1000.0, 50)) {
    // sup_t (x/2t) log(x t): stationary at log(x t) = 1, value x^2/(2e).
    const double exact = x * x / (2.0 * std::numbers::e);
    worst = std::max(worst, std::abs(phi(x) / exact - 1.0));
    // Brute-force maximization over a dense grid in t.
    double best = 0.0;
    for (double t : geometric(1e-4, 1e3, 20001)) best = std::max(best, x / (2.0 * t) * std::log(x * t));
    oracle_gap = std::max(oracle_gap, std::abs(best / exact - 1.0));
  }
  return {worst <= 1e-6,
          fmt("K=t^-1/2, 50 points on [0.1,1e3]: max rel error vs x^2/(2e) %.2e (tol 1e-6); "
              "dense-grid oracle agrees to %.1e",
              worst, oracle_gap)};
}

Outcome pipeline() {
  const auto t0 = Clock::now();
  const cli::ExperimentConfig cfg = cli::parse_config(
      "model = mu_a\na = 1.5\nn = 800\nweight = mu_a\nweight_beta = 1\nrate = empirical\n"
      "train_size = 200\ntest_size = 200\ntimes = 0.25, 0.5, 1\nslack = 1e-9\nseed = 1\n");
  const cli::RunOutput out = cli::run_verify(cfg);
  const double secs = seconds_since(t0);
  const auto& res = out.record.results;
  const auto& dom = res.at("domination");
  const std::size_t l2 = dom.at("l2_violations").get<std::size_t>();
  const std::size_t ker = dom.at("kernel_violations").get<std::size_t>();
  const std::size_t tr = dom.at("trace_violations").get<std::size_t>();
  const bool closed = res.at("lyapunov").at("closed_form").get<bool>();
  return {l2 == 0 && ker == 0 && tr == 0 && closed && secs < 300.0,
          fmt("mu_1.5, beta=1, n=800, 200/200 bumps: violations L2 %zu, kernel %zu, trace %zu "
              "(slack 1e-9); c = %.6f (closed form %s); runtime %.1f s (limit 300 s)",
              l2, ker, tr, res.at("lyapunov").at("c").get<double>(), closed ? "yes" : "no",
              secs)};
}

Outcome ultracontractivity() {
  const bool a15 = integrability_test(log_rate(1.5));
  const bool a2 = integrability_test(log_rate(2.0));
  const bool a25 = integrability_test(log_rate(2.5));
  const bool a3 = integrability_test(log_rate(3.0));
  return {!a15 && !a2 && a25 && a3,
          fmt("log rate integrable: a=1.5 %s, a=2 %s, a=2.5 %s, a=3 %s (expected false, false, "
              "true, true)",
              a15 ? "true" : "false", a2 ? "true" : "false", a25 ? "true" : "false",
              a3 ? "true" : "false")};
}

Outcome ground_state() {
  const MeasureModel m = mu15();
  std::vector<double> res;
  for (std::size_t n : {800u, 1599u, 3197u}) {
    const Grid g = make_grid(m, n);
    res.push_back(ground_state_transform_residual(m, g, bump(g, 0.0, 1.0)));
  }
  const double r1 = res[0] / res[1];
  const double r2 = res[1] / res[2];
  const bool decay = std::abs(r1 - 4.0) < 0.2 && std::abs(r2 - 4.0) < 0.2;
  return {res[0] < 1e-5 && decay,
          fmt("mu_1.5, bump exp(-x^2/2): residual at n=800 %.3e (tol 1e-5); "
              "refinement ratios %.3f, %.3f (second order: 4)",
              res[0], r1, r2)};
}

Outcome exponents() {
  const double g = mu_a_exponents(2.0, 1.5).gamma;
  std::size_t count = 0;
  std::size_t bad = 0;
  for (int ia = 1; ia <= 40; ++ia) {
    const double a = 1.0 + 0.05 * ia;
    const double lo = std::max(0.0, 0.5 * (3.0 - a));
    for (int ib = 1; ib <= 40; ++ib) {
      const double beta = lo + (4.0 - lo) * ib / 40.0;
      const MuAExponents e = mu_a_exponents(a, beta);
      ++count;
      const bool ok = e.gamma > 1.0 / 3.0 && e.gamma <= 1.0 && e.lambda > 0.0 &&
                      e.lambda < 1.0 && e.delta > 0.0;
      if (!ok) ++bad;
    }
  }
  return {std::abs(g - 2.0 / 3.0) <= 1e-15 && bad == 0,
          fmt("gamma(2, 3/2) = %.17g; %zu of %zu sweep points violate the ranges", g, bad,
              count)};
}

// sup over nodes in [0, R-1] of q(x) T^{a-1} / rho(x), with q from the
// trapezoid node masses of the grid.
double discrete_tail_ratio(const MeasureModel& m, std::size_t n) {
  const Grid g = make_grid(m, n);
  const double a = m.params().a;
  double q = 0.0;
  double best = 0.0;
  for (std::size_t i = g.n_points; i-- > 0;) {
    // Trapezoid mass of [x_i, R]: half of node i's share counts.
    const double qi = q + 0.5 * g.node_masses[i] * (i + 1 == g.n_points ? 0.0 : 1.0);
    q += g.node_masses[i];
    const double x = g.points[i];
    if (x < 0.0 || x > g.radius - 1.0) continue;
    best = std::max(best, qi * std::pow(bracket_t(x), a - 1.0) / m.density(x));
  }
  return best;
}

Outcome tail_estimate() {
  std::string detail;
  bool pass = true;
  for (double a : {1.0, 1.5, 2.0}) {
    const MeasureModel m = make_mu_a(a, suggest_radius_mu_a(a));
    const double coarse = discrete_tail_ratio(m, 800);
    const double fine = discrete_tail_ratio(m, 1599);
    const double change = std::abs(fine / coarse - 1.0);
    pass = pass && std::isfinite(coarse) && std::isfinite(fine) && change < 0.1;
    detail += fmt("a=%.1f sup %.5f -> %.5f (change %.2e); ", a, coarse, fine, change);
  }
  return {pass, detail + "tol 10%"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"OU spectrum", ou_spectrum},
      {"Mehler oracle", mehler_oracle},
      {"Chapman-Kolmogorov and stochasticity", chapman_kolmogorov},
      {"log-convexity of ||P_t f||^2", log_convexity},
      {"K profile closed forms", k_closed_forms},
      {"converse construction", converse},
      {"weighted Nash pipeline", pipeline},
      {"ultracontractivity threshold", ultracontractivity},
      {"ground-state transform", ground_state},
      {"exponent formulas", exponents},
      {"tail estimate", tail_estimate},
  };
  int failed = 0;
  int index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
