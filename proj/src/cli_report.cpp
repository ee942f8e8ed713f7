#include "wnash/cli_report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include <CLI11.hpp>

#include "wnash/errors.hpp"

namespace wnash::cli {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& value, bool allow_auto = false) {
  if (allow_auto && value == "auto") return kNaN;
  double out = 0.0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(out)) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  unsigned long long out = 0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config: key '" + key + "' expects a nonnegative integer, got '" +
                      value + "'");
  }
  return static_cast<std::size_t>(out);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config: key '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  if (out.empty()) throw ConfigError("config: key '" + key + "' expects a list of numbers");
  return out;
}

std::string parse_choice(const std::string& key, const std::string& value,
                         std::initializer_list<const char*> choices) {
  for (const char* c : choices) {
    if (value == c) return value;
  }
  std::string allowed;
  for (const char* c : choices) allowed += std::string(allowed.empty() ? "" : "|") + c;
  throw ConfigError("config: key '" + key + "' must be one of " + allowed + ", got '" + value +
                    "'");
}

void validate(const ExperimentConfig& c) {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(c.n >= 3, "n must be at least 3");
  need(std::isnan(c.radius) || c.radius > 0.0, "radius must be positive or auto");
  need(c.t_min > 0.0, "t_min must be positive");
  need(!c.times.empty(), "times must not be empty");
  for (double t : c.times) need(t > 0.0, "times must be positive");
  need(c.width_min > 0.0 && c.width_min <= c.width_max, "need 0 < width_min <= width_max");
  need(c.train_size >= 1 && c.test_size >= 1, "family sizes must be positive");
  need(c.kernel_stride >= 1, "kernel_stride must be at least 1");
  need(c.kernel_window > 0.0, "kernel_window must be positive");
  need(c.slack >= 0.0, "slack must be nonnegative");
  need(c.fit_x_min > 0.0 && c.fit_x_min < c.fit_x_max, "need 0 < fit_x_min < fit_x_max");
  need(std::isnan(c.floor) || c.floor >= 0.0, "floor must be nonnegative or auto");
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json inputs_json(const ExperimentConfig& c, const MeasureModel& model) {
  json j;
  j["model"] = c.model;
  j["model_name"] = model.name();
  j["a"] = c.a;
  j["cauchy_beta"] = c.cauchy_beta;
  j["radius"] = model.radius();
  j["n"] = c.n;
  j["t_min"] = c.t_min;
  j["weight"] = c.weight;
  j["weight_beta"] = c.weight_beta;
  j["rate"] = c.rate;
  j["times"] = c.times;
  j["seed"] = c.seed;
  j["slack"] = c.slack;
  j["config"] = c.raw;
  return j;
}

std::string experiment_id(std::string_view command, const ExperimentConfig& c) {
  return std::string(command) + "-" + c.model + "-n" + std::to_string(c.n) + "-seed" +
         std::to_string(c.seed);
}

void add_check(ReportRecord& r, std::string name, bool pass, double value, double tol) {
  r.checks.push_back({std::move(name), pass, value, tol});
}

struct Lab {
  MeasureModel model;
  Grid grid;
  OperatorData op;
};

Lab build_lab(const ExperimentConfig& cfg) {
  MeasureModel model = build_model(cfg);
  Grid grid = make_grid(model, cfg.n);
  OperatorData op = discretize(model, grid);
  return {std::move(model), std::move(grid), std::move(op)};
}

double envelope_lambda(const ExperimentConfig& cfg, json& results) {
  if (!std::isnan(cfg.lambda)) {
    if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0)) {
      throw ConfigError("config: lambda must lie in (0, 1)");
    }
    return cfg.lambda;
  }
  if (cfg.model != "mu_a" || cfg.weight != "mu_a") {
    throw ConfigError("config: lambda=auto needs model=mu_a and weight=mu_a");
  }
  const MuAExponents ex = mu_a_exponents(cfg.a, cfg.weight_beta, cfg.theta);
  results["exponents"] = {{"gamma", ex.gamma},   {"theta", ex.theta},
                          {"lambda", ex.lambda}, {"delta", ex.delta},
                          {"theta_admissible", ex.theta_admissible}};
  return ex.lambda;
}

RateFunction configured_rate(const ExperimentConfig& cfg) {
  if (cfg.rate == "log") return log_rate(cfg.log_a, cfg.rate_coefficient, cfg.log_floor);
  if (cfg.rate == "classical") return classical_nash_rate(cfg.classical_n, cfg.rate_coefficient);
  if (cfg.rate == "power") return power_rate(cfg.rate_coefficient, cfg.rate_exponent);
  throw ConfigError("config: rate '" + cfg.rate + "' is not a closed-form rate");
}

// Fraction by which the largest held-out x/(1 + y^lambda) exceeds C.
double envelope_excess(const std::vector<NashQuotient>& pairs, const EmpiricalFit& fit) {
  double worst = 0.0;
  for (const auto& p : pairs) {
    if (p.x <= fit.floor) continue;
    worst = std::max(worst, p.x / (1.0 + std::pow(p.y, fit.lambda)) / fit.shift - 1.0);
  }
  return worst;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    }
    if (c.raw.count(key) != 0) throw ConfigError("config: key '" + key + "' repeated");
    c.raw[key] = value;

    if (key == "model") {
      c.model = parse_choice(key, value, {"mu_a", "cauchy", "ou", "lebesgue"});
    } else if (key == "a") {
      c.a = parse_double(key, value);
    } else if (key == "cauchy_beta") {
      c.cauchy_beta = parse_double(key, value);
    } else if (key == "radius") {
      c.radius = parse_double(key, value, true);
    } else if (key == "n") {
      c.n = parse_size(key, value);
    } else if (key == "t_min") {
      c.t_min = parse_double(key, value);
    } else if (key == "weight") {
      c.weight = parse_choice(key, value, {"mu_a", "universal", "unit"});
    } else if (key == "weight_beta") {
      c.weight_beta = parse_double(key, value);
    } else if (key == "rate") {
      c.rate = parse_choice(key, value, {"empirical", "log", "classical", "power"});
    } else if (key == "rate_coefficient") {
      c.rate_coefficient = parse_double(key, value);
    } else if (key == "rate_exponent") {
      c.rate_exponent = parse_double(key, value);
    } else if (key == "classical_n") {
      c.classical_n = parse_double(key, value);
    } else if (key == "log_a") {
      c.log_a = parse_double(key, value);
    } else if (key == "log_floor") {
      c.log_floor = parse_double(key, value);
    } else if (key == "theta") {
      c.theta = parse_double(key, value, true);
    } else if (key == "lambda") {
      c.lambda = parse_double(key, value, true);
    } else if (key == "floor") {
      c.floor = parse_double(key, value, true);
    } else if (key == "family") {
      c.family = parse_choice(key, value, {"bumps", "constants"});
    } else if (key == "train_size") {
      c.train_size = parse_size(key, value);
    } else if (key == "test_size") {
      c.test_size = parse_size(key, value);
    } else if (key == "width_min") {
      c.width_min = parse_double(key, value);
    } else if (key == "width_max") {
      c.width_max = parse_double(key, value);
    } else if (key == "times") {
      c.times = parse_list(key, value);
    } else if (key == "slack") {
      c.slack = parse_double(key, value);
    } else if (key == "trace_check") {
      c.trace_check = parse_bool(key, value);
    } else if (key == "k_samples") {
      c.k_samples = value;
    } else if (key == "interpolate") {
      c.interpolate = parse_bool(key, value);
    } else if (key == "fit_x_min") {
      c.fit_x_min = parse_double(key, value);
    } else if (key == "fit_x_max") {
      c.fit_x_max = parse_double(key, value);
    } else if (key == "kernel_stride") {
      c.kernel_stride = parse_size(key, value);
    } else if (key == "kernel_window") {
      c.kernel_window = parse_double(key, value);
    } else if (key == "seed") {
      c.seed = parse_size(key, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

nlohmann::json ReportRecord::to_json() const {
  json checks_json = json::array();
  bool all = violations == 0;
  for (const auto& c : checks) {
    checks_json.push_back({{"name", c.name},
                           {"pass", c.pass},
                           {"value", finite_or_null(c.value)},
                           {"tolerance", finite_or_null(c.tolerance)}});
    all = all && c.pass;
  }
  json j;
  j["schema"] = kSchema;
  j["experiment"] = experiment;
  j["id"] = id;
  j["inputs"] = inputs;
  j["results"] = results;
  j["checks"] = checks_json;
  j["violations"] = violations;
  j["pass"] = all;
  return j;
}

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

std::vector<GridFunction> gaussian_bumps(const Grid& grid, std::size_t count,
                                         std::mt19937_64& gen, double width_min,
                                         double width_max) {
  std::vector<GridFunction> out;
  out.reserve(count);
  const double lw0 = std::log(width_min);
  const double lw1 = std::log(width_max);
  for (std::size_t k = 0; k < count; ++k) {
    const double w = std::exp(lw0 + (lw1 - lw0) * uniform01(gen));
    const double c = -0.5 * grid.radius + grid.radius * uniform01(gen);
    out.push_back(sample(grid, [w, c](double x) {
      const double z = (x - c) / w;
      return std::exp(-0.5 * z * z);
    }));
  }
  return out;
}

MeasureModel build_model(const ExperimentConfig& cfg) {
  const bool auto_r = std::isnan(cfg.radius);
  if (cfg.model == "mu_a") {
    return make_mu_a(cfg.a, auto_r ? suggest_radius_mu_a(cfg.a) : cfg.radius);
  }
  if (cfg.model == "cauchy") return make_cauchy(cfg.cauchy_beta, auto_r ? 50.0 : cfg.radius);
  if (cfg.model == "ou") return make_ornstein_uhlenbeck(auto_r ? 8.0 : cfg.radius);
  if (cfg.model == "lebesgue") return make_lebesgue(auto_r ? 10.0 : cfg.radius);
  throw ConfigError("config: unknown model '" + cfg.model + "'");
}

Weight build_weight(const ExperimentConfig& cfg, const MeasureModel& model) {
  if (cfg.weight == "mu_a") return weight_mu_a(cfg.a, cfg.weight_beta);
  if (cfg.weight == "universal") return universal_weight(model);
  if (cfg.weight == "unit") return unit_weight();
  throw ConfigError("config: unknown weight '" + cfg.weight + "'");
}

std::string format_csv(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t k = 0; k < header.size(); ++k) {
    out += (k ? "," : "") + header[k];
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += fmt17(row[k]);
    }
    out += '\n';
  }
  return out;
}

void read_k_samples(const std::filesystem::path& path, std::vector<double>& times,
                    std::vector<double>& k_values) {
  std::ifstream in(path);
  if (!in) throw ConfigError("k_samples: cannot read '" + path.string() + "'");
  times.clear();
  k_values.clear();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto comma = body.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("k_samples line " + std::to_string(lineno) + ": expected t,K");
    }
    const std::string a = trim(std::string_view(body).substr(0, comma));
    const std::string b = trim(std::string_view(body).substr(comma + 1));
    try {
      const double t = parse_double("t", a);
      const double k = parse_double("K", b);
      times.push_back(t);
      k_values.push_back(k);
    } catch (const ConfigError&) {
      if (lineno == 1 && times.empty()) continue;
      throw ConfigError("k_samples line " + std::to_string(lineno) + ": malformed numbers");
    }
  }
  if (times.size() < 2) throw ConfigError("k_samples: need at least two samples");
}

void write_outputs(const std::filesystem::path& dir, const std::vector<OutputFile>& files) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> staged;
  const std::string suffix = ".tmp-" + std::to_string(::getpid());
  try {
    for (const auto& f : files) {
      const auto final_path = dir / f.name;
      const auto tmp_path = dir / (f.name + suffix);
      std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
      out << f.content;
      out.close();
      if (!out) throw NumericError("write_outputs: failed writing '" + tmp_path.string() + "'");
      staged.emplace_back(tmp_path, final_path);
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& s : staged) std::filesystem::remove(s.first, ec);
    throw;
  }
  for (const auto& s : staged) std::filesystem::rename(s.first, s.second);
}

RunOutput run_spectrum(const ExperimentConfig& cfg) {
  const Lab lab = build_lab(cfg);
  const SpectralDecomposition dec = eigendecompose(lab.op, cfg.t_min);
  RunOutput out;
  ReportRecord& r = out.record;
  r.experiment = "spectrum";
  r.id = experiment_id("spectrum", cfg);
  r.inputs = inputs_json(cfg, lab.model);

  std::vector<std::vector<double>> rows;
  double worst_order = 0.0;
  for (Eigen::Index k = 0; k < dec.eigenvalues.size(); ++k) {
    const double lam = dec.eigenvalues[k];
    rows.push_back({static_cast<double>(k), lam, std::exp(-lam)});
    if (k > 0) worst_order = std::min(worst_order, lam - dec.eigenvalues[k - 1]);
  }
  const Eigen::Index head = std::min<Eigen::Index>(10, dec.eigenvalues.size());
  r.results["eigenvalues_head"] = std::vector<double>(dec.eigenvalues.data(),
                                                      dec.eigenvalues.data() + head);
  r.results["solver_ground_eigenvalue"] = dec.solver_ground_eigenvalue;
  r.results["spectral_gap"] = dec.eigenvalues[1];
  r.results["total_mass"] = lab.grid.total_mass();

  add_check(r, "ground_eigenvalue", std::abs(dec.solver_ground_eigenvalue) <= 1e-8,
            dec.solver_ground_eigenvalue, 1e-8);
  add_check(r, "nondecreasing", worst_order >= 0.0, worst_order, 0.0);
  add_check(r, "nonnegative", dec.eigenvalues.minCoeff() >= -1e-8, dec.eigenvalues.minCoeff(),
            1e-8);
  if (cfg.model == "ou") {
    double dev = 0.0;
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(6, dec.eigenvalues.size()); ++k) {
      dev = std::max(dev, std::abs(dec.eigenvalues[k] - static_cast<double>(k)));
    }
    add_check(r, "ou_integer_spectrum", dev <= 1e-2, dev, 1e-2);
  }
  out.files.push_back({"spectrum.csv", format_csv({"index", "lambda", "exp_minus_lambda"}, rows)});
  out.files.push_back({"spectrum.json", r.to_json().dump(2) + "\n"});
  return out;
}

RunOutput run_kernel(const ExperimentConfig& cfg) {
  const Lab lab = build_lab(cfg);
  const SpectralDecomposition dec = eigendecompose(lab.op, cfg.t_min);
  const bool ou = cfg.model == "ou";
  RunOutput out;
  ReportRecord& r = out.record;
  r.experiment = "kernel";
  r.id = experiment_id("kernel", cfg);
  r.inputs = inputs_json(cfg, lab.model);

  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < lab.grid.n_points; ++i) {
    if (std::abs(lab.grid.points[i]) <= cfg.kernel_window) nodes.push_back(i);
  }
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < nodes.size(); k += cfg.kernel_stride) picked.push_back(nodes[k]);

  std::vector<std::string> header{"t", "x", "y", "p_t", "bound", "slack"};
  if (ou) {
    header.push_back("mehler");
    header.push_back("rel_dev");
  }
  std::vector<std::vector<double>> rows;
  json per_time = json::array();
  const Eigen::VectorXd m =
      Eigen::Map<const Eigen::VectorXd>(lab.grid.node_masses.data(), lab.grid.n_points);
  for (double t : cfg.times) {
    const Eigen::MatrixXd p = kernel_matrix(dec, t);
    double max_rel = 0.0;
    double min_slack = kInf;
    std::size_t cs_viol = 0;
    for (std::size_t i : picked) {
      for (std::size_t j : picked) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        const double v = p(ii, jj);
        const double bound = std::sqrt(p(ii, ii) * p(jj, jj));
        const double slack = bound - v;
        if (slack < -1e-9 * bound) ++cs_viol;
        min_slack = std::min(min_slack, slack);
        std::vector<double> row{t, lab.grid.points[i], lab.grid.points[j], v, bound, slack};
        if (ou) {
          const double exact = mehler_kernel(t, lab.grid.points[i], lab.grid.points[j]);
          const double rel = std::abs(v / exact - 1.0);
          max_rel = std::max(max_rel, rel);
          row.push_back(exact);
          row.push_back(rel);
        }
        rows.push_back(std::move(row));
      }
    }
    double stoch = 0.0;
    for (std::size_t i : picked) {
      stoch = std::max(stoch, std::abs(m.dot(p.col(static_cast<Eigen::Index>(i))) - 1.0));
    }
    const double ck = chapman_kolmogorov_residual(dec, t, t);
    json jt = {{"t", t},
               {"min_slack", min_slack},
               {"cauchy_schwarz_violations", cs_viol},
               {"stochasticity_error", stoch},
               {"chapman_kolmogorov_residual", ck}};
    if (ou) jt["mehler_max_rel_dev"] = max_rel;
    per_time.push_back(jt);
    r.violations += cs_viol;
    add_check(r, "stochasticity_t=" + fmt17(t), stoch <= 1e-6, stoch, 1e-6);
    add_check(r, "chapman_kolmogorov_t=" + fmt17(t), ck < 1e-6, ck, 1e-6);
    if (ou) add_check(r, "mehler_t=" + fmt17(t), max_rel < 1e-2, max_rel, 1e-2);
  }
  r.results["per_time"] = per_time;
  r.results["sampled_nodes"] = picked.size();
  out.files.push_back({"kernel.csv", format_csv(header, rows)});
  out.files.push_back({"kernel.json", r.to_json().dump(2) + "\n"});
  return out;
}

RunOutput run_trace(const ExperimentConfig& cfg) {
  const Lab lab = build_lab(cfg);
  const SpectralDecomposition dec = eigendecompose(lab.op, cfg.t_min);
  RunOutput out;
  ReportRecord& r = out.record;
  r.experiment = "trace";
  r.id = experiment_id("trace", cfg);
  r.inputs = inputs_json(cfg, lab.model);

  const Eigen::VectorXd m =
      Eigen::Map<const Eigen::VectorXd>(lab.grid.node_masses.data(), lab.grid.n_points);
  const Eigen::MatrixXd sq = dec.eigenvectors.cwiseAbs2();
  std::vector<std::vector<double>> rows;
  double worst_diag = 0.0;
  double worst_double = 0.0;
  for (double t : cfg.times) {
    const double tr = trace(dec, t);
    const double hs = hs_norm_sq(dec, t);
    const Eigen::VectorXd w = (-2.0 * t * dec.eigenvalues.array()).exp().matrix();
    const double diag_sum = m.dot(sq * w);
    const double doubled = trace(dec, 2.0 * t);
    worst_diag = std::max(worst_diag, std::abs(hs - diag_sum));
    worst_double = std::max(worst_double, std::abs(hs - doubled));
    rows.push_back({t, tr, hs, diag_sum});
  }
  r.results["max_hs_vs_diagonal"] = worst_diag;
  r.results["max_hs_vs_trace_2t"] = worst_double;
  add_check(r, "hs_equals_diagonal_integral", worst_diag <= 1e-8, worst_diag, 1e-8);
  add_check(r, "hs_equals_trace_2t", worst_double == 0.0, worst_double, 0.0);
  out.files.push_back(
      {"trace.csv", format_csv({"t", "trace", "hs_norm_sq", "diagonal_integral"}, rows)});
  out.files.push_back({"trace.json", r.to_json().dump(2) + "\n"});
  return out;
}

RunOutput run_verify(const ExperimentConfig& cfg) {
  const Lab lab = build_lab(cfg);
  const Weight weight = build_weight(cfg, lab.model);
  RunOutput out;
  ReportRecord& r = out.record;
  r.experiment = "verify";
  r.id = experiment_id("verify", cfg);
  r.inputs = inputs_json(cfg, lab.model);

  const double v_mass = cfg.trace_check ? weight_l2_mass(lab.model, weight) : kNaN;
  if (cfg.trace_check) r.results["weight_l2_mass"] = v_mass;

  const SpectralDecomposition dec = eigendecompose(lab.op, cfg.t_min);
  const LyapunovCertificate cert = lyapunov_constant(lab.model, weight, lab.grid);
  r.results["lyapunov"] = {{"c", cert.constant},
                           {"argmax", cert.argmax},
                           {"closed_form", cert.closed_form},
                           {"max_residual", cert.max_residual()}};

  std::mt19937_64 gen(cfg.seed);
  const auto train = gaussian_bumps(lab.grid, cfg.train_size, gen, cfg.width_min, cfg.width_max);
  const auto test = gaussian_bumps(lab.grid, cfg.test_size, gen, cfg.width_min, cfg.width_max);

  RateFunction rate;
  if (cfg.rate == "empirical") {
    const double lambda = envelope_lambda(cfg, r.results);
    const double floor =
        std::isnan(cfg.floor) ? default_envelope_floor(weight, lab.grid) : cfg.floor;
    const EmpiricalFit fit = empirical_rate(train, weight, lab.op, lambda, floor);
    std::vector<NashQuotient> held;
    std::size_t env_viol = 0;
    for (const auto& f : test) {
      held.push_back(nash_quotient(f, weight, lab.op));
      const auto& q = held.back();
      if (q.x > fit.floor && q.y < fit.rate(q.x) - cfg.slack) ++env_viol;
    }
    r.results["rate"] = {{"kind", "empirical_envelope"},
                         {"C", fit.shift},
                         {"lambda", fit.lambda},
                         {"floor", fit.floor},
                         {"requested_floor", floor},
                         {"constrained_pairs", fit.constrained},
                         {"degenerate", fit.degenerate},
                         {"heldout_envelope_violations", env_viol},
                         {"heldout_max_excess", envelope_excess(held, fit)}};
    rate = fit.rate;
  } else {
    rate = configured_rate(cfg);
    r.results["rate"] = {{"kind", to_string(rate.kind)}, {"name", rate.name},
                         {"floor", rate.floor}};
  }

  const bool ultra = integrability_test(rate);
  r.results["ultracontractive"] = ultra;
  std::vector<std::vector<double>> rows;
  if (!ultra) {
    r.results["note"] = "1/phi is not integrable at infinity: no kernel bound from this rate";
    for (double t : cfg.times) {
      rows.push_back({t, t >= 0.5 * cfg.t_min ? hs_norm_sq(dec, t) : kNaN, kInf});
    }
    out.files.push_back({"verify.csv", format_csv({"t", "hs_norm_sq", "trace_bound"}, rows)});
    out.files.push_back({"verify.json", r.to_json().dump(2) + "\n"});
    return out;
  }

  const KProfile kp(rate);
  r.results["u_at_floor"] = finite_or_null(kp.u_at_floor());
  std::vector<double> log_v(lab.grid.n_points);
  for (std::size_t i = 0; i < lab.grid.n_points; ++i) {
    log_v[i] = weight.log_value(lab.grid.points[i]);
  }

  json table = json::array();
  std::size_t l2_viol = 0;
  std::size_t kernel_viol = 0;
  std::size_t trace_viol = 0;
  double l2_margin = kInf;
  double kernel_margin = kInf;
  for (double t : cfg.times) {
    const double log_b = log_l2_bound(kp, cert, t);
    for (const auto& f : test) {
      const double lhs = l2_norm(apply_semigroup(dec, f, t), lab.grid);
      const double log_rhs = log_b + std::log(weighted_l1(f, weight, lab.grid));
      l2_margin = std::min(l2_margin, log_rhs - std::log(lhs));
      if (log_rhs < 700.0 && lhs > std::exp(log_rhs) + cfg.slack) ++l2_viol;
    }
    const Eigen::MatrixXd p = kernel_matrix(dec, 2.0 * t);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double lb = 2.0 * log_b + log_v[i] + log_v[j];
        const double v = p(i, j);
        if (v > 0.0) kernel_margin = std::min(kernel_margin, lb - std::log(v));
        if (lb < 700.0 && v > std::exp(lb) + cfg.slack) ++kernel_viol;
      }
    }
    const double hs = hs_norm_sq(dec, t);
    double tb = kNaN;
    if (cfg.trace_check) {
      tb = std::exp(2.0 * log_b) * v_mass;
      if (hs > tb + cfg.slack) ++trace_viol;
    }
    rows.push_back({t, hs, tb});
    table.push_back({{"t", t},
                     {"log_K_2t", kp.log_value(2.0 * t)},
                     {"log_l2_bound", log_b},
                     {"l2_bound", finite_or_null(std::exp(log_b))}});
  }

  const auto ktimes = default_converse_times();
  const auto kvals = measured_k(dec, weight, ktimes);
  const RateFunction conv = converse_rate(ktimes, kvals, false);
  std::size_t conv_viol = 0;
  for (const auto& f : test) {
    const NashQuotient q = nash_quotient(f, weight, lab.op);
    const double phi = conv(q.x);
    if (q.y < phi - 1e-9 * std::max(1.0, phi)) ++conv_viol;
  }

  r.results["bounds"] = table;
  r.results["domination"] = {{"l2_violations", l2_viol},
                             {"l2_min_log_margin", l2_margin},
                             {"kernel_violations", kernel_viol},
                             {"kernel_min_log_margin", kernel_margin},
                             {"trace_violations", trace_viol},
                             {"converse_violations", conv_viol}};
  r.violations = l2_viol + kernel_viol + trace_viol + conv_viol;
  add_check(r, "l2_domination", l2_viol == 0, static_cast<double>(l2_viol), 0.0);
  add_check(r, "kernel_domination", kernel_viol == 0, static_cast<double>(kernel_viol), 0.0);
  if (cfg.trace_check) {
    add_check(r, "trace_domination", trace_viol == 0, static_cast<double>(trace_viol), 0.0);
  }
  add_check(r, "converse_consistency", conv_viol == 0, static_cast<double>(conv_viol), 0.0);
  add_check(r, "lyapunov_residual", cert.max_residual() <= 1e-9, cert.max_residual(), 1e-9);

  out.files.push_back({"verify.csv", format_csv({"t", "hs_norm_sq", "trace_bound"}, rows)});
  out.files.push_back({"verify.json", r.to_json().dump(2) + "\n"});
  return out;
}

RunOutput run_converse(const ExperimentConfig& cfg) {
  RunOutput out;
  ReportRecord& r = out.record;
  r.experiment = "converse";
  r.id = experiment_id("converse", cfg);

  std::vector<double> ts;
  std::vector<double> ks;
  if (!cfg.k_samples.empty()) {
    read_k_samples(cfg.k_samples, ts, ks);
    r.inputs = {{"k_samples", cfg.k_samples}, {"config", cfg.raw}, {"seed", cfg.seed}};
    r.results["source"] = "file";
  } else {
    const Lab lab = build_lab(cfg);
    const SpectralDecomposition dec = eigendecompose(lab.op, cfg.t_min);
    const Weight weight = build_weight(cfg, lab.model);
    ts = default_converse_times();
    ks = measured_k(dec, weight, ts);
    r.inputs = inputs_json(cfg, lab.model);
    r.results["source"] = "measured";
  }
  const RateFunction phi = converse_rate(ts, ks, cfg.interpolate);

  constexpr int kPoints = 64;
  std::vector<std::vector<double>> rows;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int used = 0;
  for (int k = 0; k < kPoints; ++k) {
    const double lx = std::log(cfg.fit_x_min) +
                      (std::log(cfg.fit_x_max) - std::log(cfg.fit_x_min)) * k / (kPoints - 1);
    const double x = std::exp(lx);
    const double v = phi(x);
    rows.push_back({x, v});
    if (v > 0.0) {
      const double ly = std::log(v);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++used;
    }
  }
  if (used < 2) {
    throw CalibrationError("converse: phi vanishes on the fit range; widen fit_x_min/fit_x_max");
  }
  const double slope = (used * sxy - sx * sy) / (used * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / used;
  r.results["power"] = slope;
  r.results["prefactor"] = std::exp(intercept);
  r.results["fit_points"] = used;
  r.results["interpolate"] = cfg.interpolate;
  r.results["samples"] = ts.size();
  out.files.push_back({"converse.csv", format_csv({"x", "phi"}, rows)});
  out.files.push_back({"converse.json", r.to_json().dump(2) + "\n"});
  return out;
}

RunOutput run_nash_scan(const ExperimentConfig& cfg) {
  const Lab lab = build_lab(cfg);
  const Weight weight = build_weight(cfg, lab.model);
  RunOutput out;
  ReportRecord& r = out.record;
  r.experiment = "nash-scan";
  r.id = experiment_id("nash-scan", cfg);
  r.inputs = inputs_json(cfg, lab.model);
  r.inputs["family"] = cfg.family;

  std::vector<GridFunction> train;
  std::vector<GridFunction> test;
  if (cfg.family == "constants") {
    for (std::size_t k = 0; k < cfg.train_size; ++k) {
      train.push_back(GridFunction::Constant(lab.grid.n_points, 1.0 + static_cast<double>(k)));
    }
  } else {
    std::mt19937_64 gen(cfg.seed);
    train = gaussian_bumps(lab.grid, cfg.train_size, gen, cfg.width_min, cfg.width_max);
    test = gaussian_bumps(lab.grid, cfg.test_size, gen, cfg.width_min, cfg.width_max);
  }
  const double lambda = envelope_lambda(cfg, r.results);
  const double floor =
      std::isnan(cfg.floor) ? default_envelope_floor(weight, lab.grid) : cfg.floor;

  std::vector<NashQuotient> train_q, test_q;
  std::vector<std::vector<double>> pair_rows;
  for (std::size_t k = 0; k < train.size(); ++k) {
    train_q.push_back(nash_quotient(train[k], weight, lab.op));
    pair_rows.push_back({static_cast<double>(k), 0.0, train_q.back().x, train_q.back().y});
  }
  for (std::size_t k = 0; k < test.size(); ++k) {
    test_q.push_back(nash_quotient(test[k], weight, lab.op));
    pair_rows.push_back({static_cast<double>(k), 1.0, test_q.back().x, test_q.back().y});
  }
  const EmpiricalFit fit = empirical_rate(train_q, lambda, floor);
  std::size_t env_viol = 0;
  double x_max = fit.floor;
  for (const auto& q : test_q) {
    if (q.x > fit.floor && q.y < fit.rate(q.x) - cfg.slack) ++env_viol;
  }
  for (const auto& q : train_q) x_max = std::max(x_max, q.x);
  for (const auto& q : test_q) x_max = std::max(x_max, q.x);

  std::vector<std::vector<double>> env_rows;
  constexpr int kPoints = 64;
  const double x_lo = fit.floor * (1.0 + 1e-3);
  const double x_hi = std::max(2.0 * x_max, 2.0 * fit.floor);
  for (int k = 0; k < kPoints; ++k) {
    const double x = x_lo * std::pow(x_hi / x_lo, static_cast<double>(k) / (kPoints - 1));
    env_rows.push_back({x, fit.rate(x)});
  }

  r.results["C"] = fit.shift;
  r.results["lambda"] = fit.lambda;
  r.results["floor"] = fit.floor;
  r.results["requested_floor"] = floor;
  r.results["constrained_pairs"] = fit.constrained;
  r.results["degenerate"] = fit.degenerate;
  r.results["heldout_envelope_violations"] = env_viol;
  r.results["heldout_max_excess"] = envelope_excess(test_q, fit);
  if (fit.degenerate) {
    r.results["warning"] = "degenerate rate: no quotient above the floor, C set to the floor";
  }
  out.files.push_back(
      {"nash_scan_pairs.csv", format_csv({"index", "held_out", "x", "y"}, pair_rows)});
  out.files.push_back({"nash_scan_envelope.csv", format_csv({"x", "phi"}, env_rows)});
  out.files.push_back({"nash_scan.json", r.to_json().dump(2) + "\n"});
  return out;
}

RunOutput run_experiment(std::string_view command, const ExperimentConfig& cfg) {
  if (command == "spectrum") return run_spectrum(cfg);
  if (command == "kernel") return run_kernel(cfg);
  if (command == "verify") return run_verify(cfg);
  if (command == "converse") return run_converse(cfg);
  if (command == "nash-scan") return run_nash_scan(cfg);
  if (command == "trace") return run_trace(cfg);
  throw ConfigError("unknown subcommand '" + std::string(command) + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParameterError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const CalibrationError*>(&e)) return kExitCalibration;
  if (dynamic_cast<const IntegrabilityError*>(&e)) return kExitIntegrability;
  return kExitNumeric;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Weighted Nash inequalities and heat kernels of Sturm-Liouville semigroups"};
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "key = value experiment config file");
  app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_flag("--quiet", quiet, "suppress the summary line");
  const std::vector<std::pair<const char*, const char*>> commands{
      {"spectrum", "eigenvalue table of the discretized generator"},
      {"kernel", "kernel table p_t(x, y) with the Cauchy-Schwarz bound"},
      {"verify", "Lyapunov, rate, K profile and domination scans"},
      {"converse", "rate function from sampled K(t)"},
      {"nash-scan", "Nash quotient pairs and the fitted envelope"},
      {"trace", "trace and Hilbert-Schmidt identities"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
  app.require_subcommand(1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed;
    const RunOutput result = run_experiment(command, cfg);
    write_outputs(out_dir, result.files);
    if (!quiet) {
      std::cout << command << ": " << (result.record.to_json()["pass"].get<bool>() ? "pass" : "FAIL")
                << ", " << result.record.violations << " violations, wrote "
                << result.files.size() << " files to " << out_dir << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace wnash::cli
