#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wnash/bound_machinery.hpp"
#include "wnash/measure_models.hpp"
#include "wnash/spectral_semigroup.hpp"

namespace wnash::cli {

/// Version tag written into every JSON report.
inline constexpr const char* kSchema = "wnash.report/1";

/// Exit codes of the command-line driver.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitCalibration = 4,
  kExitIntegrability = 5,
};

/// Settings for one run. Every key of the `key = value` config file maps
/// to one field; NaN (or `auto` in the file) selects the documented default.
struct ExperimentConfig {
  // Model and grid.
  std::string model = "mu_a";  // mu_a | cauchy | ou | lebesgue
  double a = 1.5;
  double cauchy_beta = 2.0;
  double radius = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 800;
  double t_min = kDefaultTMin;

  // Weight.
  std::string weight = "mu_a";  // mu_a | universal | unit
  double weight_beta = 1.0;

  // Rate.
  std::string rate = "empirical";  // empirical | log | classical | power
  double rate_coefficient = 1.0;
  double rate_exponent = 2.0;
  double classical_n = 1.0;
  double log_a = 1.5;
  double log_floor = 2.718281828459045;
  double theta = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double floor = std::numeric_limits<double>::quiet_NaN();

  // Test-function families.
  std::string family = "bumps";  // bumps | constants
  std::size_t train_size = 200;
  std::size_t test_size = 200;
  double width_min = 0.05;
  double width_max = 2.0;

  // Experiment controls.
  std::vector<double> times{0.25, 0.5, 1.0};
  double slack = 1e-9;
  bool trace_check = true;
  std::string k_samples;  // CSV of (t, K) for the converse run
  bool interpolate = true;
  double fit_x_min = 1.0;
  double fit_x_max = 1000.0;
  std::size_t kernel_stride = 8;
  double kernel_window = 2.0;
  std::uint64_t seed = 1;

  /// Keys exactly as read, for the inputs echo.
  std::map<std::string, std::string> raw;
};

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError on
/// unknown or repeated keys and unparsable or out-of-range values.
ExperimentConfig parse_config(std::string_view text);

/// Reads and parses a config file. Throws ConfigError if it cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

/// One pass/fail line of a report.
struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
};

/// Summary of one run; `violations` counts failed domination tests.
struct ReportRecord {
  std::string experiment;
  std::string id;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  std::vector<Check> checks;
  std::size_t violations = 0;

  nlohmann::json to_json() const;
};

/// A file staged in memory until the run has succeeded.
struct OutputFile {
  std::string name;
  std::string content;
};

struct RunOutput {
  ReportRecord record;
  std::vector<OutputFile> files;
};

RunOutput run_spectrum(const ExperimentConfig& cfg);
RunOutput run_kernel(const ExperimentConfig& cfg);
RunOutput run_verify(const ExperimentConfig& cfg);
RunOutput run_converse(const ExperimentConfig& cfg);
RunOutput run_nash_scan(const ExperimentConfig& cfg);
RunOutput run_trace(const ExperimentConfig& cfg);

/// Dispatches on the subcommand name; throws ConfigError for unknown names.
RunOutput run_experiment(std::string_view command, const ExperimentConfig& cfg);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& gen);

/// Gaussian bumps exp(-(x - c)^2 / (2 w^2)) with log-uniform widths in
/// [width_min, width_max] and centers uniform in [-R/2, R/2].
std::vector<GridFunction> gaussian_bumps(const Grid& grid, std::size_t count,
                                         std::mt19937_64& gen, double width_min,
                                         double width_max);

/// Model, window and weight as selected by the config.
MeasureModel build_model(const ExperimentConfig& cfg);
Weight build_weight(const ExperimentConfig& cfg, const MeasureModel& model);

/// Comma-separated table with a header row; numbers with 17 significant
/// digits.
std::string format_csv(const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows);

/// Reads a two-column (t, K) CSV. A non-numeric first row is a header.
/// Throws ConfigError on malformed content.
void read_k_samples(const std::filesystem::path& path, std::vector<double>& times,
                    std::vector<double>& k_values);

/// Writes every file under `dir` through a temporary name and a rename.
void write_outputs(const std::filesystem::path& dir, const std::vector<OutputFile>& files);

/// Maps an exception to the driver's exit code.
int exit_code_for(const std::exception& e);

/// Entry point of the command-line driver.
int run_cli(int argc, char** argv);

}  // namespace wnash::cli
