#pragma once

// Figure-level experiments: declarative configs, result tables, CSV output
// and re-runnable manifests.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "shadowflow/estimators.hpp"
#include "shadowflow/mixflow.hpp"
#include "shadowflow/targets.hpp"

namespace shadowflow {

inline constexpr int kCsvSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
  std::string experiment;
  std::string target = "banana";
  std::optional<std::size_t> leapfrog_steps;  // defaults per target
  std::optional<double> step_size;
  std::vector<double> refresh_weights;  // empty: (1, ..., 1)/d
  double refresh_phase = 0.3;
  double refresh_offset = 0.5;
  double refresh_amplitude = 0.25;
  std::vector<std::size_t> lengths;  // empty: per-experiment default
  std::size_t seeds = 20;
  unsigned precision_bits = 256;
  std::uint64_t seed = 0;
  std::string dataset_path;
  std::string reference = "fit";  // "fit" or "inline"
  std::vector<double> reference_mean;
  std::vector<double> reference_log_std;
  std::size_t fit_steps = 5000;
  double fit_step_size = 1e-3;
  double banana_b = 0.1;
  double banana_sigma1_sq = 100.0;
  std::size_t gaussian_dim = 2;
  std::string output_dir = "shadowflow-out";

  double delta = 1e-14;
  std::vector<std::string> diagnostics = {"forward", "backward"};
  bool estimate_m = false;
  std::size_t draws = 1000;
  std::size_t points = 50;
  std::vector<std::string> test_functions = {"abs", "sin", "sigmoid"};
  std::vector<double> scaling_factors = {0.5, 1.0, 2.0};
  bool plot = false;

  /// Raises grid sizes, seed counts and precision to the paper's settings.
  void apply_paper_scale();
  /// Fills per-experiment defaults and checks invariants; throws ConfigError.
  void resolve();
  /// All keys in sorted order; parse_config(to_text()) reproduces *this.
  std::string to_text() const;
};

/// Flat `key = value` text; '#' starts a comment; lists are comma separated
/// and integer lists also accept `a..b` ranges.  Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

using Cell = std::variant<double, std::string>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row);
  std::size_t column_index(const std::string& name) const;
  double number(std::size_t row, const std::string& column) const;
  std::string text(std::size_t row, const std::string& column) const;
  std::string to_csv() const;
  static ResultTable from_csv(const std::string& text);
};

std::string format_number(double v);

/// Target, map and reference built from a config.
struct ExperimentSetup {
  std::shared_ptr<const TargetModel> target;
  std::shared_ptr<const AugmentedTarget> augmented;
  std::shared_ptr<const MixFlowMap> map;
  DiagGaussian reference;  // augmented
};

std::shared_ptr<const TargetModel> make_target(const ExperimentConfig& cfg);
ExperimentSetup make_setup(const ExperimentConfig& cfg);

/// Runs cfg.experiment and returns its table without touching the disk.
ResultTable compute_experiment(const ExperimentConfig& cfg);

struct ExperimentOutput {
  ResultTable table;
  std::filesystem::path csv;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> plot;
};

/// compute_experiment plus <out>/<experiment>.csv, the manifest and,
/// when cfg.plot is set, an SVG figure.
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// Worker count: SHADOWFLOW_THREADS if set, else the hardware concurrency.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads.  Exceptions
/// are rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace shadowflow
