// shadowflow <experiment> --config <file> [--paper-scale] [--out <dir>] [--seed <int>] [--precision-bits <int>]

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "shadowflow/experiments.hpp"

int main(int argc, char** argv) {
  using namespace shadowflow;

  CLI::App app{"Numerical-error studies for normalizing flows and MixFlows"};
  std::string experiment;
  std::string config_path;
  bool paper_scale = false;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> precision_bits;
  bool plot = false;

  app.add_option("experiment", experiment, "Experiment to run")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  app.add_option("--config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  app.add_flag("--paper-scale", paper_scale, "Use the full-size grids, seed counts and 2048-bit references");
  app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
  app.add_option("--seed", seed, "Master seed (overrides seed)");
  app.add_option("--precision-bits", precision_bits, "Reference precision in bits (overrides precision_bits)");
  app.add_flag("--plot", plot, "Also write an SVG figure");
  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (!cfg.experiment.empty() && cfg.experiment != experiment)
      throw ConfigError("config declares experiment '" + cfg.experiment + "' but '" + experiment + "' was requested");
    cfg.experiment = experiment;
    if (paper_scale) cfg.apply_paper_scale();
    if (out_dir) cfg.output_dir = *out_dir;
    if (seed) cfg.seed = *seed;
    if (precision_bits) cfg.precision_bits = *precision_bits;
    if (plot) cfg.plot = true;

    const auto start = std::chrono::steady_clock::now();
    const auto result = run_experiment(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s: %zu rows in %.1f s\n  csv:      %s\n  manifest: %s\n", experiment.c_str(), result.table.rows.size(),
                seconds, result.csv.string().c_str(), result.manifest.string().c_str());
    if (result.plot) std::printf("  plot:     %s\n", result.plot->string().c_str());
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
