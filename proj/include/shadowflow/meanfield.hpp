#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include "shadowflow/rng.hpp"
#include "shadowflow/targets.hpp"

namespace shadowflow {

struct MeanFieldConfig {
  std::size_t steps = 5000;
  double step_size = 1e-3;
  /// Iterates from the last averaging_fraction of the run are averaged into
  /// the returned parameters.
  double averaging_fraction = 0.2;
  /// Starting point; defaults to N(0, I).
  std::optional<DiagGaussian> init;
};

class FitDivergedError : public std::runtime_error {
 public:
  FitDivergedError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Fits a mean-field Gaussian to the target by stochastic gradient ascent on
/// the single-sample reparameterized ELBO.
DiagGaussian fit_meanfield_reference(const TargetModel& target, const MeanFieldConfig& cfg, RngStream& rng);

/// Monte Carlo ELBO of a mean-field Gaussian against the target.
double meanfield_elbo(const TargetModel& target, const DiagGaussian& q, RngStream& rng, std::size_t samples);

}  // namespace shadowflow
