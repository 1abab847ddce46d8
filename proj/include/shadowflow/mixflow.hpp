#pragma once

// The uncorrected Hamiltonian MixFlow map on the augmented space (x, rho):
// L leapfrog steps for H(x, rho) = -log p(x) + |rho|^2 / 2, followed by a
// deterministic, position-coupled momentum refresh.
//
// Augmented states are stored as one 2d-vector: positions first, momenta
// second.

#include <Eigen/Dense>

#include <atomic>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "shadowflow/layer.hpp"
#include "shadowflow/targets.hpp"

namespace shadowflow {

template <Scalar T>
struct AugmentedState {
  Point<T> position;
  Point<T> momentum;

  static AugmentedState split(std::span<const T> z);
  Point<T> joined() const;
};

/// Momentum refresh: for coordinate i (1-based),
///   shift_i(x) = frac(offset + amplitude * sin(2 pi (w'x + phase * i)))
///   rho_i'     = Phi^{-1}(frac(Phi(rho_i) + shift_i(x))).
/// With offset = amplitude = 0 the refresh is skipped entirely.
struct RefreshParams {
  std::vector<double> weights;  // w; empty means (1, ..., 1) / d
  double phase = 0.3;
  double offset = 0.5;
  double amplitude = 0.25;

  bool is_identity() const { return offset == 0.0 && amplitude == 0.0; }
};

struct LeapfrogSettings {
  std::size_t steps = 1;
  double step_size = 0.1;
};

/// Paper-default leapfrog settings for the named targets ("banana", "cross",
/// "linreg", "logreg"); throws for other names.
LeapfrogSettings default_leapfrog_settings(const std::string& target_name);

template <Scalar T>
AugmentedState<T> leapfrog(const TargetModel& target, AugmentedState<T> z, std::size_t steps, double step_size);

class MixFlowMap final : public LayerBase<MixFlowMap> {
 public:
  MixFlowMap(std::shared_ptr<const TargetModel> target, LeapfrogSettings leapfrog, RefreshParams refresh = {});

  std::size_t dimension() const override { return 2 * d_; }
  std::string name() const override { return "mixflow"; }
  std::size_t position_dimension() const { return d_; }

  const TargetModel& target() const { return *target_; }
  std::shared_ptr<const TargetModel> target_ptr() const { return target_; }
  const LeapfrogSettings& leapfrog_settings() const { return leapfrog_; }
  const RefreshParams& refresh_params() const { return refresh_; }

  template <Scalar T>
  Point<T> apply(std::span<const T> z, T* log_det) const;
  template <Scalar T>
  Point<T> apply_inverse(std::span<const T> z, T* log_det) const;

  /// Refresh alone; log_det receives sum_i log phi(rho_i) - log phi(rho_i').
  template <Scalar T>
  AugmentedState<T> refresh(AugmentedState<T> z, T* log_det = nullptr) const;
  template <Scalar T>
  AugmentedState<T> inverse_refresh(AugmentedState<T> z, T* log_det = nullptr) const;

  /// Full Jacobian of the forward map, leapfrog part by tangent propagation
  /// through target Hessians, refresh part in closed form.
  Eigen::MatrixXd jacobian(std::span<const double> z) const override;
  Eigen::MatrixXd leapfrog_jacobian(std::span<const double> z) const;
  Eigen::MatrixXd refresh_jacobian(std::span<const double> z) const;

 private:
  template <Scalar T>
  T shift(std::span<const T> position, std::size_t i) const;
  template <Scalar T>
  T phase_argument(std::span<const T> position, std::size_t i) const;

  std::shared_ptr<const TargetModel> target_;
  std::size_t d_;
  LeapfrogSettings leapfrog_;
  RefreshParams refresh_;
};

/// Number of quantile evaluations clamped away from 0 or 1 so far (all
/// threads).  Clamping only happens for momenta far in the tails.
std::size_t refresh_clamp_count();

}  // namespace shadowflow
