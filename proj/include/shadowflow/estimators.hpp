#pragma once

// Sampling, density evaluation and ELBO estimation for composed flows and
// MixFlows, plus empirical local Lipschitz constants for the error bounds.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shadowflow/bigfloat.hpp"
#include "shadowflow/flow_system.hpp"
#include "shadowflow/layer.hpp"
#include "shadowflow/rng.hpp"
#include "shadowflow/targets.hpp"

namespace shadowflow {

/// The MixFlow q = (1/(N+1)) sum_{n=0}^{N} F^n # q0 for one repeated map F.
struct MixFlowModel {
  std::shared_ptr<const Layer> map;
  DiagGaussian reference;  // q0 on the full state space of map
  std::size_t length = 0;

  MixFlowModel(std::shared_ptr<const Layer> map, DiagGaussian reference, std::size_t length);

  std::size_t dimension() const { return map->dimension(); }
  FlowSystem system() const { return FlowSystem::repeated(map, length); }
  MixFlowModel with_length(std::size_t n) const { return {map, reference, n}; }
};

/// p(x) N(rho; 0, I) on the augmented space (x, rho).
class AugmentedTarget final : public TargetModel {
 public:
  explicit AugmentedTarget(std::shared_ptr<const TargetModel> base);

  std::size_t dimension() const override { return 2 * base_->dimension(); }
  std::string name() const override { return base_->name(); }
  double log_density(std::span<const double> z) const override;
  BigFloat log_density(std::span<const BigFloat> z) const override;
  Point<double> grad_log_density(std::span<const double> z) const override;
  Point<BigFloat> grad_log_density(std::span<const BigFloat> z) const override;
  Eigen::MatrixXd hessian(std::span<const double> z) const override;
  bool has_analytic_hessian() const override { return base_->has_analytic_hessian(); }

  const TargetModel& base() const { return *base_; }

 private:
  template <Scalar T>
  T log_density_impl(std::span<const T> z) const;
  template <Scalar T>
  Point<T> grad_impl(std::span<const T> z) const;

  std::shared_ptr<const TargetModel> base_;
};

/// The joint pseudo-orbit through an origin: states x_{-N}, ..., x_N and the
/// log-Jacobians log J(x_m) for m = -N, ..., N-1.
template <Scalar T>
struct OrbitCache {
  std::size_t length = 0;
  std::vector<Point<T>> states;
  std::vector<T> log_jacobians;

  const Point<T>& state(std::ptrdiff_t m) const { return states.at(static_cast<std::size_t>(m + offset())); }
  const T& log_jacobian(std::ptrdiff_t m) const { return log_jacobians.at(static_cast<std::size_t>(m + offset())); }
  const Point<T>& origin() const { return state(0); }

 private:
  std::ptrdiff_t offset() const { return static_cast<std::ptrdiff_t>(length); }
};

OrbitCache<double> build_orbit_cache(const MixFlowModel& model, std::span<const double> x);
OrbitCache<BigFloat> build_orbit_cache(const MixFlowModel& model, std::span<const BigFloat> x);

/// Draws X ~ q0 and K ~ Unif{0..N} from rng and returns F^K(X), computed in
/// the requested precision and rounded to double.  Both precisions consume
/// rng identically.
std::vector<Point<double>> sample_mixflow(const MixFlowModel& model, RngStream& rng, std::size_t count,
                                          const PrecisionSpec& prec = PrecisionSpec::standard());

/// log q(x) for the composed flow F_N o ... o F_1 pushing q0 forward.
double nf_log_density(const FlowSystem& sys, const DiagGaussian& q0, std::span<const double> x,
                      const PrecisionSpec& prec = PrecisionSpec::standard());

/// log q(x) for the MixFlow, from one backward orbit of length N.
double mixflow_log_density(const MixFlowModel& model, std::span<const double> x,
                           const PrecisionSpec& prec = PrecisionSpec::standard());

/// log p(F(x)) - log q0(x) + sum of log J along the forward orbit of x.
double nf_elbo_estimate(const FlowSystem& sys, const DiagGaussian& q0, const TargetModel& target,
                        std::span<const double> x, const PrecisionSpec& prec = PrecisionSpec::standard());

/// Single-draw MixFlow ELBO estimate
///   (1/(N+1)) sum_{n=0}^{N} [log p(x_n) - log q(x_n)]
/// with every q(x_n) assembled from one cached joint orbit.
double mixflow_elbo_estimate(const MixFlowModel& model, const TargetModel& target, std::span<const double> x,
                             const PrecisionSpec& prec = PrecisionSpec::standard());

/// ELBO estimates at several lengths from one cache of the longest length.
/// The model's own length is ignored.
std::vector<double> mixflow_elbo_curve(const MixFlowModel& model, const TargetModel& target,
                                       std::span<const double> x, std::span<const std::size_t> lengths,
                                       const PrecisionSpec& prec = PrecisionSpec::standard());

/// Same quantity as mixflow_elbo_estimate, recomputing every forward state
/// and every density from scratch.  Quadratic cost; for cross-checks.
double mixflow_elbo_direct(const MixFlowModel& model, const TargetModel& target, std::span<const double> x,
                           const PrecisionSpec& prec = PrecisionSpec::standard());

enum class TestFunction { Zero, AbsSum, SinSum, SigmoidSum };

TestFunction parse_test_function(const std::string& name);
std::string to_string(TestFunction fn);
double evaluate_test_function(TestFunction fn, std::span<const double> x);

/// Mean of fn over the first `coordinates` entries of each draw (all entries
/// when coordinates is 0).
double sample_average(const std::vector<Point<double>>& draws, TestFunction fn, std::size_t coordinates = 0);

/// A scalar function log g with its gradient.
struct LogFunction {
  std::function<double(std::span<const double>)> value;
  std::function<Point<double>(std::span<const double>)> gradient;
};

LogFunction log_function(const DiagGaussian& dist);
LogFunction log_function(std::shared_ptr<const TargetModel> target);
/// log J of a layer, gradient by central differences.
LogFunction log_jacobian_function(std::shared_ptr<const Layer> layer);
/// log q of a MixFlow in double precision, gradient by central differences.
LogFunction mixflow_density_function(const MixFlowModel& model);

Point<double> central_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                          std::span<const double> x, double relative_step = 1e-6);

struct LipschitzConfig {
  std::size_t samples = 64;
  std::size_t ascent_steps = 10;
  std::uint64_t seed = 0x5eed;
  double hvp_step = 1e-6;
};

/// Lower estimate of sup_{||y-x|| <= eps} ||grad log g(y)||: the center, cfg.samples
/// points on the eps-sphere, then projected ascent on ||grad log g||^2 from
/// the best of them.
double local_lipschitz(const LogFunction& g, std::span<const double> x, double eps, const LipschitzConfig& cfg = {});

struct BoundReport {
  double epsilon = 0.0;
  double lipschitz_density = 0.0;              // L_q at x
  std::vector<double> lipschitz_reference;     // L_q0 at x_{-n}, n = 0..N
  std::vector<double> lipschitz_log_jacobian;  // L_J at x_{-n}, n = 1..N
  double bound = 0.0;
  std::optional<double> observed;
};

/// eps * (L_q(x) + max_n L_q0(x_{-n}) + sum_n L_J(x_{-n})) along the numerical
/// backward orbit of x.
BoundReport density_error_bound(const MixFlowModel& model, std::span<const double> x, double eps,
                                const LipschitzConfig& cfg = {}, const LipschitzConfig& density_cfg = {8, 3});

}  // namespace shadowflow
