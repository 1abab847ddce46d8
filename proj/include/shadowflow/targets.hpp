#pragma once

// Target log-densities with gradients in both precisions.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shadowflow/bigfloat.hpp"
#include "shadowflow/rng.hpp"
#include "shadowflow/scalar.hpp"

namespace shadowflow {

/// Unnormalized log-density log p on R^d.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;

  virtual double log_density(std::span<const double> x) const = 0;
  virtual BigFloat log_density(std::span<const BigFloat> x) const = 0;
  virtual Point<double> grad_log_density(std::span<const double> x) const = 0;
  virtual Point<BigFloat> grad_log_density(std::span<const BigFloat> x) const = 0;

  /// Hessian of log p at x.  The default takes central differences of the
  /// gradient with step 1e-6 * (1 + ||x||).
  virtual Eigen::MatrixXd hessian(std::span<const double> x) const;
  virtual bool has_analytic_hessian() const { return false; }

  /// Hessian-vector product, from hessian().
  Point<double> hvp(std::span<const double> x, std::span<const double> v) const;
};

/// Forwards the virtual interface to templates on the derived class:
///
///   template <Scalar T> T log_density_t(std::span<const T>) const;
///   template <Scalar T> Point<T> grad_t(std::span<const T>) const;
template <class Derived>
class TargetBase : public TargetModel {
 public:
  double log_density(std::span<const double> x) const override { return self().template log_density_t<double>(x); }
  BigFloat log_density(std::span<const BigFloat> x) const override {
    return self().template log_density_t<BigFloat>(x);
  }
  Point<double> grad_log_density(std::span<const double> x) const override { return self().template grad_t<double>(x); }
  Point<BigFloat> grad_log_density(std::span<const BigFloat> x) const override {
    return self().template grad_t<BigFloat>(x);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Mean-field Gaussian N(mean, diag(exp(log_std))^2).  Serves as the
/// reference q0 and as a synthetic target.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> log_std;

  DiagGaussian() = default;
  DiagGaussian(std::vector<double> mean, std::vector<double> log_std);
  static DiagGaussian standard(std::size_t d);

  std::size_t dimension() const { return mean.size(); }

  template <Scalar T>
  T log_density(std::span<const T> x) const;
  template <Scalar T>
  Point<T> grad_log_density(std::span<const T> x) const;

  Point<double> sample(RngStream& rng) const;

  /// This Gaussian on the positions times N(0, I) on the momenta.
  DiagGaussian augmented() const;
};

class GaussianTarget final : public TargetBase<GaussianTarget> {
 public:
  explicit GaussianTarget(DiagGaussian dist);

  std::size_t dimension() const override { return dist_.dimension(); }
  std::string name() const override { return "gaussian"; }
  Eigen::MatrixXd hessian(std::span<const double> x) const override;
  bool has_analytic_hessian() const override { return true; }

  template <Scalar T>
  T log_density_t(std::span<const T> x) const {
    return dist_.log_density<T>(x);
  }
  template <Scalar T>
  Point<T> grad_t(std::span<const T> x) const {
    return dist_.grad_log_density<T>(x);
  }

  const DiagGaussian& distribution() const { return dist_; }

 private:
  DiagGaussian dist_;
};

/// Banana: y ~ N(0, diag(sigma1_sq, 1)) pushed through
/// x = (y1, y2 + b y1^2 - b sigma1_sq).
class BananaTarget final : public TargetBase<BananaTarget> {
 public:
  explicit BananaTarget(double b = 0.1, double sigma1_sq = 100.0);

  std::size_t dimension() const override { return 2; }
  std::string name() const override { return "banana"; }
  Eigen::MatrixXd hessian(std::span<const double> x) const override;
  bool has_analytic_hessian() const override { return true; }

  template <Scalar T>
  T log_density_t(std::span<const T> x) const;
  template <Scalar T>
  Point<T> grad_t(std::span<const T> x) const;

 private:
  double b_;
  double sigma1_sq_;
};

/// Equal-weight mixture of four axis-aligned Gaussians forming a cross.
class CrossTarget final : public TargetBase<CrossTarget> {
 public:
  CrossTarget();

  std::size_t dimension() const override { return 2; }
  std::string name() const override { return "cross"; }

  template <Scalar T>
  T log_density_t(std::span<const T> x) const;
  template <Scalar T>
  Point<T> grad_t(std::span<const T> x) const;

 private:
  struct Component {
    double mean[2];
    double std[2];
  };
  std::vector<Component> components_;
};

struct Dataset {
  Eigen::MatrixXd features;  // rows = observations
  Eigen::VectorXd responses;
  std::vector<std::string> feature_names;
  std::string response_name;
  /// Per-column mean and (population) standard deviation removed from the
  /// raw features; empty if the data were not standardized.
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  double response_mean = 0.0;
  double response_std = 1.0;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t columns() const { return static_cast<std::size_t>(features.cols()); }
};

/// Bayesian linear regression with an intercept: beta_i ~ N(0,1),
/// log sigma^2 ~ N(0,1), y_j ~ N(x_j' beta, sigma^2).  The parameter vector
/// is (intercept, coefficients..., log sigma^2).
class LinearRegressionTarget final : public TargetBase<LinearRegressionTarget> {
 public:
  explicit LinearRegressionTarget(const Dataset& data);

  std::size_t dimension() const override { return static_cast<std::size_t>(design_.cols()) + 1; }
  std::string name() const override { return "linreg"; }
  Eigen::MatrixXd hessian(std::span<const double> x) const override;
  bool has_analytic_hessian() const override { return true; }

  template <Scalar T>
  T log_density_t(std::span<const T> x) const;
  template <Scalar T>
  Point<T> grad_t(std::span<const T> x) const;

 private:
  Eigen::MatrixXd design_;  // intercept column first
  Eigen::VectorXd y_;
};

/// Hierarchical Bayesian logistic regression: alpha ~ Gamma(shape 1, scale
/// 0.01), beta | alpha ~ N(0, I / alpha), y_j ~ Bernoulli(sigmoid(x_j' beta)).
/// The parameter vector is (beta..., log alpha); the log-Jacobian of
/// alpha = exp(s) is included.
class LogisticRegressionTarget final : public TargetBase<LogisticRegressionTarget> {
 public:
  explicit LogisticRegressionTarget(const Dataset& data, double gamma_shape = 1.0, double gamma_scale = 0.01);

  std::size_t dimension() const override { return static_cast<std::size_t>(design_.cols()) + 1; }
  std::string name() const override { return "logreg"; }
  Eigen::MatrixXd hessian(std::span<const double> x) const override;
  bool has_analytic_hessian() const override { return true; }

  template <Scalar T>
  T log_density_t(std::span<const T> x) const;
  template <Scalar T>
  Point<T> grad_t(std::span<const T> x) const;

 private:
  Eigen::MatrixXd design_;
  Eigen::VectorXd y_;
  double shape_;
  double scale_;
};

std::shared_ptr<const TargetModel> banana_target(double b = 0.1, double sigma1_sq = 100.0);
std::shared_ptr<const TargetModel> cross_target();
std::shared_ptr<const TargetModel> gaussian_target(DiagGaussian dist);
std::shared_ptr<const TargetModel> linreg_target(const Dataset& data);
std::shared_ptr<const TargetModel> logreg_target(const Dataset& data);

/// Largest relative discrepancy between grad_log_density and central
/// differences of log_density over the given points (step 1e-6 (1 + ||x||)).
/// Relative to max(1, ||grad||).
double gradient_check(const TargetModel& target, std::span<const Point<double>> points);

}  // namespace shadowflow
