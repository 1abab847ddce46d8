#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "shadowflow/layer.hpp"
#include "shadowflow/targets.hpp"

namespace testing {

using shadowflow::BigFloat;
using shadowflow::Point;
using shadowflow::Scalar;

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// log p = 0: the free particle.
class FlatTarget final : public shadowflow::TargetBase<FlatTarget> {
 public:
  explicit FlatTarget(std::size_t d) : d_(d) {}
  std::size_t dimension() const override { return d_; }
  std::string name() const override { return "flat"; }
  Eigen::MatrixXd hessian(std::span<const double>) const override { return Eigen::MatrixXd::Zero(d_, d_); }
  bool has_analytic_hessian() const override { return true; }

  template <Scalar T>
  T log_density_t(std::span<const T>) const {
    return T(0.0);
  }
  template <Scalar T>
  Point<T> grad_t(std::span<const T> x) const {
    return Point<T>(x.size(), T(0.0));
  }

 private:
  std::size_t d_;
};

/// 1-D x -> a x^2 on x > 0.
class QuadraticLayer final : public shadowflow::LayerBase<QuadraticLayer> {
 public:
  explicit QuadraticLayer(double a) : a_(a) {}
  std::size_t dimension() const override { return 1; }
  std::string name() const override { return "quadratic"; }
  Eigen::MatrixXd jacobian(std::span<const double> x) const override {
    return Eigen::MatrixXd::Constant(1, 1, 2 * a_ * x[0]);
  }

  template <Scalar T>
  Point<T> apply(std::span<const T> x, T* log_det) const {
    using std::abs;
    using std::log;
    if (log_det) *log_det = log(abs(2.0 * a_ * x[0]));
    return {a_ * x[0] * x[0]};
  }
  template <Scalar T>
  Point<T> apply_inverse(std::span<const T> y, T* log_det) const {
    using std::abs;
    using std::log;
    using std::sqrt;
    T x = sqrt(y[0] / a_);
    if (log_det) *log_det = log(abs(2.0 * a_ * x));
    return {x};
  }

 private:
  double a_;
};

}  // namespace testing
