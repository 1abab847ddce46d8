#pragma once

// Flow layers: invertible differentiable maps that can be evaluated in both
// precisions.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "shadowflow/bigfloat.hpp"
#include "shadowflow/scalar.hpp"

namespace shadowflow {

/// A diffeomorphism F of R^d.
///
/// forward() and inverse() optionally report log|det grad F| at the *input*
/// of F: for forward(x) that is the point x, for inverse(y) it is the
/// returned point F^{-1}(y).
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;

  virtual Point<double> forward(std::span<const double> x, double* log_det = nullptr) const = 0;
  virtual Point<BigFloat> forward(std::span<const BigFloat> x, BigFloat* log_det = nullptr) const = 0;
  virtual Point<double> inverse(std::span<const double> y, double* log_det = nullptr) const = 0;
  virtual Point<BigFloat> inverse(std::span<const BigFloat> y, BigFloat* log_det = nullptr) const = 0;

  /// Jacobian matrix of forward() at x, in double precision.
  virtual Eigen::MatrixXd jacobian(std::span<const double> x) const = 0;

  /// Jacobian of the inverse map at y.  Default: invert jacobian() at F^{-1}(y).
  virtual Eigen::MatrixXd inverse_jacobian(std::span<const double> y) const;

  double log_jac_det(std::span<const double> x) const;
  BigFloat log_jac_det(std::span<const BigFloat> x) const;
};

/// Implements the virtual interface from two templates on the derived class:
///
///   template <Scalar T> Point<T> apply(std::span<const T>, T* log_det) const;
///   template <Scalar T> Point<T> apply_inverse(std::span<const T>, T* log_det) const;
template <class Derived>
class LayerBase : public Layer {
 public:
  Point<double> forward(std::span<const double> x, double* log_det = nullptr) const override {
    return self().apply(x, log_det);
  }
  Point<BigFloat> forward(std::span<const BigFloat> x, BigFloat* log_det = nullptr) const override {
    return self().apply(x, log_det);
  }
  Point<double> inverse(std::span<const double> y, double* log_det = nullptr) const override {
    return self().apply_inverse(y, log_det);
  }
  Point<BigFloat> inverse(std::span<const BigFloat> y, BigFloat* log_det = nullptr) const override {
    return self().apply_inverse(y, log_det);
  }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// x -> A x + b with invertible A.  Covers identity, scaling, shift, and
/// hyperbolic linear maps.
class AffineLayer final : public LayerBase<AffineLayer> {
 public:
  AffineLayer(Eigen::MatrixXd matrix, Eigen::VectorXd offset);

  static std::shared_ptr<const AffineLayer> identity(std::size_t d);
  static std::shared_ptr<const AffineLayer> scaling(std::size_t d, double factor);
  static std::shared_ptr<const AffineLayer> shift(Eigen::VectorXd offset);
  static std::shared_ptr<const AffineLayer> linear(Eigen::MatrixXd matrix);

  std::size_t dimension() const override { return static_cast<std::size_t>(matrix_.rows()); }
  std::string name() const override { return "affine"; }
  Eigen::MatrixXd jacobian(std::span<const double>) const override { return matrix_; }
  Eigen::MatrixXd inverse_jacobian(std::span<const double>) const override { return inverse_; }

  template <Scalar T>
  Point<T> apply(std::span<const T> x, T* log_det) const;
  template <Scalar T>
  Point<T> apply_inverse(std::span<const T> y, T* log_det) const;

  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd inverse_;
  Eigen::VectorXd offset_;
  double log_abs_det_;
  bool diagonal_;
};

}  // namespace shadowflow
