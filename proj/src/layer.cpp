#include "shadowflow/layer.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace shadowflow {

Eigen::MatrixXd Layer::inverse_jacobian(std::span<const double> y) const {
  const Point<double> x = inverse(y);
  return jacobian(x).inverse();
}

double Layer::log_jac_det(std::span<const double> x) const {
  double ld = 0.0;
  forward(x, &ld);
  return ld;
}

BigFloat Layer::log_jac_det(std::span<const BigFloat> x) const {
  BigFloat ld;
  forward(x, &ld);
  return ld;
}

namespace {

// Solves A z = rhs by Gaussian elimination with partial pivoting carried out
// in T, and returns log|det A| through log_det when requested.
template <Scalar T>
Point<T> solve_in(const Eigen::MatrixXd& a, Point<T> rhs, T* log_det) {
  using std::abs;
  using std::log;
  const std::size_t n = rhs.size();
  std::vector<std::vector<T>> m(n, std::vector<T>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m[i][j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

  T logdet = 0.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (abs(m[r][col]) > abs(m[pivot][col])) pivot = r;
    if (m[pivot][col] == 0.0) throw std::runtime_error("affine layer: singular matrix");
    std::swap(m[pivot], m[col]);
    std::swap(rhs[pivot], rhs[col]);
    logdet += log(abs(m[col][col]));
    for (std::size_t r = col + 1; r < n; ++r) {
      T factor = m[r][col] / m[col][col];
      for (std::size_t c = col; c < n; ++c) m[r][c] -= factor * m[col][c];
      rhs[r] -= factor * rhs[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    T s = rhs[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * rhs[c];
    rhs[i] = s / m[i][i];
  }
  if (log_det) *log_det = logdet;
  return rhs;
}

}  // namespace

AffineLayer::AffineLayer(Eigen::MatrixXd matrix, Eigen::VectorXd offset)
    : matrix_(std::move(matrix)), offset_(std::move(offset)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() != offset_.size() || matrix_.rows() == 0)
    throw std::invalid_argument("affine layer: shape mismatch");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(matrix_);
  if (!lu.isInvertible()) throw std::invalid_argument("affine layer: matrix is singular");
  inverse_ = lu.inverse();
  diagonal_ = matrix_.isDiagonal(0.0);
  log_abs_det_ = std::log(std::abs(lu.determinant()));
}

std::shared_ptr<const AffineLayer> AffineLayer::identity(std::size_t d) { return scaling(d, 1.0); }

std::shared_ptr<const AffineLayer> AffineLayer::scaling(std::size_t d, double factor) {
  const auto n = static_cast<Eigen::Index>(d);
  return std::make_shared<const AffineLayer>(Eigen::MatrixXd::Identity(n, n) * factor, Eigen::VectorXd::Zero(n));
}

std::shared_ptr<const AffineLayer> AffineLayer::shift(Eigen::VectorXd offset) {
  const auto n = offset.size();
  return std::make_shared<const AffineLayer>(Eigen::MatrixXd::Identity(n, n), std::move(offset));
}

std::shared_ptr<const AffineLayer> AffineLayer::linear(Eigen::MatrixXd matrix) {
  const auto n = matrix.rows();
  return std::make_shared<const AffineLayer>(std::move(matrix), Eigen::VectorXd::Zero(n));
}

template <Scalar T>
Point<T> AffineLayer::apply(std::span<const T> x, T* log_det) const {
  using std::abs;
  using std::log;
  const auto n = static_cast<std::size_t>(matrix_.rows());
  if (x.size() != n) throw std::invalid_argument("affine layer: dimension mismatch");
  Point<T> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    T s = offset_(r);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = matrix_(r, static_cast<Eigen::Index>(j));
      if (a != 0.0) s += x[j] * a;
    }
    y[i] = std::move(s);
  }
  if (log_det) {
    if constexpr (std::is_same_v<T, double>) {
      *log_det = log_abs_det_;
    } else {
      T ld = 0.0;
      if (diagonal_) {
        for (Eigen::Index i = 0; i < matrix_.rows(); ++i) ld += log(abs(T(matrix_(i, i))));
      } else {
        solve_in<T>(matrix_, Point<T>(n, T(0.0)), &ld);
      }
      *log_det = ld;
    }
  }
  return y;
}

template <Scalar T>
Point<T> AffineLayer::apply_inverse(std::span<const T> y, T* log_det) const {
  const auto n = static_cast<std::size_t>(matrix_.rows());
  if (y.size() != n) throw std::invalid_argument("affine layer: dimension mismatch");
  Point<T> rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = y[i] - offset_(static_cast<Eigen::Index>(i));
  if (diagonal_) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      rhs[i] /= matrix_(r, r);
    }
    if (log_det) apply<T>(std::span<const T>(rhs), log_det);
    return rhs;
  }
  if constexpr (std::is_same_v<T, double>) {
    Eigen::Map<const Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd sol = matrix_.partialPivLu().solve(b);
    if (log_det) *log_det = log_abs_det_;
    return Point<double>(sol.data(), sol.data() + sol.size());
  } else {
    return solve_in<T>(matrix_, std::move(rhs), log_det);
  }
}

template Point<double> AffineLayer::apply(std::span<const double>, double*) const;
template Point<BigFloat> AffineLayer::apply(std::span<const BigFloat>, BigFloat*) const;
template Point<double> AffineLayer::apply_inverse(std::span<const double>, double*) const;
template Point<BigFloat> AffineLayer::apply_inverse(std::span<const BigFloat>, BigFloat*) const;

}  // namespace shadowflow
