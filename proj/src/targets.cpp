#include "shadowflow/targets.hpp"

#include <cmath>
#include <stdexcept>

#include "shadowflow/normal.hpp"

namespace shadowflow {

namespace {

template <Scalar T>
T softplus(const T& z) {
  using std::exp;
  using std::log1p;
  // log(1 + e^z) without overflow.
  if (z > 0.0) return z + log1p(exp(-z));
  return log1p(exp(z));
}

template <Scalar T>
T sigmoid(const T& z) {
  using std::exp;
  if (z >= 0.0) return 1.0 / (1.0 + exp(-z));
  T e = exp(z);
  return e / (1.0 + e);
}

void check_dim(std::size_t got, std::size_t want, const char* who) {
  if (got != want)
    throw std::invalid_argument(std::string(who) + ": expected dimension " + std::to_string(want) + ", got " +
                                std::to_string(got));
}

}  // namespace

Eigen::MatrixXd TargetModel::hessian(std::span<const double> x) const {
  const std::size_t d = x.size();
  double norm = 0.0;
  for (double v : x) norm += v * v;
  const double h = 1e-6 * (1.0 + std::sqrt(norm));
  Eigen::MatrixXd hess(d, d);
  Point<double> xp(x.begin(), x.end());
  Point<double> xm(x.begin(), x.end());
  for (std::size_t j = 0; j < d; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    const auto gp = grad_log_density(std::span<const double>(xp));
    const auto gm = grad_log_density(std::span<const double>(xm));
    for (std::size_t i = 0; i < d; ++i)
      hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (gp[i] - gm[i]) / (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  // Symmetrize away the difference noise.
  return 0.5 * (hess + hess.transpose());
}

Point<double> TargetModel::hvp(std::span<const double> x, std::span<const double> v) const {
  Eigen::Map<const Eigen::VectorXd> vm(v.data(), static_cast<Eigen::Index>(v.size()));
  Eigen::VectorXd out = hessian(x) * vm;
  return Point<double>(out.data(), out.data() + out.size());
}

// ---------------------------------------------------------------------------
// DiagGaussian

DiagGaussian::DiagGaussian(std::vector<double> m, std::vector<double> ls) : mean(std::move(m)), log_std(std::move(ls)) {
  if (mean.size() != log_std.size()) throw std::invalid_argument("DiagGaussian: mean/log_std size mismatch");
  for (std::size_t i = 0; i < mean.size(); ++i)
    if (!std::isfinite(mean[i]) || !std::isfinite(log_std[i]))
      throw std::invalid_argument("DiagGaussian: non-finite parameter");
}

DiagGaussian DiagGaussian::standard(std::size_t d) { return DiagGaussian(std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)); }

template <Scalar T>
T DiagGaussian::log_density(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), mean.size(), "DiagGaussian");
  T quad = 0.0;
  double log_norm = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    T z = x[i] - mean[i];
    if (log_std[i] != 0.0) z *= exp(T(-log_std[i]));
    quad += z * z;
    log_norm += log_std[i];
  }
  return -0.5 * quad - log_norm - (0.5 * static_cast<double>(mean.size())) * log_two_pi<T>();
}

template <Scalar T>
Point<T> DiagGaussian::grad_log_density(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), mean.size(), "DiagGaussian");
  Point<T> g(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    g[i] = mean[i] - x[i];
    if (log_std[i] != 0.0) g[i] *= exp(T(-2.0 * log_std[i]));
  }
  return g;
}

template double DiagGaussian::log_density<double>(std::span<const double>) const;
template BigFloat DiagGaussian::log_density<BigFloat>(std::span<const BigFloat>) const;
template Point<double> DiagGaussian::grad_log_density<double>(std::span<const double>) const;
template Point<BigFloat> DiagGaussian::grad_log_density<BigFloat>(std::span<const BigFloat>) const;

Point<double> DiagGaussian::sample(RngStream& rng) const {
  Point<double> x(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) x[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  return x;
}

DiagGaussian DiagGaussian::augmented() const {
  std::vector<double> m = mean;
  std::vector<double> s = log_std;
  m.resize(2 * mean.size(), 0.0);
  s.resize(2 * mean.size(), 0.0);
  return DiagGaussian(std::move(m), std::move(s));
}

GaussianTarget::GaussianTarget(DiagGaussian dist) : dist_(std::move(dist)) {
  if (dist_.dimension() == 0) throw std::invalid_argument("gaussian target: empty dimension");
}

Eigen::MatrixXd GaussianTarget::hessian(std::span<const double> x) const {
  check_dim(x.size(), dist_.dimension(), "gaussian target");
  Eigen::VectorXd diag(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) diag(static_cast<Eigen::Index>(i)) = -std::exp(-2.0 * dist_.log_std[i]);
  return diag.asDiagonal();
}

// ---------------------------------------------------------------------------
// Banana

BananaTarget::BananaTarget(double b, double sigma1_sq) : b_(b), sigma1_sq_(sigma1_sq) {
  if (!(sigma1_sq > 0.0)) throw std::invalid_argument("banana: sigma1_sq must be positive");
}

template <Scalar T>
T BananaTarget::log_density_t(std::span<const T> x) const {
  using std::log;
  check_dim(x.size(), 2, "banana");
  T y2 = x[1] - b_ * (x[0] * x[0]) + b_ * sigma1_sq_;
  return -0.5 * (x[0] * x[0]) / sigma1_sq_ - 0.5 * (y2 * y2) - log_two_pi<T>() - 0.5 * std::log(sigma1_sq_);
}

template <Scalar T>
Point<T> BananaTarget::grad_t(std::span<const T> x) const {
  check_dim(x.size(), 2, "banana");
  T y2 = x[1] - b_ * (x[0] * x[0]) + b_ * sigma1_sq_;
  Point<T> g(2);
  g[0] = (2.0 * b_) * (x[0] * y2) - x[0] / sigma1_sq_;
  g[1] = -y2;
  return g;
}

Eigen::MatrixXd BananaTarget::hessian(std::span<const double> x) const {
  check_dim(x.size(), 2, "banana");
  const double y2 = x[1] - b_ * x[0] * x[0] + b_ * sigma1_sq_;
  Eigen::Matrix2d h;
  h(0, 0) = -1.0 / sigma1_sq_ + 2.0 * b_ * y2 - 4.0 * b_ * b_ * x[0] * x[0];
  h(0, 1) = h(1, 0) = 2.0 * b_ * x[0];
  h(1, 1) = -1.0;
  return h;
}

// ---------------------------------------------------------------------------
// Cross

CrossTarget::CrossTarget()
    : components_{{{0.0, 2.0}, {0.15, 1.0}},
                  {{-2.0, 0.0}, {1.0, 0.15}},
                  {{2.0, 0.0}, {1.0, 0.15}},
                  {{0.0, -2.0}, {0.15, 1.0}}} {}

template <Scalar T>
T CrossTarget::log_density_t(std::span<const T> x) const {
  check_dim(x.size(), 2, "cross");
  std::vector<T> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) {
    T z0 = (x[0] - c.mean[0]) / c.std[0];
    T z1 = (x[1] - c.mean[1]) / c.std[1];
    terms.push_back(-0.5 * (z0 * z0 + z1 * z1) - std::log(4.0 * c.std[0] * c.std[1]) - log_two_pi<T>());
  }
  return log_sum_exp<T>(terms);
}

template <Scalar T>
Point<T> CrossTarget::grad_t(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), 2, "cross");
  std::vector<T> terms;
  std::vector<Point<T>> grads;
  for (const auto& c : components_) {
    T z0 = (x[0] - c.mean[0]) / c.std[0];
    T z1 = (x[1] - c.mean[1]) / c.std[1];
    terms.push_back(-0.5 * (z0 * z0 + z1 * z1) - std::log(c.std[0] * c.std[1]));
    Point<T> g(2);
    g[0] = -z0 / c.std[0];
    g[1] = -z1 / c.std[1];
    grads.push_back(std::move(g));
  }
  // Responsibility-weighted component gradients.
  const T lse = log_sum_exp<T>(terms);
  Point<T> g(2, T(0.0));
  for (std::size_t k = 0; k < terms.size(); ++k) {
    T w = exp(terms[k] - lse);
    g[0] += w * grads[k][0];
    g[1] += w * grads[k][1];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Linear regression

LinearRegressionTarget::LinearRegressionTarget(const Dataset& data) : y_(data.responses) {
  if (data.features.rows() != data.responses.size())
    throw std::invalid_argument("linreg: feature/response row mismatch");
  design_.resize(data.features.rows(), data.features.cols() + 1);
  design_.col(0).setOnes();
  design_.rightCols(data.features.cols()) = data.features;
}

template <Scalar T>
T LinearRegressionTarget::log_density_t(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), dimension(), "linreg");
  const std::size_t p = static_cast<std::size_t>(design_.cols());
  const T& log_var = x[p];
  if (!finite(log_var)) throw std::invalid_argument("linreg: non-finite log variance");
  T prior = 0.0;
  for (std::size_t i = 0; i <= p; ++i) prior += x[i] * x[i];
  T lp = -0.5 * prior - (0.5 * static_cast<double>(p + 1)) * log_two_pi<T>();
  if (design_.rows() == 0) return lp;
  T sse = 0.0;
  for (Eigen::Index j = 0; j < design_.rows(); ++j) {
    T r = y_(j);
    for (std::size_t i = 0; i < p; ++i) r -= x[i] * design_(j, static_cast<Eigen::Index>(i));
    sse += r * r;
  }
  const double n = static_cast<double>(design_.rows());
  return lp - (0.5 * n) * log_two_pi<T>() - (0.5 * n) * log_var - 0.5 * sse * exp(-log_var);
}

template <Scalar T>
Point<T> LinearRegressionTarget::grad_t(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), dimension(), "linreg");
  const std::size_t p = static_cast<std::size_t>(design_.cols());
  const T& log_var = x[p];
  if (!finite(log_var)) throw std::invalid_argument("linreg: non-finite log variance");
  Point<T> g(p + 1);
  for (std::size_t i = 0; i <= p; ++i) g[i] = -x[i];
  if (design_.rows() == 0) return g;
  T inv_var = exp(-log_var);
  T sse = 0.0;
  Point<T> xr(p, T(0.0));
  for (Eigen::Index j = 0; j < design_.rows(); ++j) {
    T r = y_(j);
    for (std::size_t i = 0; i < p; ++i) r -= x[i] * design_(j, static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < p; ++i) xr[i] += r * design_(j, static_cast<Eigen::Index>(i));
    sse += r * r;
  }
  for (std::size_t i = 0; i < p; ++i) g[i] += inv_var * xr[i];
  g[p] += 0.5 * sse * inv_var - 0.5 * static_cast<double>(design_.rows());
  return g;
}

Eigen::MatrixXd LinearRegressionTarget::hessian(std::span<const double> x) const {
  check_dim(x.size(), dimension(), "linreg");
  const Eigen::Index p = design_.cols();
  Eigen::Map<const Eigen::VectorXd> beta(x.data(), p);
  const double inv_var = std::exp(-x[static_cast<std::size_t>(p)]);
  const Eigen::VectorXd r = y_ - design_ * beta;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p + 1, p + 1);
  h.topLeftCorner(p, p) = -Eigen::MatrixXd::Identity(p, p) - inv_var * design_.transpose() * design_;
  const Eigen::VectorXd cross = -inv_var * (design_.transpose() * r);
  h.block(0, p, p, 1) = cross;
  h.block(p, 0, 1, p) = cross.transpose();
  h(p, p) = -1.0 - 0.5 * inv_var * r.squaredNorm();
  return h;
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticRegressionTarget::LogisticRegressionTarget(const Dataset& data, double gamma_shape, double gamma_scale)
    : design_(data.features), y_(data.responses), shape_(gamma_shape), scale_(gamma_scale) {
  if (design_.rows() != y_.size()) throw std::invalid_argument("logreg: feature/response row mismatch");
  for (Eigen::Index j = 0; j < y_.size(); ++j)
    if (y_(j) != 0.0 && y_(j) != 1.0)
      throw std::invalid_argument("logreg: responses must be 0 or 1 (row " + std::to_string(j) + ")");
  if (!(shape_ > 0.0) || !(scale_ > 0.0)) throw std::invalid_argument("logreg: invalid Gamma prior");
}

template <Scalar T>
T LogisticRegressionTarget::log_density_t(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), dimension(), "logreg");
  const std::size_t p = static_cast<std::size_t>(design_.cols());
  const T& s = x[p];
  if (!finite(s)) throw std::invalid_argument("logreg: non-finite log precision");
  T alpha = exp(s);
  // log Gamma(alpha; shape, scale) + s for the exp transform.
  T lp = shape_ * s - alpha / scale_ - std::lgamma(shape_) - shape_ * std::log(scale_);
  T beta_sq = 0.0;
  for (std::size_t i = 0; i < p; ++i) beta_sq += x[i] * x[i];
  lp += (0.5 * static_cast<double>(p)) * s - 0.5 * alpha * beta_sq - (0.5 * static_cast<double>(p)) * log_two_pi<T>();
  for (Eigen::Index j = 0; j < design_.rows(); ++j) {
    T z = 0.0;
    for (std::size_t i = 0; i < p; ++i) z += x[i] * design_(j, static_cast<Eigen::Index>(i));
    lp -= softplus(z);
    if (y_(j) == 1.0) lp += z;
  }
  return lp;
}

template <Scalar T>
Point<T> LogisticRegressionTarget::grad_t(std::span<const T> x) const {
  using std::exp;
  check_dim(x.size(), dimension(), "logreg");
  const std::size_t p = static_cast<std::size_t>(design_.cols());
  const T& s = x[p];
  if (!finite(s)) throw std::invalid_argument("logreg: non-finite log precision");
  T alpha = exp(s);
  Point<T> g(p + 1);
  T beta_sq = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    g[i] = -(alpha * x[i]);
    beta_sq += x[i] * x[i];
  }
  for (Eigen::Index j = 0; j < design_.rows(); ++j) {
    T z = 0.0;
    for (std::size_t i = 0; i < p; ++i) z += x[i] * design_(j, static_cast<Eigen::Index>(i));
    T resid = y_(j) - sigmoid(z);
    for (std::size_t i = 0; i < p; ++i) g[i] += resid * design_(j, static_cast<Eigen::Index>(i));
  }
  g[p] = shape_ + 0.5 * static_cast<double>(p) - alpha / scale_ - 0.5 * alpha * beta_sq;
  return g;
}

Eigen::MatrixXd LogisticRegressionTarget::hessian(std::span<const double> x) const {
  check_dim(x.size(), dimension(), "logreg");
  const Eigen::Index p = design_.cols();
  Eigen::Map<const Eigen::VectorXd> beta(x.data(), p);
  const double alpha = std::exp(x[static_cast<std::size_t>(p)]);
  const Eigen::VectorXd z = design_ * beta;
  Eigen::VectorXd w(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double s = sigmoid(z(j));
    w(j) = s * (1.0 - s);
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p + 1, p + 1);
  h.topLeftCorner(p, p) =
      -alpha * Eigen::MatrixXd::Identity(p, p) - design_.transpose() * w.asDiagonal() * design_;
  h.block(0, p, p, 1) = -alpha * beta;
  h.block(p, 0, 1, p) = -alpha * beta.transpose();
  h(p, p) = -alpha / scale_ - 0.5 * alpha * beta.squaredNorm();
  return h;
}

std::shared_ptr<const TargetModel> banana_target(double b, double sigma1_sq) {
  return std::make_shared<const BananaTarget>(b, sigma1_sq);
}
std::shared_ptr<const TargetModel> cross_target() { return std::make_shared<const CrossTarget>(); }
std::shared_ptr<const TargetModel> gaussian_target(DiagGaussian dist) {
  return std::make_shared<const GaussianTarget>(std::move(dist));
}
std::shared_ptr<const TargetModel> linreg_target(const Dataset& data) {
  return std::make_shared<const LinearRegressionTarget>(data);
}
std::shared_ptr<const TargetModel> logreg_target(const Dataset& data) {
  return std::make_shared<const LogisticRegressionTarget>(data);
}

double gradient_check(const TargetModel& target, std::span<const Point<double>> points) {
  double worst = 0.0;
  for (const auto& x : points) {
    double norm = 0.0;
    for (double v : x) norm += v * v;
    const double h = 1e-6 * (1.0 + std::sqrt(norm));
    const auto g = target.grad_log_density(std::span<const double>(x));
    Point<double> xp = x, xm = x;
    double err_sq = 0.0, g_sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + h;
      xm[i] = x[i] - h;
      const double fd = (target.log_density(std::span<const double>(xp)) -
                         target.log_density(std::span<const double>(xm))) /
                        (2.0 * h);
      err_sq += (fd - g[i]) * (fd - g[i]);
      g_sq += g[i] * g[i];
      xp[i] = x[i];
      xm[i] = x[i];
    }
    worst = std::max(worst, std::sqrt(err_sq) / std::max(1.0, std::sqrt(g_sq)));
  }
  return worst;
}

}  // namespace shadowflow

#define SHADOWFLOW_INSTANTIATE_TARGET(Cls)                                        \
  template double Cls::log_density_t<double>(std::span<const double>) const;       \
  template BigFloat Cls::log_density_t<BigFloat>(std::span<const BigFloat>) const; \
  template Point<double> Cls::grad_t<double>(std::span<const double>) const;       \
  template Point<BigFloat> Cls::grad_t<BigFloat>(std::span<const BigFloat>) const;

namespace shadowflow {
SHADOWFLOW_INSTANTIATE_TARGET(BananaTarget)
SHADOWFLOW_INSTANTIATE_TARGET(CrossTarget)
SHADOWFLOW_INSTANTIATE_TARGET(LinearRegressionTarget)
SHADOWFLOW_INSTANTIATE_TARGET(LogisticRegressionTarget)
}  // namespace shadowflow

#undef SHADOWFLOW_INSTANTIATE_TARGET
