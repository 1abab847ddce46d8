#include "shadowflow/mixflow.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "shadowflow/normal.hpp"

namespace shadowflow {

namespace {

std::atomic<std::size_t> g_clamp_count{0};

template <Scalar T>
void clamp_unit(T& u) {
  if constexpr (std::is_same_v<T, double>) {
    constexpr double lo = 1e-300;
    constexpr double hi = 1.0 - 0x1.0p-53;
    if (u < lo) {
      u = lo;
      g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    } else if (u > hi) {
      u = hi;
      g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    }
  } else {
    BigFloat lo = 1.0;
    mpfr_mul_2si(lo.raw(), lo.raw(), -static_cast<long>(working_precision()) + 10, MPFR_RNDN);
    if (u < lo) {
      u = lo;
      g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    } else if (u > 1.0 - lo) {
      u = 1.0 - lo;
      g_clamp_count.fetch_add(1, std::memory_order_relaxed);
    }
  }
}

template <Scalar T>
void check_gradient(const Point<T>& g, std::size_t step) {
  if (!all_finite<T>(g)) throw NonFiniteError("leapfrog: non-finite gradient", step);
}

}  // namespace

std::size_t refresh_clamp_count() { return g_clamp_count.load(std::memory_order_relaxed); }

template <Scalar T>
AugmentedState<T> AugmentedState<T>::split(std::span<const T> z) {
  if (z.size() % 2 != 0) throw std::invalid_argument("augmented state must have even dimension");
  const std::size_t d = z.size() / 2;
  return {Point<T>(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d)),
          Point<T>(z.begin() + static_cast<std::ptrdiff_t>(d), z.end())};
}

template <Scalar T>
Point<T> AugmentedState<T>::joined() const {
  Point<T> z;
  z.reserve(position.size() + momentum.size());
  z.insert(z.end(), position.begin(), position.end());
  z.insert(z.end(), momentum.begin(), momentum.end());
  return z;
}

template struct AugmentedState<double>;
template struct AugmentedState<BigFloat>;

LeapfrogSettings default_leapfrog_settings(const std::string& target_name) {
  if (target_name == "banana") return {200, 0.02};
  if (target_name == "cross") return {60, 0.005};
  if (target_name == "linreg") return {40, 0.0006};
  if (target_name == "logreg") return {50, 0.002};
  throw std::invalid_argument("no default leapfrog settings for target '" + target_name + "'");
}

template <Scalar T>
AugmentedState<T> leapfrog(const TargetModel& target, AugmentedState<T> z, std::size_t steps, double step_size) {
  if (steps == 0) throw std::invalid_argument("leapfrog: need at least one step");
  if (!(step_size > 0.0)) throw std::invalid_argument("leapfrog: step size must be positive");
  const std::size_t d = z.position.size();
  if (z.momentum.size() != d || d != target.dimension())
    throw std::invalid_argument("leapfrog: state dimension does not match target");

  const double half = 0.5 * step_size;
  auto g = target.grad_log_density(std::span<const T>(z.position));
  check_gradient(g, 0);
  for (std::size_t i = 0; i < d; ++i) z.momentum[i] += g[i] * half;
  for (std::size_t l = 1; l <= steps; ++l) {
    for (std::size_t i = 0; i < d; ++i) z.position[i] += z.momentum[i] * step_size;
    g = target.grad_log_density(std::span<const T>(z.position));
    check_gradient(g, l);
    const double h = l < steps ? step_size : half;
    for (std::size_t i = 0; i < d; ++i) z.momentum[i] += g[i] * h;
  }
  return z;
}

template AugmentedState<double> leapfrog(const TargetModel&, AugmentedState<double>, std::size_t, double);
template AugmentedState<BigFloat> leapfrog(const TargetModel&, AugmentedState<BigFloat>, std::size_t, double);

MixFlowMap::MixFlowMap(std::shared_ptr<const TargetModel> target, LeapfrogSettings lf, RefreshParams refresh)
    : target_(std::move(target)), leapfrog_(lf), refresh_(std::move(refresh)) {
  if (!target_) throw std::invalid_argument("mixflow: null target");
  d_ = target_->dimension();
  if (leapfrog_.steps == 0) throw std::invalid_argument("mixflow: leapfrog steps must be >= 1");
  if (!(leapfrog_.step_size > 0.0)) throw std::invalid_argument("mixflow: step size must be positive");
  if (refresh_.weights.empty()) refresh_.weights.assign(d_, 1.0 / static_cast<double>(d_));
  if (refresh_.weights.size() != d_) throw std::invalid_argument("mixflow: refresh weights have wrong dimension");
}

template <Scalar T>
T MixFlowMap::phase_argument(std::span<const T> position, std::size_t i) const {
  T arg = refresh_.phase * static_cast<double>(i);
  for (std::size_t j = 0; j < d_; ++j)
    if (refresh_.weights[j] != 0.0) arg += position[j] * refresh_.weights[j];
  return arg;
}

template <Scalar T>
T MixFlowMap::shift(std::span<const T> position, std::size_t i) const {
  using std::floor;
  using std::sin;
  T s = refresh_.offset;
  if (refresh_.amplitude != 0.0) s += sin(phase_argument<T>(position, i) * two_pi<T>()) * refresh_.amplitude;
  return s - floor(s);
}

template <Scalar T>
AugmentedState<T> MixFlowMap::refresh(AugmentedState<T> z, T* log_det) const {
  if (log_det) *log_det = 0.0;
  if (refresh_.is_identity()) return z;
  for (std::size_t i = 0; i < d_; ++i) {
    T u = normal_cdf(z.momentum[i]) + shift<T>(z.position, i + 1);
    if (u >= 1.0) u -= 1.0;
    clamp_unit(u);
    T rho_new = normal_quantile(u);
    if (log_det) *log_det += 0.5 * (rho_new * rho_new - z.momentum[i] * z.momentum[i]);
    z.momentum[i] = std::move(rho_new);
  }
  return z;
}

template <Scalar T>
AugmentedState<T> MixFlowMap::inverse_refresh(AugmentedState<T> z, T* log_det) const {
  if (log_det) *log_det = 0.0;
  if (refresh_.is_identity()) return z;
  for (std::size_t i = 0; i < d_; ++i) {
    T u = normal_cdf(z.momentum[i]) - shift<T>(z.position, i + 1);
    if (u < 0.0) u += 1.0;
    clamp_unit(u);
    T rho_old = normal_quantile(u);
    if (log_det) *log_det += 0.5 * (z.momentum[i] * z.momentum[i] - rho_old * rho_old);
    z.momentum[i] = std::move(rho_old);
  }
  return z;
}

template <Scalar T>
Point<T> MixFlowMap::apply(std::span<const T> z, T* log_det) const {
  if (z.size() != 2 * d_) throw std::invalid_argument("mixflow: state has wrong dimension");
  auto state = leapfrog<T>(*target_, AugmentedState<T>::split(z), leapfrog_.steps, leapfrog_.step_size);
  return refresh<T>(std::move(state), log_det).joined();
}

template <Scalar T>
Point<T> MixFlowMap::apply_inverse(std::span<const T> z, T* log_det) const {
  if (z.size() != 2 * d_) throw std::invalid_argument("mixflow: state has wrong dimension");
  auto state = inverse_refresh<T>(AugmentedState<T>::split(z), log_det);
  for (auto& r : state.momentum) r = -std::move(r);
  state = leapfrog<T>(*target_, std::move(state), leapfrog_.steps, leapfrog_.step_size);
  for (auto& r : state.momentum) r = -std::move(r);
  return state.joined();
}

template Point<double> MixFlowMap::apply(std::span<const double>, double*) const;
template Point<BigFloat> MixFlowMap::apply(std::span<const BigFloat>, BigFloat*) const;
template Point<double> MixFlowMap::apply_inverse(std::span<const double>, double*) const;
template Point<BigFloat> MixFlowMap::apply_inverse(std::span<const BigFloat>, BigFloat*) const;
template AugmentedState<double> MixFlowMap::refresh(AugmentedState<double>, double*) const;
template AugmentedState<BigFloat> MixFlowMap::refresh(AugmentedState<BigFloat>, BigFloat*) const;
template AugmentedState<double> MixFlowMap::inverse_refresh(AugmentedState<double>, double*) const;
template AugmentedState<BigFloat> MixFlowMap::inverse_refresh(AugmentedState<BigFloat>, BigFloat*) const;

Eigen::MatrixXd MixFlowMap::leapfrog_jacobian(std::span<const double> z) const {
  if (z.size() != 2 * d_) throw std::invalid_argument("mixflow: state has wrong dimension");
  const auto d = static_cast<Eigen::Index>(d_);
  const double eta = leapfrog_.step_size;
  auto state = AugmentedState<double>::split(z);

  // Tangents of position (dx) and momentum (dp) w.r.t. the initial state.
  Eigen::MatrixXd dx(d, 2 * d), dp(d, 2 * d);
  dx << Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Zero(d, d);
  dp << Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Identity(d, d);

  auto g = target_->grad_log_density(std::span<const double>(state.position));
  check_gradient(g, 0);
  dp += (0.5 * eta) * target_->hessian(state.position) * dx;
  for (std::size_t i = 0; i < d_; ++i) state.momentum[i] += 0.5 * eta * g[i];
  for (std::size_t l = 1; l <= leapfrog_.steps; ++l) {
    for (std::size_t i = 0; i < d_; ++i) state.position[i] += eta * state.momentum[i];
    dx += eta * dp;
    g = target_->grad_log_density(std::span<const double>(state.position));
    check_gradient(g, l);
    const double h = l < leapfrog_.steps ? eta : 0.5 * eta;
    for (std::size_t i = 0; i < d_; ++i) state.momentum[i] += h * g[i];
    dp += h * target_->hessian(state.position) * dx;
  }
  Eigen::MatrixXd jac(2 * d, 2 * d);
  jac << dx, dp;
  if (!jac.allFinite()) throw NonFiniteError("mixflow: non-finite leapfrog Jacobian", 0);
  return jac;
}

Eigen::MatrixXd MixFlowMap::refresh_jacobian(std::span<const double> z) const {
  if (z.size() != 2 * d_) throw std::invalid_argument("mixflow: state has wrong dimension");
  const auto d = static_cast<Eigen::Index>(d_);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(2 * d, 2 * d);
  if (refresh_.is_identity()) return jac;
  const auto state = AugmentedState<double>::split(z);
  const auto out = refresh<double>(state);
  for (std::size_t i = 0; i < d_; ++i) {
    const auto r = d + static_cast<Eigen::Index>(i);
    const double rho = state.momentum[i];
    const double rho_new = out.momentum[i];
    const double inv_pdf_new = std::exp(-normal_log_pdf(rho_new));
    jac(r, r) = std::exp(normal_log_pdf(rho) - normal_log_pdf(rho_new));
    if (refresh_.amplitude != 0.0) {
      const double arg = phase_argument<double>(state.position, i + 1);
      const double dshift = refresh_.amplitude * std::cos(2.0 * std::numbers::pi * arg) * 2.0 * std::numbers::pi;
      for (std::size_t j = 0; j < d_; ++j)
        jac(r, static_cast<Eigen::Index>(j)) = dshift * refresh_.weights[j] * inv_pdf_new;
    }
  }
  return jac;
}

Eigen::MatrixXd MixFlowMap::jacobian(std::span<const double> z) const {
  const Eigen::MatrixXd lf = leapfrog_jacobian(z);
  if (refresh_.is_identity()) return lf;
  const auto moved = leapfrog<double>(*target_, AugmentedState<double>::split(z), leapfrog_.steps,
                                      leapfrog_.step_size)
                         .joined();
  Eigen::MatrixXd jac = refresh_jacobian(moved) * lf;
  if (!jac.allFinite()) throw NonFiniteError("mixflow: non-finite Jacobian", 0);
  return jac;
}

}  // namespace shadowflow
