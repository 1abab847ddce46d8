#include "shadowflow/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "shadowflow/normal.hpp"
#include "shadowflow/orbit.hpp"

namespace shadowflow {

MixFlowModel::MixFlowModel(std::shared_ptr<const Layer> m, DiagGaussian ref, std::size_t n)
    : map(std::move(m)), reference(std::move(ref)), length(n) {
  if (!map) throw std::invalid_argument("MixFlowModel: null map");
  if (reference.dimension() != map->dimension())
    throw std::invalid_argument("MixFlowModel: reference dimension " + std::to_string(reference.dimension()) +
                                " does not match map dimension " + std::to_string(map->dimension()));
}

AugmentedTarget::AugmentedTarget(std::shared_ptr<const TargetModel> base) : base_(std::move(base)) {
  if (!base_) throw std::invalid_argument("AugmentedTarget: null target");
}

template <Scalar T>
T AugmentedTarget::log_density_impl(std::span<const T> z) const {
  const std::size_t d = base_->dimension();
  if (z.size() != 2 * d) throw std::invalid_argument("AugmentedTarget: state has wrong dimension");
  T lp = base_->log_density(z.first(d));
  for (std::size_t i = d; i < 2 * d; ++i) lp += normal_log_pdf(z[i]);
  return lp;
}

template <Scalar T>
Point<T> AugmentedTarget::grad_impl(std::span<const T> z) const {
  const std::size_t d = base_->dimension();
  if (z.size() != 2 * d) throw std::invalid_argument("AugmentedTarget: state has wrong dimension");
  Point<T> g = base_->grad_log_density(z.first(d));
  g.reserve(2 * d);
  for (std::size_t i = d; i < 2 * d; ++i) g.push_back(-z[i]);
  return g;
}

double AugmentedTarget::log_density(std::span<const double> z) const { return log_density_impl(z); }
BigFloat AugmentedTarget::log_density(std::span<const BigFloat> z) const { return log_density_impl(z); }
Point<double> AugmentedTarget::grad_log_density(std::span<const double> z) const { return grad_impl(z); }
Point<BigFloat> AugmentedTarget::grad_log_density(std::span<const BigFloat> z) const { return grad_impl(z); }

Eigen::MatrixXd AugmentedTarget::hessian(std::span<const double> z) const {
  const auto d = static_cast<Eigen::Index>(base_->dimension());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2 * d, 2 * d);
  h.topLeftCorner(d, d) = base_->hessian(z.first(static_cast<std::size_t>(d)));
  h.bottomRightCorner(d, d) = -Eigen::MatrixXd::Identity(d, d);
  return h;
}

namespace {

template <Scalar T>
void require_finite(const T& v, const char* what, std::size_t index) {
  if (!finite(v)) throw NonFiniteError(what, index);
}

template <Scalar T>
T log_count(std::size_t n) {
  using std::log;
  return log(T(static_cast<double>(n)));
}

template <Scalar T>
OrbitCache<T> build_cache(const MixFlowModel& model, Point<T> x) {
  const std::size_t n = model.length;
  if (x.size() != model.dimension()) throw std::invalid_argument("orbit cache: state has wrong dimension");
  OrbitCache<T> cache;
  cache.length = n;
  cache.states.resize(2 * n + 1);
  cache.log_jacobians.resize(2 * n);
  cache.states[n] = std::move(x);
  for (std::size_t j = 1; j <= n; ++j) {
    T ld = 0.0;
    cache.states[n - j] = model.map->inverse(std::span<const T>(cache.states[n - j + 1]), &ld);
    if (!all_finite<T>(cache.states[n - j])) throw NonFiniteError("orbit cache: non-finite backward state", j);
    require_finite(ld, "orbit cache: non-finite log-Jacobian", j);
    cache.log_jacobians[n - j] = std::move(ld);
  }
  for (std::size_t k = 1; k <= n; ++k) {
    T ld = 0.0;
    cache.states[n + k] = model.map->forward(std::span<const T>(cache.states[n + k - 1]), &ld);
    if (!all_finite<T>(cache.states[n + k])) throw NonFiniteError("orbit cache: non-finite forward state", k);
    require_finite(ld, "orbit cache: non-finite log-Jacobian", k);
    cache.log_jacobians[n + k - 1] = std::move(ld);
  }
  return cache;
}

/// log q of the length-n MixFlow at the cached state x_k, for 0 <= k <= n.
template <Scalar T>
T cached_log_density(const OrbitCache<T>& cache, const std::vector<T>& log_q0, std::ptrdiff_t k, std::size_t n) {
  const auto off = static_cast<std::ptrdiff_t>(cache.length);
  std::vector<T> terms;
  terms.reserve(n + 1);
  T running = 0.0;
  for (std::size_t m = 0; m <= n; ++m) {
    const std::ptrdiff_t idx = k - static_cast<std::ptrdiff_t>(m);
    if (m > 0) running += cache.log_jacobian(idx);
    terms.push_back(log_q0[static_cast<std::size_t>(idx + off)] - running);
  }
  T lq = log_sum_exp<T>(terms) - log_count<T>(n + 1);
  require_finite(lq, "mixflow density: non-finite value", static_cast<std::size_t>(k));
  return lq;
}

template <Scalar T>
std::vector<T> cached_elbo_curve(const MixFlowModel& model, const TargetModel& target, Point<T> x,
                                 std::span<const std::size_t> lengths) {
  if (lengths.empty()) return {};
  if (target.dimension() != model.dimension())
    throw std::invalid_argument("ELBO: target dimension does not match the flow");
  const std::size_t n_max = *std::max_element(lengths.begin(), lengths.end());
  const auto cache = build_cache<T>(model.with_length(n_max), std::move(x));

  std::vector<T> log_q0, log_p;
  log_q0.reserve(cache.states.size());
  for (const auto& s : cache.states) log_q0.push_back(model.reference.log_density<T>(s));
  log_p.reserve(n_max + 1);
  for (std::size_t k = 0; k <= n_max; ++k) {
    log_p.push_back(target.log_density(std::span<const T>(cache.state(static_cast<std::ptrdiff_t>(k)))));
    require_finite(log_p.back(), "ELBO: non-finite target log-density", k);
  }

  std::vector<T> out;
  out.reserve(lengths.size());
  for (const std::size_t n : lengths) {
    T sum = 0.0;
    for (std::size_t k = 0; k <= n; ++k)
      sum += log_p[k] - cached_log_density(cache, log_q0, static_cast<std::ptrdiff_t>(k), n);
    out.push_back(sum / static_cast<double>(n + 1));
  }
  return out;
}

template <Scalar T>
T mixflow_log_density_t(const MixFlowModel& model, Point<T> x) {
  const std::size_t n = model.length;
  if (x.size() != model.dimension()) throw std::invalid_argument("mixflow density: state has wrong dimension");
  std::vector<T> terms;
  terms.reserve(n + 1);
  terms.push_back(model.reference.log_density<T>(x));
  T running = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    T ld = 0.0;
    x = model.map->inverse(std::span<const T>(x), &ld);
    if (!all_finite<T>(x)) throw NonFiniteError("mixflow density: non-finite backward state", j);
    running += ld;
    terms.push_back(model.reference.log_density<T>(x) - running);
  }
  T lq = log_sum_exp<T>(terms) - log_count<T>(n + 1);
  require_finite(lq, "mixflow density: non-finite value", n);
  return lq;
}

template <Scalar T>
T nf_log_density_t(const FlowSystem& sys, const DiagGaussian& q0, Point<T> x) {
  if (q0.dimension() != sys.dimension()) throw std::invalid_argument("flow density: reference dimension mismatch");
  T sum_log_j = 0.0;
  for (std::size_t n = 1; n <= sys.length(); ++n) {
    T ld = 0.0;
    x = sys.backward_layer(n).inverse(std::span<const T>(x), &ld);
    if (!all_finite<T>(x)) throw NonFiniteError("flow density: non-finite backward state", n);
    sum_log_j += ld;
  }
  T lq = q0.log_density<T>(x) - sum_log_j;
  require_finite(lq, "flow density: non-finite value", sys.length());
  return lq;
}

template <Scalar T>
T nf_elbo_t(const FlowSystem& sys, const DiagGaussian& q0, const TargetModel& target, Point<T> x) {
  if (target.dimension() != sys.dimension()) throw std::invalid_argument("ELBO: target dimension mismatch");
  T value = -q0.log_density<T>(x);
  for (std::size_t n = 1; n <= sys.length(); ++n) {
    T ld = 0.0;
    x = sys.forward_layer(n).forward(std::span<const T>(x), &ld);
    if (!all_finite<T>(x)) throw NonFiniteError("ELBO: non-finite forward state", n);
    value += ld;
  }
  value += target.log_density(std::span<const T>(x));
  require_finite(value, "ELBO: non-finite estimate", sys.length());
  return value;
}

/// Runs f on x in double, or on promote(x) at the extended precision.
template <class F>
double with_precision(const PrecisionSpec& prec, std::span<const double> x, F&& f) {
  if (!prec.is_extended()) return f(Point<double>(x.begin(), x.end()));
  PrecisionScope scope(prec.mantissa_bits);
  return demote(f(promote(x, prec)));
}

}  // namespace

OrbitCache<double> build_orbit_cache(const MixFlowModel& model, std::span<const double> x) {
  return build_cache<double>(model, Point<double>(x.begin(), x.end()));
}

OrbitCache<BigFloat> build_orbit_cache(const MixFlowModel& model, std::span<const BigFloat> x) {
  return build_cache<BigFloat>(model, Point<BigFloat>(x.begin(), x.end()));
}

std::vector<Point<double>> sample_mixflow(const MixFlowModel& model, RngStream& rng, std::size_t count,
                                          const PrecisionSpec& prec) {
  if (count == 0) throw std::invalid_argument("sample_mixflow: count must be at least 1");
  std::vector<Point<double>> draws;
  draws.reserve(count);
  std::optional<PrecisionScope> scope;
  if (prec.is_extended()) scope.emplace(prec.mantissa_bits);
  for (std::size_t s = 0; s < count; ++s) {
    Point<double> x = model.reference.sample(rng);
    const auto k = static_cast<std::size_t>(rng.uniform_index(model.length + 1));
    if (prec.is_extended()) {
      auto y = promote(x, prec);
      for (std::size_t j = 1; j <= k; ++j) {
        y = model.map->forward(std::span<const BigFloat>(y));
        if (!all_finite<BigFloat>(y)) throw NonFiniteError("sample_mixflow: non-finite state", j);
      }
      draws.push_back(demote(y));
    } else {
      for (std::size_t j = 1; j <= k; ++j) {
        x = model.map->forward(std::span<const double>(x));
        if (!all_finite<double>(x)) throw NonFiniteError("sample_mixflow: non-finite state", j);
      }
      draws.push_back(std::move(x));
    }
  }
  return draws;
}

double nf_log_density(const FlowSystem& sys, const DiagGaussian& q0, std::span<const double> x,
                      const PrecisionSpec& prec) {
  return with_precision(prec, x, [&](auto p) { return nf_log_density_t(sys, q0, std::move(p)); });
}

double mixflow_log_density(const MixFlowModel& model, std::span<const double> x, const PrecisionSpec& prec) {
  return with_precision(prec, x, [&](auto p) { return mixflow_log_density_t(model, std::move(p)); });
}

double nf_elbo_estimate(const FlowSystem& sys, const DiagGaussian& q0, const TargetModel& target,
                        std::span<const double> x, const PrecisionSpec& prec) {
  return with_precision(prec, x, [&](auto p) { return nf_elbo_t(sys, q0, target, std::move(p)); });
}

double mixflow_elbo_estimate(const MixFlowModel& model, const TargetModel& target, std::span<const double> x,
                             const PrecisionSpec& prec) {
  const std::size_t n = model.length;
  return mixflow_elbo_curve(model, target, x, std::span<const std::size_t>(&n, 1), prec).front();
}

std::vector<double> mixflow_elbo_curve(const MixFlowModel& model, const TargetModel& target,
                                       std::span<const double> x, std::span<const std::size_t> lengths,
                                       const PrecisionSpec& prec) {
  if (!prec.is_extended()) return cached_elbo_curve<double>(model, target, Point<double>(x.begin(), x.end()), lengths);
  PrecisionScope scope(prec.mantissa_bits);
  const auto values = cached_elbo_curve<BigFloat>(model, target, promote(x, prec), lengths);
  return demote(values);
}

double mixflow_elbo_direct(const MixFlowModel& model, const TargetModel& target, std::span<const double> x,
                           const PrecisionSpec& prec) {
  return with_precision(prec, x, [&](auto x0) {
    using T = typename decltype(x0)::value_type;
    const std::size_t n = model.length;
    T sum = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
      auto xk = x0;
      for (std::size_t j = 0; j < k; ++j) xk = model.map->forward(std::span<const T>(xk));
      sum += target.log_density(std::span<const T>(xk)) - mixflow_log_density_t(model, xk);
    }
    return T(sum / static_cast<double>(n + 1));
  });
}

TestFunction parse_test_function(const std::string& name) {
  if (name == "zero") return TestFunction::Zero;
  if (name == "abs") return TestFunction::AbsSum;
  if (name == "sin") return TestFunction::SinSum;
  if (name == "sigmoid") return TestFunction::SigmoidSum;
  throw std::invalid_argument("unknown test function '" + name + "' (expected zero, abs, sin, sigmoid)");
}

std::string to_string(TestFunction fn) {
  switch (fn) {
    case TestFunction::Zero: return "zero";
    case TestFunction::AbsSum: return "abs";
    case TestFunction::SinSum: return "sin";
    case TestFunction::SigmoidSum: return "sigmoid";
  }
  return "unknown";
}

double evaluate_test_function(TestFunction fn, std::span<const double> x) {
  double s = 0.0;
  for (const double v : x) {
    switch (fn) {
      case TestFunction::Zero: break;
      case TestFunction::AbsSum: s += std::abs(v); break;
      case TestFunction::SinSum: s += std::sin(v) + 1.0; break;
      case TestFunction::SigmoidSum: s += 1.0 / (1.0 + std::exp(-v)); break;
    }
  }
  return s;
}

double sample_average(const std::vector<Point<double>>& draws, TestFunction fn, std::size_t coordinates) {
  if (draws.empty()) throw std::invalid_argument("sample_average: no draws");
  double sum = 0.0;
  for (const auto& x : draws) {
    const std::size_t n = coordinates == 0 ? x.size() : std::min(coordinates, x.size());
    sum += evaluate_test_function(fn, std::span<const double>(x).first(n));
  }
  return sum / static_cast<double>(draws.size());
}

Point<double> central_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                          std::span<const double> x, double relative_step) {
  const double h = relative_step * (1.0 + std::sqrt(squared_norm<double>(x)));
  Point<double> y(x.begin(), x.end()), g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

LogFunction log_function(const DiagGaussian& dist) {
  return {[dist](std::span<const double> x) { return dist.log_density<double>(x); },
          [dist](std::span<const double> x) { return dist.grad_log_density<double>(x); }};
}

LogFunction log_function(std::shared_ptr<const TargetModel> target) {
  return {[target](std::span<const double> x) { return target->log_density(x); },
          [target](std::span<const double> x) { return target->grad_log_density(x); }};
}

LogFunction log_jacobian_function(std::shared_ptr<const Layer> layer) {
  auto value = [layer](std::span<const double> x) { return layer->log_jac_det(x); };
  return {value, [value](std::span<const double> x) { return central_difference_gradient(value, x); }};
}

LogFunction mixflow_density_function(const MixFlowModel& model) {
  auto value = [model](std::span<const double> x) { return mixflow_log_density(model, x); };
  return {value, [value](std::span<const double> x) { return central_difference_gradient(value, x); }};
}

double local_lipschitz(const LogFunction& g, std::span<const double> x, double eps, const LipschitzConfig& cfg) {
  if (!(eps >= 0.0)) throw std::invalid_argument("local_lipschitz: eps must be nonnegative");
  const std::size_t d = x.size();
  auto grad_at = [&](std::span<const double> y) {
    auto gr = g.gradient(y);
    if (!all_finite<double>(gr)) throw NonFiniteError("local_lipschitz: non-finite gradient", 0);
    return gr;
  };
  auto norm = [](std::span<const double> v) { return std::sqrt(squared_norm<double>(v)); };

  Point<double> best_y(x.begin(), x.end());
  const auto g0 = grad_at(x);
  double best = norm(g0);
  if (eps == 0.0) return best;

  auto project = [&](Point<double>& y) {
    double r2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) r2 += (y[i] - x[i]) * (y[i] - x[i]);
    if (r2 > eps * eps) {
      const double s = eps / std::sqrt(r2);
      for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + (y[i] - x[i]) * s;
    }
  };
  // Direction of grad ||grad log g||^2 = 2 H grad log g, from a difference
  // of gradients along the unit gradient.
  auto ascent_direction = [&](std::span<const double> y, const Point<double>& gy) -> Point<double> {
    const double n = norm(gy);
    if (n == 0.0) return {};
    const double h = cfg.hvp_step * (1.0 + norm(y));
    Point<double> up(y.begin(), y.end()), down(y.begin(), y.end());
    for (std::size_t i = 0; i < d; ++i) {
      up[i] += h * gy[i] / n;
      down[i] -= h * gy[i] / n;
    }
    const auto gu = grad_at(up), gd = grad_at(down);
    Point<double> dir(d);
    for (std::size_t i = 0; i < d; ++i) dir[i] = gu[i] - gd[i];
    return norm(dir) > 0.0 ? dir : Point<double>{};
  };
  auto consider = [&](Point<double> y) {
    const double v = norm(grad_at(y));
    if (v > best) {
      best = v;
      best_y = std::move(y);
    }
  };

  if (auto dir = ascent_direction(x, g0); !dir.empty()) {
    const double n = norm(dir);
    Point<double> y(x.begin(), x.end());
    for (std::size_t i = 0; i < d; ++i) y[i] += eps * dir[i] / n;
    consider(std::move(y));
  }
  RngStream rng(cfg.seed, 0);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    Point<double> v(d);
    for (auto& vi : v) vi = rng.normal();
    const double n = norm(v);
    Point<double> y(x.begin(), x.end());
    for (std::size_t i = 0; i < d; ++i) y[i] += eps * v[i] / n;
    consider(std::move(y));
  }

  double step = eps;
  Point<double> y = best_y;
  double current = best;
  for (std::size_t it = 0; it < cfg.ascent_steps; ++it) {
    const auto dir = ascent_direction(y, grad_at(y));
    if (dir.empty()) break;
    const double n = norm(dir);
    Point<double> cand = y;
    for (std::size_t i = 0; i < d; ++i) cand[i] += step * dir[i] / n;
    project(cand);
    const double v = norm(grad_at(cand));
    if (v > current) {
      current = v;
      y = std::move(cand);
    } else {
      step *= 0.5;
    }
  }
  return std::max(best, current);
}

BoundReport density_error_bound(const MixFlowModel& model, std::span<const double> x, double eps,
                                const LipschitzConfig& cfg, const LipschitzConfig& density_cfg) {
  if (!(eps >= 0.0)) throw std::invalid_argument("density_error_bound: eps must be nonnegative");
  BoundReport report;
  report.epsilon = eps;
  const auto trace = backward_orbit(model.system(), x, model.length);
  const auto q0 = log_function(model.reference);
  const auto log_j = log_jacobian_function(model.map);

  for (std::size_t n = 0; n <= model.length; ++n)
    report.lipschitz_reference.push_back(local_lipschitz(q0, trace.states[n], eps, cfg));
  for (std::size_t n = 1; n <= model.length; ++n)
    report.lipschitz_log_jacobian.push_back(local_lipschitz(log_j, trace.states[n], eps, cfg));
  report.lipschitz_density = local_lipschitz(mixflow_density_function(model), x, eps, density_cfg);

  double sum_j = 0.0;
  for (const double v : report.lipschitz_log_jacobian) sum_j += v;
  const double max_q0 = *std::max_element(report.lipschitz_reference.begin(), report.lipschitz_reference.end());
  report.bound = eps * (report.lipschitz_density + max_q0 + sum_j);
  return report;
}

}  // namespace shadowflow
