#include "shadowflow/meanfield.hpp"

#include <cmath>

namespace shadowflow {

DiagGaussian fit_meanfield_reference(const TargetModel& target, const MeanFieldConfig& cfg, RngStream& rng) {
  const std::size_t d = target.dimension();
  DiagGaussian q = cfg.init.value_or(DiagGaussian::standard(d));
  if (q.dimension() != d) throw std::invalid_argument("mean-field fit: initial reference has wrong dimension");
  if (cfg.steps == 0) return q;

  const std::size_t average_from =
      cfg.steps - std::min(cfg.steps, std::max<std::size_t>(1, static_cast<std::size_t>(cfg.averaging_fraction *
                                                                                          static_cast<double>(cfg.steps))));
  std::vector<double> mean_sum(d, 0.0), log_std_sum(d, 0.0);
  std::size_t averaged = 0;

  Point<double> eps(d), z(d);
  for (std::size_t it = 0; it < cfg.steps; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      eps[i] = rng.normal();
      z[i] = q.mean[i] + std::exp(q.log_std[i]) * eps[i];
    }
    const auto g = target.grad_log_density(std::span<const double>(z));
    for (std::size_t i = 0; i < d; ++i) {
      // d/dmean E[log p(z)] and d/dlog_std (E[log p(z)] + entropy).
      q.mean[i] += cfg.step_size * g[i];
      q.log_std[i] += cfg.step_size * (g[i] * std::exp(q.log_std[i]) * eps[i] + 1.0);
      if (!std::isfinite(q.mean[i]) || !std::isfinite(q.log_std[i]))
        throw FitDivergedError("mean-field fit diverged", it);
    }
    if (it >= average_from) {
      for (std::size_t i = 0; i < d; ++i) {
        mean_sum[i] += q.mean[i];
        log_std_sum[i] += q.log_std[i];
      }
      ++averaged;
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    mean_sum[i] /= static_cast<double>(averaged);
    log_std_sum[i] /= static_cast<double>(averaged);
  }
  return DiagGaussian(std::move(mean_sum), std::move(log_std_sum));
}

double meanfield_elbo(const TargetModel& target, const DiagGaussian& q, RngStream& rng, std::size_t samples) {
  if (samples == 0) throw std::invalid_argument("meanfield_elbo: need at least one sample");
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto x = q.sample(rng);
    sum += target.log_density(std::span<const double>(x)) - q.log_density<double>(x);
  }
  return sum / static_cast<double>(samples);
}

}  // namespace shadowflow
