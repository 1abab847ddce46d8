#include "shadowflow/normal.hpp"

#include <array>
#include <limits>

namespace shadowflow {

namespace {

// Acklam's rational approximation; relative error below 1.2e-9 before the
// refinement step.
constexpr std::array<double, 6> kA = {-3.969683028665376e+01, 2.209460984245205e+02,
                                      -2.759285104469687e+02, 1.383577518672690e+02,
                                      -3.066479806614716e+01, 2.506628277459239e+00};
constexpr std::array<double, 5> kB = {-5.447609879822406e+01, 1.615858368580409e+02,
                                      -1.556989798598866e+02, 6.680131188771972e+01,
                                      -1.328068155288572e+01};
constexpr std::array<double, 6> kC = {-7.784894002430293e-03, -3.223964580411365e-01,
                                      -2.400758277161838e+00, -2.549732539343734e+00,
                                      4.374664141464968e+00,  2.938163982698783e+00};
constexpr std::array<double, 4> kD = {7.784695709041462e-03, 3.224671290700398e-01,
                                      2.445134137142996e+00, 3.754408661907416e+00};

// Quantile for p in (0, 0.5].
double lower_quantile(double p) {
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
        ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r + kA[5]) * q /
        (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r + 1.0);
  }
  // One Halley step against the erfc-based CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace

double normal_quantile(double u) {
  if (u <= 0.0) return -std::numeric_limits<double>::infinity();
  if (u >= 1.0) return std::numeric_limits<double>::infinity();
  if (u > 0.5) return -lower_quantile(1.0 - u);
  return lower_quantile(u);
}

BigFloat normal_quantile(const BigFloat& u) {
  if (u <= 0.0) return BigFloat(-std::numeric_limits<double>::infinity());
  if (u >= 1.0) return BigFloat(std::numeric_limits<double>::infinity());

  const bool upper = u > 0.5;
  const BigFloat tail = upper ? 1.0 - u : u;

  double start;
  const double tail_d = tail.to_double();
  if (tail_d > 1e-300) {
    start = lower_quantile(tail_d);
  } else {
    // Beyond double range: leading terms of the tail asymptotics.
    const double l = -2.0 * log(tail).to_double();
    start = -std::sqrt(l - std::log(l) - std::log(2.0 * std::numbers::pi));
  }

  const long bits = static_cast<long>(working_precision());
  BigFloat x = start;
  for (int iter = 0; iter < 64; ++iter) {
    // Newton on cdf(x) - tail, with x <= 0 so the cdf is a small erfc value.
    BigFloat f = normal_cdf(x) - tail;
    BigFloat step = f / exp(normal_log_pdf(x));
    x -= step;
    if (step.is_zero()) break;
    if (x.is_zero()) break;
    if (mpfr_get_exp(step.raw()) < mpfr_get_exp(x.raw()) - bits + 2) break;
  }
  return upper ? -std::move(x) : x;
}

}  // namespace shadowflow
