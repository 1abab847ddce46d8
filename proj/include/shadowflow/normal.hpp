#pragma once

// Standard-normal distribution functions in both precisions.

#include <cmath>
#include <numbers>

#include "shadowflow/scalar.hpp"

namespace shadowflow {

template <Scalar T>
T normal_log_pdf(const T& x) {
  return -0.5 * (x * x) - 0.5 * log_two_pi<T>();
}

template <Scalar T>
T normal_cdf(const T& x) {
  using std::erfc;
  return 0.5 * erfc(-(x * sqrt1_2<T>()));
}

/// 1 - normal_cdf(x), without cancellation for large x.
template <Scalar T>
T normal_upper_tail(const T& x) {
  using std::erfc;
  return 0.5 * erfc(x * sqrt1_2<T>());
}

/// Inverse of normal_cdf on (0, 1).  Returns -inf/+inf at 0/1.
double normal_quantile(double u);

/// Newton-refined inverse of normal_cdf at the working precision.
BigFloat normal_quantile(const BigFloat& u);

}  // namespace shadowflow
