#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace shadowflow {

/// Linear-interpolation quantile (the "type 7" rule), p in [0, 1].
double quantile(std::span<const double> values, double p);
double median(std::span<const double> values);
double mean(std::span<const double> values);
/// Standard error of the mean; 0 for fewer than two values.
double standard_error(std::span<const double> values);

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double max = 0.0;
};

Summary summarize(std::span<const double> values);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y ~ a + b x.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace shadowflow
