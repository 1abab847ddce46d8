#pragma once

// Helpers that let numerical kernels be written once and instantiated for
// both double and BigFloat.

#include <cmath>
#include <concepts>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "shadowflow/bigfloat.hpp"

namespace shadowflow {

template <class T>
concept Scalar = std::same_as<T, double> || std::same_as<T, BigFloat>;

template <class T>
using Point = std::vector<T>;

template <Scalar T>
T pi_value() {
  if constexpr (std::is_same_v<T, double>) {
    return std::numbers::pi;
  } else {
    return BigFloat::pi();
  }
}

namespace detail {

enum class ConstantId { LogTwoPi, Sqrt1_2, TwoPi };

BigFloat compute_constant(ConstantId id);

template <ConstantId Id>
const BigFloat& cached_constant() {
  thread_local unsigned cached_bits = 0;
  thread_local BigFloat cached;
  if (cached_bits != working_precision()) {
    cached = compute_constant(Id);
    cached_bits = working_precision();
  }
  return cached;
}

}  // namespace detail

/// log(2*pi), cached per thread and precision for BigFloat.
template <Scalar T>
const T& log_two_pi() {
  if constexpr (std::is_same_v<T, double>) {
    static const double value = std::log(2.0 * std::numbers::pi);
    return value;
  } else {
    return detail::cached_constant<detail::ConstantId::LogTwoPi>();
  }
}

/// 1/sqrt(2).
template <Scalar T>
const T& sqrt1_2() {
  if constexpr (std::is_same_v<T, double>) {
    static const double value = std::sqrt(0.5);
    return value;
  } else {
    return detail::cached_constant<detail::ConstantId::Sqrt1_2>();
  }
}

/// 2*pi.
template <Scalar T>
const T& two_pi() {
  if constexpr (std::is_same_v<T, double>) {
    static const double value = 2.0 * std::numbers::pi;
    return value;
  } else {
    return detail::cached_constant<detail::ConstantId::TwoPi>();
  }
}

inline double to_double(double x) { return x; }
inline double to_double(const BigFloat& x) { return x.to_double(); }

inline bool finite(double x) { return std::isfinite(x); }
inline bool finite(const BigFloat& x) { return x.is_finite(); }

template <Scalar T>
bool all_finite(std::span<const T> x) {
  for (const auto& v : x)
    if (!finite(v)) return false;
  return true;
}

template <Scalar T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <Scalar T>
T squared_norm(std::span<const T> a) {
  T s = 0.0;
  for (const auto& v : a) s += v * v;
  return s;
}

/// Euclidean distance accumulated in the scalar type of the arguments.
template <Scalar T>
T distance(std::span<const T> a, std::span<const T> b) {
  using std::sqrt;
  if (a.size() != b.size()) throw std::invalid_argument("distance: dimension mismatch");
  T s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    T diff = a[i] - b[i];
    s += diff * diff;
  }
  return sqrt(s);
}

/// Numerically stable log(sum(exp(v))).
template <Scalar T>
T log_sum_exp(std::span<const T> v) {
  using std::exp;
  using std::log;
  if (v.empty()) throw std::invalid_argument("log_sum_exp of an empty sequence");
  T m = v[0];
  for (const auto& x : v)
    if (x > m) m = x;
  if (!finite(m)) return m;
  T s = 0.0;
  for (const auto& x : v) s += exp(x - m);
  return m + log(s);
}

/// Thrown when an orbit or accumulation leaves the finite numbers.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t index)
      : std::runtime_error(what + " (at index " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace shadowflow
