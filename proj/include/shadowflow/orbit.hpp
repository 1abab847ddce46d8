#pragma once

// Orbits and pseudo-orbits of a FlowSystem, and orbit-level error measures.

#include <cstddef>
#include <span>
#include <vector>

#include "shadowflow/bigfloat.hpp"
#include "shadowflow/flow_system.hpp"
#include "shadowflow/scalar.hpp"

namespace shadowflow {

enum class Direction { Forward, Backward };

const char* to_string(Direction d);

/// States x_0, ..., x_n of a forward orbit (x_k = F_k(x_{k-1})) or a backward
/// orbit (x_{-k} = B_k(x_{-(k-1)}), stored at index k).  double traces are the
/// numerical pseudo-orbits, BigFloat traces the exact ones.
template <Scalar T>
struct OrbitTrace {
  Direction direction = Direction::Forward;
  PrecisionSpec precision;
  std::vector<Point<T>> states;
  /// log|det grad F| at the input of each applied forward layer, aligned with
  /// the step index: entry k-1 belongs to the map between states k-1 and k.
  std::vector<T> log_dets;

  const Point<T>& origin() const { return states.front(); }
  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

OrbitTrace<double> forward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n);
OrbitTrace<double> backward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n);

/// Exact orbits: x is promoted to the given extended precision.
OrbitTrace<BigFloat> forward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n,
                                   const PrecisionSpec& precision);
OrbitTrace<BigFloat> backward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n,
                                    const PrecisionSpec& precision);
/// Exact orbits from an extended-precision origin, at the origin's precision.
OrbitTrace<BigFloat> forward_orbit(const FlowSystem& sys, std::span<const BigFloat> x, std::size_t n);
OrbitTrace<BigFloat> backward_orbit(const FlowSystem& sys, std::span<const BigFloat> x, std::size_t n);

/// e_k = ||a_k - b_k||.  Mixed traces are compared in extended precision.
/// Throws std::invalid_argument unless direction, origin and length agree.
std::vector<double> orbit_deviation(const OrbitTrace<double>& a, const OrbitTrace<double>& b);
std::vector<double> orbit_deviation(const OrbitTrace<BigFloat>& a, const OrbitTrace<BigFloat>& b);
std::vector<double> orbit_deviation(const OrbitTrace<BigFloat>& a, const OrbitTrace<double>& b);
std::vector<double> orbit_deviation(const OrbitTrace<double>& a, const OrbitTrace<BigFloat>& b);

/// delta * sum_{n=0}^{N-1} prod_{j=n+2}^{N} Lip(F_j): the worst-case
/// accumulation of per-layer error delta through N layers.
double layerwise_bound(double delta, std::span<const double> lipschitz);

/// Error of one numerical layer application started from each (rounded)
/// exact state: ||F_k(x_{k-1}) - F^_k(round(x_{k-1}))|| for k = 1..n, with
/// backward traces using the inverse layers.
std::vector<double> single_step_errors(const FlowSystem& sys, const OrbitTrace<BigFloat>& exact_trace);

}  // namespace shadowflow
