#include "shadowflow/orbit.hpp"

#include <stdexcept>
#include <string>

namespace shadowflow {

const char* to_string(Direction d) { return d == Direction::Forward ? "forward" : "backward"; }

namespace {

template <Scalar T>
OrbitTrace<T> run_orbit(const FlowSystem& sys, Point<T> origin, std::size_t n, Direction direction,
                        const PrecisionSpec& precision) {
  if (origin.size() != sys.dimension()) throw std::invalid_argument("orbit: origin has wrong dimension");
  if (n > sys.length())
    throw std::invalid_argument("orbit: requested " + std::to_string(n) + " steps but the system has " +
                                std::to_string(sys.length()) + " layers");
  if (!all_finite<T>(origin)) throw NonFiniteError("orbit: non-finite origin", 0);

  OrbitTrace<T> trace;
  trace.direction = direction;
  trace.precision = precision;
  trace.states.reserve(n + 1);
  trace.log_dets.reserve(n);
  trace.states.push_back(std::move(origin));
  for (std::size_t k = 1; k <= n; ++k) {
    T log_det = 0.0;
    const auto& prev = trace.states.back();
    Point<T> next = direction == Direction::Forward
                        ? sys.forward_layer(k).forward(std::span<const T>(prev), &log_det)
                        : sys.backward_layer(k).inverse(std::span<const T>(prev), &log_det);
    if (!all_finite<T>(next)) throw NonFiniteError(std::string("orbit: non-finite ") + to_string(direction) + " state", k);
    trace.states.push_back(std::move(next));
    trace.log_dets.push_back(std::move(log_det));
  }
  return trace;
}

template <Scalar A, Scalar B>
void check_compatible(const OrbitTrace<A>& a, const OrbitTrace<B>& b) {
  if (a.direction != b.direction) throw std::invalid_argument("orbit_deviation: directions differ");
  if (a.states.size() != b.states.size()) throw std::invalid_argument("orbit_deviation: lengths differ");
  if (a.states.empty()) throw std::invalid_argument("orbit_deviation: empty trace");
  if (a.origin().size() != b.origin().size()) throw std::invalid_argument("orbit_deviation: dimensions differ");
}

void check_same_origin(bool same) {
  if (!same) throw std::invalid_argument("orbit_deviation: origins differ");
}

unsigned extended_bits(const PrecisionSpec& p) {
  return p.is_extended() ? p.mantissa_bits : working_precision();
}

}  // namespace

OrbitTrace<double> forward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n) {
  return run_orbit<double>(sys, Point<double>(x.begin(), x.end()), n, Direction::Forward, PrecisionSpec::standard());
}

OrbitTrace<double> backward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n) {
  return run_orbit<double>(sys, Point<double>(x.begin(), x.end()), n, Direction::Backward, PrecisionSpec::standard());
}

OrbitTrace<BigFloat> forward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n,
                                   const PrecisionSpec& precision) {
  PrecisionScope scope(precision.mantissa_bits);
  return run_orbit<BigFloat>(sys, promote(x, precision), n, Direction::Forward, precision);
}

OrbitTrace<BigFloat> backward_orbit(const FlowSystem& sys, std::span<const double> x, std::size_t n,
                                    const PrecisionSpec& precision) {
  PrecisionScope scope(precision.mantissa_bits);
  return run_orbit<BigFloat>(sys, promote(x, precision), n, Direction::Backward, precision);
}

OrbitTrace<BigFloat> forward_orbit(const FlowSystem& sys, std::span<const BigFloat> x, std::size_t n) {
  if (x.empty()) throw std::invalid_argument("orbit: empty origin");
  const auto spec = PrecisionSpec::extended(x.front().precision());
  PrecisionScope scope(spec.mantissa_bits);
  return run_orbit<BigFloat>(sys, Point<BigFloat>(x.begin(), x.end()), n, Direction::Forward, spec);
}

OrbitTrace<BigFloat> backward_orbit(const FlowSystem& sys, std::span<const BigFloat> x, std::size_t n) {
  if (x.empty()) throw std::invalid_argument("orbit: empty origin");
  const auto spec = PrecisionSpec::extended(x.front().precision());
  PrecisionScope scope(spec.mantissa_bits);
  return run_orbit<BigFloat>(sys, Point<BigFloat>(x.begin(), x.end()), n, Direction::Backward, spec);
}

std::vector<double> orbit_deviation(const OrbitTrace<double>& a, const OrbitTrace<double>& b) {
  check_compatible(a, b);
  check_same_origin(a.origin() == b.origin());
  std::vector<double> e;
  e.reserve(a.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k)
    e.push_back(distance<double>(a.states[k], b.states[k]));
  return e;
}

std::vector<double> orbit_deviation(const OrbitTrace<BigFloat>& a, const OrbitTrace<BigFloat>& b) {
  check_compatible(a, b);
  check_same_origin(a.origin() == b.origin());
  PrecisionScope scope(extended_bits(a.precision));
  std::vector<double> e;
  e.reserve(a.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k)
    e.push_back(distance<BigFloat>(a.states[k], b.states[k]).to_double());
  return e;
}

std::vector<double> orbit_deviation(const OrbitTrace<BigFloat>& a, const OrbitTrace<double>& b) {
  check_compatible(a, b);
  PrecisionScope scope(extended_bits(a.precision));
  check_same_origin(a.origin() == promote(b.origin()));
  std::vector<double> e;
  e.reserve(a.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k)
    e.push_back(distance<BigFloat>(a.states[k], promote(b.states[k])).to_double());
  return e;
}

std::vector<double> orbit_deviation(const OrbitTrace<double>& a, const OrbitTrace<BigFloat>& b) {
  return orbit_deviation(b, a);
}

double layerwise_bound(double delta, std::span<const double> lipschitz) {
  if (!(delta > 0.0)) throw std::invalid_argument("layerwise_bound: delta must be positive");
  for (double l : lipschitz)
    if (!(l > 0.0)) throw std::invalid_argument("layerwise_bound: Lipschitz constants must be positive");
  // Horner form: sum_{n} prod_{j>n+1} L_j accumulated from the last layer down.
  const std::size_t n = lipschitz.size();
  double sum = 0.0;
  double tail_product = 1.0;  // prod_{j=n+2}^{N} for the current n
  for (std::size_t i = n; i-- > 0;) {
    sum += tail_product;
    tail_product *= lipschitz[i];
  }
  return delta * sum;
}

std::vector<double> single_step_errors(const FlowSystem& sys, const OrbitTrace<BigFloat>& exact_trace) {
  if (!exact_trace.precision.is_extended())
    throw std::invalid_argument("single_step_errors: the reference trace must be extended precision");
  PrecisionScope scope(exact_trace.precision.mantissa_bits);
  const std::size_t n = exact_trace.steps();
  std::vector<double> errors;
  errors.reserve(n);
  for (std::size_t k = 1; k <= n; ++k) {
    const Point<double> start = demote(exact_trace.states[k - 1]);
    const Point<double> step = exact_trace.direction == Direction::Forward
                                   ? sys.forward_layer(k).forward(std::span<const double>(start))
                                   : sys.backward_layer(k).inverse(std::span<const double>(start));
    errors.push_back(distance<BigFloat>(exact_trace.states[k], promote(step)).to_double());
  }
  return errors;
}

}  // namespace shadowflow
