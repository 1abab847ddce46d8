#include "shadowflow/shadowing.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "shadowflow/rng.hpp"

namespace shadowflow {

const char* to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::Forward: return "forward";
    case DiagnosticKind::Backward: return "backward";
    case DiagnosticKind::Joint: return "joint";
  }
  return "unknown";
}

DiagnosticKind parse_diagnostic_kind(const std::string& name) {
  if (name == "forward") return DiagnosticKind::Forward;
  if (name == "backward") return DiagnosticKind::Backward;
  if (name == "joint") return DiagnosticKind::Joint;
  throw std::invalid_argument("unknown diagnostic kind '" + name + "' (expected forward, backward, joint)");
}

BlockSequence BlockSequence::slice(std::size_t first, std::size_t count) const {
  if (first + count > blocks.size()) throw std::out_of_range("BlockSequence::slice out of range");
  BlockSequence out;
  out.origin = origin;
  out.kind = kind;
  out.blocks.assign(blocks.begin() + static_cast<std::ptrdiff_t>(first),
                    blocks.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

namespace {

void check_block(const Eigen::MatrixXd& block, std::size_t k) {
  if (!block.allFinite()) throw NonFiniteError("shadowing: non-finite Jacobian block", k);
}

void validate(const BlockSequence& seq) {
  if (seq.blocks.empty()) throw std::invalid_argument("shadowing: block sequence is empty");
  const auto m = seq.blocks.front().rows();
  for (std::size_t k = 0; k < seq.blocks.size(); ++k) {
    const auto& b = seq.blocks[k];
    if (b.rows() != m || b.cols() != m) throw std::invalid_argument("shadowing: blocks must be square and equal-sized");
    check_block(b, k + 1);
  }
}

/// Block LDL^T of A A^T - sigma I: the Schur complements S_k, each held as a
/// Cholesky factor.  Succeeds only when the shifted matrix is positive
/// definite, i.e. sigma lies below lambda_min.
class ShiftedFactorization {
 public:
  ShiftedFactorization(const BlockSequence& seq, double sigma) : seq_(seq) {
    const std::size_t n = seq.length();
    const auto m = static_cast<Eigen::Index>(seq.block_size());
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(m, m);
    pivots_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& dk = seq.blocks[k];
      Eigen::MatrixXd s = dk * dk.transpose() + (1.0 - sigma) * eye;
      if (k > 0) {
        // S_k -= D_k S_{k-1}^{-1} D_k^T
        const Eigen::MatrixXd w = pivots_.back().matrixL().solve(dk.transpose());
        s.noalias() -= w.transpose() * w;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(s);
      if (llt.info() != Eigen::Success || !llt.matrixLLT().diagonal().allFinite() ||
          (llt.matrixLLT().diagonal().array() <= 0.0).any()) {
        ok_ = false;
        return;
      }
      pivots_.push_back(std::move(llt));
    }
    ok_ = true;
  }

  bool ok() const { return ok_; }

  /// Solves (A A^T - sigma I) x = b.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    const std::size_t n = seq_.length();
    const auto m = static_cast<Eigen::Index>(seq_.block_size());
    Eigen::VectorXd y = b;
    // Off-diagonal block (k, k-1) is -D_k (0-based k >= 1).
    for (std::size_t k = 1; k < n; ++k) {
      const Eigen::VectorXd prev = pivots_[k - 1].solve(y.segment(static_cast<Eigen::Index>(k - 1) * m, m));
      y.segment(static_cast<Eigen::Index>(k) * m, m) += seq_.blocks[k] * prev;
    }
    Eigen::VectorXd x(y.size());
    for (std::size_t kk = n; kk-- > 0;) {
      const auto off = static_cast<Eigen::Index>(kk) * m;
      Eigen::VectorXd rhs = y.segment(off, m);
      if (kk + 1 < n) rhs += seq_.blocks[kk + 1].transpose() * x.segment(off + m, m);
      x.segment(off, m) = pivots_[kk].solve(rhs);
    }
    return x;
  }

 private:
  const BlockSequence& seq_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> pivots_;
  bool ok_ = false;
};

}  // namespace

BlockSequence assemble_blocks(const FlowSystem& sys, const OrbitTrace<double>& trace) {
  const std::size_t n = trace.steps();
  if (n == 0) throw std::invalid_argument("assemble_blocks: trace has no steps");
  if (n > sys.length()) throw std::invalid_argument("assemble_blocks: trace is longer than the system");
  BlockSequence seq;
  seq.origin = trace.origin();
  seq.kind = trace.direction == Direction::Forward ? DiagnosticKind::Forward : DiagnosticKind::Backward;
  seq.blocks.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::span<const double> x(trace.states[k]);
    Eigen::MatrixXd block = trace.direction == Direction::Forward ? sys.forward_layer(k + 1).jacobian(x)
                                                                  : sys.backward_layer(k + 1).inverse_jacobian(x);
    check_block(block, k + 1);
    seq.blocks.push_back(std::move(block));
  }
  return seq;
}

BlockSequence assemble_joint_blocks(const FlowSystem& sys, const OrbitTrace<double>& backward,
                                    const OrbitTrace<double>& forward) {
  if (backward.direction != Direction::Backward || forward.direction != Direction::Forward)
    throw std::invalid_argument("assemble_joint_blocks: expected a backward and a forward trace");
  const std::size_t n = forward.steps();
  if (backward.steps() != n || n == 0) throw std::invalid_argument("assemble_joint_blocks: traces must share length N >= 1");
  if (backward.origin() != forward.origin()) throw std::invalid_argument("assemble_joint_blocks: traces must share an origin");
  if (n > sys.length()) throw std::invalid_argument("assemble_joint_blocks: traces are longer than the system");
  BlockSequence seq;
  seq.origin = forward.origin();
  seq.kind = DiagnosticKind::Joint;
  seq.blocks.reserve(2 * n);
  // x_{-N}, ..., x_{-1} are inputs of F_1, ..., F_N of the backward pass.
  for (std::size_t j = n; j >= 1; --j) {
    Eigen::MatrixXd block = sys.forward_layer(n - j + 1).jacobian(backward.states[j]);
    check_block(block, seq.blocks.size() + 1);
    seq.blocks.push_back(std::move(block));
  }
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::MatrixXd block = sys.forward_layer(k + 1).jacobian(forward.states[k]);
    check_block(block, seq.blocks.size() + 1);
    seq.blocks.push_back(std::move(block));
  }
  return seq;
}

Eigen::VectorXd apply_at(const BlockSequence& seq, const Eigen::VectorXd& x) {
  const std::size_t n = seq.length();
  const auto m = static_cast<Eigen::Index>(seq.block_size());
  if (x.size() != static_cast<Eigen::Index>(n) * m) throw std::invalid_argument("apply_at: vector has wrong size");
  // Row k of A holds -D_k in column k-1 and I in column k (columns 0..N).
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n + 1) * m);
  for (std::size_t k = 1; k <= n; ++k) {
    const auto xk = x.segment(static_cast<Eigen::Index>(k - 1) * m, m);
    y.segment(static_cast<Eigen::Index>(k - 1) * m, m) -= seq.blocks[k - 1].transpose() * xk;
    y.segment(static_cast<Eigen::Index>(k) * m, m) += xk;
  }
  return y;
}

Eigen::VectorXd apply_aat(const BlockSequence& seq, const Eigen::VectorXd& x) {
  const std::size_t n = seq.length();
  const auto m = static_cast<Eigen::Index>(seq.block_size());
  if (x.size() != static_cast<Eigen::Index>(n) * m) throw std::invalid_argument("apply_aat: vector has wrong size");
  Eigen::VectorXd y(x.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto off = static_cast<Eigen::Index>(k) * m;
    const auto& dk = seq.blocks[k];
    Eigen::VectorXd yk = dk * (dk.transpose() * x.segment(off, m)) + x.segment(off, m);
    if (k > 0) yk -= dk * x.segment(off - m, m);
    if (k + 1 < n) yk -= seq.blocks[k + 1].transpose() * x.segment(off + m, m);
    y.segment(off, m) = yk;
  }
  return y;
}

Eigen::MatrixXd dense_aat(const BlockSequence& seq) {
  validate(seq);
  const std::size_t n = seq.length();
  const auto m = static_cast<Eigen::Index>(seq.block_size());
  const Eigen::Index size = static_cast<Eigen::Index>(n) * m;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(size, size);
  for (std::size_t k = 0; k < n; ++k) {
    const auto off = static_cast<Eigen::Index>(k) * m;
    const auto& dk = seq.blocks[k];
    a.block(off, off, m, m) = dk * dk.transpose() + Eigen::MatrixXd::Identity(m, m);
    if (k + 1 < n) {
      a.block(off, off + m, m, m) = -seq.blocks[k + 1].transpose();
      a.block(off + m, off, m, m) = -seq.blocks[k + 1];
    }
  }
  return a;
}

LambdaMinResult lambda_min_blocktridiag_detailed(const BlockSequence& seq, const EigenSolverConfig& cfg) {
  validate(seq);
  const auto size = static_cast<Eigen::Index>(seq.length() * seq.block_size());

  double sigma = 0.0;
  auto factor = std::make_unique<ShiftedFactorization>(seq, sigma);
  if (!factor->ok()) throw std::runtime_error("lambda_min: factorization breakdown at shift 0");

  RngStream rng(cfg.seed, 0);
  Eigen::VectorXd x(size);
  for (Eigen::Index i = 0; i < size; ++i) x[i] = rng.normal();
  x.normalize();

  // lambda_min always lies in [sigma, upper]: sigma has a positive definite
  // shifted factorization, upper is a Rayleigh quotient or a failed shift.
  double upper = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::quiet_NaN();
  auto try_shift = [&](double candidate) {
    if (!(candidate > sigma && candidate < upper)) return false;
    auto trial = std::make_unique<ShiftedFactorization>(seq, candidate);
    if (!trial->ok()) {
      upper = candidate;
      return false;
    }
    sigma = candidate;
    factor = std::move(trial);
    return true;
  };
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    x = factor->solve(x);
    const double norm = x.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw std::runtime_error("lambda_min: inverse iteration produced a degenerate vector");
    x /= norm;
    const Eigen::VectorXd mx = apply_aat(seq, x);
    // ||A^T x||^2 keeps its relative accuracy when lambda_min << ||A A^T||;
    // x' (A A^T x) does not.
    const double theta = apply_at(seq, x).squaredNorm();
    upper = std::min(upper, theta);
    if (upper - sigma <= cfg.tolerance * upper) return {0.5 * (sigma + upper), it, sigma};
    // Some eigenvalue lies within r of theta, and with every shift below
    // lambda_min the iteration converges to lambda_min itself.
    const double residual = (mx - theta * x).norm();
    if (std::isfinite(previous) && std::abs(theta - previous) <= cfg.tolerance * theta &&
        residual <= std::sqrt(cfg.tolerance) * theta)
      return {theta, it, sigma};
    previous = theta;

    // theta - r is the natural next shift; when it overshoots lambda_min,
    // bisect the bracket instead.
    if (!try_shift(theta - residual - 1e-12 * std::abs(theta))) try_shift(0.5 * (sigma + upper));
  }
  throw std::runtime_error("lambda_min: inverse iteration did not converge in " + std::to_string(cfg.max_iterations) +
                           " iterations (shift " + std::to_string(sigma) + ")");
}

double lambda_min_blocktridiag(const BlockSequence& seq, const EigenSolverConfig& cfg) {
  return lambda_min_blocktridiag_detailed(seq, cfg).value;
}

double lambda_min_dense_oracle(const BlockSequence& seq) {
  validate(seq);
  const std::size_t size = seq.length() * seq.block_size();
  if (size > 2000) throw std::invalid_argument("lambda_min_dense_oracle: mN = " + std::to_string(size) + " exceeds 2000");
  // Extended precision keeps the oracle accurate when lambda_min is tiny
  // relative to ||A A^T||.
  using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::SelfAdjointEigenSolver<MatrixL> solver(dense_aat(seq).cast<long double>(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("lambda_min_dense_oracle: eigensolver failed");
  return static_cast<double>(solver.eigenvalues().minCoeff());
}

double shadowing_window(double lambda_min, double delta) {
  if (!(lambda_min > 0.0) || !(delta > 0.0))
    throw std::invalid_argument("shadowing_window: lambda_min and delta must be positive");
  return 2.0 * delta / std::sqrt(lambda_min);
}

ExistenceCheck check_existence(double M, double lambda, double delta) {
  if (!(M >= 0.0) || !(lambda >= 0.0) || !(delta >= 0.0))
    throw std::invalid_argument("check_existence: inputs must be nonnegative");
  const double value = 2.0 * M * lambda * lambda * delta;
  return {value <= 1.0, value};
}

double scaling_map_epsilon(double C, std::size_t N, double delta) {
  if (!(C > 0.0) || N < 1 || !(delta > 0.0)) throw std::invalid_argument("scaling_map_epsilon: need C > 0, N >= 1, delta > 0");
  const double c = std::cos(std::numbers::pi / static_cast<double>(N + 1));
  return 2.0 * delta / std::sqrt((C - 1.0) * (C - 1.0) + 2.0 * C * (1.0 - c));
}

double hyperbolic_epsilon(double contraction, double delta) {
  if (!(contraction > 0.0 && contraction < 1.0))
    throw std::invalid_argument("hyperbolic_epsilon: contraction must lie in (0, 1)");
  return (1.0 + contraction) / (1.0 - contraction) * delta;
}

std::vector<double> single_application_errors(const Layer& layer, const std::vector<Point<double>>& inputs,
                                              Direction direction, const PrecisionSpec& exact) {
  if (!exact.is_extended()) throw std::invalid_argument("single_application_errors: reference must be extended precision");
  PrecisionScope scope(exact.mantissa_bits);
  std::vector<double> errors;
  errors.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::span<const double> x(inputs[i]);
    const auto ext_in = promote(x, exact);
    const bool fwd = direction == Direction::Forward;
    const auto approx = fwd ? layer.forward(x) : layer.inverse(x);
    const auto ref = fwd ? layer.forward(std::span<const BigFloat>(ext_in)) : layer.inverse(std::span<const BigFloat>(ext_in));
    if (!all_finite<double>(approx) || !all_finite<BigFloat>(ref))
      throw NonFiniteError("single_application_errors: non-finite image", i);
    const auto approx_ext = promote(approx, exact);
    errors.push_back(distance<BigFloat>(approx_ext, ref).to_double());
  }
  return errors;
}

Summary estimate_delta(const Layer& layer, const std::vector<Point<double>>& inputs, Direction direction,
                       const PrecisionSpec& exact) {
  const auto errors = single_application_errors(layer, inputs, direction, exact);
  return summarize(errors);
}

double second_derivative_norm(const Layer& layer, std::span<const double> x, bool inverse,
                              const CurvatureConfig& cfg, std::uint64_t stream) {
  const std::size_t m = x.size();
  const double h = cfg.relative_step * (1.0 + std::sqrt(squared_norm<double>(x)));
  auto jac = [&](const Point<double>& p) {
    return inverse ? layer.inverse_jacobian(p) : layer.jacobian(p);
  };
  // grad^2 F[u, .] as an m x m matrix.
  auto directional = [&](const Eigen::VectorXd& u) {
    Point<double> up(x.begin(), x.end()), down(x.begin(), x.end());
    for (std::size_t i = 0; i < m; ++i) {
      up[i] += h * u[static_cast<Eigen::Index>(i)];
      down[i] -= h * u[static_cast<Eigen::Index>(i)];
    }
    Eigen::MatrixXd diff = (jac(up) - jac(down)) / (2.0 * h);
    if (!diff.allFinite()) throw NonFiniteError("estimate_M: non-finite second difference", 0);
    return diff;
  };
  RngStream rng(cfg.seed, stream);
  Eigen::VectorXd u(static_cast<Eigen::Index>(m));
  for (auto& v : u) v = rng.normal();
  u.normalize();
  double best = 0.0;
  for (std::size_t it = 0; it < std::max<std::size_t>(cfg.power_iterations, 1); ++it) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(directional(u), Eigen::ComputeFullV);
    const double s = svd.singularValues()[0];
    best = std::max(best, s);
    if (s == 0.0) break;
    u = svd.matrixV().col(0);
  }
  return best;
}

double estimate_M(const FlowSystem& sys, const OrbitTrace<double>& trace, double radius, const CurvatureConfig& cfg) {
  if (!(radius >= 0.0)) throw std::invalid_argument("estimate_M: radius must be nonnegative");
  const std::size_t n = trace.steps();
  if (n > sys.length()) throw std::invalid_argument("estimate_M: trace is longer than the system");
  const bool inverse = trace.direction == Direction::Backward;
  RngStream rng(cfg.seed, 1);
  double best = 0.0;
  std::uint64_t stream = 2;
  for (std::size_t k = 0; k < n; ++k) {
    const Layer& layer = inverse ? sys.backward_layer(k + 1) : sys.forward_layer(k + 1);
    const auto& xk = trace.states[k];
    for (std::size_t p = 0; p < std::max<std::size_t>(cfg.probes, 1); ++p) {
      Point<double> v(xk.size());
      for (auto& vi : v) vi = rng.normal();
      const double norm = std::sqrt(squared_norm<double>(v));
      Point<double> probe = xk;
      for (std::size_t i = 0; i < v.size(); ++i) probe[i] += radius * v[i] / norm;
      best = std::max(best, second_derivative_norm(layer, probe, inverse, cfg, stream++));
    }
  }
  return best;
}

std::string ShadowingReport::csv_header() {
  return "N,m,delta,lambda_min,lambda,epsilon,M_estimate,existence_value,existence_ok";
}

std::string ShadowingReport::csv_row() const {
  std::ostringstream os;
  os << std::setprecision(10) << N << ',' << m << ',' << delta << ',' << lambda_min << ',' << lambda << ',' << epsilon
     << ',';
  if (M_estimate)
    os << *M_estimate << ',' << existence.value << ',' << (existence.ok ? 1 : 0);
  else
    os << "nan,nan,nan";
  return os.str();
}

ShadowingReport shadowing_report(const BlockSequence& seq, double delta, std::optional<double> M,
                                 const EigenSolverConfig& cfg) {
  ShadowingReport r;
  r.N = seq.length();
  r.m = seq.block_size();
  r.delta = delta;
  r.lambda_min = lambda_min_blocktridiag(seq, cfg);
  r.lambda = 1.0 / std::sqrt(r.lambda_min);
  r.epsilon = shadowing_window(r.lambda_min, delta);
  r.M_estimate = M;
  if (M) r.existence = check_existence(*M, r.lambda, delta);
  return r;
}

}  // namespace shadowflow
