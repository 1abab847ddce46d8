#pragma once

// Shadowing diagnostic: Jacobian blocks D_k along a pseudo-orbit, the
// smallest eigenvalue of the block-tridiagonal operator A A^T, and the
// resulting shadowing window eps = 2 delta lambda_min^{-1/2}.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shadowflow/flow_system.hpp"
#include "shadowflow/orbit.hpp"
#include "shadowflow/stats.hpp"

namespace shadowflow {

enum class DiagnosticKind { Forward, Backward, Joint };

const char* to_string(DiagnosticKind kind);
DiagnosticKind parse_diagnostic_kind(const std::string& name);

/// D_1, ..., D_N with D_{k+1} the Jacobian of the k-th map at x_k.
struct BlockSequence {
  std::vector<Eigen::MatrixXd> blocks;
  Point<double> origin;
  DiagnosticKind kind = DiagnosticKind::Forward;

  std::size_t length() const { return blocks.size(); }
  std::size_t block_size() const { return blocks.empty() ? 0 : static_cast<std::size_t>(blocks.front().rows()); }
  /// Blocks [first, first + count).
  BlockSequence slice(std::size_t first, std::size_t count) const;
};

/// Forward traces use grad F_{k+1}(x_k); backward traces use the Jacobian of
/// B_{k+1} at x_{-k}.
BlockSequence assemble_blocks(const FlowSystem& sys, const OrbitTrace<double>& trace);

/// The 2N forward-map blocks along the joint orbit x_{-N}, ..., x_{N-1}:
/// the backward part first (in forward time order), then the forward part.
BlockSequence assemble_joint_blocks(const FlowSystem& sys, const OrbitTrace<double>& backward,
                                    const OrbitTrace<double>& forward);

/// A^T applied to a stacked vector; the result has N + 1 blocks.
Eigen::VectorXd apply_at(const BlockSequence& seq, const Eigen::VectorXd& x);

/// A A^T applied to a stacked vector.
Eigen::VectorXd apply_aat(const BlockSequence& seq, const Eigen::VectorXd& x);

/// A A^T as a dense matrix (small sizes only).
Eigen::MatrixXd dense_aat(const BlockSequence& seq);

struct EigenSolverConfig {
  double tolerance = 1e-10;
  std::size_t max_iterations = 500;
  std::uint64_t seed = 0x1a3b;
};

struct LambdaMinResult {
  double value = 0.0;
  std::size_t iterations = 0;
  double final_shift = 0.0;
};

/// Smallest eigenvalue of A A^T by shifted inverse iteration on a block LDL^T
/// factorization; cost O(N m^3) per factorization.  Throws std::runtime_error
/// if the factorization breaks down at the initial shift or iteration does
/// not converge.
LambdaMinResult lambda_min_blocktridiag_detailed(const BlockSequence& seq, const EigenSolverConfig& cfg = {});
double lambda_min_blocktridiag(const BlockSequence& seq, const EigenSolverConfig& cfg = {});

/// Full symmetric eigendecomposition of the dense A A^T in long double;
/// requires mN <= 2000.
double lambda_min_dense_oracle(const BlockSequence& seq);

/// 2 delta / sqrt(lambda_min).
double shadowing_window(double lambda_min, double delta);

struct ExistenceCheck {
  bool ok = false;
  double value = 0.0;  // 2 M lambda^2 delta
};

ExistenceCheck check_existence(double M, double lambda, double delta);

/// 2 delta [(C-1)^2 + 2C(1 - cos(pi/(N+1)))]^{-1/2}, the window for x -> Cx.
double scaling_map_epsilon(double C, std::size_t N, double delta);

/// (1 + c)/(1 - c) delta for a hyperbolic linear map with contraction c.
double hyperbolic_epsilon(double contraction, double delta);

/// Single-application errors ||F^(x) - F(x)|| (or the inverse maps) at the
/// given inputs, with F evaluated at the extended precision.
Summary estimate_delta(const Layer& layer, const std::vector<Point<double>>& inputs, Direction direction,
                       const PrecisionSpec& exact);
std::vector<double> single_application_errors(const Layer& layer, const std::vector<Point<double>>& inputs,
                                              Direction direction, const PrecisionSpec& exact);

inline constexpr double kDefaultDelta = 1e-14;

struct CurvatureConfig {
  std::size_t probes = 8;
  std::size_t power_iterations = 10;
  double relative_step = 1e-5;
  std::uint64_t seed = 0xc0ffee;
};

/// Sampled estimate of max_k sup_{||v|| <= radius} ||grad^2 F(x_k + v)||, the
/// second derivative taken as a bilinear map; forward traces use F_{k+1},
/// backward traces the inverse maps.
double estimate_M(const FlowSystem& sys, const OrbitTrace<double>& trace, double radius, const CurvatureConfig& cfg = {});

/// ||grad^2 F(x)|| for one layer by alternating top singular pairs of
/// differences of Jacobians.
double second_derivative_norm(const Layer& layer, std::span<const double> x, bool inverse,
                              const CurvatureConfig& cfg, std::uint64_t stream);

struct ShadowingReport {
  std::size_t N = 0;
  std::size_t m = 0;
  double delta = 0.0;
  double lambda_min = 0.0;
  double lambda = 0.0;
  double epsilon = 0.0;
  std::optional<double> M_estimate;
  ExistenceCheck existence;

  static std::string csv_header();
  std::string csv_row() const;
};

/// lambda_min, lambda and eps for one block sequence; M and the existence
/// check are filled when M is supplied.
ShadowingReport shadowing_report(const BlockSequence& seq, double delta, std::optional<double> M = std::nullopt,
                                 const EigenSolverConfig& cfg = {});

}  // namespace shadowflow
