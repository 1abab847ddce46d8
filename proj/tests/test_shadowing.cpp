#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "shadowflow/experiments.hpp"
#include "shadowflow/shadowing.hpp"

using namespace shadowflow;

namespace {

BlockSequence constant_blocks(double c, std::size_t n) {
  BlockSequence seq;
  seq.blocks.assign(n, Eigen::MatrixXd::Constant(1, 1, c));
  return seq;
}

BlockSequence random_blocks(RngStream& rng, std::size_t m, std::size_t n) {
  BlockSequence seq;
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::MatrixXd b(m, m);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 2.0 * rng.normal();
    seq.blocks.push_back(b);
  }
  return seq;
}

ExperimentSetup setup_for(const std::string& target) {
  ExperimentConfig cfg;
  cfg.experiment = "shadow-window";
  cfg.target = target;
  return make_setup(cfg);
}

}  // namespace

TEST_SUITE("lambda min") {
  TEST_CASE("identity blocks give the path-graph spectrum") {
    CHECK(lambda_min_blocktridiag(constant_blocks(1.0, 1)) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(lambda_min_blocktridiag(constant_blocks(1.0, 2)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(lambda_min_blocktridiag(constant_blocks(1.0, 99)) == doctest::Approx(9.8688e-4).epsilon(1e-4));
    CHECK(dense_aat(constant_blocks(1.0, 2)) == (Eigen::Matrix2d() << 2, -1, -1, 2).finished());
  }

  TEST_CASE("scaling blocks C = 2, N = 3") {
    CHECK(lambda_min_blocktridiag(constant_blocks(2.0, 3)) == doctest::Approx(5.0 - 2.0 * std::sqrt(2.0)).epsilon(1e-10));
    CHECK(lambda_min_blocktridiag(constant_blocks(2.0, 3)) == doctest::Approx(2.1715729).epsilon(1e-7));
  }

  TEST_CASE("matrix-free product agrees with the dense operator") {
    auto rng = make_rng(71, 0);
    const auto seq = random_blocks(rng, 3, 6);
    Eigen::VectorXd x(18);
    for (auto& v : x) v = rng.normal();
    CHECK((apply_aat(seq, x) - dense_aat(seq) * x).norm() <= 1e-12 * x.norm() * dense_aat(seq).norm());
  }

  TEST_CASE("malformed sequences are rejected") {
    CHECK_THROWS_AS(lambda_min_blocktridiag(BlockSequence{}), std::invalid_argument);
    BlockSequence mixed;
    mixed.blocks = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(3, 3)};
    CHECK_THROWS_AS(lambda_min_blocktridiag(mixed), std::invalid_argument);
    CHECK_THROWS_AS(constant_blocks(1.0, 3).slice(2, 2), std::out_of_range);
  }

  TEST_CASE("banded solver matches the dense oracle on random sequences") {
    auto rng = make_rng(72, 0);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t m = 1 + rng.uniform_index(3), n = 1 + rng.uniform_index(20);
      const auto seq = random_blocks(rng, m, n);
      const double banded = lambda_min_blocktridiag(seq), dense = lambda_min_dense_oracle(seq);
      CAPTURE(trial);
      CHECK(testing::rel_diff(banded, dense) <= 1e-8);
    }
  }
}

TEST_SUITE("windows") {
  TEST_CASE("window from lambda_min") {
    CHECK(shadowing_window(4.0, 1e-14) == doctest::Approx(1e-14));
    CHECK(shadowing_window(5.0 - 2.0 * std::sqrt(2.0), 1e-14) == doctest::Approx(1.35720e-14).epsilon(1e-5));
    CHECK(shadowing_window(9.8688e-4, 1e-14) == doctest::Approx(6.366e-13).epsilon(1e-3));
    CHECK_THROWS_AS(shadowing_window(0.0, 1e-14), std::invalid_argument);
  }

  TEST_CASE("scaling-map closed form") {
    CHECK(scaling_map_epsilon(1.0, 1, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
    CHECK(scaling_map_epsilon(1e10, 5, 1.0) < 1e-9);
    CHECK(scaling_map_epsilon(2.0, 3, 1e-14) == doctest::Approx(1.35720e-14).epsilon(1e-5));
    CHECK_THROWS_AS(scaling_map_epsilon(0.0, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(scaling_map_epsilon(1.0, 0, 1.0), std::invalid_argument);
  }

  TEST_CASE("scaling-map diagnostic reproduces the closed form") {
    for (const double c : {0.5, 1.0, 2.0})
      for (const std::size_t n : {1u, 2u, 3u, 10u, 100u}) {
        const double diag = shadowing_window(lambda_min_blocktridiag(constant_blocks(c, n)), 1e-14);
        CHECK(testing::rel_diff(diag, scaling_map_epsilon(c, n, 1e-14)) <= 1e-10);
      }
  }

  TEST_CASE("hyperbolic closed form") {
    CHECK(hyperbolic_epsilon(0.5, 1e-14) == doctest::Approx(3e-14));
    CHECK(hyperbolic_epsilon(0.9, 1.0) == doctest::Approx(19.0));
    CHECK_THROWS_AS(hyperbolic_epsilon(1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(hyperbolic_epsilon(0.0, 1.0), std::invalid_argument);
  }

  TEST_CASE("existence check") {
    const auto ok = check_existence(1.0, 2.0, 1e-14);
    CHECK(ok.ok);
    CHECK(ok.value == doctest::Approx(8e-14));
    CHECK_FALSE(check_existence(1e14, 10.0, 1.0).ok);
    CHECK_THROWS_AS(check_existence(-1.0, 1.0, 1.0), std::invalid_argument);
  }

  TEST_CASE("report fields") {
    const auto r = shadowing_report(constant_blocks(2.0, 3), 1e-14, 0.5);
    CHECK(r.N == 3);
    CHECK(r.m == 1);
    CHECK(r.lambda == doctest::Approx(1.0 / std::sqrt(r.lambda_min)));
    CHECK(r.existence.ok);
    CHECK(ShadowingReport::csv_header().rfind("N,m,", 0) == 0);
  }
}

TEST_SUITE("blocks") {
  TEST_CASE("identity and scaling systems") {
    const auto id = FlowSystem::repeated(AffineLayer::identity(2), 4);
    const auto seq = assemble_blocks(id, forward_orbit(id, Point<double>{1.0, 2.0}, 4));
    CHECK(seq.length() == 4);
    for (const auto& b : seq.blocks) CHECK(b == Eigen::MatrixXd::Identity(2, 2));

    const auto sc = FlowSystem::repeated(AffineLayer::scaling(1, 2.0), 3);
    const auto bw = assemble_blocks(sc, backward_orbit(sc, Point<double>{8.0}, 3));
    CHECK(bw.kind == DiagnosticKind::Backward);
    for (const auto& b : bw.blocks) CHECK(b(0, 0) == 0.5);
  }

  TEST_CASE("banana MixFlow gives N blocks of size 4") {
    const auto setup = setup_for("banana");
    const auto sys = FlowSystem::repeated(setup.map, 10);
    auto rng = make_rng(73, 0);
    const auto z = setup.reference.sample(rng);
    const auto seq = assemble_blocks(sys, forward_orbit(sys, z, 10));
    CHECK(seq.length() == 10);
    CHECK(seq.block_size() == 4);
    const auto joint = assemble_joint_blocks(sys, backward_orbit(sys, z, 10), forward_orbit(sys, z, 10));
    CHECK(joint.length() == 20);
    CHECK(joint.kind == DiagnosticKind::Joint);
    CHECK_THROWS_AS(assemble_joint_blocks(sys, forward_orbit(sys, z, 10), forward_orbit(sys, z, 10)),
                    std::invalid_argument);
  }

  TEST_CASE("diagnostic kind names") {
    for (const char* name : {"forward", "backward", "joint"}) CHECK(std::string(to_string(parse_diagnostic_kind(name))) == name);
    CHECK_THROWS_AS(parse_diagnostic_kind("sideways"), std::invalid_argument);
  }
}

TEST_SUITE("perturbation estimates") {
  TEST_CASE("delta of a map against itself at full precision") {
    const auto layer = AffineLayer::scaling(2, 2.0);
    const std::vector<Point<double>> inputs{{1.0, 0.5}, {-3.0, 0.25}};
    const auto s = estimate_delta(*layer, inputs, Direction::Forward, PrecisionSpec::extended(256));
    CHECK(s.max == 0.0);
    CHECK_THROWS_AS(estimate_delta(*layer, inputs, Direction::Forward, PrecisionSpec::standard()), std::invalid_argument);
  }

  TEST_CASE("second derivative of affine maps vanishes") {
    Eigen::MatrixXd a(2, 2);
    a << 1.0, 2.0, 0.0, 1.0;
    const auto sys = FlowSystem::repeated(AffineLayer::linear(a), 3);
    CHECK(estimate_M(sys, forward_orbit(sys, Point<double>{1.0, 1.0}, 3), 0.1) <= 1e-6);
  }

  TEST_CASE("second derivative of quadratic maps") {
    const auto half = FlowSystem::repeated(std::make_shared<testing::QuadraticLayer>(0.5), 1);
    CHECK(estimate_M(half, forward_orbit(half, Point<double>{1.0}, 1), 0.0) == doctest::Approx(1.0).epsilon(1e-3));
    const auto full = FlowSystem::repeated(std::make_shared<testing::QuadraticLayer>(1.0), 1);
    CHECK(estimate_M(full, forward_orbit(full, Point<double>{3.0}, 1), 0.1) == doctest::Approx(2.0).epsilon(1e-3));
    CHECK_THROWS_AS(estimate_M(full, forward_orbit(full, Point<double>{3.0}, 1), -1.0), std::invalid_argument);
  }
}

TEST_SUITE("properties") {
  TEST_CASE("A A^T is positive definite") {
    auto rng = make_rng(74, 0);
    for (int trial = 0; trial < 30; ++trial) {
      const auto seq = random_blocks(rng, 1 + rng.uniform_index(3), 1 + rng.uniform_index(15));
      CHECK(lambda_min_dense_oracle(seq) > 0.0);
      CHECK(lambda_min_blocktridiag(seq) > 0.0);
    }
  }

  TEST_CASE("hyperbolic linear maps have bounded windows") {
    for (const double c : {0.2, 0.5, 0.8}) {
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
      a(0, 0) = c;
      a(1, 1) = 1.0 / c;
      BlockSequence seq;
      double prev = 0.0;
      for (std::size_t n = 1; n <= 200; n *= 2) {
        seq.blocks.assign(n, a);
        const double eps = shadowing_window(lambda_min_blocktridiag(seq), 1e-14);
        // The contracting coordinate dominates: lambda_min >= (1 - c)^2.
        CHECK(eps <= 2e-14 / (1 - c) * (1 + 1e-8));
        CHECK(eps >= prev * (1 - 1e-10));
        prev = eps;
      }
    }
  }

  TEST_CASE("windows along a MixFlow orbit are nondecreasing in N") {
    for (const char* name : {"banana", "cross"}) {
      CAPTURE(name);
      const auto setup = setup_for(name);
      const auto sys = FlowSystem::repeated(setup.map, 100);
      auto rng = make_rng(75, 0);
      const auto z = setup.reference.sample(rng);
      const auto seq = assemble_blocks(sys, forward_orbit(sys, z, 100));
      double prev = 0.0;
      for (const std::size_t n : {1u, 5u, 10u, 25u, 50u, 100u}) {
        const double eps = shadowing_window(lambda_min_blocktridiag(seq.slice(0, n)), 1e-14);
        CHECK(eps >= prev * (1 - 1e-8));
        prev = eps;
      }
    }
  }

  TEST_CASE("report rows have one field per header column") {
    const auto count = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
    const auto header = ShadowingReport::csv_header();
    CHECK(count(shadowing_report(constant_blocks(2.0, 3), 1e-14).csv_row()) == count(header));
    CHECK(count(shadowing_report(constant_blocks(2.0, 3), 1e-14, 1.0).csv_row()) == count(header));
  }
}
