#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

#include "helpers.hpp"
#include "shadowflow/experiments.hpp"
#include "shadowflow/mixflow.hpp"
#include "shadowflow/normal.hpp"

using namespace shadowflow;

namespace {

const RefreshParams kNoRefresh{{}, 0.3, 0.0, 0.0};

std::shared_ptr<const TargetModel> std_normal_1d() { return gaussian_target(DiagGaussian::standard(1)); }

/// Refresh with a constant shift s: offset s, no sinusoid.
RefreshParams constant_shift(double s) { return {{}, 0.3, s, 0.0}; }

Eigen::MatrixXd finite_difference_jacobian(const Layer& layer, const Point<double>& z, double h = 1e-6) {
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd j(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    auto zp = z, zm = z;
    zp[c] += h;
    zm[c] -= h;
    const auto fp = layer.forward(std::span<const double>(zp)), fm = layer.forward(std::span<const double>(zm));
    for (Eigen::Index r = 0; r < n; ++r) j(r, c) = (fp[r] - fm[r]) / (2 * h);
  }
  return j;
}

ExperimentSetup setup_for(const std::string& target) {
  ExperimentConfig cfg;
  cfg.experiment = "delta";
  cfg.target = target;
  return make_setup(cfg);
}

}  // namespace

TEST_SUITE("leapfrog") {
  TEST_CASE("one step on the standard normal") {
    const auto z = leapfrog<double>(*std_normal_1d(), {{1.0}, {0.0}}, 1, 0.1);
    CHECK(z.position[0] == doctest::Approx(0.995).epsilon(1e-14));
    CHECK(z.momentum[0] == doctest::Approx(-0.09975).epsilon(1e-14));
  }

  TEST_CASE("free particle drifts by L eta rho") {
    testing::FlatTarget flat(2);
    const auto z = leapfrog<double>(flat, {{1.0, -1.0}, {0.5, 2.0}}, 7, 0.3);
    CHECK(z.position[0] == doctest::Approx(1.0 + 7 * 0.3 * 0.5));
    CHECK(z.position[1] == doctest::Approx(-1.0 + 7 * 0.3 * 2.0));
    CHECK(z.momentum == Point<double>{0.5, 2.0});
  }

  TEST_CASE("invalid settings are rejected") {
    CHECK_THROWS_AS(leapfrog<double>(*std_normal_1d(), {{1.0}, {0.0}}, 0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(leapfrog<double>(*std_normal_1d(), {{1.0}, {0.0}}, 1, 0.0), std::invalid_argument);
  }

  TEST_CASE("leapfrog agrees across precisions") {
    PrecisionScope scope(256);
    const auto target = banana_target();
    const AugmentedState<double> z{{1.0, -9.0}, {0.3, -0.7}};
    const auto zd = leapfrog<double>(*target, z, 50, 0.02);
    const auto zb = leapfrog<BigFloat>(*target, {promote(z.position), promote(z.momentum)}, 50, 0.02);
    for (std::size_t i = 0; i < 2; ++i) CHECK(zb.position[i].to_double() == doctest::Approx(zd.position[i]).epsilon(1e-10));
  }
}

TEST_SUITE("refresh") {
  TEST_CASE("zero shift leaves the momentum unchanged") {
    // 0.5 - 0.5 sin(2 pi * 0.25) = 0
    const MixFlowMap zero(std_normal_1d(), {1, 0.1}, {{0.0}, 0.25, 0.5, -0.5});
    const auto out = zero.refresh(AugmentedState<double>{{0.7}, {1.3}});
    CHECK(out.momentum[0] == doctest::Approx(1.3).epsilon(1e-14));
    CHECK(out.position[0] == 0.7);
  }

  TEST_CASE("shift 0.25 maps rho = 0 to the 0.75 quantile") {
    const MixFlowMap map(std_normal_1d(), {1, 0.1}, constant_shift(0.25));
    double log_det = 0;
    const auto out = map.refresh(AugmentedState<double>{{0.0}, {0.0}}, &log_det);
    CHECK(out.momentum[0] == doctest::Approx(0.674490).epsilon(1e-6));
    CHECK(log_det == doctest::Approx(0.227468).epsilon(1e-6));
  }

  TEST_CASE("inverse refresh undoes the refresh") {
    const auto setup = setup_for("banana");
    auto rng = make_rng(51, 0);
    for (int i = 0; i < 100; ++i) {
      const AugmentedState<double> z{{rng.normal(), rng.normal() - 9}, {rng.normal(), rng.normal()}};
      const auto back = setup.map->inverse_refresh(setup.map->refresh(z));
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(back.momentum[k] - z.momentum[k]) <= 1e-12);
    }
  }

  TEST_CASE("extreme momenta are clamped and counted, never infinite") {
    const MixFlowMap map(std_normal_1d(), {1, 0.1}, constant_shift(1e-17));
    const std::size_t before = refresh_clamp_count();
    const auto out = map.refresh(AugmentedState<double>{{0.0}, {40.0}});
    CHECK(std::isfinite(out.momentum[0]));
    CHECK(refresh_clamp_count() > before);
  }
}

TEST_SUITE("mixflow map") {
  TEST_CASE("round trip on the paper targets") {
    for (const char* name : {"banana", "cross"}) {
      const auto setup = setup_for(name);
      auto rng = make_rng(52, 0);
      for (int i = 0; i < 20; ++i) {
        const auto z = setup.reference.sample(rng);
        const auto back = setup.map->inverse(std::span<const double>(setup.map->forward(std::span<const double>(z))));
        CHECK(distance<double>(back, z) <= 1e-12 * (1 + std::sqrt(squared_norm<double>(z))));
      }
    }
  }

  TEST_CASE("paper settings stay finite for 100 iterations") {
    for (const char* name : {"banana", "cross"}) {
      const auto setup = setup_for(name);
      auto rng = make_rng(52, 1);
      for (int s = 0; s < 3; ++s) {
        auto z = setup.reference.sample(rng);
        for (int k = 0; k < 100; ++k) z = setup.map->forward(std::span<const double>(z));
        CHECK(all_finite<double>(z));
      }
    }
  }

  TEST_CASE("free-particle inverse shifts the position back") {
    const auto flat = std::make_shared<testing::FlatTarget>(1);
    const MixFlowMap map(flat, {4, 0.25}, kNoRefresh);
    const auto back = map.inverse(std::span<const double>(Point<double>{3.0, 2.0}));
    CHECK(back[0] == doctest::Approx(3.0 - 4 * 0.25 * 2.0));
    CHECK(back[1] == doctest::Approx(2.0));
  }

  TEST_CASE("free-particle Jacobian without refresh") {
    const auto flat = std::make_shared<testing::FlatTarget>(2);
    const MixFlowMap map(flat, {5, 0.2}, kNoRefresh);
    Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(4, 4);
    expected.topRightCorner(2, 2) = Eigen::MatrixXd::Identity(2, 2) * (5 * 0.2);
    CHECK((map.jacobian(Point<double>{0.3, 0.1, -1.0, 2.0}) - expected).norm() <= 1e-14);
  }

  TEST_CASE("one-step Jacobian on the 1-D standard normal") {
    const double eta = 0.1;
    const MixFlowMap map(std_normal_1d(), {1, eta}, kNoRefresh);
    const auto j = map.jacobian(Point<double>{0.4, -0.2});
    CHECK(j(0, 0) == doctest::Approx(1 - eta * eta / 2));
    CHECK(j(0, 1) == doctest::Approx(eta));
    CHECK(j(1, 0) == doctest::Approx(-eta + eta * eta * eta / 4));
    CHECK(j(1, 1) == doctest::Approx(1 - eta * eta / 2));
  }

  TEST_CASE("zero shift gives zero log-Jacobian") {
    const MixFlowMap map(std_normal_1d(), {3, 0.1}, kNoRefresh);
    CHECK(map.log_jac_det(Point<double>{0.4, 1.2}) == 0.0);
  }

  TEST_CASE("forward and inverse log-Jacobians cancel") {
    const auto setup = setup_for("banana");
    auto rng = make_rng(53, 0);
    for (int i = 0; i < 20; ++i) {
      const auto z = setup.reference.sample(rng);
      double fwd = 0, inv = 0;
      const auto y = setup.map->forward(std::span<const double>(z), &fwd);
      setup.map->inverse(std::span<const double>(y), &inv);
      // Both report log|det grad F| at z.
      CHECK(std::abs(fwd - inv) <= 1e-10);
    }
  }

  TEST_CASE("map rejects states of the wrong size") {
    const auto setup = setup_for("banana");
    CHECK_THROWS_AS(setup.map->forward(std::span<const double>(Point<double>{1.0, 2.0})), std::invalid_argument);
  }
}

TEST_SUITE("properties") {
  TEST_CASE("bijectivity over 1000 reference draws per target") {
    for (const char* name : {"banana", "cross"}) {
      CAPTURE(name);
      const auto setup = setup_for(name);
      auto rng = make_rng(54, 0);
      std::size_t failures = 0;
      double worst = 0.0;
      for (int i = 0; i < 1000; ++i) {
        const auto z = setup.reference.sample(rng);
        const auto back = setup.map->inverse(std::span<const double>(setup.map->forward(std::span<const double>(z))));
        const double rel = distance<double>(back, z) / (1 + std::sqrt(squared_norm<double>(z)));
        worst = std::max(worst, rel);
        if (rel > 1e-12) ++failures;
      }
      CAPTURE(worst);
      CHECK(failures == 0);
    }
  }

  TEST_CASE("log-Jacobian equals log|det| of the Jacobian") {
    for (const char* name : {"banana", "cross"}) {
      const auto setup = setup_for(name);
      auto rng = make_rng(55, 0);
      for (int i = 0; i < 20; ++i) {
        const auto z = setup.reference.sample(rng);
        const double ld = setup.map->log_jac_det(z);
        const double dense = std::log(std::abs(setup.map->jacobian(z).determinant()));
        CHECK(std::abs(ld - dense) <= 1e-6 * std::max(1.0, std::abs(ld)));
      }
    }
  }

  TEST_CASE("Jacobian columns match central differences") {
    for (const char* name : {"banana", "cross"}) {
      const auto setup = setup_for(name);
      auto rng = make_rng(56, 0);
      for (int i = 0; i < 10; ++i) {
        const auto z = setup.reference.sample(rng);
        const Eigen::MatrixXd j = setup.map->jacobian(z);
        const Eigen::MatrixXd fd = finite_difference_jacobian(*setup.map, z);
        for (Eigen::Index c = 0; c < j.cols(); ++c)
          CHECK((j.col(c) - fd.col(c)).norm() <= 1e-4 * std::max(1.0, j.col(c).norm()));
      }
    }
  }

  TEST_CASE("leapfrog step matrix is stable below eta = 2") {
    for (const double eta : {0.1, 0.5, 1.0, 1.9}) {
      const MixFlowMap map(std_normal_1d(), {1, eta}, kNoRefresh);
      const Eigen::MatrixXd j = map.jacobian(Point<double>{0.0, 0.0});
      const Eigen::VectorXcd ev = j.eigenvalues();
      for (Eigen::Index i = 0; i < ev.size(); ++i) CHECK(std::abs(std::abs(ev(i)) - 1.0) <= 1e-10);
    }
  }
}
