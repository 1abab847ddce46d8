#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "shadowflow/dataset.hpp"
#include "shadowflow/meanfield.hpp"
#include "shadowflow/targets.hpp"

using namespace shadowflow;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  const auto dir = std::filesystem::temp_directory_path() / "shadowflow-tests";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << contents;
  return path;
}

std::vector<Point<double>> random_points(std::size_t d, std::size_t count, double scale, std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  std::vector<Point<double>> pts(count, Point<double>(d));
  for (auto& p : pts)
    for (auto& v : p) v = scale * rng.normal();
  return pts;
}

Dataset synthetic(std::size_t rows, std::size_t cols, bool binary, std::uint64_t seed) {
  auto rng = make_rng(seed, 1);
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  d.responses.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      d.features(i, j) = rng.normal();
      s += 0.4 * d.features(i, j);
    }
    d.responses(i) = binary ? (s + rng.normal() > 0 ? 1.0 : 0.0) : s + 0.2 * rng.normal();
  }
  standardize(d, !binary);
  return d;
}

std::string boston_csv(std::size_t rows) {
  std::string s = "CRIM,ZN,INDUS,CHAS,NOX,RM,AGE,DIS,RAD,TAX,PTRATIO,B,LSTAT,MEDV\n";
  auto rng = make_rng(31, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (int j = 0; j < 14; ++j) s += std::to_string(10 + rng.normal()) + (j < 13 ? "," : "\n");
  }
  return s;
}

std::string bank_csv(std::size_t rows) {
  std::string s = "age;job;marital;balance;housing;duration;campaign;pdays;previous;y\n";
  auto rng = make_rng(32, 0);
  const char* marital[] = {"married", "single", "divorced", "unknown"};
  const char* yesno[] = {"no", "yes"};
  for (std::size_t i = 0; i < rows; ++i) {
    s += std::to_string(20 + rng.uniform_index(50)) + ";\"admin.\";" + marital[rng.uniform_index(4)] + ";" +
         std::to_string(rng.uniform_index(5000)) + ";" + (i % 7 == 3 ? "unknown" : yesno[rng.uniform_index(2)]) + ";" +
         std::to_string(rng.uniform_index(900)) + ";" + std::to_string(1 + rng.uniform_index(5)) + ";" +
         std::to_string(rng.uniform_index(3) ? -1 : 100) + ";" + std::to_string(rng.uniform_index(3)) + ";" +
         yesno[rng.uniform_index(2)] + "\n";
  }
  return s;
}

}  // namespace

TEST_SUITE("targets") {
  TEST_CASE("banana log-density and gradient at the ridge mode") {
    const auto t = banana_target(0.1, 100.0);
    const Point<double> x{0.0, -10.0};
    CHECK(t->log_density(x) == doctest::Approx(-4.140462).epsilon(1e-6));
    const auto g = t->grad_log_density(x);
    CHECK(g[0] == doctest::Approx(0.0));
    CHECK(g[1] == doctest::Approx(0.0));
  }

  TEST_CASE("banana with b = 0 is the axis-aligned Gaussian") {
    const auto t = banana_target(0.0, 100.0);
    const DiagGaussian ref({0.0, 0.0}, {std::log(10.0), 0.0});
    for (const auto& x : random_points(2, 20, 5.0, 1)) CHECK(t->log_density(x) == doctest::Approx(ref.log_density<double>(x)));
  }

  TEST_CASE("cross mixture values and symmetry") {
    const auto t = cross_target();
    CHECK(std::exp(t->log_density(Point<double>{0.0, 2.0})) == doctest::Approx(0.265348).epsilon(1e-5));
    CHECK(t->log_density(Point<double>{1.0, 1.0}) == doctest::Approx(t->log_density(Point<double>{-1.0, -1.0})));
  }

  TEST_CASE("cross integrates to one on [-8, 8]^2") {
    const auto t = cross_target();
    const int n = 800;
    const double h = 16.0 / n;
    double total = 0;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const double w = (i == 0 || i == n ? 0.5 : 1.0) * (j == 0 || j == n ? 0.5 : 1.0);
        total += w * std::exp(t->log_density(Point<double>{-8 + i * h, -8 + j * h}));
      }
    CHECK(total * h * h == doctest::Approx(1.0).epsilon(1e-3));
  }

  TEST_CASE("extended-precision densities agree with double") {
    PrecisionScope scope(256);
    for (const auto& t : {banana_target(), cross_target()}) {
      for (const auto& x : random_points(2, 10, 3.0, 2)) {
        const auto xb = promote(x);
        CHECK(t->log_density(std::span<const BigFloat>(xb)).to_double() == doctest::Approx(t->log_density(x)).epsilon(1e-13));
      }
    }
  }

  TEST_CASE("linear regression dimensions and empty-data prior") {
    CHECK(linreg_target(synthetic(20, 13, false, 1))->dimension() == 15);
    Dataset empty;
    empty.features.resize(0, 13);
    empty.responses.resize(0);
    const auto t = linreg_target(empty);
    const auto prior = DiagGaussian::standard(15);
    for (const auto& x : random_points(15, 5, 1.0, 3)) CHECK(t->log_density(x) == doctest::Approx(prior.log_density<double>(x)));
  }

  TEST_CASE("logistic regression dimension and likelihood saturation") {
    CHECK(logreg_target(synthetic(20, 8, true, 2))->dimension() == 9);
    Dataset ones = synthetic(10, 2, true, 4);
    ones.features.setConstant(1.0);
    ones.responses.setConstant(1.0);
    Dataset none;
    none.features.resize(0, 2);
    none.responses.resize(0);
    const auto with_data = logreg_target(ones);
    const auto prior_only = logreg_target(none);
    // Ten observations of y = 1 with x'beta = +-60.
    const Point<double> agree{30.0, 30.0, 0.0}, disagree{-30.0, -30.0, 0.0};
    CHECK(std::abs(with_data->log_density(agree) - prior_only->log_density(agree)) <= 1e-10);
    CHECK(with_data->log_density(disagree) - prior_only->log_density(disagree) == doctest::Approx(-600.0).epsilon(1e-12));
  }

  TEST_CASE("logistic regression rejects non-binary responses") {
    Dataset d = synthetic(5, 2, true, 5);
    d.responses(0) = 0.5;
    CHECK_THROWS(logreg_target(d));
  }

  TEST_CASE("two-row dataset standardizes to (-1, 1)") {
    DatasetDescriptor desc;
    desc.name = "tiny";
    desc.response_column = "y";
    desc.feature_columns = {"a", "b"};
    const auto data = load_regression_dataset(temp_file("tiny.csv", "a,b,y\n0,0,0\n2,2,2\n"), desc);
    REQUIRE(data.rows() == 2);
    CHECK(data.features(0, 0) == doctest::Approx(-1.0));
    CHECK(data.features(1, 0) == doctest::Approx(1.0));
    CHECK(data.responses(1) == doctest::Approx(1.0));
  }

  TEST_CASE("boston-shaped CSV keeps all rows and 13 features") {
    const auto data = load_regression_dataset(temp_file("boston.csv", boston_csv(506)), DatasetDescriptor::boston_housing());
    CHECK(data.rows() == 506);
    CHECK(data.columns() == 13);
    CHECK(linreg_target(data)->dimension() == 15);
  }

  TEST_CASE("bank-shaped CSV drops unknowns and keeps the first 400 rows") {
    const auto data = load_regression_dataset(temp_file("bank.csv", bank_csv(900)), DatasetDescriptor::bank_marketing());
    CHECK(data.rows() == 400);
    CHECK(data.columns() == 8);
    for (Eigen::Index i = 0; i < data.responses.size(); ++i) CHECK((data.responses(i) == 0.0 || data.responses(i) == 1.0));
    CHECK(logreg_target(data)->dimension() == 9);
  }

  TEST_CASE("dataset errors") {
    CHECK_THROWS_AS(load_regression_dataset("/nonexistent/file.csv", DatasetDescriptor::boston_housing()), DatasetError);
    CHECK_THROWS_AS(load_regression_dataset(temp_file("short.csv", "CRIM,MEDV\n1,2\n"), DatasetDescriptor::boston_housing()),
                    DatasetError);
    DatasetDescriptor desc;
    desc.response_column = "y";
    desc.feature_columns = {"a"};
    CHECK_THROWS_AS(load_regression_dataset(temp_file("text.csv", "a,y\n1,2\nfoo,3\n"), desc), DatasetError);
    CHECK_THROWS_AS(load_regression_dataset(temp_file("const.csv", "a,y\n1,2\n1,3\n"), desc), DatasetError);
  }

  TEST_CASE("mean-field fit recovers a Gaussian target") {
    const DiagGaussian truth({1.0, -2.0}, {0.3, -0.5});
    auto rng = make_rng(41, 0);
    MeanFieldConfig cfg;
    cfg.step_size = 1e-2;
    const auto fit = fit_meanfield_reference(*gaussian_target(truth), cfg, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(fit.mean[i] - truth.mean[i]) < 0.05);
      CHECK(std::abs(fit.log_std[i] - truth.log_std[i]) < 0.05);
    }
  }

  TEST_CASE("mean-field fit started at the optimum stays there") {
    MeanFieldConfig cfg;
    cfg.init = DiagGaussian::standard(2);
    auto rng = make_rng(41, 1);
    const auto fit = fit_meanfield_reference(*gaussian_target(DiagGaussian::standard(2)), cfg, rng);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(fit.mean[i]) < 0.05);
      CHECK(std::abs(fit.log_std[i]) < 0.05);
    }
  }

  TEST_CASE("mean-field fit on the banana gives a finite ELBO") {
    auto rng = make_rng(41, 2);
    const auto t = banana_target();
    const auto fit = fit_meanfield_reference(*t, {}, rng);
    CHECK(std::isfinite(meanfield_elbo(*t, fit, rng, 1000)));
  }

  TEST_CASE("mean-field fit reports divergence with the iteration") {
    MeanFieldConfig cfg;
    cfg.step_size = 1e6;
    cfg.steps = 200;
    auto rng = make_rng(41, 3);
    CHECK_THROWS_AS(fit_meanfield_reference(*banana_target(), cfg, rng), FitDivergedError);
  }
}

TEST_SUITE("properties") {
  TEST_CASE("every target gradient matches central differences") {
    std::vector<std::shared_ptr<const TargetModel>> targets{
        banana_target(), cross_target(), gaussian_target(DiagGaussian({0.5, -1.0, 2.0}, {0.1, -0.2, 0.3})),
        linreg_target(synthetic(40, 13, false, 6)), logreg_target(synthetic(40, 8, true, 7))};
    for (const auto& t : targets) {
      CAPTURE(t->name());
      const double scale = t->name() == "banana" ? 5.0 : 1.0;
      CHECK(gradient_check(*t, random_points(t->dimension(), 100, scale, 8)) <= 1e-5);
    }
  }

  TEST_CASE("standardized datasets have mean 0 and population std 1") {
    for (const auto& data : {synthetic(50, 5, false, 9),
                             load_regression_dataset(temp_file("bank2.csv", bank_csv(800)), DatasetDescriptor::bank_marketing())}) {
      for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
        const auto col = data.features.col(c);
        const double m = col.mean();
        const double sd = std::sqrt((col.array() - m).square().mean());
        CHECK(std::abs(m) < 1e-10);
        CHECK(std::abs(sd - 1.0) < 1e-10);
      }
    }
  }

  TEST_CASE("banana and cross densities are finite and positive far from the mass") {
    for (const auto& t : {banana_target(), cross_target()}) {
      for (const auto& x : random_points(2, 200, 30.0, 10)) {
        const double lp = t->log_density(x);
        CHECK(std::isfinite(lp));
      }
    }
  }
}
