#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shadowflow/experiments.hpp"
#include "shadowflow/plot.hpp"

using namespace shadowflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("shadowflow-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small(const std::string& experiment) {
  ExperimentConfig cfg = parse_config("experiment = " + experiment + "\nseeds = 3\nfit_steps = 500\n");
  return cfg;
}

std::size_t svg_count(const std::string& svg, const std::string& tag) {
  std::size_t n = 0;
  for (auto pos = svg.find(tag); pos != std::string::npos; pos = svg.find(tag, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parses keys, comments, lists and ranges") {
    const auto cfg = parse_config(
        "# orbit study\n"
        "experiment = orbit-error\n"
        "target = cross   # trailing comment\n"
        "lengths = 1..3, 10\n"
        "seeds = 4\n"
        "step_size = 0.05\n"
        "diagnostics = forward, joint\n"
        "estimate_m = true\n");
    CHECK(cfg.experiment == "orbit-error");
    CHECK(cfg.target == "cross");
    CHECK(cfg.lengths == std::vector<std::size_t>{1, 2, 3, 10});
    CHECK(cfg.seeds == 4);
    CHECK(cfg.step_size == 0.05);
    CHECK(cfg.diagnostics == std::vector<std::string>{"forward", "joint"});
    CHECK(cfg.estimate_m);
  }

  TEST_CASE("unknown keys and bad values are errors") {
    CHECK_THROWS_AS(parse_config("colour = blue\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seeds = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("csv_schema_version = 2\n"), ConfigError);
  }

  TEST_CASE("resolve fills defaults and validates") {
    auto cfg = parse_config("experiment = shadow-window\n");
    cfg.resolve();
    CHECK(cfg.lengths == std::vector<std::size_t>{10, 20, 50, 100, 150, 200});
    auto bad = parse_config("experiment = delta\nprecision_bits = 64\n");
    CHECK_THROWS_AS(bad.resolve(), ConfigError);
    auto unknown = parse_config("experiment = nonsense\n");
    CHECK_THROWS_AS(unknown.resolve(), ConfigError);
  }

  TEST_CASE("to_text round trips") {
    auto cfg = parse_config("experiment = elbo-curve\ntarget = cross\nlengths = 5..9, 20\nrefresh_weights = 0.5, 0.5\n");
    cfg.resolve();
    const auto again = parse_config(cfg.to_text());
    CHECK(again.to_text() == cfg.to_text());
    CHECK(again.lengths == cfg.lengths);
    CHECK(again.refresh_weights == cfg.refresh_weights);
  }

  TEST_CASE("paper scale raises seeds and precision") {
    auto cfg = parse_config("experiment = elbo-curve\n");
    cfg.apply_paper_scale();
    CHECK(cfg.seeds == 200);
    CHECK(cfg.precision_bits == 2048);
    CHECK(cfg.lengths.back() == 1000);
  }
}

TEST_SUITE("tables") {
  TEST_CASE("CSV round trip keeps numbers and text") {
    ResultTable t;
    t.columns = {"name", "value"};
    t.add_row({std::string("a"), 1.5});
    t.add_row({std::string("b"), 1e-14});
    const auto back = ResultTable::from_csv(t.to_csv());
    CHECK(back.columns == t.columns);
    CHECK(back.text(0, "name") == "a");
    CHECK(back.number(1, "value") == 1e-14);
    CHECK(back.to_csv() == t.to_csv());
    CHECK_THROWS(t.add_row({1.0}));
    CHECK_THROWS(t.column_index("missing"));
  }

  TEST_CASE("number formatting") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(std::nan("")) == "nan");
  }
}

TEST_SUITE("experiments") {
  TEST_CASE("row counts match the grid") {
    auto orbit = small("orbit-error");
    orbit.lengths = {1, 2, 3, 4, 5};
    CHECK(compute_experiment(orbit).rows.size() == 5);

    auto oracle = small("oracle-check");
    oracle.scaling_factors = {0.5, 2.0};
    oracle.lengths = {1, 10};
    // Scaling rows for both factors plus hyperbolic rows for 0.5.
    CHECK(compute_experiment(oracle).rows.size() == 6);

    auto delta = small("delta");
    delta.lengths = {5};
    CHECK(compute_experiment(delta).rows.size() == 4);

    auto window = small("shadow-window");
    window.lengths = {5, 10};
    window.diagnostics = {"forward", "backward", "joint"};
    const auto w = compute_experiment(window);
    CHECK(w.rows.size() == 6);
    for (std::size_t r = 0; r < w.rows.size(); ++r) CHECK(std::isfinite(w.number(r, "median_epsilon")));
  }

  TEST_CASE("reruns are byte-identical and manifests reproduce the table") {
    auto cfg = small("orbit-error");
    cfg.lengths = {1, 5, 10};
    cfg.output_dir = scratch("rerun-a").string();
    const auto first = run_experiment(cfg);
    cfg.output_dir = scratch("rerun-b").string();
    const auto second = run_experiment(cfg);
    CHECK(slurp(first.csv) == slurp(second.csv));

    auto replay = load_config(first.manifest);
    CHECK(compute_experiment(replay).to_csv() == first.table.to_csv());
    CHECK(slurp(first.manifest).rfind("# ", 0) == 0);
  }

  TEST_CASE("thread count does not change results") {
    auto cfg = small("delta");
    cfg.lengths = {5};
    const auto many = compute_experiment(cfg).to_csv();
    setenv("SHADOWFLOW_THREADS", "1", 1);
    const auto one = compute_experiment(cfg).to_csv();
    unsetenv("SHADOWFLOW_THREADS");
    CHECK(one == many);
  }
}

TEST_SUITE("plots") {
  TEST_CASE("orbit-error figure has two quartile bands") {
    auto cfg = small("orbit-error");
    cfg.lengths = {1, 2, 5, 10};
    cfg.output_dir = scratch("plot-orbit").string();
    cfg.plot = true;
    const auto out = run_experiment(cfg);
    REQUIRE(out.plot);
    const auto svg = slurp(*out.plot);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg_count(svg, "<polygon") == 2);
    CHECK(svg_count(svg, "<polyline") == 2);
  }

  TEST_CASE("elbo-curve figure has two lines") {
    const auto dir = scratch("plot-elbo");
    ResultTable t;
    t.columns = {"N", "numerical_mean", "exact_mean", "numerical_stderr", "exact_stderr", "abs_gap", "rel_gap", "failures"};
    t.add_row({10.0, -1.0, -1.1, 0.1, 0.1, 0.1, 0.1, 0.0});
    t.add_row({20.0, -0.8, -0.85, 0.1, 0.1, 0.05, 0.06, 0.0});
    std::ofstream(dir / "elbo.csv") << t.to_csv();
    emit_plot(dir / "elbo.csv", default_plot_spec("elbo-curve"), dir / "elbo.svg");
    CHECK(svg_count(slurp(dir / "elbo.svg"), "<polyline") == 2);
  }

  TEST_CASE("empty tables and missing columns write nothing") {
    const auto dir = scratch("plot-empty");
    std::ofstream(dir / "empty.csv") << "k,median_fwd,q25_fwd,q75_fwd,median_bwd,q25_bwd,q75_bwd,failures\n";
    CHECK_THROWS(emit_plot(dir / "empty.csv", default_plot_spec("orbit-error"), dir / "empty.svg"));
    CHECK_FALSE(fs::exists(dir / "empty.svg"));
    std::ofstream(dir / "short.csv") << "k,median_fwd\n1,2\n";
    CHECK_THROWS(emit_plot(dir / "short.csv", default_plot_spec("orbit-error"), dir / "short.svg"));
    CHECK_FALSE(fs::exists(dir / "short.svg"));
    CHECK_THROWS(default_plot_spec("delta"));
  }
}

#ifdef SHADOWFLOW_CLI
TEST_SUITE("cli") {
  TEST_CASE("paper scale is recorded in the manifest") {
    const auto dir = scratch("cli");
    std::ofstream(dir / "oracle.conf") << "experiment = oracle-check\nlengths = 1, 2\n";
    const std::string cmd = std::string(SHADOWFLOW_CLI) + " oracle-check --config " + (dir / "oracle.conf").string() +
                            " --paper-scale --out " + (dir / "out").string() + " > /dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    const auto manifest = load_config(dir / "out" / "oracle-check.manifest");
    CHECK(manifest.precision_bits == 2048);
    CHECK(manifest.seeds == 100);
    CHECK(fs::exists(dir / "out" / "oracle-check.csv"));
  }

  TEST_CASE("config errors exit with status 2") {
    const auto dir = scratch("cli-bad");
    std::ofstream(dir / "bad.conf") << "experiment = delta\n";
    const std::string cmd = std::string(SHADOWFLOW_CLI) + " oracle-check --config " + (dir / "bad.conf").string() +
                            " --out " + dir.string() + " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 2);
  }
}
#endif
