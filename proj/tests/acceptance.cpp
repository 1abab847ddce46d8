// Acceptance criteria: one PASS/FAIL line each.  Exit status is the number
// of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "shadowflow/experiments.hpp"
#include "shadowflow/shadowing.hpp"
#include "shadowflow/stats.hpp"

using namespace shadowflow;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig config(const std::string& text) {
  auto cfg = parse_config(text);
  cfg.resolve();
  return cfg;
}

std::vector<std::size_t> rows_where(const ResultTable& t, const std::string& column, const std::string& value) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.text(r, column) == value) out.push_back(r);
  return out;
}

Outcome scaling_closed_form() {
  const auto t = compute_experiment(config("experiment = oracle-check\nscaling_factors = 0.5, 1, 2, 3\nlengths = 1..10, 50, 100\n"));
  double worst = 0.0;
  for (const auto r : rows_where(t, "map", "scaling")) worst = std::max(worst, t.number(r, "rel_error"));
  return {worst <= 1e-10, "max rel error " + fmt("%.2e", worst)};
}

Outcome banded_vs_dense() {
  auto rng = make_rng(2024, 0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(3), n = 1 + rng.uniform_index(20);
    BlockSequence seq;
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::MatrixXd b(m, m);
      for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 2.0 * rng.normal();
      seq.blocks.push_back(b);
    }
    const double dense = lambda_min_dense_oracle(seq);
    worst = std::max(worst, std::abs(lambda_min_blocktridiag(seq) - dense) / dense);
  }
  return {worst <= 1e-8, "max rel error " + fmt("%.2e", worst) + " over 100 sequences"};
}

Outcome hyperbolic_bounded() {
  const auto t = compute_experiment(config("experiment = oracle-check\nscaling_factors = 0.5\nlengths = 10, 100\n"));
  const auto rows = rows_where(t, "map", "hyperbolic");
  const double e10 = t.number(rows.at(0), "epsilon_diagnostic"), e100 = t.number(rows.at(1), "epsilon_diagnostic");
  const double change = std::abs(e100 - e10) / e10;
  return {change <= 0.10, "eps(10) " + fmt("%.4e", e10) + ", eps(100) " + fmt("%.4e", e100) + ", change " + fmt("%.1f%%", 100 * change)};
}

Outcome orbit_error_growth() {
  const auto t = compute_experiment(config("experiment = orbit-error\ntarget = banana\nseeds = 20\nprecision_bits = 256\nlengths = 1..100\n"));
  double at100 = 0.0;
  std::vector<double> k, log_err;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double kk = t.number(r, "k"), e = t.number(r, "median_fwd");
    if (kk == 100) at100 = e;
    if (kk >= 5 && kk <= 50 && e > 0) {
      k.push_back(kk);
      log_err.push_back(std::log(e));
    }
  }
  const auto fit = fit_line(k, log_err);
  const bool pass = at100 >= 1.0 && fit.r_squared >= 0.95;
  return {pass, "median error at k=100 " + fmt("%.3g", at100) + ", R^2 over k in [5,50] " + fmt("%.3f", fit.r_squared) +
                    ", growth rate " + fmt("%.3f", fit.slope) + " per step"};
}

Outcome single_step_delta() {
  const auto t = compute_experiment(config("experiment = delta\ntarget = banana\nseeds = 20\nlengths = 100\n"));
  double lo = 1.0, hi = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    lo = std::min(lo, t.number(r, "median"));
    hi = std::max(hi, t.number(r, "median"));
  }
  return {lo >= 1e-16 && hi <= 1e-12, "medians across sources in [" + fmt("%.2e", lo) + ", " + fmt("%.2e", hi) + "]"};
}

Outcome shadow_windows() {
  std::ostringstream detail;
  bool pass = true;
  for (const char* target : {"banana", "cross"}) {
    const auto t = compute_experiment(config(std::string("experiment = shadow-window\ntarget = ") + target +
                                             "\nseeds = 10\ndelta = 1e-14\nlengths = 10, 20, 50, 100, 150, 200\n"));
    for (const char* diag : {"forward", "backward"}) {
      double prev = 0.0, e50 = 0.0, e200 = 0.0, worst = 0.0;
      bool monotone = true;
      for (const auto r : rows_where(t, "diagnostic", diag)) {
        const double n = t.number(r, "N"), e = t.number(r, "median_epsilon");
        if (!(e >= prev)) monotone = false;
        prev = e;
        worst = std::max(worst, e);
        if (n == 50) e50 = e;
        if (n == 200) e200 = e;
      }
      const double ratio = e200 / e50;
      const bool ok = worst < 1e-10 && monotone && ratio <= 8.0;
      pass = pass && ok;
      detail << target << "/" << diag << ": max " << fmt("%.2e", worst) << (monotone ? "" : " non-monotone")
             << " ratio " << fmt("%.2f", ratio) << "; ";
    }
  }
  return {pass, detail.str()};
}

Outcome sampling_error() {
  const auto t = compute_experiment(config(
      "experiment = sampling-error\ntarget = banana\nlengths = 500\ndraws = 2000\ntest_functions = abs, sin, sigmoid\n"));
  bool pass = true;
  std::ostringstream detail;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double e = t.number(r, "rel_error");
    pass = pass && e <= 0.05;
    detail << t.text(r, "function") << " " << fmt("%.2f%%", 100 * e) << "; ";
  }
  return {pass, detail.str()};
}

Outcome density_error() {
  bool pass = true;
  std::ostringstream detail;
  for (const char* target : {"banana", "cross"}) {
    const auto t = compute_experiment(config(std::string("experiment = density-error\ntarget = ") + target +
                                             "\nlengths = 500\npoints = 50\n"));
    std::vector<double> rel;
    for (std::size_t r = 0; r < t.rows.size(); ++r) rel.push_back(t.number(r, "rel_error"));
    const double med = median(rel), worst = *std::max_element(rel.begin(), rel.end());
    pass = pass && med <= 0.02;
    detail << target << " median " << fmt("%.2f%%", 100 * med) << " max " << fmt("%.2f%%", 100 * worst) << "; ";
  }
  return {pass, detail.str()};
}

Outcome elbo_curve() {
  const auto t = compute_experiment(config("experiment = elbo-curve\ntarget = banana\nseeds = 50\nlengths = 50, 100, 200\n"));
  bool pass = true;
  std::ostringstream detail;
  double gap50 = 0.0, gap200 = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double n = t.number(r, "N"), rel = t.number(r, "rel_gap"), gap = t.number(r, "abs_gap");
    pass = pass && rel <= 0.05;
    if (n == 50) gap50 = gap;
    if (n == 200) gap200 = gap;
    detail << "N=" << n << " exact " << fmt("%.4f", t.number(r, "exact_mean")) << " gap " << fmt("%.4f", gap) << " ("
           << fmt("%.1f%%", 100 * rel) << "); ";
  }
  pass = pass && gap200 <= 2.0 * gap50;
  return {pass, detail.str()};
}

Outcome inversion() {
  const auto t = compute_experiment(config("experiment = inversion-check\ntarget = banana\nseeds = 5\nprecision_bits = 2048\nlengths = 100\n"));
  double worst = -1e300;
  for (std::size_t r = 0; r < t.rows.size(); ++r) worst = std::max(worst, t.number(r, "log10_error_exact"));
  return {worst <= -100.0, "max log10 reconstruction error " + fmt("%.1f", worst)};
}

Outcome property_suites() {
  std::string paths = SHADOWFLOW_SUITES;
  std::vector<std::string> failed;
  std::size_t start = 0;
  int count = 0;
  while (start <= paths.size()) {
    const auto end = std::min(paths.find('|', start), paths.size());
    const std::string exe = paths.substr(start, end - start);
    start = end + 1;
    if (exe.empty()) continue;
    ++count;
    const std::string cmd = "\"" + exe + "\" -ts=properties -nv > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) failed.push_back(exe.substr(exe.find_last_of('/') + 1));
  }
  std::string detail = std::to_string(count - static_cast<int>(failed.size())) + "/" + std::to_string(count) + " suites pass";
  for (const auto& f : failed) detail += "; failed " + f;
  return {failed.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "scaling-map window matches the closed form", 1, scaling_closed_form},
      {2, "banded lambda_min matches the dense oracle", 10, banded_vs_dense},
      {3, "hyperbolic window stays bounded", 5, hyperbolic_bounded},
      {4, "banana forward error grows exponentially to O(1)", 300, orbit_error_growth},
      {5, "banana single-step error is near machine precision", 120, single_step_delta},
      {6, "shadowing windows stay small and grow slowly", 600, shadow_windows},
      {7, "sample averages are accurate at N = 500", 600, sampling_error},
      {8, "log-densities are accurate at N = 500", 900, density_error},
      {9, "ELBO estimates are accurate and stable", 1200, elbo_curve},
      {10, "2048-bit orbits invert to 1e-100", 600, inversion},
      {11, "property suites pass", 600, property_suites},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > c.limit_seconds) {
      o.pass = false;
      o.detail += " [over time limit of " + fmt("%.0f", c.limit_seconds) + " s]";
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
