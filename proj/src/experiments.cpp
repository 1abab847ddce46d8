#include "shadowflow/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "shadowflow/dataset.hpp"
#include "shadowflow/meanfield.hpp"
#include "shadowflow/orbit.hpp"
#include "shadowflow/plot.hpp"
#include "shadowflow/shadowing.hpp"
#include "shadowflow/stats.hpp"

namespace shadowflow {

namespace {

constexpr std::uint64_t kFitStream = 1ULL << 62;
constexpr std::uint64_t kDrawStream = 1ULL << 61;
constexpr std::uint64_t kPointStream = 1ULL << 60;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  return x;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("config key '" + key + "': not a nonnegative integer: '" + v + "'");
  return std::stoull(v);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_uint(key, item));
      continue;
    }
    const auto a = parse_uint(key, trim(item.substr(0, dots)));
    const auto b = parse_uint(key, trim(item.substr(dots + 2)));
    if (b < a) throw ConfigError("config key '" + key + "': empty range " + item);
    for (auto i = a; i <= b; ++i) out.push_back(i);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_same_v<T, std::string>)
      s += v[i];
    else if constexpr (std::is_floating_point_v<T>)
      s += format_number(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s;
}

/// Compact rendering of an integer list using a..b runs.
std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[j] + 1) ++j;
    if (!s.empty()) s += ',';
    s += j >= i + 2 ? std::to_string(v[i]) + ".." + std::to_string(v[j]) : std::to_string(v[i]);
    if (j == i + 1) s += ',' + std::to_string(v[j]);
    i = j + 1;
  }
  return s;
}

struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, KeyHandler>& key_table() {
  static const std::map<std::string, KeyHandler> table = [] {
    std::map<std::string, KeyHandler> t;
    t["experiment"] = {[](auto& c, const auto& v) { c.experiment = v; }, [](const auto& c) { return c.experiment; }};
    t["target"] = {[](auto& c, const auto& v) { c.target = v; }, [](const auto& c) { return c.target; }};
    t["leapfrog_steps"] = {[](auto& c, const auto& v) { c.leapfrog_steps = parse_uint("leapfrog_steps", v); },
                           [](const auto& c) { return c.leapfrog_steps ? std::to_string(*c.leapfrog_steps) : ""; }};
    t["step_size"] = {[](auto& c, const auto& v) { c.step_size = parse_double("step_size", v); },
                      [](const auto& c) { return c.step_size ? format_number(*c.step_size) : ""; }};
    t["refresh_weights"] = {[](auto& c, const auto& v) { c.refresh_weights = parse_doubles("refresh_weights", v); },
                            [](const auto& c) { return join(c.refresh_weights); }};
    t["refresh_phase"] = {[](auto& c, const auto& v) { c.refresh_phase = parse_double("refresh_phase", v); },
                          [](const auto& c) { return format_number(c.refresh_phase); }};
    t["refresh_offset"] = {[](auto& c, const auto& v) { c.refresh_offset = parse_double("refresh_offset", v); },
                           [](const auto& c) { return format_number(c.refresh_offset); }};
    t["refresh_amplitude"] = {[](auto& c, const auto& v) { c.refresh_amplitude = parse_double("refresh_amplitude", v); },
                              [](const auto& c) { return format_number(c.refresh_amplitude); }};
    t["lengths"] = {[](auto& c, const auto& v) { c.lengths = parse_sizes("lengths", v); },
                    [](const auto& c) { return join_sizes(c.lengths); }};
    t["seeds"] = {[](auto& c, const auto& v) { c.seeds = parse_uint("seeds", v); },
                  [](const auto& c) { return std::to_string(c.seeds); }};
    t["precision_bits"] = {[](auto& c, const auto& v) { c.precision_bits = static_cast<unsigned>(parse_uint("precision_bits", v)); },
                           [](const auto& c) { return std::to_string(c.precision_bits); }};
    t["seed"] = {[](auto& c, const auto& v) { c.seed = parse_uint("seed", v); },
                 [](const auto& c) { return std::to_string(c.seed); }};
    t["dataset_path"] = {[](auto& c, const auto& v) { c.dataset_path = v; }, [](const auto& c) { return c.dataset_path; }};
    t["reference"] = {[](auto& c, const auto& v) { c.reference = v; }, [](const auto& c) { return c.reference; }};
    t["reference_mean"] = {[](auto& c, const auto& v) { c.reference_mean = parse_doubles("reference_mean", v); },
                           [](const auto& c) { return join(c.reference_mean); }};
    t["reference_log_std"] = {[](auto& c, const auto& v) { c.reference_log_std = parse_doubles("reference_log_std", v); },
                              [](const auto& c) { return join(c.reference_log_std); }};
    t["fit_steps"] = {[](auto& c, const auto& v) { c.fit_steps = parse_uint("fit_steps", v); },
                      [](const auto& c) { return std::to_string(c.fit_steps); }};
    t["fit_step_size"] = {[](auto& c, const auto& v) { c.fit_step_size = parse_double("fit_step_size", v); },
                          [](const auto& c) { return format_number(c.fit_step_size); }};
    t["banana_b"] = {[](auto& c, const auto& v) { c.banana_b = parse_double("banana_b", v); },
                     [](const auto& c) { return format_number(c.banana_b); }};
    t["banana_sigma1_sq"] = {[](auto& c, const auto& v) { c.banana_sigma1_sq = parse_double("banana_sigma1_sq", v); },
                             [](const auto& c) { return format_number(c.banana_sigma1_sq); }};
    t["gaussian_dim"] = {[](auto& c, const auto& v) { c.gaussian_dim = parse_uint("gaussian_dim", v); },
                         [](const auto& c) { return std::to_string(c.gaussian_dim); }};
    t["output_dir"] = {[](auto& c, const auto& v) { c.output_dir = v; }, [](const auto& c) { return c.output_dir; }};
    t["delta"] = {[](auto& c, const auto& v) { c.delta = parse_double("delta", v); },
                  [](const auto& c) { return format_number(c.delta); }};
    t["diagnostics"] = {[](auto& c, const auto& v) { c.diagnostics = split_list(v); },
                        [](const auto& c) { return join(c.diagnostics); }};
    t["estimate_m"] = {[](auto& c, const auto& v) { c.estimate_m = parse_bool("estimate_m", v); },
                       [](const auto& c) { return std::string(c.estimate_m ? "true" : "false"); }};
    t["draws"] = {[](auto& c, const auto& v) { c.draws = parse_uint("draws", v); },
                  [](const auto& c) { return std::to_string(c.draws); }};
    t["points"] = {[](auto& c, const auto& v) { c.points = parse_uint("points", v); },
                   [](const auto& c) { return std::to_string(c.points); }};
    t["test_functions"] = {[](auto& c, const auto& v) { c.test_functions = split_list(v); },
                           [](const auto& c) { return join(c.test_functions); }};
    t["scaling_factors"] = {[](auto& c, const auto& v) { c.scaling_factors = parse_doubles("scaling_factors", v); },
                            [](const auto& c) { return join(c.scaling_factors); }};
    t["plot"] = {[](auto& c, const auto& v) { c.plot = parse_bool("plot", v); },
                 [](const auto& c) { return std::string(c.plot ? "true" : "false"); }};
    t["csv_schema_version"] = {[](auto&, const auto& v) {
                                 if (parse_uint("csv_schema_version", v) != kCsvSchemaVersion)
                                   throw ConfigError("unsupported csv_schema_version " + v);
                               },
                               [](const auto&) { return std::to_string(kCsvSchemaVersion); }};
    return t;
  }();
  return table;
}

std::vector<std::size_t> default_lengths(const std::string& experiment, bool paper) {
  if (experiment == "orbit-error") return parse_sizes("lengths", paper ? "1..300" : "1..100");
  if (experiment == "delta") return {paper ? 300u : 100u};
  if (experiment == "shadow-window")
    return paper ? std::vector<std::size_t>{10, 50, 100, 200, 400, 600, 800, 1000, 1200}
                 : std::vector<std::size_t>{10, 20, 50, 100, 150, 200};
  if (experiment == "sampling-error" || experiment == "density-error")
    return paper ? std::vector<std::size_t>{100, 200, 500, 1000} : std::vector<std::size_t>{100, 200};
  if (experiment == "elbo-curve")
    return paper ? std::vector<std::size_t>{50, 100, 200, 400, 600, 800, 1000} : std::vector<std::size_t>{50, 100, 200};
  if (experiment == "inversion-check") return {100};
  if (experiment == "oracle-check") return {1, 2, 3, 10, 100};
  throw ConfigError("unknown experiment '" + experiment + "'");
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"orbit-error",    "delta",         "shadow-window",   "sampling-error",
                                                 "density-error",  "elbo-curve",    "inversion-check", "oracle-check"};
  return names;
}

void ExperimentConfig::apply_paper_scale() {
  seeds = experiment == "elbo-curve" ? 200 : 100;
  precision_bits = 2048;
  lengths = default_lengths(experiment, true);
  if (experiment == "sampling-error") draws = 2000;
  if (experiment == "density-error") points = 100;
}

void ExperimentConfig::resolve() {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end())
    throw ConfigError("unknown experiment '" + experiment + "'");
  if (lengths.empty()) lengths = default_lengths(experiment, false);
  for (const auto n : lengths)
    if (n == 0) throw ConfigError("lengths must be positive");
  if (seeds == 0) throw ConfigError("seeds must be at least 1");
  if (precision_bits < 128) throw ConfigError("precision_bits must be at least 128");
  if (reference != "fit" && reference != "inline") throw ConfigError("reference must be 'fit' or 'inline'");
  if (reference == "inline" && (reference_mean.empty() || reference_mean.size() != reference_log_std.size()))
    throw ConfigError("inline reference needs reference_mean and reference_log_std of equal length");
  for (const auto& d : diagnostics) {
    try {
      parse_diagnostic_kind(d);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& f : test_functions) {
    try {
      parse_test_function(f);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (!(delta > 0.0)) throw ConfigError("delta must be positive");
  if (draws == 0 || points == 0) throw ConfigError("draws and points must be positive");
  if (experiment == "oracle-check" && scaling_factors.empty()) throw ConfigError("scaling_factors must be nonempty");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [key, handler] : key_table()) out += key + " = " + handler.get(*this) + "\n";
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const auto& table = key_table();
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (value.empty()) continue;
    it->second.set(cfg, value);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void ResultTable::add_row(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw std::invalid_argument("ResultTable: row width does not match the columns");
  rows.push_back(std::move(row));
}

std::size_t ResultTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("ResultTable: no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double ResultTable::number(std::size_t row, const std::string& column) const {
  const auto& cell = rows.at(row).at(column_index(column));
  if (const auto* d = std::get_if<double>(&cell)) return *d;
  throw std::invalid_argument("ResultTable: column '" + column + "' is not numeric");
}

std::string ResultTable::text(std::size_t row, const std::string& column) const {
  const auto& cell = rows.at(row).at(column_index(column));
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  return format_number(std::get<double>(cell));
}

std::string ResultTable::to_csv() const {
  std::string out = join(columns) + "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      if (const auto* d = std::get_if<double>(&row[i]))
        out += format_number(*d);
      else
        out += std::get<std::string>(row[i]);
    }
    out += '\n';
  }
  return out;
}

ResultTable ResultTable::from_csv(const std::string& text) {
  ResultTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV has no header row");
  for (const auto& c : split_list(line)) t.columns.push_back(c);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<Cell> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (!cell.empty() && end == cell.c_str() + cell.size())
        row.emplace_back(v);
      else
        row.emplace_back(cell);
    }
    if (row.size() != t.columns.size()) throw std::invalid_argument("CSV row width does not match the header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SHADOWFLOW_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::shared_ptr<const TargetModel> make_target(const ExperimentConfig& cfg) {
  if (cfg.target == "banana") return banana_target(cfg.banana_b, cfg.banana_sigma1_sq);
  if (cfg.target == "cross") return cross_target();
  if (cfg.target == "gaussian") return gaussian_target(DiagGaussian::standard(cfg.gaussian_dim));
  if (cfg.target == "linreg" || cfg.target == "logreg") {
    if (cfg.dataset_path.empty()) throw ConfigError("target '" + cfg.target + "' needs dataset_path");
    const auto desc = cfg.target == "linreg" ? DatasetDescriptor::boston_housing() : DatasetDescriptor::bank_marketing();
    const auto data = load_regression_dataset(cfg.dataset_path, desc);
    return cfg.target == "linreg" ? linreg_target(data) : logreg_target(data);
  }
  throw ConfigError("unknown target '" + cfg.target + "'");
}

ExperimentSetup make_setup(const ExperimentConfig& cfg) {
  ExperimentSetup s;
  s.target = make_target(cfg);
  s.augmented = std::make_shared<AugmentedTarget>(s.target);
  LeapfrogSettings lf = cfg.target == "gaussian" ? LeapfrogSettings{20, 0.1} : default_leapfrog_settings(cfg.target);
  if (cfg.leapfrog_steps) lf.steps = *cfg.leapfrog_steps;
  if (cfg.step_size) lf.step_size = *cfg.step_size;
  RefreshParams refresh{cfg.refresh_weights, cfg.refresh_phase, cfg.refresh_offset, cfg.refresh_amplitude};
  s.map = std::make_shared<MixFlowMap>(s.target, lf, refresh);

  const std::size_t d = s.target->dimension();
  DiagGaussian ref;
  if (cfg.reference == "inline") {
    if (cfg.reference_mean.size() != d) throw ConfigError("inline reference has the wrong dimension");
    ref = DiagGaussian(cfg.reference_mean, cfg.reference_log_std);
  } else {
    MeanFieldConfig fit;
    fit.steps = cfg.fit_steps;
    fit.step_size = cfg.fit_step_size;
    auto rng = make_rng(cfg.seed, kFitStream);
    ref = fit_meanfield_reference(*s.target, fit, rng);
  }
  s.reference = ref.augmented();
  return s;
}

namespace {

RngStream seed_stream(const ExperimentConfig& cfg, std::size_t s) { return make_rng(cfg.seed, s); }

std::size_t max_length(const ExperimentConfig& cfg) {
  return *std::max_element(cfg.lengths.begin(), cfg.lengths.end());
}

double relative_error(double numerical, double exact) {
  return std::abs(numerical - exact) / std::max(std::abs(exact), 1e-12);
}

ResultTable orbit_error(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const std::size_t n = max_length(cfg);
  const auto sys = FlowSystem::repeated(setup.map, n);
  const auto prec = PrecisionSpec::extended(cfg.precision_bits);
  std::vector<std::vector<double>> fwd(cfg.seeds), bwd(cfg.seeds);
  std::vector<char> failed(cfg.seeds, 0);
  parallel_for(cfg.seeds, [&](std::size_t s) {
    auto rng = seed_stream(cfg, s);
    const auto z = setup.reference.sample(rng);
    try {
      fwd[s] = orbit_deviation(forward_orbit(sys, z, n, prec), forward_orbit(sys, z, n));
      bwd[s] = orbit_deviation(backward_orbit(sys, z, n, prec), backward_orbit(sys, z, n));
    } catch (const NonFiniteError&) {
      failed[s] = 1;
    }
  });
  const auto failures = static_cast<double>(std::count(failed.begin(), failed.end(), 1));
  ResultTable t;
  t.columns = {"k", "median_fwd", "q25_fwd", "q75_fwd", "median_bwd", "q25_bwd", "q75_bwd", "failures"};
  for (const std::size_t k : cfg.lengths) {
    std::vector<double> f, b;
    for (std::size_t s = 0; s < cfg.seeds; ++s)
      if (!failed[s]) {
        f.push_back(fwd[s][k]);
        b.push_back(bwd[s][k]);
      }
    if (f.empty()) {
      t.add_row({double(k), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, failures});
      continue;
    }
    t.add_row({double(k), median(f), quantile(f, 0.25), quantile(f, 0.75), median(b), quantile(b, 0.25),
               quantile(b, 0.75), failures});
  }
  return t;
}

ResultTable delta_experiment(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const auto prec = PrecisionSpec::extended(cfg.precision_bits);
  auto rng = make_rng(cfg.seed, kDrawStream);
  std::vector<Point<double>> inputs;
  for (std::size_t i = 0; i < cfg.draws; ++i) inputs.push_back(setup.reference.sample(rng));

  ResultTable t;
  t.columns = {"source", "count", "median", "q25", "q75", "max", "mean"};
  auto add = [&](const std::string& source, const std::vector<double>& errors) {
    const auto s = summarize(errors);
    t.add_row({source, double(s.count), s.median, s.q25, s.q75, s.max, s.mean});
  };

  // Along exact trajectories, per the single-step convention.
  const std::size_t n = max_length(cfg);
  const auto sys = FlowSystem::repeated(setup.map, n);
  std::vector<std::vector<double>> traj_b(cfg.seeds), traj_f(cfg.seeds);
  parallel_for(cfg.seeds, [&](std::size_t s) {
    auto r = seed_stream(cfg, s);
    const auto z = setup.reference.sample(r);
    traj_f[s] = single_step_errors(sys, forward_orbit(sys, z, n, prec));
    traj_b[s] = single_step_errors(sys, backward_orbit(sys, z, n, prec));
  });
  std::vector<double> all_b, all_f;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    all_b.insert(all_b.end(), traj_b[s].begin(), traj_b[s].end());
    all_f.insert(all_f.end(), traj_f[s].begin(), traj_f[s].end());
  }
  add("backward-iid", single_application_errors(*setup.map, inputs, Direction::Backward, prec));
  add("backward-trajectory", all_b);
  add("forward-iid", single_application_errors(*setup.map, inputs, Direction::Forward, prec));
  add("forward-trajectory", all_f);
  return t;
}

ResultTable shadow_window(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const std::size_t n_max = max_length(cfg);
  const auto sys = FlowSystem::repeated(setup.map, n_max);
  std::vector<DiagnosticKind> kinds;
  for (const auto& d : cfg.diagnostics) kinds.push_back(parse_diagnostic_kind(d));
  std::sort(kinds.begin(), kinds.end());
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());

  struct SeedResult {
    bool failed = false;
    std::map<std::pair<int, std::size_t>, std::pair<double, double>> eps_lambda;  // (kind, N) -> (eps, lambda_min)
    std::map<std::pair<int, std::size_t>, double> curvature;
  };
  std::vector<SeedResult> results(cfg.seeds);
  parallel_for(cfg.seeds, [&](std::size_t s) {
    auto rng = seed_stream(cfg, s);
    const auto z = setup.reference.sample(rng);
    auto& res = results[s];
    try {
      const auto fw = forward_orbit(sys, z, n_max);
      const auto bw = backward_orbit(sys, z, n_max);
      for (const auto kind : kinds) {
        const BlockSequence all = kind == DiagnosticKind::Forward    ? assemble_blocks(sys, fw)
                                  : kind == DiagnosticKind::Backward ? assemble_blocks(sys, bw)
                                                                     : assemble_joint_blocks(sys, bw, fw);
        for (const std::size_t n : cfg.lengths) {
          const auto seq = kind == DiagnosticKind::Joint ? all.slice(n_max - n, 2 * n) : all.slice(0, n);
          const double lm = lambda_min_blocktridiag(seq);
          const double eps = shadowing_window(lm, cfg.delta);
          res.eps_lambda[{int(kind), n}] = {eps, lm};
          if (cfg.estimate_m && kind != DiagnosticKind::Joint) {
            const auto& trace = kind == DiagnosticKind::Forward ? fw : bw;
            OrbitTrace<double> head = trace;
            head.states.resize(n + 1);
            head.log_dets.resize(n);
            res.curvature[{int(kind), n}] = estimate_M(sys, head, eps);
          }
        }
      }
    } catch (const std::exception&) {
      res.failed = true;
    }
  });

  ResultTable t;
  t.columns = {"N", "diagnostic", "median_epsilon", "q25_epsilon", "q75_epsilon", "median_lambda_min"};
  if (cfg.estimate_m) t.columns.insert(t.columns.end(), {"median_M", "existence_ok_fraction"});
  t.columns.push_back("failures");
  double failures = 0;
  for (const auto& r : results) failures += r.failed ? 1 : 0;
  for (const std::size_t n : cfg.lengths) {
    for (const auto kind : kinds) {
      std::vector<double> eps, lm, ms;
      double ok = 0;
      for (const auto& r : results) {
        if (r.failed) continue;
        const auto [e, l] = r.eps_lambda.at({int(kind), n});
        eps.push_back(e);
        lm.push_back(l);
        if (auto it = r.curvature.find({int(kind), n}); it != r.curvature.end()) {
          ms.push_back(it->second);
          ok += check_existence(it->second, 1.0 / std::sqrt(l), cfg.delta).ok ? 1 : 0;
        }
      }
      std::vector<Cell> row{double(n), std::string(to_string(kind))};
      if (eps.empty()) {
        row.insert(row.end(), {kNaN, kNaN, kNaN, kNaN});
        if (cfg.estimate_m) row.insert(row.end(), {kNaN, kNaN});
      } else {
        row.insert(row.end(), {median(eps), quantile(eps, 0.25), quantile(eps, 0.75), median(lm)});
        if (cfg.estimate_m) row.insert(row.end(), {median(ms), ok / double(ms.size())});
      }
      row.emplace_back(failures);
      t.add_row(std::move(row));
    }
  }
  return t;
}

ResultTable sampling_error(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const auto prec = PrecisionSpec::extended(cfg.precision_bits);
  const std::size_t d = setup.target->dimension();
  ResultTable t;
  t.columns = {"N", "function", "numerical", "exact", "rel_error", "stderr"};
  for (const std::size_t n : cfg.lengths) {
    const MixFlowModel model(setup.map, setup.reference, n);
    // Independent chunks with their own streams keep the run deterministic
    // under any worker count.
    const std::size_t chunks = std::min<std::size_t>(cfg.draws, 64);
    std::vector<std::vector<Point<double>>> num(chunks), ex(chunks);
    parallel_for(chunks, [&](std::size_t c) {
      const std::size_t count = cfg.draws / chunks + (c < cfg.draws % chunks ? 1 : 0);
      auto r1 = make_rng(cfg.seed, kDrawStream + n).split(c);
      auto r2 = r1;
      num[c] = sample_mixflow(model, r1, count);
      ex[c] = sample_mixflow(model, r2, count, prec);
    });
    std::vector<Point<double>> all_num, all_ex;
    for (std::size_t c = 0; c < chunks; ++c) {
      all_num.insert(all_num.end(), num[c].begin(), num[c].end());
      all_ex.insert(all_ex.end(), ex[c].begin(), ex[c].end());
    }
    for (const auto& name : cfg.test_functions) {
      const auto fn = parse_test_function(name);
      const double a = sample_average(all_num, fn, d);
      const double b = sample_average(all_ex, fn, d);
      std::vector<double> values;
      for (const auto& x : all_num) values.push_back(evaluate_test_function(fn, std::span<const double>(x).first(d)));
      t.add_row({double(n), name, a, b, relative_error(a, b), standard_error(values)});
    }
  }
  return t;
}

ResultTable density_error(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const auto prec = PrecisionSpec::extended(cfg.precision_bits);
  ResultTable t;
  t.columns = {"N", "point", "numerical", "exact", "abs_error", "rel_error"};
  for (const std::size_t n : cfg.lengths) {
    const MixFlowModel model(setup.map, setup.reference, n);
    auto rng = make_rng(cfg.seed, kPointStream + n);
    const auto pts = sample_mixflow(model, rng, cfg.points);
    std::vector<double> num(pts.size()), ex(pts.size());
    parallel_for(pts.size(), [&](std::size_t i) {
      num[i] = mixflow_log_density(model, pts[i]);
      ex[i] = mixflow_log_density(model, pts[i], prec);
    });
    for (std::size_t i = 0; i < pts.size(); ++i)
      t.add_row({double(n), double(i), num[i], ex[i], std::abs(num[i] - ex[i]), relative_error(num[i], ex[i])});
  }
  return t;
}

ResultTable elbo_curve(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const auto prec = PrecisionSpec::extended(cfg.precision_bits);
  const MixFlowModel model(setup.map, setup.reference, max_length(cfg));
  std::vector<std::vector<double>> num(cfg.seeds), ex(cfg.seeds);
  std::vector<char> failed(cfg.seeds, 0);
  parallel_for(cfg.seeds, [&](std::size_t s) {
    auto rng = seed_stream(cfg, s);
    const auto z = setup.reference.sample(rng);
    try {
      num[s] = mixflow_elbo_curve(model, *setup.augmented, z, cfg.lengths);
      ex[s] = mixflow_elbo_curve(model, *setup.augmented, z, cfg.lengths, prec);
    } catch (const NonFiniteError&) {
      failed[s] = 1;
    }
  });
  const auto failures = static_cast<double>(std::count(failed.begin(), failed.end(), 1));
  ResultTable t;
  t.columns = {"N", "numerical_mean", "exact_mean", "numerical_stderr", "exact_stderr", "abs_gap", "rel_gap", "failures"};
  for (std::size_t j = 0; j < cfg.lengths.size(); ++j) {
    std::vector<double> a, b;
    for (std::size_t s = 0; s < cfg.seeds; ++s)
      if (!failed[s]) {
        a.push_back(num[s][j]);
        b.push_back(ex[s][j]);
      }
    if (a.empty()) {
      t.add_row({double(cfg.lengths[j]), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, failures});
      continue;
    }
    const double ma = mean(a), mb = mean(b);
    t.add_row({double(cfg.lengths[j]), ma, mb, standard_error(a), standard_error(b), std::abs(ma - mb),
               relative_error(ma, mb), failures});
  }
  return t;
}

ResultTable inversion_check(const ExperimentConfig& cfg) {
  const auto setup = make_setup(cfg);
  const auto prec = PrecisionSpec::extended(cfg.precision_bits);
  const std::size_t n_max = max_length(cfg);
  const auto sys = FlowSystem::repeated(setup.map, n_max);
  struct Row {
    std::size_t seed, n;
    double exact, log10_exact, numerical;
  };
  std::vector<std::vector<Row>> rows(cfg.seeds);
  parallel_for(cfg.seeds, [&](std::size_t s) {
    auto rng = seed_stream(cfg, s);
    const auto z = setup.reference.sample(rng);
    PrecisionScope scope(prec.mantissa_bits);
    const auto zx = promote(z, prec);
    for (const std::size_t n : cfg.lengths) {
      const auto fw = forward_orbit(sys, zx, n);
      const auto back = backward_orbit(FlowSystem::repeated(setup.map, n), fw.states.back(), n);
      const BigFloat err = distance<BigFloat>(back.states.back(), zx);
      const double log10_err = err.is_zero() ? -std::numeric_limits<double>::infinity()
                                             : (log(err) / log(BigFloat(10.0))).to_double();
      const auto fd = forward_orbit(sys, z, n);
      const auto bd = backward_orbit(FlowSystem::repeated(setup.map, n), fd.states.back(), n);
      rows[s].push_back({s, n, err.to_double(), log10_err, distance<double>(bd.states.back(), z)});
    }
  });
  ResultTable t;
  t.columns = {"seed", "N", "error_exact", "log10_error_exact", "error_numerical"};
  for (const auto& per_seed : rows)
    for (const auto& r : per_seed) t.add_row({double(r.seed), double(r.n), r.exact, r.log10_exact, r.numerical});
  return t;
}

ResultTable oracle_check(const ExperimentConfig& cfg) {
  ResultTable t;
  t.columns = {"map", "factor", "N", "delta", "epsilon_diagnostic", "epsilon_closed_form", "rel_error"};
  for (const double c : cfg.scaling_factors) {
    for (const std::size_t n : cfg.lengths) {
      const auto sys = FlowSystem::repeated(AffineLayer::scaling(1, c), n);
      const Point<double> x{1.0};
      const auto seq = assemble_blocks(sys, forward_orbit(sys, x, n));
      const double eps = shadowing_window(lambda_min_blocktridiag(seq), cfg.delta);
      const double closed = scaling_map_epsilon(c, n, cfg.delta);
      t.add_row({std::string("scaling"), c, double(n), cfg.delta, eps, closed, std::abs(eps - closed) / closed});
    }
  }
  // diag(c, 1/c) with c < 1: uniformly hyperbolic; the closed form is the
  // infinite-orbit bound, so rel_error here is informative only.
  for (const double c : cfg.scaling_factors) {
    if (!(c > 0.0 && c < 1.0)) continue;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = c;
    a(1, 1) = 1.0 / c;
    for (const std::size_t n : cfg.lengths) {
      const auto sys = FlowSystem::repeated(AffineLayer::linear(a), n);
      const Point<double> x{1.0, 1.0};
      const auto seq = assemble_blocks(sys, forward_orbit(sys, x, n));
      const double eps = shadowing_window(lambda_min_blocktridiag(seq), cfg.delta);
      const double closed = hyperbolic_epsilon(c, cfg.delta);
      t.add_row({std::string("hyperbolic"), c, double(n), cfg.delta, eps, closed, std::abs(eps - closed) / closed});
    }
  }
  return t;
}

}  // namespace

ResultTable compute_experiment(const ExperimentConfig& input) {
  ExperimentConfig cfg = input;
  cfg.resolve();
  if (cfg.experiment == "orbit-error") return orbit_error(cfg);
  if (cfg.experiment == "delta") return delta_experiment(cfg);
  if (cfg.experiment == "shadow-window") return shadow_window(cfg);
  if (cfg.experiment == "sampling-error") return sampling_error(cfg);
  if (cfg.experiment == "density-error") return density_error(cfg);
  if (cfg.experiment == "elbo-curve") return elbo_curve(cfg);
  if (cfg.experiment == "inversion-check") return inversion_check(cfg);
  return oracle_check(cfg);
}

ExperimentOutput run_experiment(const ExperimentConfig& input) {
  ExperimentConfig cfg = input;
  cfg.resolve();
  ExperimentOutput out;
  out.table = compute_experiment(cfg);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  out.csv = dir / (cfg.experiment + ".csv");
  out.manifest = dir / (cfg.experiment + ".manifest");
  {
    std::ofstream f(out.csv, std::ios::binary);
    f << out.table.to_csv();
    if (!f) throw std::runtime_error("cannot write " + out.csv.string());
  }
  {
    std::ofstream f(out.manifest, std::ios::binary);
    f << "# shadowflow manifest: rerun with `shadowflow " << cfg.experiment << " --config " << out.manifest.filename().string()
      << "`\n"
      << "# columns: " << join(out.table.columns) << "\n"
      << cfg.to_text();
    if (!f) throw std::runtime_error("cannot write " + out.manifest.string());
  }
  if (cfg.plot) {
    const auto svg = dir / (cfg.experiment + ".svg");
    emit_plot(out.csv, default_plot_spec(cfg.experiment), svg);
    out.plot = svg;
  }
  return out;
}

}  // namespace shadowflow
