#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <variant>

#include "shadowflow/experiments.hpp"
#include "shadowflow/orbit.hpp"
#include "shadowflow/shadowing.hpp"

namespace py = pybind11;
using namespace shadowflow;

namespace {

PrecisionSpec spec_from(std::optional<unsigned> bits) {
  return bits ? PrecisionSpec::extended(*bits) : PrecisionSpec::standard();
}

BlockSequence to_sequence(const std::vector<Eigen::MatrixXd>& blocks) {
  BlockSequence seq;
  seq.blocks = blocks;
  return seq;
}

Eigen::MatrixXd stack(const std::vector<Point<double>>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

Point<double> to_point(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

/// Column name -> list of cells (floats or strings).
py::dict table_to_dict(const ResultTable& t) {
  py::dict out;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    py::list col;
    for (const auto& row : t.rows) std::visit([&](const auto& v) { col.append(v); }, row[c]);
    out[py::str(t.columns[c])] = col;
  }
  return out;
}

ExperimentConfig config_from(const std::string& text, bool paper_scale) {
  auto cfg = parse_config(text);
  if (paper_scale) cfg.apply_paper_scale();
  cfg.resolve();
  return cfg;
}

/// A fitted MixFlow for one target, as used by the experiments.
class PyMixFlow {
 public:
  explicit PyMixFlow(const std::string& config_text) : setup_(build(config_text)) {}

  std::size_t dimension() const { return setup_.map->dimension(); }
  Eigen::VectorXd reference_mean() const {
    return Eigen::Map<const Eigen::VectorXd>(setup_.reference.mean.data(), static_cast<Eigen::Index>(dimension()));
  }
  Eigen::VectorXd reference_log_std() const {
    return Eigen::Map<const Eigen::VectorXd>(setup_.reference.log_std.data(), static_cast<Eigen::Index>(dimension()));
  }

  py::tuple forward(const Eigen::VectorXd& z) const {
    double ld = 0.0;
    const auto y = setup_.map->forward(std::span<const double>(to_point(z)), &ld);
    return py::make_tuple(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())).eval(), ld);
  }
  Eigen::VectorXd inverse(const Eigen::VectorXd& z) const {
    const auto y = setup_.map->inverse(std::span<const double>(to_point(z)));
    return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const { return setup_.map->jacobian(to_point(z)); }

  Eigen::MatrixXd orbit(const Eigen::VectorXd& z, std::size_t n, bool backward, std::optional<unsigned> bits) const {
    const auto sys = FlowSystem::repeated(setup_.map, n);
    const auto x = to_point(z);
    if (!bits) return stack((backward ? backward_orbit(sys, x, n) : forward_orbit(sys, x, n)).states);
    const auto spec = PrecisionSpec::extended(*bits);
    const auto trace = backward ? backward_orbit(sys, x, n, spec) : forward_orbit(sys, x, n, spec);
    std::vector<Point<double>> rows;
    for (const auto& s : trace.states) rows.push_back(demote(s));
    return stack(rows);
  }

  double shadowing_window(const Eigen::VectorXd& z, std::size_t n, const std::string& kind, double delta) const {
    const auto sys = FlowSystem::repeated(setup_.map, n);
    const auto x = to_point(z);
    BlockSequence seq;
    switch (parse_diagnostic_kind(kind)) {
      case DiagnosticKind::Forward: seq = assemble_blocks(sys, forward_orbit(sys, x, n)); break;
      case DiagnosticKind::Backward: seq = assemble_blocks(sys, backward_orbit(sys, x, n)); break;
      case DiagnosticKind::Joint:
        seq = assemble_joint_blocks(sys, backward_orbit(sys, x, n), forward_orbit(sys, x, n));
        break;
    }
    return shadowflow::shadowing_window(lambda_min_blocktridiag(seq), delta);
  }

  Eigen::MatrixXd sample(std::size_t count, std::size_t length, std::uint64_t seed, std::optional<unsigned> bits) const {
    auto rng = make_rng(seed, 0);
    return stack(sample_mixflow(model(length), rng, count, spec_from(bits)));
  }
  double log_density(const Eigen::VectorXd& z, std::size_t length, std::optional<unsigned> bits) const {
    return mixflow_log_density(model(length), to_point(z), spec_from(bits));
  }
  double elbo(const Eigen::VectorXd& z, std::size_t length, std::optional<unsigned> bits) const {
    return mixflow_elbo_estimate(model(length), *setup_.augmented, to_point(z), spec_from(bits));
  }
  double target_log_density(const Eigen::VectorXd& z) const { return setup_.augmented->log_density(to_point(z)); }

 private:
  static ExperimentSetup build(const std::string& text) {
    auto cfg = parse_config(text);
    if (cfg.experiment.empty()) cfg.experiment = "delta";
    cfg.resolve();
    return make_setup(cfg);
  }
  MixFlowModel model(std::size_t length) const { return {setup_.map, setup_.reference, length}; }
  ExperimentSetup setup_;
};

}  // namespace

PYBIND11_MODULE(_shadowflow, m) {
  m.doc() = "Numerical-error diagnostics for normalizing flows and MixFlows";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);

  m.def("experiment_names", &experiment_names);
  m.def(
      "run_experiment",
      [](const std::string& config_text, bool paper_scale) {
        const auto cfg = config_from(config_text, paper_scale);
        ResultTable t;
        {
          py::gil_scoped_release release;
          t = compute_experiment(cfg);
        }
        return table_to_dict(t);
      },
      py::arg("config"), py::arg("paper_scale") = false,
      "Run an experiment from `key = value` config text and return its table as {column: list}.");
  m.def(
      "resolved_config",
      [](const std::string& config_text, bool paper_scale) { return config_from(config_text, paper_scale).to_text(); },
      py::arg("config"), py::arg("paper_scale") = false);

  m.def(
      "lambda_min",
      [](const std::vector<Eigen::MatrixXd>& blocks) { return lambda_min_blocktridiag(to_sequence(blocks)); },
      py::arg("blocks"), "Smallest eigenvalue of A A^T for Jacobian blocks D_1..D_N.");
  m.def(
      "lambda_min_dense",
      [](const std::vector<Eigen::MatrixXd>& blocks) { return lambda_min_dense_oracle(to_sequence(blocks)); },
      py::arg("blocks"));
  m.def("shadowing_window", &shadowflow::shadowing_window, py::arg("lambda_min"), py::arg("delta") = kDefaultDelta);
  m.def("scaling_map_epsilon", &scaling_map_epsilon, py::arg("factor"), py::arg("length"), py::arg("delta") = kDefaultDelta);
  m.def("hyperbolic_epsilon", &hyperbolic_epsilon, py::arg("contraction"), py::arg("delta") = kDefaultDelta);

  py::class_<PyMixFlow>(m, "MixFlow")
      .def(py::init<const std::string&>(), py::arg("config") = "",
           "Target, MixFlow map and fitted reference built from config text (target, leapfrog, refresh, fit keys).")
      .def_property_readonly("dimension", &PyMixFlow::dimension)
      .def_property_readonly("reference_mean", &PyMixFlow::reference_mean)
      .def_property_readonly("reference_log_std", &PyMixFlow::reference_log_std)
      .def("forward", &PyMixFlow::forward, py::arg("z"), "Returns (F(z), log|det grad F(z)|).")
      .def("inverse", &PyMixFlow::inverse, py::arg("z"))
      .def("jacobian", &PyMixFlow::jacobian, py::arg("z"))
      .def("orbit", &PyMixFlow::orbit, py::arg("z"), py::arg("steps"), py::arg("backward") = false,
           py::arg("precision_bits") = std::nullopt, "States x_0..x_n as rows.")
      .def("shadowing_window", &PyMixFlow::shadowing_window, py::arg("z"), py::arg("length"),
           py::arg("kind") = "forward", py::arg("delta") = kDefaultDelta)
      .def("sample", &PyMixFlow::sample, py::arg("count"), py::arg("length"), py::arg("seed") = 0,
           py::arg("precision_bits") = std::nullopt)
      .def("log_density", &PyMixFlow::log_density, py::arg("z"), py::arg("length"), py::arg("precision_bits") = std::nullopt)
      .def("elbo", &PyMixFlow::elbo, py::arg("z"), py::arg("length"), py::arg("precision_bits") = std::nullopt)
      .def("target_log_density", &PyMixFlow::target_log_density, py::arg("z"));
}
