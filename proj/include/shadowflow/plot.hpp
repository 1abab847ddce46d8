#pragma once

// Static SVG line plots of experiment CSVs.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace shadowflow {

struct PlotSeries {
  std::string label;
  std::string y;                  // line column
  std::optional<std::string> lo;  // band columns (e.g. quartiles)
  std::optional<std::string> hi;
  /// Only rows whose `filter_column` cell equals `filter_value` are used.
  std::optional<std::string> filter_column;
  std::string filter_value;
};

struct PlotSpec {
  std::string title;
  std::string x;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Default figure for an experiment's CSV; throws for experiments without one.
PlotSpec default_plot_spec(const std::string& experiment);

/// Renders the CSV at csv_path to svg_path.  Throws (and writes nothing) if
/// the CSV has no rows or lacks a column named in the spec.
void emit_plot(const std::filesystem::path& csv_path, const PlotSpec& spec, const std::filesystem::path& svg_path);

}  // namespace shadowflow
