#include "shadowflow/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "shadowflow/experiments.hpp"

namespace shadowflow {

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 80, kRight = 180, kTop = 40, kBottom = 60;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Axis {
  double lo, hi;
  bool log;

  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo)) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
};

Axis make_axis(std::vector<double> values, bool log) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const double v : values) {
    if (!std::isfinite(v) || (log && v <= 0)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) {
    lo = log ? 1e-1 : 0;
    hi = log ? 1e1 : 1;
  }
  if (log) {
    lo = std::pow(10.0, std::floor(std::log10(lo)));
    hi = std::pow(10.0, std::ceil(std::log10(hi)));
    if (hi <= lo) hi = lo * 10;
  } else {
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return {lo, hi, log};
}

std::vector<double> ticks(const Axis& a) {
  std::vector<double> out;
  if (a.log) {
    const int e0 = static_cast<int>(std::round(std::log10(a.lo)));
    const int e1 = static_cast<int>(std::round(std::log10(a.hi)));
    const int stride = std::max(1, (e1 - e0) / 8);
    for (int e = e0; e <= e1; e += stride) out.push_back(std::pow(10.0, e));
    return out;
  }
  const double raw = (a.hi - a.lo) / 6;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double step = raw / mag < 2 ? 2 * mag : raw / mag < 5 ? 5 * mag : 10 * mag;
  for (double v = std::ceil(a.lo / step) * step; v <= a.hi; v += step) out.push_back(std::abs(v) < 1e-12 * step ? 0 : v);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string tick_label(double v, bool log) {
  char buf[32];
  if (log)
    std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::round(std::log10(v))));
  else
    std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct SeriesData {
  std::vector<double> x, y, lo, hi;
};

SeriesData extract(const ResultTable& t, const PlotSpec& spec, const PlotSeries& s) {
  SeriesData d;
  const auto xi = t.column_index(spec.x);
  const auto yi = t.column_index(s.y);
  const auto li = s.lo ? std::optional(t.column_index(*s.lo)) : std::nullopt;
  const auto hi = s.hi ? std::optional(t.column_index(*s.hi)) : std::nullopt;
  const auto fi = s.filter_column ? std::optional(t.column_index(*s.filter_column)) : std::nullopt;
  auto num = [](const Cell& c) {
    const auto* v = std::get_if<double>(&c);
    return v ? *v : std::numeric_limits<double>::quiet_NaN();
  };
  for (const auto& row : t.rows) {
    if (fi) {
      const auto& c = row[*fi];
      const std::string v = std::holds_alternative<std::string>(c) ? std::get<std::string>(c) : format_number(std::get<double>(c));
      if (v != s.filter_value) continue;
    }
    d.x.push_back(num(row[xi]));
    d.y.push_back(num(row[yi]));
    if (li) d.lo.push_back(num(row[*li]));
    if (hi) d.hi.push_back(num(row[*hi]));
  }
  return d;
}

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0); }

}  // namespace

PlotSpec default_plot_spec(const std::string& experiment) {
  PlotSpec p;
  if (experiment == "orbit-error") {
    p = {"Orbit error vs exact orbit", "k", "number of maps k", "error", false, true, {}};
    p.series.push_back({"forward", "median_fwd", "q25_fwd", "q75_fwd", std::nullopt, ""});
    p.series.push_back({"backward", "median_bwd", "q25_bwd", "q75_bwd", std::nullopt, ""});
  } else if (experiment == "shadow-window") {
    p = {"Shadowing window", "N", "flow length N", "epsilon", true, true, {}};
    for (const char* kind : {"forward", "backward", "joint"})
      p.series.push_back({kind, "median_epsilon", "q25_epsilon", "q75_epsilon", "diagnostic", kind});
  } else if (experiment == "elbo-curve") {
    p = {"ELBO", "N", "flow length N", "ELBO", false, false, {}};
    p.series.push_back({"numerical", "numerical_mean", std::nullopt, std::nullopt, std::nullopt, ""});
    p.series.push_back({"exact", "exact_mean", std::nullopt, std::nullopt, std::nullopt, ""});
  } else if (experiment == "sampling-error") {
    p = {"Sample average relative error", "N", "flow length N", "relative error", false, true, {}};
    for (const char* fn : {"abs", "sin", "sigmoid"}) p.series.push_back({fn, "rel_error", std::nullopt, std::nullopt, "function", fn});
  } else if (experiment == "density-error") {
    p = {"log density relative error", "point", "evaluation point", "relative error", false, true, {}};
    for (const char* n : {"100", "200", "500", "1000"})
      p.series.push_back({std::string("N=") + n, "rel_error", std::nullopt, std::nullopt, "N", n});
  } else if (experiment == "inversion-check") {
    p = {"Round-trip error", "seed", "seed", "log10 error", false, false, {}};
    p.series.push_back({"exact", "log10_error_exact", std::nullopt, std::nullopt, std::nullopt, ""});
  } else if (experiment == "oracle-check") {
    p = {"Scaling map window", "N", "N", "epsilon", true, true, {}};
    p.series.push_back({"diagnostic", "epsilon_diagnostic", std::nullopt, std::nullopt, "map", "scaling"});
    p.series.push_back({"closed form", "epsilon_closed_form", std::nullopt, std::nullopt, "map", "scaling"});
  } else {
    throw std::invalid_argument("no plot for experiment '" + experiment + "'");
  }
  return p;
}

void emit_plot(const std::filesystem::path& csv_path, const PlotSpec& spec, const std::filesystem::path& svg_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot read " + csv_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto table = ResultTable::from_csv(ss.str());
  if (table.rows.empty()) throw std::runtime_error("plot: " + csv_path.string() + " has no rows");

  std::vector<SeriesData> data;
  std::vector<double> xs, ys;
  for (const auto& s : spec.series) {
    data.push_back(extract(table, spec, s));  // throws on a missing column
    const auto& d = data.back();
    xs.insert(xs.end(), d.x.begin(), d.x.end());
    ys.insert(ys.end(), d.y.begin(), d.y.end());
    ys.insert(ys.end(), d.lo.begin(), d.lo.end());
    ys.insert(ys.end(), d.hi.begin(), d.hi.end());
  }
  const Axis ax = make_axis(xs, spec.log_x), ay = make_axis(ys, spec.log_y);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title)
      << "</text>\n";
  for (const double t : ticks(ax)) {
    const double px = ax.map(t, x0, x1);
    svg << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y1)
        << "\" stroke=\"#eee\"/>\n<text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 16) << "\" text-anchor=\"middle\">"
        << tick_label(t, ax.log) << "</text>\n";
  }
  for (const double t : ticks(ay)) {
    const double py = ay.map(t, y0, y1);
    svg << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x1) << "\" y2=\"" << fmt(py)
        << "\" stroke=\"#eee\"/>\n<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(py + 4) << "\" text-anchor=\"end\">"
        << tick_label(t, ay.log) << "</text>\n";
  }
  svg << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0) << "\" height=\"" << fmt(y0 - y1)
      << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 18) << "\" text-anchor=\"middle\">"
      << escape(spec.x_label) << "</text>\n"
      << "<text transform=\"translate(20," << fmt((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(spec.y_label) << "</text>\n";

  std::size_t legend = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    if (d.x.empty()) continue;
    const char* color = kColors[i % std::size(kColors)];
    if (!d.lo.empty() && !d.hi.empty()) {
      std::string upper, lower;
      for (std::size_t j = 0; j < d.x.size(); ++j) {
        if (!usable(d.x[j], ax.log) || !usable(d.lo[j], ay.log) || !usable(d.hi[j], ay.log)) continue;
        upper += fmt(ax.map(d.x[j], x0, x1)) + "," + fmt(ay.map(d.hi[j], y0, y1)) + " ";
        lower = fmt(ax.map(d.x[j], x0, x1)) + "," + fmt(ay.map(d.lo[j], y0, y1)) + " " + lower;
      }
      if (!upper.empty())
        svg << "<polygon points=\"" << upper << lower << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t j = 0; j < d.x.size(); ++j)
      if (usable(d.x[j], ax.log) && usable(d.y[j], ay.log))
        pts += fmt(ax.map(d.x[j], x0, x1)) + "," + fmt(ay.map(d.y[j], y0, y1)) + " ";
    svg << "<polyline points=\"" << pts << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\"/>\n";
    const double ly = y1 + 10 + 20 * static_cast<double>(legend++);
    svg << "<line x1=\"" << fmt(x1 + 14) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(x1 + 38) << "\" y2=\"" << fmt(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n<text x=\"" << fmt(x1 + 44) << "\" y=\"" << fmt(ly + 4)
        << "\">" << escape(spec.series[i].label) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(svg_path, std::ios::binary);
  out << svg.str();
  if (!out) throw std::runtime_error("cannot write " + svg_path.string());
}

}  // namespace shadowflow
