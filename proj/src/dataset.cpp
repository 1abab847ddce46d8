#include "shadowflow/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace shadowflow {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (c == delim && !quoted) {
      cells.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

}  // namespace

DatasetDescriptor DatasetDescriptor::boston_housing() {
  DatasetDescriptor d;
  d.name = "boston";
  d.response_column = "MEDV";
  d.feature_columns = {"CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE", "DIS", "RAD", "TAX", "PTRATIO", "B", "LSTAT"};
  return d;
}

DatasetDescriptor DatasetDescriptor::bank_marketing() {
  DatasetDescriptor d;
  d.name = "bank";
  d.response_column = "y";
  d.feature_columns = {"age", "marital", "balance", "housing", "duration", "campaign", "pdays", "previous"};
  d.categorical["marital"] = {{"married", 1.0}, {"single", 0.0}, {"divorced", 0.0}};
  d.categorical["housing"] = {{"no", 0.0}, {"yes", 1.0}};
  d.categorical["y"] = {{"no", 0.0}, {"yes", 1.0}};
  d.max_rows = 400;
  d.standardize_response = false;
  return d;
}

void standardize(Dataset& data, bool standardize_response) {
  const Eigen::Index n = data.features.rows();
  if (n == 0) return;
  data.feature_means.assign(data.columns(), 0.0);
  data.feature_stds.assign(data.columns(), 1.0);
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    auto col = data.features.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    if (!(sd > 0.0)) {
      const auto idx = static_cast<std::size_t>(c);
      throw DatasetError("column '" + (idx < data.feature_names.size() ? data.feature_names[idx] : std::to_string(c)) +
                         "' is constant and cannot be standardized");
    }
    col /= sd;
    data.feature_means[static_cast<std::size_t>(c)] = mean;
    data.feature_stds[static_cast<std::size_t>(c)] = sd;
  }
  if (standardize_response) {
    const double mean = data.responses.mean();
    data.responses.array() -= mean;
    const double sd = std::sqrt(data.responses.squaredNorm() / static_cast<double>(n));
    if (!(sd > 0.0)) throw DatasetError("response column is constant");
    data.responses /= sd;
    data.response_mean = mean;
    data.response_std = sd;
  }
}

Dataset load_regression_dataset(const std::filesystem::path& path, const DatasetDescriptor& desc) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line)) throw DatasetError(path.string() + ": missing header row");
  const char delim = std::count(header_line.begin(), header_line.end(), ';') >
                             std::count(header_line.begin(), header_line.end(), ',')
                         ? ';'
                         : ',';
  const auto header = split_csv_line(header_line, delim);

  auto find_column = [&](const std::string& want) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (lower(header[i]) == lower(want)) return i;
    throw DatasetError(path.string() + ": schema mismatch, no column '" + want + "'");
  };

  std::vector<std::string> used = desc.feature_columns;
  used.push_back(desc.response_column);
  std::vector<std::size_t> index;
  for (const auto& name : used) index.push_back(find_column(name));

  auto categorical_for = [&](const std::string& name) -> const std::map<std::string, double>* {
    for (const auto& [col, codes] : desc.categorical)
      if (lower(col) == lower(name)) return &codes;
    return nullptr;
  };

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line, delim);
    if (cells.size() != header.size())
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    bool missing = false;
    for (std::size_t k = 0; k < used.size(); ++k)
      if (lower(cells[index[k]]) == lower(desc.missing_token)) missing = true;
    if (missing) continue;

    std::vector<double> row;
    row.reserve(used.size());
    for (std::size_t k = 0; k < used.size(); ++k) {
      const std::string& cell = cells[index[k]];
      if (const auto* codes = categorical_for(used[k])) {
        auto it = codes->find(lower(cell));
        if (it == codes->end())
          throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": unexpected value '" + cell +
                             "' in column '" + used[k] + "'");
        row.push_back(it->second);
      } else if (auto v = parse_number(cell)) {
        row.push_back(*v);
      } else {
        throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell +
                           "' in column '" + used[k] + "'");
      }
    }
    rows.push_back(std::move(row));
    if (desc.max_rows && rows.size() == *desc.max_rows) break;
  }
  if (desc.max_rows && rows.size() < *desc.max_rows)
    throw DatasetError(path.string() + ": only " + std::to_string(rows.size()) + " usable rows, need " +
                       std::to_string(*desc.max_rows));

  Dataset data;
  data.feature_names = desc.feature_columns;
  data.response_name = desc.response_column;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(desc.feature_columns.size());
  data.features.resize(n, p);
  data.responses.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < p; ++c) data.features(r, c) = row[static_cast<std::size_t>(c)];
    data.responses(r) = row.back();
  }
  standardize(data, desc.standardize_response);
  return data;
}

}  // namespace shadowflow
