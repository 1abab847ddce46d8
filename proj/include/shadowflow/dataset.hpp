#pragma once

// CSV ingestion for the regression targets.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shadowflow/targets.hpp"

namespace shadowflow {

/// Which columns of a CSV file make up a regression dataset.
struct DatasetDescriptor {
  std::string name;
  std::string response_column;
  std::vector<std::string> feature_columns;
  /// Text-valued columns and their numeric codes.  A cell equal to
  /// missing_token in any used column drops the row.
  std::map<std::string, std::map<std::string, double>> categorical;
  std::string missing_token = "unknown";
  /// Keep only the first max_rows rows (file order) after filtering.
  std::optional<std::size_t> max_rows;
  bool standardize_response = true;

  /// Boston housing: 13 features, response MEDV.
  static DatasetDescriptor boston_housing();
  /// Bank marketing: age, marital, balance, housing, duration, campaign,
  /// pdays, previous; binary response y; first 400 usable rows.
  static DatasetDescriptor bank_marketing();
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a comma- (or semicolon-) separated file with a header row, applies
/// the descriptor, and standardizes every feature column (and the response
/// when requested) to mean 0 and population standard deviation 1.
Dataset load_regression_dataset(const std::filesystem::path& path, const DatasetDescriptor& descriptor);

/// Standardizes columns in place, recording the removed means/stds.
/// Throws DatasetError for a constant column.
void standardize(Dataset& data, bool standardize_response);

}  // namespace shadowflow
