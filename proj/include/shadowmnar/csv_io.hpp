#pragma once

#include "shadowmnar/dataset.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace shadow {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws ConfigError if absent.
  std::size_t column(const std::string& name) const;
};

/// RFC 4180 reader: comma separated, optional double-quoted fields with
/// "" escapes, CRLF or LF line ends. The first record is the header.
CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

struct ColumnMapping {
  std::string outcome;
  std::string shadow;
  std::vector<std::string> covariates;
  /// Optional 0/1 response column; otherwise missingness is read off the outcome.
  std::optional<std::string> missing_indicator;
  /// Outcome text treated as missing in addition to the empty field.
  std::string na_token;
};

/// Builds a dataset from a CSV file. Missing shadow or covariate entries
/// and unparseable numbers throw DataError naming rows and columns.
ShadowDataset ingest_csv(const std::filesystem::path& path, const ColumnMapping& columns);
ShadowDataset ingest_table(const CsvTable& table, const ColumnMapping& columns);

/// Writes covariates, shadow and outcome (empty where missing); with
/// `y_full` an extra `<outcome>_full` column holds the pre-deletion outcome.
void write_dataset_csv(const ShadowDataset& data, const std::filesystem::path& path,
                       const Eigen::VectorXd* y_full = nullptr);

}  // namespace shadow
