#include "shadowmnar/csv_io.hpp"

#include "shadowmnar/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace shadow {

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("column '" + name + "' not found in CSV header");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  bool any = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record.front().empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field in CSV input");
  if (any && (field_started || !record.empty())) end_record();

  if (records.empty()) throw DataError("CSV input has no header row");
  CsvTable table;
  table.header = std::move(records.front());
  for (auto& h : table.header) {
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.back()))) h.pop_back();
    while (!h.empty() && std::isspace(static_cast<unsigned char>(h.front()))) h.erase(h.begin());
  }
  table.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_csv(in);
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) out << ',';
    const std::string& f = fields[k];
    if (f.find_first_of(",\"\r\n") != std::string::npos) {
      out << '"';
      for (char c : f) {
        if (c == '"') out << '"';
        out << c;
      }
      out << '"';
    } else {
      out << f;
    }
  }
  out << '\n';
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trimmed(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::optional<double> parse_number(const std::string& text) {
  const std::string t = trimmed(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string row_list(const std::vector<std::size_t>& rows) {
  std::string out;
  for (std::size_t k = 0; k < rows.size() && k < 20; ++k) {
    if (k) out += ", ";
    out += std::to_string(rows[k]);
  }
  if (rows.size() > 20) out += ", ... (" + std::to_string(rows.size()) + " rows)";
  return out;
}

}  // namespace

ShadowDataset ingest_table(const CsvTable& table, const ColumnMapping& columns) {
  if (columns.outcome.empty() || columns.shadow.empty()) {
    throw ConfigError("outcome and shadow columns must be named");
  }
  const std::size_t y_col = table.column(columns.outcome);
  const std::size_t z_col = table.column(columns.shadow);
  std::vector<std::size_t> x_cols;
  for (const auto& name : columns.covariates) x_cols.push_back(table.column(name));
  std::optional<std::size_t> r_col;
  if (columns.missing_indicator) r_col = table.column(*columns.missing_indicator);

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  ShadowDataset d;
  d.covariate_names = columns.covariates;
  d.shadow_name = columns.shadow;
  d.outcome_name = columns.outcome;
  d.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  d.z.resize(n);
  d.r.resize(n);
  d.y.resize(n);

  // Row numbers reported to users count the header as line 1.
  std::vector<std::size_t> incomplete;
  auto field = [&](Eigen::Index i, std::size_t col) -> const std::string& {
    static const std::string kEmpty;
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    return col < row.size() ? row[col] : kEmpty;
  };
  auto number = [&](Eigen::Index i, std::size_t col, bool& missing) -> double {
    const std::string& text = field(i, col);
    if (trimmed(text).empty()) {
      missing = true;
      return std::numeric_limits<double>::quiet_NaN();
    }
    const auto v = parse_number(text);
    if (!v) {
      throw DataError("unparseable number '" + text + "' at row " + std::to_string(i + 2) + ", column '" +
                      table.header[col] + "'");
    }
    return *v;
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    if (table.rows[static_cast<std::size_t>(i)].size() > table.header.size()) {
      throw DataError("row " + std::to_string(i + 2) + " has more fields than the header");
    }
    bool missing = false;
    d.z[i] = number(i, z_col, missing);
    for (std::size_t j = 0; j < x_cols.size(); ++j) d.x(i, static_cast<Eigen::Index>(j)) = number(i, x_cols[j], missing);
    if (missing) incomplete.push_back(static_cast<std::size_t>(i + 2));

    const std::string y_text = trimmed(field(i, y_col));
    const bool y_absent = y_text.empty() || (!columns.na_token.empty() && y_text == columns.na_token);
    if (r_col) {
      bool r_missing = false;
      const double r = number(i, *r_col, r_missing);
      if (r_missing || (r != 0.0 && r != 1.0)) {
        throw DataError("response indicator must be 0 or 1 at row " + std::to_string(i + 2));
      }
      d.r[i] = r;
      if (r == 1.0) {
        if (y_absent) throw DataError("outcome missing at row " + std::to_string(i + 2) + " although indicator is 1");
        bool unused = false;
        d.y[i] = number(i, y_col, unused);
      } else {
        d.y[i] = std::numeric_limits<double>::quiet_NaN();
      }
    } else if (y_absent) {
      d.r[i] = 0.0;
      d.y[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      bool unused = false;
      d.r[i] = 1.0;
      d.y[i] = number(i, y_col, unused);
    }
  }
  if (!incomplete.empty()) {
    throw DataError("shadow and covariate columns must be fully observed; missing values in rows " +
                    row_list(incomplete));
  }
  return d;
}

ShadowDataset ingest_csv(const std::filesystem::path& path, const ColumnMapping& columns) {
  return ingest_table(read_csv(path), columns);
}

void write_dataset_csv(const ShadowDataset& data, const std::filesystem::path& path, const Eigen::VectorXd* y_full) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  std::vector<std::string> header = data.covariate_names;
  header.push_back(data.shadow_name);
  header.push_back(data.outcome_name);
  if (y_full) header.push_back(data.outcome_name + "_full");
  write_csv_row(out, header);
  std::vector<std::string> row;
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) row.push_back(format_double(data.x(i, j)));
    row.push_back(format_double(data.z[i]));
    row.push_back(data.r[i] > 0.5 ? format_double(data.y[i]) : std::string());
    if (y_full) row.push_back(format_double((*y_full)[i]));
    write_csv_row(out, row);
  }
  out.close();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace shadow
