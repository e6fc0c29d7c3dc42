#pragma once

// Year-indexed indicator panels: CSV loading, gap filling, the seeded
// train/test split, and column standardization.

#include "foodprice/common.hpp"
#include "foodprice/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace foodprice {

struct IndicatorTable {
  std::vector<int> years;
  std::string target_name = "FFPI";
  Vector target;
  std::vector<std::string> feature_names;
  Matrix values;  // rows = years, cols = features
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> missing_mask;

  Index rows() const { return static_cast<Index>(years.size()); }
  Index features() const { return static_cast<Index>(feature_names.size()); }
  bool has_missing() const { return missing_mask.size() > 0 && missing_mask.any(); }
};

struct SplitData {
  Matrix train_x;
  Vector train_y;
  Matrix test_x;
  Vector test_y;
  std::uint64_t seed = 42;
  std::vector<Index> train_indices;
  std::vector<Index> test_indices;
};

namespace csv {

inline bool is_missing_token(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "..";
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV record. Handles double-quoted fields with "" escapes;
/// embedded newlines are not supported.
inline std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

}  // namespace csv

/// Parses an indicator panel. Rows are reordered by year if the file is
/// not sorted. The target column must be fully observed.
inline IndicatorTable load_table(std::istream& in, const std::string& target_column = "FFPI") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::schema, "empty file, expected a header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = csv::split_record(line);

  Index year_col = -1;
  Index target_col = -1;
  std::vector<Index> feature_cols;
  std::set<std::string> seen;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto& name = header[j];
    if (!seen.insert(name).second) throw Error(ErrorCode::schema, "duplicate column '" + name + "'");
    if (name == "year") {
      year_col = static_cast<Index>(j);
    } else if (name == target_column) {
      target_col = static_cast<Index>(j);
    } else {
      feature_cols.push_back(static_cast<Index>(j));
    }
  }
  if (year_col < 0) throw Error(ErrorCode::schema, "missing column 'year'");
  if (target_col < 0) throw Error(ErrorCode::schema, "missing column '" + target_column + "'");

  struct Row {
    int year;
    double target;
    std::vector<double> values;
    std::vector<bool> missing;
  };
  std::vector<Row> rows;
  std::map<int, std::size_t> year_line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_record(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " cells, got " +
                                        std::to_string(cells.size()));
    }
    Row row;
    double year_value = 0.0;
    if (!parse_double(cells[year_col], year_value) || year_value != std::floor(year_value)) {
      throw Error(ErrorCode::parse,
                  "line " + std::to_string(line_no) + ", column 'year': '" + cells[year_col] + "' is not an integer");
    }
    row.year = static_cast<int>(year_value);
    if (auto [it, fresh] = year_line.emplace(row.year, line_no); !fresh) {
      throw Error(ErrorCode::duplicate_row, "year " + std::to_string(row.year) + " appears on lines " +
                                                std::to_string(it->second) + " and " + std::to_string(line_no));
    }
    if (!parse_double(cells[target_col], row.target)) {
      throw Error(ErrorCode::parse, "year " + std::to_string(row.year) + ", column '" + target_column + "': '" +
                                        cells[target_col] + "' is not a number");
    }
    row.values.resize(feature_cols.size());
    row.missing.resize(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      const auto& cell = cells[feature_cols[j]];
      if (csv::is_missing_token(cell)) {
        row.missing[j] = true;
        row.values[j] = std::numeric_limits<double>::quiet_NaN();
      } else if (!parse_double(cell, row.values[j]) || !std::isfinite(row.values[j])) {
        throw Error(ErrorCode::parse, "year " + std::to_string(row.year) + ", column '" +
                                          header[feature_cols[j]] + "': '" + cell + "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.year < b.year; });

  IndicatorTable table;
  table.target_name = target_column;
  for (Index c : feature_cols) table.feature_names.push_back(header[c]);
  const auto n = static_cast<Index>(rows.size());
  const auto m = static_cast<Index>(feature_cols.size());
  table.target.resize(n);
  table.values.resize(n, m);
  table.missing_mask.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    table.years.push_back(rows[i].year);
    table.target[i] = rows[i].target;
    for (Index j = 0; j < m; ++j) {
      table.values(i, j) = rows[i].values[j];
      table.missing_mask(i, j) = rows[i].missing[j];
    }
  }
  return table;
}

inline IndicatorTable load_table(const std::string& path, const std::string& target_column = "FFPI") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path + "'");
  return load_table(in, target_column);
}

/// Fills masked cells: linear interpolation in year between the nearest
/// observed neighbours, nearest observed value at either boundary.
inline IndicatorTable impute(const IndicatorTable& table) {
  IndicatorTable out = table;
  if (table.missing_mask.size() == 0) return out;
  const Index n = table.rows();
  for (Index j = 0; j < table.features(); ++j) {
    std::vector<Index> observed;
    for (Index i = 0; i < n; ++i)
      if (!table.missing_mask(i, j)) observed.push_back(i);
    if (observed.empty()) throw Error(ErrorCode::empty_column, "feature '" + table.feature_names[j] + "' has no observed values");
    if (static_cast<Index>(observed.size()) == n) continue;

    std::size_t next = 0;  // first observed index >= i
    for (Index i = 0; i < n; ++i) {
      while (next < observed.size() && observed[next] < i) ++next;
      if (!table.missing_mask(i, j)) continue;
      if (next == 0) {
        out.values(i, j) = table.values(observed.front(), j);
      } else if (next == observed.size()) {
        out.values(i, j) = table.values(observed.back(), j);
      } else {
        const Index lo = observed[next - 1];
        const Index hi = observed[next];
        const double y0 = table.values(lo, j);
        const double y1 = table.values(hi, j);
        const double w = static_cast<double>(table.years[i] - table.years[lo]) /
                         static_cast<double>(table.years[hi] - table.years[lo]);
        out.values(i, j) = y0 + w * (y1 - y0);
      }
    }
  }
  out.missing_mask.setConstant(false);
  return out;
}

/// Number of training rows for a given fraction: floor(fraction * n).
inline Index train_size(Index n, double train_fraction) {
  // The nudge keeps products such as 0.7 * 10 from flooring to 6.
  return static_cast<Index>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
}

/// Seeded shuffle of 0..n-1; the first floor(fraction * n) entries train.
inline SplitData split(const IndicatorTable& table, double train_fraction = 0.8, std::uint64_t seed = 42) {
  const Index n = table.rows();
  if (n < 5) throw Error(ErrorCode::too_few_rows, "split needs at least 5 rows, got " + std::to_string(n));
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::invalid_argument, "train_fraction must lie in (0, 1)");
  const Index n_train = train_size(n, train_fraction);
  if (n_train < 2 || n_train >= n)
    throw Error(ErrorCode::invalid_argument, "train_fraction leaves fewer than 2 training rows or no test rows");
  if (table.has_missing()) throw Error(ErrorCode::invalid_argument, "split expects an imputed table");

  const auto order = shuffled_indices<Index>(static_cast<std::size_t>(n), seed);
  SplitData out;
  out.seed = seed;
  out.train_indices.assign(order.begin(), order.begin() + n_train);
  out.test_indices.assign(order.begin() + n_train, order.end());
  out.train_x = select_rows(table.values, out.train_indices);
  out.train_y = select_rows(table.target, out.train_indices);
  out.test_x = select_rows(table.values, out.test_indices);
  out.test_y = select_rows(table.target, out.test_indices);
  return out;
}

/// Per-column standardization with the sample (n - 1) standard deviation.
class Scaler {
 public:
  Scaler() = default;
  Scaler(Vector means, Vector stds) : means_(std::move(means)), stds_(std::move(stds)) {
    if (means_.size() != stds_.size()) throw Error(ErrorCode::shape, "scaler means/stds length differ");
    for (Index j = 0; j < stds_.size(); ++j)
      if (!(stds_[j] > 0.0)) throw Error(ErrorCode::zero_variance, "scaler std must be positive");
  }

  /// `names` labels columns in error messages; may be empty.
  static Scaler fit(const Matrix& x, const std::vector<std::string>& names = {}) {
    if (x.rows() < 2) throw Error(ErrorCode::too_few_samples, "scaler needs at least 2 rows");
    const double n = static_cast<double>(x.rows());
    Vector means = x.colwise().mean();
    Vector stds(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      const double ss = (x.col(j).array() - means[j]).square().sum();
      stds[j] = std::sqrt(ss / (n - 1.0));
      if (!(stds[j] > 1e-12 * std::max(1.0, std::fabs(means[j])))) {
        const std::string label = j < static_cast<Index>(names.size()) ? names[j] : "column " + std::to_string(j);
        throw Error(ErrorCode::zero_variance, "feature '" + label + "' is constant");
      }
    }
    return Scaler(std::move(means), std::move(stds));
  }

  static Scaler fit_vector(const Vector& y, const std::string& name = "target") {
    return fit(Matrix(y), std::vector<std::string>{name});
  }

  Matrix transform(const Matrix& x) const {
    check(x.cols());
    return (x.rowwise() - means_.transpose()).array().rowwise() / stds_.transpose().array();
  }

  Matrix inverse_transform(const Matrix& z) const {
    check(z.cols());
    return (z.array().rowwise() * stds_.transpose().array()).matrix().rowwise() + means_.transpose();
  }

  Vector transform_vector(const Vector& y) const {
    check(1);
    return (y.array() - means_[0]) / stds_[0];
  }

  Vector inverse_vector(const Vector& z) const {
    check(1);
    return z.array() * stds_[0] + means_[0];
  }

  const Vector& means() const { return means_; }
  const Vector& stds() const { return stds_; }
  Index size() const { return means_.size(); }

 private:
  void check(Index cols) const {
    if (cols != means_.size())
      throw Error(ErrorCode::shape, "scaler fitted on " + std::to_string(means_.size()) + " columns, got " +
                                        std::to_string(cols));
  }

  Vector means_;
  Vector stds_;
};

inline Scaler fit_scaler(const Matrix& x, const std::vector<std::string>& names = {}) { return Scaler::fit(x, names); }

inline Matrix apply_scaler(const Scaler& scaler, const Matrix& x) { return scaler.transform(x); }

}  // namespace foodprice
