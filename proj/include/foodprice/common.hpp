#pragma once

// Shared vocabulary: matrix aliases, the error type, and float formatting.

#include <Eigen/Dense>

#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace foodprice {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorCode {
  schema,
  duplicate_row,
  parse,
  empty_column,
  too_few_rows,
  too_few_samples,
  zero_variance,
  shape,
  singular_design,
  invalid_argument,
  invalid_k,
  undefined_r2,
  missing_artifact,
  config,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::schema: return "schema error";
    case ErrorCode::duplicate_row: return "duplicate row";
    case ErrorCode::parse: return "parse error";
    case ErrorCode::empty_column: return "empty column";
    case ErrorCode::too_few_rows: return "too few rows";
    case ErrorCode::too_few_samples: return "too few samples";
    case ErrorCode::zero_variance: return "zero variance";
    case ErrorCode::shape: return "shape mismatch";
    case ErrorCode::singular_design: return "singular design";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::invalid_k: return "invalid k";
    case ErrorCode::undefined_r2: return "r2 undefined";
    case ErrorCode::missing_artifact: return "missing artifact";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "io error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Shortest decimal that parses back to the same double. Infinities print
/// as "inf"/"-inf" and NaN as "nan".
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error(ErrorCode::invalid_argument, "cannot format double");
  return std::string(buf.data(), end);
}

/// Locale-independent parse of a full token; nullopt-style via bool.
inline bool parse_double(std::string_view token, double& out) {
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc{} && ptr == token.data() + token.size();
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline Matrix select_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

inline Vector select_rows(const Vector& y, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Index>(i)] = y[rows[i]];
  return out;
}

inline Matrix select_cols(const Matrix& x, const std::vector<Index>& cols) {
  Matrix out(x.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = x.col(cols[j]);
  return out;
}

}  // namespace foodprice
