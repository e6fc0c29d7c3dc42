#pragma once

// Descriptive statistics, Anderson-Darling normality screening, the
// Yeo-Johnson transform, Gaussian KDE, and univariate association scores.

#include "foodprice/common.hpp"
#include "foodprice/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace foodprice {

struct SummaryStats {
  double mean = 0.0;
  double median = 0.0;
  double std_dev = 0.0;
  double iqr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Index n = 0;
};

struct NormalityResult {
  std::string feature;
  double a_squared = 0.0;
  double a_star = 0.0;
  double p_value = 1.0;
  bool passed = true;  // p >= 0.05: normality not rejected
  std::optional<double> transform_lambda;
};

struct DensityCurve {
  Vector grid;
  Vector density;
  double bandwidth = 0.0;
};

struct FeatureScore {
  std::string feature;
  double r = 0.0;
  double f_value = 0.0;  // +inf when |r| == 1
  double p_value = 1.0;
  int rank = 0;
};

inline constexpr double kNormalityAlpha = 0.05;

namespace stats {

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1 divisor).
inline double sample_std(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Linear interpolation between order statistics at zero-based position
/// p * (n - 1). `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return s;
}

inline bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

inline std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace stats

inline SummaryStats describe(std::span<const double> series, double confidence = 0.95) {
  if (series.size() < 2) throw Error(ErrorCode::too_few_samples, "describe needs at least 2 values");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorCode::invalid_argument, "confidence must lie in (0, 1)");
  SummaryStats s;
  s.n = static_cast<Index>(series.size());
  const auto sorted = stats::sorted_copy(series);
  s.mean = stats::mean(series);
  s.median = stats::quantile_sorted(sorted, 0.5);
  s.iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
  if (stats::is_constant(series)) {
    s.mean = series.front();
    s.std_dev = 0.0;
    s.ci_low = s.ci_high = s.mean;
    return s;
  }
  s.std_dev = stats::sample_std(series);
  const double t = special::student_t_quantile(0.5 * (1.0 + confidence), static_cast<double>(s.n - 1));
  const double half = t * s.std_dev / std::sqrt(static_cast<double>(s.n));
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

inline SummaryStats describe(const Vector& series, double confidence = 0.95) {
  return describe(stats::view(series), confidence);
}

// ---------------------------------------------------------------------------
// Anderson-Darling, normal with estimated mean and variance

/// Tail probability for the small-sample corrected statistic A*, using the
/// piecewise-exponential approximation for the estimated-parameters case.
/// The upper branch is held at its minimum beyond the quadratic's vertex so
/// the curve never turns back up.
inline double ad_p_value(double a_star) {
  double p = 0.0;
  if (a_star >= 0.6) {
    constexpr double kVertex = 5.709 / (2.0 * 0.0186);
    const double a = std::min(a_star, kVertex);
    p = std::exp(1.2937 - 5.709 * a + 0.0186 * a * a);
  } else if (a_star > 0.34) {
    p = std::exp(0.9177 - 4.279 * a_star - 1.38 * a_star * a_star);
  } else if (a_star > 0.2) {
    p = 1.0 - std::exp(-8.318 + 42.796 * a_star - 59.938 * a_star * a_star);
  } else {
    p = 1.0 - std::exp(-13.436 + 101.14 * a_star - 223.73 * a_star * a_star);
  }
  return std::clamp(p, 0.0, 1.0);
}

inline NormalityResult anderson_darling(std::span<const double> series, std::string feature = {}) {
  const std::size_t n = series.size();
  if (n < 8) throw Error(ErrorCode::too_few_samples, "Anderson-Darling needs at least 8 values, got " + std::to_string(n));
  if (stats::is_constant(series)) throw Error(ErrorCode::zero_variance, "series '" + feature + "' is constant");

  const double mu = stats::mean(series);
  const double sd = stats::sample_std(series);
  if (!(sd > 0.0)) throw Error(ErrorCode::zero_variance, "series '" + feature + "' is constant");
  auto sorted = stats::sorted_copy(series);

  constexpr double kClamp = 1e-15;
  std::vector<double> cdf(n);
  for (std::size_t i = 0; i < n; ++i)
    cdf[i] = std::clamp(special::normal_cdf((sorted[i] - mu) / sd), kClamp, 1.0 - kClamp);

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double weight = 2.0 * static_cast<double>(i + 1) - 1.0;
    sum += weight * (std::log(cdf[i]) + std::log(1.0 - cdf[n - 1 - i]));
  }
  const double nd = static_cast<double>(n);
  NormalityResult r;
  r.feature = std::move(feature);
  r.a_squared = -nd - sum / nd;
  r.a_star = r.a_squared * (1.0 + 0.75 / nd + 2.25 / (nd * nd));
  r.p_value = ad_p_value(r.a_star);
  r.passed = r.p_value >= kNormalityAlpha;
  return r;
}

inline NormalityResult anderson_darling(const Vector& series, std::string feature = {}) {
  return anderson_darling(stats::view(series), std::move(feature));
}

// ---------------------------------------------------------------------------
// Yeo-Johnson

inline double yeo_johnson_value(double y, double lambda) {
  if (y >= 0.0) {
    if (lambda == 0.0) return std::log1p(y);
    return (std::pow(y + 1.0, lambda) - 1.0) / lambda;
  }
  if (lambda == 2.0) return -std::log1p(-y);
  return -(std::pow(1.0 - y, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

/// Applies the transform with a fixed lambda. lambda == 1 is the identity
/// and returns the input unchanged.
inline std::vector<double> yeo_johnson_apply(std::span<const double> series, double lambda) {
  std::vector<double> out(series.begin(), series.end());
  if (lambda == 1.0) return out;
  for (double& v : out) v = yeo_johnson_value(v, lambda);
  return out;
}

/// Profile Gaussian log-likelihood of the transformed sample, including the
/// Jacobian term. Returns -inf when the transform collapses distinct inputs
/// to equal outputs in floating point.
inline double yeo_johnson_log_likelihood(std::span<const double> series, double lambda) {
  const auto t = yeo_johnson_apply(series, lambda);
  if (std::set<double>(t.begin(), t.end()).size() != std::set<double>(series.begin(), series.end()).size())
    return -std::numeric_limits<double>::infinity();
  const double nd = static_cast<double>(t.size());
  const double m = stats::mean(t);
  double var = 0.0;
  for (double v : t) var += (v - m) * (v - m);
  var /= nd;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  double jac = 0.0;
  for (double y : series) jac += std::copysign(std::log1p(std::fabs(y)), y);
  return -0.5 * nd * std::log(var) + (lambda - 1.0) * jac;
}

struct YeoJohnsonFit {
  std::vector<double> transformed;
  double lambda = 1.0;
};

/// Picks lambda from {-2.0, -1.9, ..., 2.0} by maximum likelihood; the
/// first grid point wins ties.
inline YeoJohnsonFit yeo_johnson(std::span<const double> series) {
  if (series.size() < 8) throw Error(ErrorCode::too_few_samples, "Yeo-Johnson needs at least 8 values");
  double best_lambda = 1.0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int k = -20; k <= 20; ++k) {
    const double lambda = k / 10.0;
    const double ll = yeo_johnson_log_likelihood(series, lambda);
    if (ll > best_ll) {
      best_ll = ll;
      best_lambda = lambda;
    }
  }
  return {yeo_johnson_apply(series, best_lambda), best_lambda};
}

struct ScreenedFeature {
  NormalityResult result;       // statistics of the untransformed series
  std::vector<double> values;   // series to use downstream
};

/// Normality screen for one feature: series failing AD are Yeo-Johnson
/// transformed, and the transform is kept only if it raises the p-value.
inline ScreenedFeature screen_feature(std::span<const double> series, std::string feature) {
  ScreenedFeature out{anderson_darling(series, std::move(feature)), {series.begin(), series.end()}};
  if (out.result.passed) return out;
  auto fit = yeo_johnson(series);
  if (fit.lambda == 1.0 || stats::is_constant(fit.transformed)) return out;
  const double p_after = anderson_darling(fit.transformed).p_value;
  if (p_after > out.result.p_value) {
    out.result.transform_lambda = fit.lambda;
    out.values = std::move(fit.transformed);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernel density

/// Silverman's rule, falling back to the standard deviation alone when the
/// IQR is zero.
inline double silverman_bandwidth(std::span<const double> series) {
  const auto sorted = stats::sorted_copy(series);
  const double sd = stats::sample_std(series);
  const double iqr = stats::quantile_sorted(sorted, 0.75) - stats::quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(series.size()), -0.2);
}

inline DensityCurve kde(std::span<const double> series, int grid_size = 256) {
  if (series.size() < 2) throw Error(ErrorCode::too_few_samples, "kde needs at least 2 values");
  if (grid_size < 16) throw Error(ErrorCode::invalid_argument, "kde grid_size must be at least 16");
  if (stats::is_constant(series)) throw Error(ErrorCode::zero_variance, "kde on a constant series");

  DensityCurve c;
  c.bandwidth = silverman_bandwidth(series);
  const auto [mn, mx] = std::minmax_element(series.begin(), series.end());
  const double lo = *mn - 4.0 * c.bandwidth;
  const double hi = *mx + 4.0 * c.bandwidth;
  c.grid.resize(grid_size);
  c.density.resize(grid_size);
  const double step = (hi - lo) / (grid_size - 1);
  const double norm = 1.0 / (static_cast<double>(series.size()) * c.bandwidth);
  for (int k = 0; k < grid_size; ++k) {
    c.grid[k] = k == grid_size - 1 ? hi : lo + step * k;
    double acc = 0.0;
    for (double xi : series) acc += special::normal_pdf((c.grid[k] - xi) / c.bandwidth);
    c.density[k] = norm * acc;
  }
  return c;
}

inline double trapezoid(const Vector& x, const Vector& y) {
  double s = 0.0;
  for (Index i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

// ---------------------------------------------------------------------------
// Association

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::shape, "pearson inputs differ in length");
  if (a.size() < 2) throw Error(ErrorCode::too_few_samples, "pearson needs at least 2 values");
  const double ma = stats::mean(a);
  const double mb = stats::mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0) || stats::is_constant(a) || stats::is_constant(b))
    throw Error(ErrorCode::zero_variance, "pearson on a constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson(const Vector& a, const Vector& b) { return pearson(stats::view(a), stats::view(b)); }

/// Univariate regression F statistic and its F(1, n - 2) tail probability.
inline FeatureScore f_score(std::span<const double> x, std::span<const double> y, std::string feature = {}) {
  if (x.size() < 3) throw Error(ErrorCode::too_few_samples, "f_score needs at least 3 values");
  FeatureScore s;
  s.feature = std::move(feature);
  try {
    s.r = pearson(x, y);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::zero_variance) throw Error(ErrorCode::zero_variance, "feature '" + s.feature + "' is constant");
    throw;
  }
  const double dof = static_cast<double>(x.size()) - 2.0;
  const double r2 = s.r * s.r;
  if (r2 >= 1.0) {
    s.f_value = std::numeric_limits<double>::infinity();
    s.p_value = 0.0;
    return s;
  }
  s.f_value = r2 / (1.0 - r2) * dof;
  s.p_value = special::f_survival(s.f_value, 1.0, dof);
  return s;
}

inline FeatureScore f_score(const Vector& x, const Vector& y, std::string feature = {}) {
  return f_score(stats::view(x), stats::view(y), std::move(feature));
}

}  // namespace foodprice
