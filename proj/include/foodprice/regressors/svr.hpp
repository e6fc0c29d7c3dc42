#pragma once

// Epsilon-insensitive support vector regression.
//
// The dual is solved over a single vector beta = alpha - alpha*:
//
//   maximize  D(beta) = -1/2 beta'K beta - eps * sum|beta_i| + y'beta
//   subject to sum beta_i = 0,  -C <= beta_i <= C
//
// Each step moves one pair, beta_i += t and beta_j -= t, which keeps the
// equality constraint. The pair is the maximal KKT violator and t is the
// exact maximizer of the (concave, piecewise quadratic) restriction of D to
// that direction, so D never decreases.

#include "foodprice/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace foodprice {

enum class KernelKind { linear, rbf, polynomial };

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "linear";
    case KernelKind::rbf: return "rbf";
    case KernelKind::polynomial: return "poly";
  }
  return "?";
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "linear") return KernelKind::linear;
  if (s == "rbf") return KernelKind::rbf;
  if (s == "poly" || s == "polynomial") return KernelKind::polynomial;
  throw Error(ErrorCode::invalid_argument, "unknown kernel '" + s + "'");
}

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double gamma = 1.0;
  int degree = 3;
  double coef0 = 1.0;

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
    switch (kind) {
      case KernelKind::linear: return a.dot(b);
      case KernelKind::rbf: return std::exp(-gamma * (a - b).squaredNorm());
      case KernelKind::polynomial: return std::pow(gamma * a.dot(b) + coef0, degree);
    }
    return 0.0;
  }

  bool operator==(const KernelSpec&) const = default;
};

inline Matrix gram(const Matrix& a, const Matrix& b, const KernelSpec& kernel) {
  if (a.cols() != b.cols()) throw Error(ErrorCode::shape, "gram inputs differ in column count");
  Matrix k(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) k(i, j) = kernel(a.row(i), b.row(j));
  return k;
}

struct SvrParams {
  double c = 1.0;
  double epsilon = 0.1;
  KernelSpec kernel{};
  double tol = 1e-3;
  long max_passes = 0;  // pair updates; 0 means max(10000, 10 * n^2)
};

struct SvrModel {
  std::vector<Index> support_indices;
  Vector dual_coefs;  // beta on the support points
  double bias = 0.0;
  KernelSpec kernel{};
  double c = 1.0;
  double epsilon = 0.1;
  Matrix x_support;
  bool converged = true;
  double violation = 0.0;
  long iterations = 0;

  Vector predict(const Matrix& x) const {
    if (x_support.rows() > 0 && x.cols() != x_support.cols())
      throw Error(ErrorCode::shape, "svr expects " + std::to_string(x_support.cols()) + " columns");
    Vector out = Vector::Constant(x.rows(), bias);
    if (x_support.rows() == 0) return out;
    out += gram(x, x_support, kernel) * dual_coefs;
    return out;
  }
};

/// Dual objective for a full beta vector over the training Gram matrix.
inline double svr_dual_objective(const Matrix& k, const Vector& y, const Vector& beta, double epsilon) {
  return -0.5 * beta.dot(k * beta) - epsilon * beta.cwiseAbs().sum() + y.dot(beta);
}

namespace detail {

// Exact maximizer over t in [lo, hi] of
//   -1/2 eta t^2 + g t - eps (|bi + t| + |bj - t|).
inline double svr_pair_step(double eta, double g, double eps, double bi, double bj, double lo, double hi) {
  auto value = [&](double t) { return -0.5 * eta * t * t + g * t - eps * (std::fabs(bi + t) + std::fabs(bj - t)); };
  std::vector<double> knots{lo, hi};
  for (double k : {-bi, bj})
    if (k > lo && k < hi) knots.push_back(k);
  std::sort(knots.begin(), knots.end());

  double best_t = 0.0;
  double best_v = value(0.0);
  auto consider = [&](double t) {
    const double v = value(t);
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  };
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double a = knots[s], b = knots[s + 1];
    consider(a);
    consider(b);
    if (eta > 0.0) {
      // Inside (a, b) both absolute values have a fixed sign.
      const double mid = 0.5 * (a + b);
      const double si = (bi + mid) >= 0.0 ? 1.0 : -1.0;
      const double sj = (bj - mid) >= 0.0 ? 1.0 : -1.0;
      const double t = (g - eps * si + eps * sj) / eta;
      consider(std::clamp(t, a, b));
    }
  }
  return best_t;
}

}  // namespace detail

/// `trace`, when set, receives the dual objective after every pair update.
inline SvrModel fit_svr(const Matrix& x, const Vector& y, const SvrParams& p = {},
                        std::vector<double>* trace = nullptr) {
  if (x.rows() != y.size()) throw Error(ErrorCode::shape, "x and y row counts differ");
  if (x.rows() < 2) throw Error(ErrorCode::too_few_samples, "svr needs at least 2 rows");
  if (!(p.c > 0.0)) throw Error(ErrorCode::invalid_argument, "C must be positive");
  if (!(p.epsilon >= 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be >= 0");
  if (p.kernel.kind != KernelKind::linear && !(p.kernel.gamma > 0.0))
    throw Error(ErrorCode::invalid_argument, "gamma must be positive");

  const Index n = x.rows();
  const double c = p.c;
  const double eps = p.epsilon;
  const long max_passes = p.max_passes > 0 ? p.max_passes : std::max(10000L, 10L * n * n);
  const Matrix k = gram(x, x, p.kernel);

  Vector beta = Vector::Zero(n);
  Vector g = y;  // y - K beta

  // Directional derivatives: `up` for raising beta_i, `lo` is the negated
  // derivative for lowering it. KKT holds iff max up <= min lo.
  auto up_value = [&](Index i) { return beta[i] >= 0.0 ? g[i] - eps : g[i] + eps; };
  auto lo_value = [&](Index i) { return beta[i] > 0.0 ? g[i] - eps : g[i] + eps; };

  SvrModel model;
  model.kernel = p.kernel;
  model.c = c;
  model.epsilon = eps;
  model.converged = false;

  double violation = 0.0;
  long iter = 0;
  for (;; ++iter) {
    // i maximizes the upward derivative; j is the partner whose pair gives
    // the largest second-order gain b^2 / eta among violating candidates.
    Index i_up = -1, j_lo = -1;
    double max_up = -std::numeric_limits<double>::infinity();
    double min_lo = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < n; ++t) {
      if (beta[t] < c) {
        const double u = up_value(t);
        if (u > max_up) {
          max_up = u;
          i_up = t;
        }
      }
      if (beta[t] > -c) min_lo = std::min(min_lo, lo_value(t));
    }
    double best_gain = -1.0;
    for (Index t = 0; i_up >= 0 && t < n; ++t) {
      if (t == i_up || !(beta[t] > -c)) continue;
      const double b = max_up - lo_value(t);
      if (!(b > 0.0)) continue;
      const double eta = std::max(k(i_up, i_up) + k(t, t) - 2.0 * k(i_up, t), 1e-12);
      const double gain = b * b / eta;
      if (gain > best_gain) {
        best_gain = gain;
        j_lo = t;
      }
    }
    violation = (i_up < 0 || !std::isfinite(min_lo)) ? 0.0 : std::max(0.0, max_up - min_lo);
    if (violation < p.tol) {
      model.converged = true;
      break;
    }
    if (iter >= max_passes || j_lo < 0) break;

    const Index i = i_up, j = j_lo;
    const double eta = k(i, i) + k(j, j) - 2.0 * k(i, j);
    const double lo = std::max(-c - beta[i], beta[j] - c);
    const double hi = std::min(c - beta[i], beta[j] + c);
    const double t = detail::svr_pair_step(eta, g[i] - g[j], eps, beta[i], beta[j], lo, hi);
    if (t == 0.0) break;  // no ascent possible along the best pair
    // Land exactly on the box and on zero when the step reaches them.
    double bi = beta[i] + t, bj = beta[j] - t;
    if (t == hi || t == lo) {
      if (std::fabs(bi) > c * (1 - 1e-15)) bi = std::copysign(c, bi);
      if (std::fabs(bj) > c * (1 - 1e-15)) bj = std::copysign(c, bj);
    }
    if (t == -beta[i]) bi = 0.0;
    if (t == beta[j]) bj = 0.0;
    const double di = bi - beta[i], dj = bj - beta[j];
    beta[i] = bi;
    beta[j] = bj;
    g -= k.col(i) * di + k.col(j) * dj;
    if (trace) trace->push_back(svr_dual_objective(k, y, beta, eps));
  }
  model.violation = violation;
  model.iterations = iter;

  // Bias from free support vectors; otherwise the midpoint of the KKT bracket.
  double b_sum = 0.0;
  int b_count = 0;
  double max_up = -std::numeric_limits<double>::infinity();
  double min_lo = std::numeric_limits<double>::infinity();
  for (Index t = 0; t < n; ++t) {
    if (beta[t] > 0.0 && beta[t] < c) {
      b_sum += g[t] - eps;
      ++b_count;
    } else if (beta[t] < 0.0 && beta[t] > -c) {
      b_sum += g[t] + eps;
      ++b_count;
    }
    if (beta[t] < c) max_up = std::max(max_up, up_value(t));
    if (beta[t] > -c) min_lo = std::min(min_lo, lo_value(t));
  }
  if (b_count > 0) {
    model.bias = b_sum / b_count;
  } else if (std::isfinite(max_up) && std::isfinite(min_lo)) {
    model.bias = 0.5 * (max_up + min_lo);
  } else {
    model.bias = std::isfinite(max_up) ? max_up : min_lo;
  }

  for (Index t = 0; t < n; ++t)
    if (beta[t] != 0.0) model.support_indices.push_back(t);
  model.dual_coefs.resize(static_cast<Index>(model.support_indices.size()));
  model.x_support.resize(static_cast<Index>(model.support_indices.size()), x.cols());
  for (std::size_t s = 0; s < model.support_indices.size(); ++s) {
    model.dual_coefs[static_cast<Index>(s)] = beta[model.support_indices[s]];
    model.x_support.row(static_cast<Index>(s)) = x.row(model.support_indices[s]);
  }
  if (model.support_indices.empty()) model.x_support.resize(0, x.cols());
  return model;
}

/// Expands the support coefficients back to a length-n beta.
inline Vector full_dual(const SvrModel& m, Index n) {
  Vector beta = Vector::Zero(n);
  for (std::size_t s = 0; s < m.support_indices.size(); ++s)
    beta[m.support_indices[s]] = m.dual_coefs[static_cast<Index>(s)];
  return beta;
}

}  // namespace foodprice
