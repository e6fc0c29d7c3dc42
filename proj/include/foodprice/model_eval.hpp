#pragma once

// K-fold cross-validation, hyperparameter grid search, error metrics and
// the side-by-side model comparison.

#include "foodprice/common.hpp"
#include "foodprice/data_ingest.hpp"
#include "foodprice/random.hpp"
#include "foodprice/regressors/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace foodprice {

struct FoldPlan {
  Index n = 0;
  int k = 0;
  std::vector<int> assignment;  // row -> fold
  std::uint64_t seed = 42;

  std::vector<Index> rows_in(int fold) const {
    std::vector<Index> out;
    for (Index i = 0; i < n; ++i)
      if (assignment[i] == fold) out.push_back(i);
    return out;
  }

  std::vector<Index> rows_not_in(int fold) const {
    std::vector<Index> out;
    for (Index i = 0; i < n; ++i)
      if (assignment[i] != fold) out.push_back(i);
    return out;
  }
};

/// Seeded shuffle, then contiguous blocks: the first n % k folds get
/// ceil(n / k) rows, the rest floor(n / k).
inline FoldPlan kfold(Index n, int k, std::uint64_t seed = 42) {
  if (k < 2 || k > n)
    throw Error(ErrorCode::invalid_k, "k = " + std::to_string(k) + " must satisfy 2 <= k <= n = " + std::to_string(n));
  FoldPlan plan{n, k, std::vector<int>(static_cast<std::size_t>(n)), seed};
  const auto order = shuffled_indices<Index>(static_cast<std::size_t>(n), seed);
  const Index base = n / k;
  const Index extra = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    for (Index s = 0; s < size; ++s) plan.assignment[order[pos++]] = f;
  }
  return plan;
}

using Trainer = std::function<RegressionModel(const Matrix&, const Vector&)>;

inline double mean_squared_error(const Vector& y_true, const Vector& y_pred) {
  return (y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size());
}

/// Per-fold validation MSE, in fold order.
inline std::vector<double> cross_validate(const Matrix& x, const Vector& y, const FoldPlan& folds, const Trainer& trainer) {
  if (folds.n != x.rows() || x.rows() != y.size())
    throw Error(ErrorCode::shape, "fold plan covers " + std::to_string(folds.n) + " rows, data has " +
                                      std::to_string(x.rows()));
  std::vector<double> scores;
  for (int f = 0; f < folds.k; ++f) {
    const auto train = folds.rows_not_in(f);
    const auto valid = folds.rows_in(f);
    try {
      const auto model = trainer(select_rows(x, train), select_rows(y, train));
      scores.push_back(mean_squared_error(select_rows(y, valid), predict(model, select_rows(x, valid))));
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }
  return scores;
}

struct HyperGrid {
  std::vector<double> c_values{0.1, 1.0, 10.0, 100.0};
  std::vector<double> epsilon_values{0.01, 0.1, 0.5};
  std::vector<double> gamma_values{0.01, 0.1, 1.0};
  std::vector<KernelKind> kernels{KernelKind::linear, KernelKind::rbf};
  int degree = 3;     // polynomial kernel only
  double coef0 = 1.0; // polynomial kernel only

  void validate() const {
    if (c_values.empty() || epsilon_values.empty() || gamma_values.empty() || kernels.empty())
      throw Error(ErrorCode::config, "every grid list must be non-empty");
    for (double c : c_values)
      if (!(c > 0.0)) throw Error(ErrorCode::config, "grid C values must be positive");
    for (double e : epsilon_values)
      if (!(e >= 0.0)) throw Error(ErrorCode::config, "grid epsilon values must be >= 0");
    for (double g : gamma_values)
      if (!(g > 0.0)) throw Error(ErrorCode::config, "grid gamma values must be positive");
  }
};

struct SvrConfig {
  KernelSpec kernel;
  double c = 1.0;
  double epsilon = 0.1;

  bool operator==(const SvrConfig&) const = default;
};

struct CvResult {
  SvrConfig config;
  std::vector<double> fold_scores;
  double mean_score = 0.0;
  int rank = 0;
  bool converged = true;  // every fold's solver met its tolerance
};

/// Enumeration order: kernels as listed (duplicates dropped), then C, epsilon
/// and gamma ascending with duplicates dropped; gamma is not varied for the
/// linear kernel.
inline std::vector<SvrConfig> enumerate_grid(const HyperGrid& grid) {
  grid.validate();
  auto sorted_unique = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto cs = sorted_unique(grid.c_values);
  const auto eps = sorted_unique(grid.epsilon_values);
  const auto gammas = sorted_unique(grid.gamma_values);
  std::vector<KernelKind> kinds;
  for (auto k : grid.kernels)
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);

  std::vector<SvrConfig> out;
  for (auto kind : kinds)
    for (double c : cs)
      for (double e : eps) {
        if (kind == KernelKind::linear) {
          out.push_back({KernelSpec{kind, 1.0, grid.degree, grid.coef0}, c, e});
          continue;
        }
        for (double g : gammas) out.push_back({KernelSpec{kind, g, grid.degree, grid.coef0}, c, e});
      }
  return out;
}

struct GridSearchResult {
  SvrConfig best;
  std::vector<CvResult> results;  // sorted by rank
};

inline GridSearchResult grid_search(const Matrix& x, const Vector& y, const HyperGrid& grid, const FoldPlan& folds,
                                    double tol = 1e-3) {
  const auto configs = enumerate_grid(grid);
  std::vector<CvResult> results;
  for (const auto& cfg : configs) {
    CvResult r;
    r.config = cfg;
    bool all_converged = true;
    const Trainer trainer = [&](const Matrix& xt, const Vector& yt) -> RegressionModel {
      auto m = fit_svr(xt, yt, SvrParams{cfg.c, cfg.epsilon, cfg.kernel, tol, 0});
      all_converged = all_converged && m.converged;
      return m;
    };
    r.fold_scores = cross_validate(x, y, folds, trainer);
    double s = 0.0;
    for (double v : r.fold_scores) s += v;
    r.mean_score = s / static_cast<double>(r.fold_scores.size());
    r.converged = all_converged;
    results.push_back(std::move(r));
  }
  // Stable sort keeps enumeration order among equal means.
  std::stable_sort(results.begin(), results.end(),
                   [](const CvResult& a, const CvResult& b) { return a.mean_score < b.mean_score; });
  for (std::size_t i = 0; i < results.size(); ++i) results[i].rank = static_cast<int>(i + 1);
  GridSearchResult out{results.front().config, std::move(results)};
  return out;
}

enum class MetricScale { standardized, raw };

inline const char* to_string(MetricScale s) { return s == MetricScale::standardized ? "standardized" : "raw"; }

struct EvalReport {
  std::string model_name;
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double r2 = 0.0;
  MetricScale scale = MetricScale::standardized;
};

inline EvalReport evaluate(const Vector& y_true, const Vector& y_pred, MetricScale scale = MetricScale::standardized,
                           std::string model_name = {}) {
  if (y_true.size() != y_pred.size()) throw Error(ErrorCode::shape, "y_true and y_pred differ in length");
  if (y_true.size() < 2) throw Error(ErrorCode::too_few_samples, "evaluate needs at least 2 values");
  const double n = static_cast<double>(y_true.size());
  const Vector e = y_true - y_pred;
  const double ss_tot = (y_true.array() - y_true.mean()).square().sum();
  if (!(ss_tot > 0.0)) throw Error(ErrorCode::undefined_r2, "y_true has zero variance");

  EvalReport r;
  r.model_name = std::move(model_name);
  r.scale = scale;
  r.mse = e.squaredNorm() / n;
  r.rmse = std::sqrt(r.mse);
  // mae <= rmse holds exactly in real arithmetic; when every |e| is equal
  // the two roundings can disagree by an ulp.
  r.mae = std::min(e.cwiseAbs().sum() / n, r.rmse);
  r.r2 = 1.0 - e.squaredNorm() / ss_tot;
  return r;
}

// ---------------------------------------------------------------------------
// Comparison across model families

struct ModelSpec {
  std::string name;
  Trainer trainer;
};

struct ComparisonRow {
  std::string model_name;
  std::optional<EvalReport> standardized;
  std::optional<EvalReport> raw;
  bool converged = true;
  std::string failure;  // non-empty when training or prediction failed
};

/// Scores one trained model on the test rows. `model` was trained against
/// the target standardized by `target`; raw metrics use unscaled predictions.
inline ComparisonRow comparison_row(const std::string& name, const RegressionModel& model, const Matrix& test_x,
                                    const Vector& test_y_raw, const Scaler& target) {
  ComparisonRow row;
  row.model_name = name;
  if (const auto* svr = std::get_if<SvrModel>(&model)) row.converged = svr->converged;
  const Vector pred = predict(model, test_x);
  row.standardized = evaluate(target.transform_vector(test_y_raw), pred, MetricScale::standardized, name);
  row.raw = evaluate(test_y_raw, target.inverse_vector(pred), MetricScale::raw, name);
  return row;
}

/// Descending standardized R^2; failed rows last; ties keep input order.
inline void sort_comparison(std::vector<ComparisonRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.standardized.has_value() != b.standardized.has_value()) return a.standardized.has_value();
    if (!a.standardized) return false;
    return a.standardized->r2 > b.standardized->r2;
  });
}

/// Trains every spec on the standardized training target and evaluates it on
/// the test rows. A spec that throws becomes a failed row; the rest still run.
inline std::vector<ComparisonRow> compare_models(const SplitData& split, const std::vector<ModelSpec>& specs) {
  if (specs.empty()) throw Error(ErrorCode::invalid_argument, "no models to compare");
  const Scaler target = Scaler::fit_vector(split.train_y);
  const Vector y_train = target.transform_vector(split.train_y);

  std::vector<ComparisonRow> rows;
  for (const auto& spec : specs) {
    try {
      rows.push_back(comparison_row(spec.name, spec.trainer(split.train_x, y_train), split.test_x, split.test_y, target));
    } catch (const std::exception& e) {
      ComparisonRow row;
      row.model_name = spec.name;
      row.converged = false;
      row.failure = e.what();
      rows.push_back(std::move(row));
    }
  }
  sort_comparison(rows);
  return rows;
}

}  // namespace foodprice
