#pragma once

// Correlation-based feature clustering and F-score ranking.

#include "foodprice/common.hpp"
#include "foodprice/eda_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace foodprice {

struct CorrelationMatrix {
  std::vector<std::string> names;
  Matrix r;
};

struct ClusterMap {
  std::vector<int> assignment;                // feature index -> cluster id
  std::vector<std::string> representatives;  // cluster id -> feature name (empty until chosen)
  std::vector<std::string> names;             // feature names, aligned with assignment
  double threshold = 0.3;

  int cluster_count() const {
    return assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  }

  std::vector<std::vector<Index>> members() const {
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(cluster_count()));
    for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(static_cast<Index>(i));
    return out;
  }
};

struct SelectionResult {
  std::vector<std::string> selected;
  std::vector<FeatureScore> scores;  // every candidate, in rank order
  int k = 30;
};

inline CorrelationMatrix correlation_matrix(const Matrix& x, const std::vector<std::string>& names) {
  if (static_cast<Index>(names.size()) != x.cols()) throw Error(ErrorCode::shape, "one name per column required");
  if (x.rows() < 2) throw Error(ErrorCode::too_few_samples, "correlation needs at least 2 rows");
  const Index m = x.cols();
  std::vector<Vector> cols;
  cols.reserve(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    cols.emplace_back(x.col(j));
    if (stats::is_constant(stats::view(cols.back())))
      throw Error(ErrorCode::zero_variance, "feature '" + names[j] + "' is constant");
  }
  CorrelationMatrix c{names, Matrix::Identity(m, m)};
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j) c.r(i, j) = c.r(j, i) = pearson(cols[i], cols[j]);
  return c;
}

/// Average-linkage agglomeration on d = 1 - |r|. Merges the closest pair of
/// clusters while that distance is <= threshold. Clusters are keyed by their
/// smallest member, and distance ties go to the smallest key pair.
inline ClusterMap cluster_features(const CorrelationMatrix& corr, double threshold = 0.3) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::invalid_argument, "threshold must lie in (0, 1)");
  const auto m = static_cast<std::size_t>(corr.r.rows());

  // sum[a][b] holds the sum of pairwise distances between active clusters a and b.
  std::vector<std::vector<double>> sum(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      sum[i][j] = 1.0 - std::fabs(corr.r(static_cast<Index>(i), static_cast<Index>(j)));
  std::vector<std::size_t> size(m, 1);
  std::vector<bool> active(m, true);
  std::vector<std::size_t> owner(m);
  for (std::size_t i = 0; i < m; ++i) owner[i] = i;

  for (;;) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < m; ++j) {
        if (!active[j]) continue;
        const double d = sum[i][j] / static_cast<double>(size[i] * size[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    if (!(best <= threshold)) break;
    // Merge bj into bi; bi < bj so the key stays the smallest member.
    for (std::size_t k = 0; k < m; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      sum[bi][k] += sum[bj][k];
      sum[k][bi] = sum[bi][k];
    }
    size[bi] += size[bj];
    active[bj] = false;
    for (auto& o : owner)
      if (o == bj) o = bi;
  }

  ClusterMap out;
  out.threshold = threshold;
  out.names = corr.names;
  out.assignment.assign(m, -1);
  std::map<std::size_t, int> ids;
  for (std::size_t i = 0; i < m; ++i) {
    auto [it, fresh] = ids.emplace(owner[i], static_cast<int>(ids.size()));
    out.assignment[i] = it->second;
  }
  out.representatives.assign(ids.size(), std::string{});
  return out;
}

/// Representative = member with the largest mean |r| to the rest of its
/// cluster; ties go to the lexicographically smaller name.
inline ClusterMap choose_representatives(ClusterMap clusters, const CorrelationMatrix& corr) {
  if (clusters.assignment.size() != corr.names.size())
    throw Error(ErrorCode::shape, "cluster map and correlation matrix cover different features");
  const auto groups = clusters.members();
  clusters.representatives.assign(groups.size(), std::string{});
  for (std::size_t c = 0; c < groups.size(); ++c) {
    const auto& g = groups[c];
    double best = -1.0;
    std::string best_name;
    for (Index i : g) {
      double score = 0.0;
      if (g.size() > 1) {
        for (Index j : g)
          if (j != i) score += std::fabs(corr.r(i, j));
        score /= static_cast<double>(g.size() - 1);
      }
      const auto& name = corr.names[i];
      if (score > best || (score == best && name < best_name)) {
        best = score;
        best_name = name;
      }
    }
    clusters.representatives[c] = best_name;
  }
  return clusters;
}

/// Ranks `reps` (column names of `x`) by F statistic against y and keeps the
/// first k. Ties in F go to the lexicographically smaller name.
inline SelectionResult select_top_k(const Matrix& x, const Vector& y, const std::vector<std::string>& names,
                                    const std::vector<std::string>& reps, int k = 30) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
  if (x.rows() != y.size()) throw Error(ErrorCode::shape, "x and y row counts differ");
  std::map<std::string, Index> column;
  for (std::size_t j = 0; j < names.size(); ++j) column.emplace(names[j], static_cast<Index>(j));

  SelectionResult out;
  out.k = k;
  for (const auto& rep : reps) {
    const auto it = column.find(rep);
    if (it == column.end()) throw Error(ErrorCode::shape, "representative '" + rep + "' is not a column");
    const Vector col = x.col(it->second);
    out.scores.push_back(f_score(col, y, rep));
  }
  std::sort(out.scores.begin(), out.scores.end(), [](const FeatureScore& a, const FeatureScore& b) {
    if (a.f_value != b.f_value) return a.f_value > b.f_value;
    return a.feature < b.feature;
  });
  for (std::size_t i = 0; i < out.scores.size(); ++i) {
    out.scores[i].rank = static_cast<int>(i + 1);
    if (static_cast<int>(i) < k) out.selected.push_back(out.scores[i].feature);
  }
  return out;
}

}  // namespace foodprice
