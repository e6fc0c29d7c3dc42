#pragma once

// CART regression trees and the two ensembles built on them: bootstrap
// forests and squared-loss gradient boosting.

#include "foodprice/common.hpp"
#include "foodprice/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace foodprice {

inline constexpr int kUnboundedDepth = std::numeric_limits<int>::max();

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int max_depth = kUnboundedDepth;
  int min_leaf = 1;
  Index n_features = 0;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    int k = 0;
    while (!nodes[k].is_leaf()) k = row[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
    return nodes[k].value;
  }

  Vector predict(const Matrix& x) const {
    if (x.cols() != n_features) throw Error(ErrorCode::shape, "tree expects " + std::to_string(n_features) + " columns");
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) out[i] = predict_row(x.row(i));
    return out;
  }

  int depth() const { return depth_from(0); }

 private:
  int depth_from(int k) const {
    if (nodes[k].is_leaf()) return 0;
    return 1 + std::max(depth_from(nodes[k].left), depth_from(nodes[k].right));
  }
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const Vector& y, int max_depth, int min_leaf, Index features_per_split, Rng* rng)
      : x_(x), y_(y), max_depth_(max_depth), min_leaf_(min_leaf), per_split_(features_per_split), rng_(rng) {}

  TreeModel build(std::vector<Index> rows) {
    tree_.max_depth = max_depth_;
    tree_.min_leaf = min_leaf_;
    tree_.n_features = x_.cols();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    Index feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  int grow(std::vector<Index>& rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (Index r : rows) sum += y_[r];
    tree_.nodes[id].value = sum / static_cast<double>(rows.size());

    const bool pure = std::all_of(rows.begin(), rows.end(), [&](Index r) { return y_[r] == y_[rows.front()]; });
    if (pure || depth >= max_depth_ || rows.size() < 2 * static_cast<std::size_t>(min_leaf_)) return id;

    const Split best = best_split(rows, sum);
    if (best.feature < 0) return id;

    std::vector<Index> left, right;
    for (Index r : rows) (x_(r, best.feature) <= best.threshold ? left : right).push_back(r);
    tree_.nodes[id].feature = static_cast<int>(best.feature);
    tree_.nodes[id].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int rgt = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = rgt;
    return id;
  }

  std::vector<Index> candidate_features() {
    std::vector<Index> all(static_cast<std::size_t>(x_.cols()));
    std::iota(all.begin(), all.end(), Index{0});
    if (rng_ == nullptr || per_split_ >= x_.cols()) return all;
    // Partial Fisher-Yates: the first per_split_ slots become the sample.
    for (Index i = 0; i < per_split_; ++i) {
      const auto j = i + static_cast<Index>(rng_->below(static_cast<std::uint64_t>(x_.cols() - i)));
      std::swap(all[i], all[j]);
    }
    all.resize(static_cast<std::size_t>(per_split_));
    std::sort(all.begin(), all.end());
    return all;
  }

  // Maximizes SSE reduction, sum_L^2/n_L + sum_R^2/n_R - sum^2/n. Features are
  // scanned in ascending index and thresholds ascending; only a strictly
  // larger gain replaces the incumbent.
  Split best_split(const std::vector<Index>& rows, double sum) {
    const double n = static_cast<double>(rows.size());
    double parent_sse = 0.0;
    const double mean = sum / n;
    for (Index r : rows) parent_sse += (y_[r] - mean) * (y_[r] - mean);
    const double base = sum * sum / n;

    Split best;
    std::vector<Index> order(rows);
    for (Index f : candidate_features()) {
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double xa = x_(a, f), xb = x_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        left_sum += y_[order[i]];
        const double lo = x_(order[i], f);
        const double hi = x_(order[i + 1], f);
        if (lo == hi) continue;
        const auto n_left = static_cast<double>(i + 1);
        const double n_right = n - n_left;
        if (n_left < min_leaf_ || n_right < min_leaf_) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / n_left + right_sum * right_sum / n_right - base;
        if (gain > best.gain) {
          double mid = 0.5 * (lo + hi);
          if (!(mid < hi)) mid = lo;
          best = {f, mid, gain};
        }
      }
    }
    if (best.feature >= 0 && !(best.gain > 1e-12 * parent_sse)) best.feature = -1;
    return best;
  }

  const Matrix& x_;
  const Vector& y_;
  int max_depth_;
  int min_leaf_;
  Index per_split_;
  Rng* rng_;
  TreeModel tree_;
};

inline void check_xy(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw Error(ErrorCode::shape, "x and y row counts differ");
  if (x.rows() == 0) throw Error(ErrorCode::too_few_samples, "empty training set");
}

}  // namespace detail

/// Greedy CART on squared error. Candidate thresholds are midpoints between
/// consecutive distinct values; a row goes left when x <= threshold.
inline TreeModel fit_tree(const Matrix& x, const Vector& y, int max_depth = kUnboundedDepth, int min_leaf = 1) {
  detail::check_xy(x, y);
  if (min_leaf < 1) throw Error(ErrorCode::invalid_argument, "min_leaf must be at least 1");
  if (max_depth < 0) throw Error(ErrorCode::invalid_argument, "max_depth must be >= 0");
  if (x.rows() < 2 * static_cast<Index>(min_leaf) && max_depth > 0)
    throw Error(ErrorCode::too_few_samples, "tree needs at least 2 * min_leaf rows");
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return detail::TreeBuilder(x, y, max_depth, min_leaf, x.cols(), nullptr).build(std::move(rows));
}

struct ForestParams {
  int n_trees = 100;
  int max_depth = kUnboundedDepth;
  int min_leaf = 1;
  double feature_subsample = 1.0 / 3.0;
  bool bootstrap = true;
  std::uint64_t seed = 42;
};

struct ForestModel {
  std::vector<TreeModel> trees;
  std::vector<std::uint64_t> bootstrap_seeds;
  double feature_subsample = 1.0 / 3.0;
  bool bootstrap = true;

  Vector predict(const Matrix& x) const {
    Vector acc = Vector::Zero(x.rows());
    for (const auto& t : trees) acc += t.predict(x);
    return acc / static_cast<double>(trees.size());
  }
};

inline Index features_per_split(Index m, double feature_subsample) {
  return std::max<Index>(1, static_cast<Index>(std::llround(feature_subsample * static_cast<double>(m))));
}

/// Each tree draws its own seed from (seed, tree index), takes n bootstrap
/// draws with replacement when enabled, and samples features per split.
inline ForestModel fit_forest(const Matrix& x, const Vector& y, const ForestParams& p = {}) {
  detail::check_xy(x, y);
  if (p.n_trees < 1) throw Error(ErrorCode::invalid_argument, "n_trees must be at least 1");
  if (!(p.feature_subsample > 0.0 && p.feature_subsample <= 1.0))
    throw Error(ErrorCode::invalid_argument, "feature_subsample must lie in (0, 1]");
  if (p.min_leaf < 1) throw Error(ErrorCode::invalid_argument, "min_leaf must be at least 1");

  ForestModel forest;
  forest.feature_subsample = p.feature_subsample;
  forest.bootstrap = p.bootstrap;
  const Index per_split = features_per_split(x.cols(), p.feature_subsample);
  const auto n = static_cast<std::size_t>(x.rows());
  for (int t = 0; t < p.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(p.seed, static_cast<std::uint64_t>(t));
    Rng rng(tree_seed);
    std::vector<Index> rows(n);
    if (p.bootstrap) {
      for (auto& r : rows) r = static_cast<Index>(rng.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), Index{0});
    }
    forest.bootstrap_seeds.push_back(tree_seed);
    forest.trees.push_back(detail::TreeBuilder(x, y, p.max_depth, p.min_leaf, per_split, &rng).build(std::move(rows)));
  }
  return forest;
}

struct GbmParams {
  int rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  int min_leaf = 1;
};

struct GbmModel {
  double init_value = 0.0;
  std::vector<TreeModel> trees;
  double learning_rate = 0.1;
  int rounds = 0;
  Index n_features = 0;

  Vector predict(const Matrix& x) const {
    if (x.cols() != n_features) throw Error(ErrorCode::shape, "boosting model expects " + std::to_string(n_features) + " columns");
    Vector out = Vector::Constant(x.rows(), init_value);
    for (const auto& t : trees) out += learning_rate * t.predict(x);
    return out;
  }
};

/// Squared-loss boosting: start from mean(y), then each round fits a tree to
/// the current residuals and adds it with shrinkage. `train_mse`, when
/// given, receives the training MSE after each round (index 0 = init only).
inline GbmModel fit_gbm(const Matrix& x, const Vector& y, const GbmParams& p = {},
                        std::vector<double>* train_mse = nullptr) {
  detail::check_xy(x, y);
  if (p.rounds < 0) throw Error(ErrorCode::invalid_argument, "rounds must be >= 0");
  if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0))
    throw Error(ErrorCode::invalid_argument, "learning_rate must lie in (0, 1]");

  GbmModel m;
  m.init_value = y.mean();
  m.learning_rate = p.learning_rate;
  m.rounds = p.rounds;
  m.n_features = x.cols();
  Vector pred = Vector::Constant(y.size(), m.init_value);
  if (train_mse) train_mse->assign(1, (y - pred).squaredNorm() / static_cast<double>(y.size()));
  for (int round = 0; round < p.rounds; ++round) {
    const Vector residual = y - pred;
    m.trees.push_back(fit_tree(x, residual, p.max_depth, p.min_leaf));
    pred += p.learning_rate * m.trees.back().predict(x);
    if (train_mse) train_mse->push_back((y - pred).squaredNorm() / static_cast<double>(y.size()));
  }
  return m;
}

}  // namespace foodprice
