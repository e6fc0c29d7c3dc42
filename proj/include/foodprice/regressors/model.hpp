#pragma once

// One predict contract over the six engines, plus versioned JSON
// serialization that round-trips every double exactly.

#include "foodprice/common.hpp"
#include "foodprice/regressors/linear.hpp"
#include "foodprice/regressors/svr.hpp"
#include "foodprice/regressors/trees.hpp"

#include <json.hpp>

#include <string>
#include <variant>
#include <vector>

namespace foodprice {

using RegressionModel = std::variant<LinearModel, TreeModel, ForestModel, GbmModel, SvrModel>;

inline Vector predict(const RegressionModel& model, const Matrix& x) {
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

inline constexpr int kModelFormatVersion = 1;

namespace serial {

using nlohmann::json;

inline json vec(const Vector& v) { return json(to_std(v)); }

inline Vector vec(const json& j) { return to_eigen(j.get<std::vector<double>>()); }

inline json mat(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_std(m.row(i).transpose()));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Matrix mat(const json& j) {
  Matrix m(j.at("rows").get<Index>(), j.at("cols").get<Index>());
  const auto& data = j.at("data");
  for (Index i = 0; i < m.rows(); ++i)
    for (Index c = 0; c < m.cols(); ++c) m(i, c) = data.at(i).at(c).get<double>();
  return m;
}

// Depth limits are stored as -1 when unbounded.
inline json depth(int d) { return d == kUnboundedDepth ? json(-1) : json(d); }
inline int depth(const json& j) {
  const int d = j.get<int>();
  return d < 0 ? kUnboundedDepth : d;
}

inline json tree(const TreeModel& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) {
      nodes.push_back(json{{"value", n.value}});
    } else {
      nodes.push_back(json{{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}, {"value", n.value}});
    }
  }
  return json{{"max_depth", depth(t.max_depth)}, {"min_leaf", t.min_leaf}, {"n_features", t.n_features}, {"nodes", nodes}};
}

inline TreeModel tree(const json& j) {
  TreeModel t;
  t.max_depth = depth(j.at("max_depth"));
  t.min_leaf = j.at("min_leaf").get<int>();
  t.n_features = j.at("n_features").get<Index>();
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.value = n.at("value").get<double>();
    if (n.contains("feature")) {
      node.feature = n.at("feature").get<int>();
      node.threshold = n.at("threshold").get<double>();
      node.left = n.at("left").get<int>();
      node.right = n.at("right").get<int>();
    }
    t.nodes.push_back(node);
  }
  return t;
}

inline json kernel(const KernelSpec& k) {
  return json{{"kind", to_string(k.kind)}, {"gamma", k.gamma}, {"degree", k.degree}, {"coef0", k.coef0}};
}

inline KernelSpec kernel(const json& j) {
  KernelSpec k;
  k.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  k.gamma = j.at("gamma").get<double>();
  k.degree = j.at("degree").get<int>();
  k.coef0 = j.at("coef0").get<double>();
  return k;
}

}  // namespace serial

inline nlohmann::json to_json(const RegressionModel& model) {
  using nlohmann::json;
  json j{{"format_version", kModelFormatVersion}};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          j["kind"] = "linear";
          j["weights"] = serial::vec(m.weights);
          j["bias"] = m.bias;
          j["regularization"] = m.regularization;
        } else if constexpr (std::is_same_v<T, TreeModel>) {
          j["kind"] = "tree";
          j["tree"] = serial::tree(m);
        } else if constexpr (std::is_same_v<T, ForestModel>) {
          j["kind"] = "forest";
          j["feature_subsample"] = m.feature_subsample;
          j["bootstrap"] = m.bootstrap;
          j["bootstrap_seeds"] = m.bootstrap_seeds;
          json trees = json::array();
          for (const auto& t : m.trees) trees.push_back(serial::tree(t));
          j["trees"] = trees;
        } else if constexpr (std::is_same_v<T, GbmModel>) {
          j["kind"] = "gbm";
          j["init_value"] = m.init_value;
          j["learning_rate"] = m.learning_rate;
          j["rounds"] = m.rounds;
          j["n_features"] = m.n_features;
          json trees = json::array();
          for (const auto& t : m.trees) trees.push_back(serial::tree(t));
          j["trees"] = trees;
        } else {
          j["kind"] = "svr";
          j["kernel"] = serial::kernel(m.kernel);
          j["c"] = m.c;
          j["epsilon"] = m.epsilon;
          j["bias"] = m.bias;
          j["support_indices"] = m.support_indices;
          j["dual_coefs"] = serial::vec(m.dual_coefs);
          j["x_support"] = serial::mat(m.x_support);
          j["converged"] = m.converged;
          j["violation"] = m.violation;
          j["iterations"] = m.iterations;
        }
      },
      model);
  return j;
}

inline RegressionModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw Error(ErrorCode::parse, "unsupported model format_version " + std::to_string(version));
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "linear") {
      LinearModel m;
      m.weights = serial::vec(j.at("weights"));
      m.bias = j.at("bias").get<double>();
      m.regularization = j.at("regularization").get<double>();
      return m;
    }
    if (kind == "tree") return serial::tree(j.at("tree"));
    if (kind == "forest") {
      ForestModel m;
      m.feature_subsample = j.at("feature_subsample").get<double>();
      m.bootstrap = j.at("bootstrap").get<bool>();
      m.bootstrap_seeds = j.at("bootstrap_seeds").get<std::vector<std::uint64_t>>();
      for (const auto& t : j.at("trees")) m.trees.push_back(serial::tree(t));
      return m;
    }
    if (kind == "gbm") {
      GbmModel m;
      m.init_value = j.at("init_value").get<double>();
      m.learning_rate = j.at("learning_rate").get<double>();
      m.rounds = j.at("rounds").get<int>();
      m.n_features = j.at("n_features").get<Index>();
      for (const auto& t : j.at("trees")) m.trees.push_back(serial::tree(t));
      return m;
    }
    if (kind == "svr") {
      SvrModel m;
      m.kernel = serial::kernel(j.at("kernel"));
      m.c = j.at("c").get<double>();
      m.epsilon = j.at("epsilon").get<double>();
      m.bias = j.at("bias").get<double>();
      m.support_indices = j.at("support_indices").get<std::vector<Index>>();
      m.dual_coefs = serial::vec(j.at("dual_coefs"));
      m.x_support = serial::mat(j.at("x_support"));
      m.converged = j.at("converged").get<bool>();
      m.violation = j.at("violation").get<double>();
      m.iterations = j.at("iterations").get<long>();
      return m;
    }
    throw Error(ErrorCode::parse, "unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("malformed model document: ") + e.what());
  }
}

}  // namespace foodprice
