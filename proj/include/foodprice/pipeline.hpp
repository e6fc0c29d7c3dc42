#pragma once

// End-to-end orchestration. Each stage reads its inputs from the data file
// and from artifacts earlier stages left in out_dir, and writes its own
// artifacts before returning, so a full run and a chain of single-stage
// runs produce the same files.
//
//   eda       summary_stats.csv, normality.csv, kde/<feature>.csv
//   select    heatmap.csv, clusters.json, selected_features.json
//   train     cv_results.csv, models/<model>.json
//   evaluate  model_comparison.csv
//   report    model_comparison.csv (re-derived), report.md
//
// Every invocation also writes manifest.json describing what it wrote.

#include "foodprice/common.hpp"
#include "foodprice/data_ingest.hpp"
#include "foodprice/eda_stats.hpp"
#include "foodprice/feature_select.hpp"
#include "foodprice/model_eval.hpp"
#include "foodprice/regressors/model.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace foodprice {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& all_model_names() {
  static const std::vector<std::string> names{"svr", "ridge", "linear", "gradient_boosting", "random_forest",
                                              "decision_tree"};
  return names;
}

struct TreeParams {
  int max_depth = kUnboundedDepth;
  int min_leaf = 1;
};

struct PipelineConfig {
  std::string data_path;
  std::string target_column = "FFPI";
  std::uint64_t seed = 42;
  double train_fraction = 0.8;
  int top_k = 30;
  double cluster_threshold = 0.3;
  HyperGrid grid;
  std::string out_dir;
  std::vector<std::string> models = all_model_names();
  int cv_folds = 5;
  int kde_grid_size = 256;
  double confidence = 0.95;
  double svr_tol = 1e-3;
  double ridge_lambda = 1.0;
  bool tune_all = false;
  TreeParams tree;
  ForestParams forest;
  GbmParams gbm;

  void validate() const {
    auto bad = [](const std::string& m) { return Error(ErrorCode::config, m); };
    if (data_path.empty()) throw bad("data_path is required");
    if (out_dir.empty()) throw bad("out_dir is required");
    if (target_column.empty()) throw bad("target_column must be non-empty");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw bad("train_fraction must lie in (0, 1)");
    if (top_k < 1) throw bad("top_k must be at least 1");
    if (!(cluster_threshold > 0.0 && cluster_threshold < 1.0)) throw bad("cluster_threshold must lie in (0, 1)");
    if (cv_folds < 2) throw bad("cv_folds must be at least 2");
    if (kde_grid_size < 16) throw bad("kde_grid_size must be at least 16");
    if (!(confidence > 0.0 && confidence < 1.0)) throw bad("confidence must lie in (0, 1)");
    if (!(svr_tol > 0.0)) throw bad("svr_tol must be positive");
    if (!(ridge_lambda >= 0.0)) throw bad("ridge_lambda must be >= 0");
    if (models.empty()) throw bad("models must name at least one model");
    std::set<std::string> seen;
    for (const auto& m : models) {
      const auto& all = all_model_names();
      if (std::find(all.begin(), all.end(), m) == all.end()) throw bad("unknown model '" + m + "'");
      if (!seen.insert(m).second) throw bad("model '" + m + "' listed twice");
    }
    if (tree.min_leaf < 1 || forest.min_leaf < 1 || gbm.min_leaf < 1) throw bad("min_leaf must be at least 1");
    if (forest.n_trees < 1) throw bad("forest.n_trees must be at least 1");
    if (!(forest.feature_subsample > 0.0 && forest.feature_subsample <= 1.0))
      throw bad("forest.feature_subsample must lie in (0, 1]");
    if (gbm.rounds < 0) throw bad("gbm.rounds must be >= 0");
    if (!(gbm.learning_rate > 0.0 && gbm.learning_rate <= 1.0)) throw bad("gbm.learning_rate must lie in (0, 1]");
    grid.validate();
  }
};

// ---------------------------------------------------------------------------
// Config <-> JSON

namespace config_json {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::config, where + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw Error(ErrorCode::config, "unknown key '" + key + "' in " + where);
}

inline json depth_value(int d) { return d == kUnboundedDepth ? json(nullptr) : json(d); }

inline int depth_from(const json& j) { return j.is_null() ? kUnboundedDepth : j.get<int>(); }

inline json to_json(const PipelineConfig& c) {
  json kernels = json::array();
  for (auto k : c.grid.kernels) kernels.push_back(to_string(k));
  return json{
      {"data_path", c.data_path},
      {"target_column", c.target_column},
      {"seed", c.seed},
      {"train_fraction", c.train_fraction},
      {"top_k", c.top_k},
      {"cluster_threshold", c.cluster_threshold},
      {"grid",
       {{"c_values", c.grid.c_values},
        {"epsilon_values", c.grid.epsilon_values},
        {"gamma_values", c.grid.gamma_values},
        {"kernels", kernels},
        {"degree", c.grid.degree},
        {"coef0", c.grid.coef0}}},
      {"out_dir", c.out_dir},
      {"models", c.models},
      {"cv_folds", c.cv_folds},
      {"kde_grid_size", c.kde_grid_size},
      {"confidence", c.confidence},
      {"svr_tol", c.svr_tol},
      {"ridge_lambda", c.ridge_lambda},
      {"tune_all", c.tune_all},
      {"tree", {{"max_depth", depth_value(c.tree.max_depth)}, {"min_leaf", c.tree.min_leaf}}},
      {"forest",
       {{"n_trees", c.forest.n_trees},
        {"max_depth", depth_value(c.forest.max_depth)},
        {"min_leaf", c.forest.min_leaf},
        {"feature_subsample", c.forest.feature_subsample},
        {"bootstrap", c.forest.bootstrap}}},
      {"gbm",
       {{"rounds", c.gbm.rounds},
        {"learning_rate", c.gbm.learning_rate},
        {"max_depth", depth_value(c.gbm.max_depth)},
        {"min_leaf", c.gbm.min_leaf}}},
  };
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void apply_json(const json& j, PipelineConfig& c) {
  try {
    reject_unknown(j,
                   {"data_path", "target_column", "seed", "train_fraction", "top_k", "cluster_threshold", "grid",
                    "out_dir", "models", "cv_folds", "kde_grid_size", "confidence", "svr_tol", "ridge_lambda",
                    "tune_all", "tree", "forest", "gbm"},
                   "config");
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("data_path", c.data_path);
    get("target_column", c.target_column);
    get("seed", c.seed);
    get("train_fraction", c.train_fraction);
    get("top_k", c.top_k);
    get("cluster_threshold", c.cluster_threshold);
    get("out_dir", c.out_dir);
    get("models", c.models);
    get("cv_folds", c.cv_folds);
    get("kde_grid_size", c.kde_grid_size);
    get("confidence", c.confidence);
    get("svr_tol", c.svr_tol);
    get("ridge_lambda", c.ridge_lambda);
    get("tune_all", c.tune_all);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      reject_unknown(g, {"c_values", "epsilon_values", "gamma_values", "kernels", "degree", "coef0"}, "grid");
      if (g.contains("c_values")) c.grid.c_values = g.at("c_values").get<std::vector<double>>();
      if (g.contains("epsilon_values")) c.grid.epsilon_values = g.at("epsilon_values").get<std::vector<double>>();
      if (g.contains("gamma_values")) c.grid.gamma_values = g.at("gamma_values").get<std::vector<double>>();
      if (g.contains("degree")) c.grid.degree = g.at("degree").get<int>();
      if (g.contains("coef0")) c.grid.coef0 = g.at("coef0").get<double>();
      if (g.contains("kernels")) {
        c.grid.kernels.clear();
        for (const auto& k : g.at("kernels")) c.grid.kernels.push_back(kernel_kind_from_string(k.get<std::string>()));
      }
    }
    if (j.contains("tree")) {
      const auto& t = j.at("tree");
      reject_unknown(t, {"max_depth", "min_leaf"}, "tree");
      if (t.contains("max_depth")) c.tree.max_depth = depth_from(t.at("max_depth"));
      if (t.contains("min_leaf")) c.tree.min_leaf = t.at("min_leaf").get<int>();
    }
    if (j.contains("forest")) {
      const auto& f = j.at("forest");
      reject_unknown(f, {"n_trees", "max_depth", "min_leaf", "feature_subsample", "bootstrap"}, "forest");
      if (f.contains("n_trees")) c.forest.n_trees = f.at("n_trees").get<int>();
      if (f.contains("max_depth")) c.forest.max_depth = depth_from(f.at("max_depth"));
      if (f.contains("min_leaf")) c.forest.min_leaf = f.at("min_leaf").get<int>();
      if (f.contains("feature_subsample")) c.forest.feature_subsample = f.at("feature_subsample").get<double>();
      if (f.contains("bootstrap")) c.forest.bootstrap = f.at("bootstrap").get<bool>();
    }
    if (j.contains("gbm")) {
      const auto& g = j.at("gbm");
      reject_unknown(g, {"rounds", "learning_rate", "max_depth", "min_leaf"}, "gbm");
      if (g.contains("rounds")) c.gbm.rounds = g.at("rounds").get<int>();
      if (g.contains("learning_rate")) c.gbm.learning_rate = g.at("learning_rate").get<double>();
      if (g.contains("max_depth")) c.gbm.max_depth = depth_from(g.at("max_depth"));
      if (g.contains("min_leaf")) c.gbm.min_leaf = g.at("min_leaf").get<int>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("bad config value: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    throw Error(ErrorCode::config, e.what());
  }
}

inline PipelineConfig load_file(const std::string& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, "config file '" + path + "' is not valid JSON: " + e.what());
  }
  apply_json(j, base);
  return base;
}

}  // namespace config_json

// ---------------------------------------------------------------------------
// Artifact I/O

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::io, "sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

/// Writes files under an output directory and remembers their digests.
class ArtifactWriter {
 public:
  struct Entry {
    std::string path;
    std::string digest;
  };

  explicit ArtifactWriter(std::filesystem::path root) : root_(std::move(root)) {}

  void write(const std::string& relative, const std::string& content) {
    const auto full = root_ / relative;
    std::filesystem::create_directories(full.parent_path());
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write '" + full.string() + "'");
    out << content;
    if (!out) throw Error(ErrorCode::io, "write failed for '" + full.string() + "'");
    entries_.push_back({relative, "sha256:" + sha256_hex(content)});
  }

  void write_json(const std::string& relative, const nlohmann::json& j) { write(relative, j.dump(2) + "\n"); }

  const std::vector<Entry>& entries() const { return entries_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<Entry> entries_;
};

inline std::filesystem::path require_artifact(const PipelineConfig& c, const std::string& relative) {
  const auto p = std::filesystem::path(c.out_dir) / relative;
  if (!std::filesystem::exists(p))
    throw Error(ErrorCode::missing_artifact, "expected '" + relative + "' in " + c.out_dir + "; run the upstream stage first");
  return p;
}

inline nlohmann::json read_json_artifact(const PipelineConfig& c, const std::string& relative) {
  const auto p = require_artifact(c, relative);
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, "'" + relative + "' is not valid JSON: " + e.what());
  }
}

inline std::string safe_file_name(std::string name) {
  for (char& ch : name)
    if (ch == '/' || ch == '\\' || ch == ':' || ch == ' ') ch = '_';
  return name;
}

// ---------------------------------------------------------------------------
// Shared data preparation

/// Outcome of the normality screen as persisted in normality.csv.
struct ScreenRecord {
  std::string feature;
  bool dropped = false;  // constant on the training rows
  std::optional<double> lambda;
};

/// Imputed table, split, and feature columns after the normality screen.
struct PreparedData {
  IndicatorTable table;
  SplitData split;
  std::vector<std::string> names;  // surviving features, table order
};

inline IndicatorTable load_and_impute(const PipelineConfig& c) {
  return impute(load_table(c.data_path, c.target_column));
}

/// Applies screen records (drops and Yeo-Johnson lambdas) to both split halves.
inline PreparedData prepare(const PipelineConfig& c, const std::vector<ScreenRecord>& screen) {
  PreparedData p;
  p.table = load_and_impute(c);
  p.split = split(p.table, c.train_fraction, c.seed);
  if (screen.size() != p.table.feature_names.size())
    throw Error(ErrorCode::shape, "normality.csv lists " + std::to_string(screen.size()) + " features, data has " +
                                      std::to_string(p.table.feature_names.size()));
  std::vector<Index> keep;
  for (std::size_t j = 0; j < screen.size(); ++j) {
    if (screen[j].feature != p.table.feature_names[j])
      throw Error(ErrorCode::shape, "normality.csv feature '" + screen[j].feature + "' does not match data column '" +
                                        p.table.feature_names[j] + "'");
    if (screen[j].dropped) continue;
    keep.push_back(static_cast<Index>(j));
    p.names.push_back(screen[j].feature);
  }
  auto transform = [&](Matrix& x) {
    for (Index col : keep) {
      const auto& lambda = screen[static_cast<std::size_t>(col)].lambda;
      if (!lambda) continue;
      for (Index i = 0; i < x.rows(); ++i) x(i, col) = yeo_johnson_value(x(i, col), *lambda);
    }
    x = select_cols(x, keep);
  };
  transform(p.split.train_x);
  transform(p.split.test_x);
  return p;
}

inline std::vector<ScreenRecord> read_screen(const PipelineConfig& c) {
  const auto p = require_artifact(c, "normality.csv");
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  std::vector<ScreenRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = csv::split_record(line);
    if (cells.size() != 6) throw Error(ErrorCode::parse, "normality.csv: malformed row '" + line + "'");
    ScreenRecord r;
    r.feature = cells[0];
    r.dropped = cells[3].empty();
    if (!cells[5].empty()) {
      double lambda = 0.0;
      if (!parse_double(cells[5], lambda)) throw Error(ErrorCode::parse, "normality.csv: bad lambda '" + cells[5] + "'");
      r.lambda = lambda;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage bookkeeping

struct StageRecord {
  std::string name;
  long long millis = 0;
  bool ok = true;
};

struct RunManifest {
  nlohmann::json config;
  std::string version = kVersion;
  std::vector<StageRecord> stages;
  std::vector<ArtifactWriter::Entry> outputs;
  std::vector<std::string> warnings;
  bool failed = false;
  std::string failed_stage;
  std::string error;

  nlohmann::json to_json() const {
    using nlohmann::json;
    json stage_list = json::array();
    for (const auto& s : stages) stage_list.push_back({{"name", s.name}, {"millis", s.millis}, {"status", s.ok ? "ok" : "FAILED"}});
    json output_list = json::array();
    for (const auto& o : outputs) output_list.push_back({{"path", o.path}, {"digest", o.digest}});
    json j{{"config", config},     {"version", version},   {"status", failed ? "FAILED" : "ok"},
           {"stages", stage_list}, {"outputs", output_list}, {"warnings", warnings}};
    if (failed) {
      j["failed_stage"] = failed_stage;
      j["error"] = error;
    }
    return j;
  }
};

/// Error raised by run_stages; carries the stage name and the exit code.
class StageFailure : public std::runtime_error {
 public:
  StageFailure(std::string stage, int exit_code, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), exit_code_(exit_code) {}

  const std::string& stage() const { return stage_; }
  int exit_code() const { return exit_code_; }

 private:
  std::string stage_;
  int exit_code_;
};

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::config: return 2;
    case ErrorCode::schema:
    case ErrorCode::duplicate_row:
    case ErrorCode::parse:
    case ErrorCode::empty_column:
    case ErrorCode::too_few_rows: return 3;
    default: return 4;
  }
}

struct StageContext {
  const PipelineConfig& config;
  ArtifactWriter& writer;
  std::vector<std::string>& warnings;
};

// ---------------------------------------------------------------------------
// Stages

namespace stages {

inline void eda(StageContext& ctx) {
  const auto& c = ctx.config;
  const IndicatorTable table = [&] {
    try {
      return load_and_impute(c);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::io) throw Error(ErrorCode::parse, e.what());
      throw;
    }
  }();
  const SplitData sp = split(table, c.train_fraction, c.seed);

  std::ostringstream summary;
  summary << "variable,n,mean,median,std_dev,iqr,ci_low,ci_high\n";
  auto summary_row = [&](const std::string& name, const Vector& v) {
    const auto s = describe(v, c.confidence);
    summary << csv_field(name) << ',' << s.n << ',' << format_double(s.mean) << ',' << format_double(s.median) << ','
            << format_double(s.std_dev) << ',' << format_double(s.iqr) << ',' << format_double(s.ci_low) << ','
            << format_double(s.ci_high) << '\n';
  };
  summary_row(table.target_name, table.target);
  for (Index j = 0; j < table.features(); ++j) summary_row(table.feature_names[j], table.values.col(j));
  ctx.writer.write("summary_stats.csv", summary.str());

  std::ostringstream normality;
  normality << "feature,a_squared,a_star,p_value,passed,transform_lambda\n";
  auto write_kde = [&](const std::string& name, const Vector& v) {
    const auto curve = kde(stats::view(v), c.kde_grid_size);
    std::ostringstream os;
    os << "grid,density\n";
    for (Index k = 0; k < curve.grid.size(); ++k) os << format_double(curve.grid[k]) << ',' << format_double(curve.density[k]) << '\n';
    ctx.writer.write("kde/" + safe_file_name(name) + ".csv", os.str());
  };
  if (!stats::is_constant(stats::view(sp.train_y))) write_kde(table.target_name, sp.train_y);
  for (Index j = 0; j < table.features(); ++j) {
    const auto& name = table.feature_names[j];
    const Vector col = sp.train_x.col(j);
    if (stats::is_constant(stats::view(col))) {
      ctx.warnings.push_back("feature '" + name + "' is constant on the training rows and was dropped");
      normality << csv_field(name) << ",,,,false,\n";
      continue;
    }
    const auto screened = screen_feature(stats::view(col), name);
    const auto& r = screened.result;
    normality << csv_field(name) << ',' << format_double(r.a_squared) << ',' << format_double(r.a_star) << ','
              << format_double(r.p_value) << ',' << (r.passed ? "true" : "false") << ','
              << (r.transform_lambda ? format_double(*r.transform_lambda) : std::string{}) << '\n';
    write_kde(name, col);
  }
  ctx.writer.write("normality.csv", normality.str());
}

inline void select(StageContext& ctx) {
  const auto& c = ctx.config;
  const auto prepared = prepare(c, read_screen(c));
  const auto& x = prepared.split.train_x;
  const auto& names = prepared.names;

  const auto corr = correlation_matrix(x, names);
  const auto clusters = choose_representatives(cluster_features(corr, c.cluster_threshold), corr);
  const auto groups = clusters.members();
  const auto selection = select_top_k(x, prepared.split.train_y, names, clusters.representatives, c.top_k);
  if (static_cast<int>(selection.selected.size()) < c.top_k) {
    ctx.warnings.push_back("top_k = " + std::to_string(c.top_k) + " but only " +
                           std::to_string(selection.selected.size()) + " clusters survived; selected " +
                           std::to_string(selection.selected.size()) + " features");
  }

  // Heatmap rows and columns follow cluster order so blocks sit together.
  std::vector<Index> order;
  for (const auto& g : groups) order.insert(order.end(), g.begin(), g.end());
  std::ostringstream heat;
  heat << "feature";
  for (Index j : order) heat << ',' << csv_field(names[j]);
  heat << '\n';
  for (Index i : order) {
    heat << csv_field(names[i]);
    for (Index j : order) heat << ',' << format_double(corr.r(i, j));
    heat << '\n';
  }
  ctx.writer.write("heatmap.csv", heat.str());

  nlohmann::json cl = nlohmann::json::array();
  for (std::size_t id = 0; id < groups.size(); ++id) {
    std::vector<std::string> members;
    for (Index j : groups[id]) members.push_back(names[j]);
    cl.push_back({{"id", id}, {"members", members}, {"representative", clusters.representatives[id]}});
  }
  ctx.writer.write_json("clusters.json", {{"threshold", c.cluster_threshold}, {"clusters", cl}});

  nlohmann::json feats = nlohmann::json::array();
  for (const auto& s : selection.scores) {
    if (s.rank > c.top_k) break;
    feats.push_back({{"rank", s.rank},
                     {"feature", s.feature},
                     {"r", s.r},
                     {"f_value", std::isinf(s.f_value) ? nlohmann::json("inf") : nlohmann::json(s.f_value)},
                     {"p_value", s.p_value}});
  }
  ctx.writer.write_json("selected_features.json",
                        {{"k", c.top_k}, {"candidates", selection.scores.size()}, {"features", feats}});
}

inline std::vector<std::string> read_selected(const PipelineConfig& c) {
  const auto j = read_json_artifact(c, "selected_features.json");
  std::vector<std::string> out;
  try {
    for (const auto& f : j.at("features")) out.push_back(f.at("feature").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("selected_features.json: ") + e.what());
  }
  if (out.empty()) throw Error(ErrorCode::parse, "selected_features.json lists no features");
  return out;
}

/// Training design: selected columns, standardized with train-row moments.
struct Design {
  std::vector<std::string> features;
  Scaler feature_scaler;
  Scaler target_scaler;
  Matrix train_x;  // scaled
  Vector train_y;  // standardized
  Matrix test_x;   // scaled
  Vector test_y;   // raw
};

inline Design build_design(const PreparedData& p, const std::vector<std::string>& features) {
  std::map<std::string, Index> column;
  for (std::size_t j = 0; j < p.names.size(); ++j) column.emplace(p.names[j], static_cast<Index>(j));
  std::vector<Index> cols;
  for (const auto& f : features) {
    const auto it = column.find(f);
    if (it == column.end()) throw Error(ErrorCode::shape, "selected feature '" + f + "' is not in the prepared data");
    cols.push_back(it->second);
  }
  Design d;
  d.features = features;
  const Matrix train_raw = select_cols(p.split.train_x, cols);
  d.feature_scaler = Scaler::fit(train_raw, features);
  d.target_scaler = Scaler::fit_vector(p.split.train_y, p.table.target_name);
  d.train_x = d.feature_scaler.transform(train_raw);
  d.train_y = d.target_scaler.transform_vector(p.split.train_y);
  d.test_x = d.feature_scaler.transform(select_cols(p.split.test_x, cols));
  d.test_y = p.split.test_y;
  return d;
}

struct NamedTrainer {
  std::string name;
  std::string params;  // human-readable hyperparameters
  Trainer trainer;
};

inline std::string depth_label(int d) { return d == kUnboundedDepth ? "none" : std::to_string(d); }

/// Generic CV search for the non-SVR models (opt-in via tune_all).
inline NamedTrainer tune(const std::string& model, const std::vector<NamedTrainer>& candidates, const Design& d,
                         const FoldPlan& folds, std::ostringstream& log) {
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double mean = std::numeric_limits<double>::quiet_NaN();
    std::string scores;
    try {
      const auto s = cross_validate(d.train_x, d.train_y, folds, candidates[i].trainer);
      mean = 0.0;
      for (double v : s) {
        mean += v;
        scores += (scores.empty() ? "" : ";") + format_double(v);
      }
      mean /= static_cast<double>(s.size());
    } catch (const Error&) {
    }
    log << model << ',' << csv_field(candidates[i].params) << ',' << scores << ',' << format_double(mean) << '\n';
    if (mean < best_score) {
      best_score = mean;
      best = i;
    }
  }
  return candidates[best];
}

inline void train(StageContext& ctx) {
  const auto& c = ctx.config;
  const auto prepared = prepare(c, read_screen(c));
  const Design d = build_design(prepared, read_selected(c));
  const FoldPlan folds = kfold(d.train_x.rows(), c.cv_folds, c.seed);

  std::map<std::string, NamedTrainer> trainers;
  const bool want_svr = std::find(c.models.begin(), c.models.end(), "svr") != c.models.end();
  if (want_svr) {
    const auto search = grid_search(d.train_x, d.train_y, c.grid, folds, c.svr_tol);
    std::ostringstream cv;
    cv << "rank,kernel,c,epsilon,gamma";
    for (int f = 0; f < folds.k; ++f) cv << ",fold_" << (f + 1);
    cv << ",mean_mse,converged\n";
    for (const auto& r : search.results) {
      cv << r.rank << ',' << to_string(r.config.kernel.kind) << ',' << format_double(r.config.c) << ','
         << format_double(r.config.epsilon) << ','
         << (r.config.kernel.kind == KernelKind::linear ? std::string{} : format_double(r.config.kernel.gamma));
      for (double s : r.fold_scores) cv << ',' << format_double(s);
      cv << ',' << format_double(r.mean_score) << ',' << (r.converged ? "true" : "false") << '\n';
      if (!r.converged)
        ctx.warnings.push_back("svr config rank " + std::to_string(r.rank) + " did not converge on every fold");
    }
    ctx.writer.write("cv_results.csv", cv.str());
    const auto best = search.best;
    const double tol = c.svr_tol;
    trainers["svr"] = {"svr",
                       "kernel=" + std::string(to_string(best.kernel.kind)) + " c=" + format_double(best.c) +
                           " epsilon=" + format_double(best.epsilon) +
                           (best.kernel.kind == KernelKind::linear ? "" : " gamma=" + format_double(best.kernel.gamma)),
                       [best, tol](const Matrix& x, const Vector& y) -> RegressionModel {
                         return fit_svr(x, y, SvrParams{best.c, best.epsilon, best.kernel, tol, 0});
                       }};
  }

  auto ridge_trainer = [](double lambda) {
    return NamedTrainer{"ridge", "lambda=" + format_double(lambda),
                        [lambda](const Matrix& x, const Vector& y) -> RegressionModel { return fit_ridge(x, y, lambda); }};
  };
  auto tree_trainer = [](TreeParams t) {
    return NamedTrainer{"decision_tree", "max_depth=" + depth_label(t.max_depth) + " min_leaf=" + std::to_string(t.min_leaf),
                        [t](const Matrix& x, const Vector& y) -> RegressionModel {
                          return fit_tree(x, y, t.max_depth, t.min_leaf);
                        }};
  };
  auto forest_trainer = [](ForestParams f) {
    return NamedTrainer{"random_forest",
                        "n_trees=" + std::to_string(f.n_trees) + " max_depth=" + depth_label(f.max_depth) +
                            " min_leaf=" + std::to_string(f.min_leaf) +
                            " feature_subsample=" + format_double(f.feature_subsample) +
                            " bootstrap=" + (f.bootstrap ? "true" : "false"),
                        [f](const Matrix& x, const Vector& y) -> RegressionModel { return fit_forest(x, y, f); }};
  };
  auto gbm_trainer = [](GbmParams g) {
    return NamedTrainer{"gradient_boosting",
                        "rounds=" + std::to_string(g.rounds) + " learning_rate=" + format_double(g.learning_rate) +
                            " max_depth=" + depth_label(g.max_depth) + " min_leaf=" + std::to_string(g.min_leaf),
                        [g](const Matrix& x, const Vector& y) -> RegressionModel { return fit_gbm(x, y, g); }};
  };
  ForestParams forest = c.forest;
  forest.seed = c.seed;

  trainers["linear"] = {"linear", "",
                        [](const Matrix& x, const Vector& y) -> RegressionModel { return fit_ols(x, y); }};
  if (c.tune_all) {
    std::ostringstream log;
    log << "model,params,fold_mse,mean_mse\n";
    std::vector<NamedTrainer> ridge, tree, rf, gbm;
    for (double l : {0.01, 0.1, 1.0, 10.0, 100.0}) ridge.push_back(ridge_trainer(l));
    for (int depth : {2, 3, 4, 6, kUnboundedDepth}) tree.push_back(tree_trainer({depth, c.tree.min_leaf}));
    for (int depth : {3, 6, kUnboundedDepth}) {
      ForestParams f = forest;
      f.max_depth = depth;
      rf.push_back(forest_trainer(f));
    }
    for (int depth : {1, 2, 3, 4}) {
      GbmParams g = c.gbm;
      g.max_depth = depth;
      gbm.push_back(gbm_trainer(g));
    }
    auto wants = [&](const char* m) { return std::find(c.models.begin(), c.models.end(), m) != c.models.end(); };
    if (wants("ridge")) trainers["ridge"] = tune("ridge", ridge, d, folds, log);
    if (wants("decision_tree")) trainers["decision_tree"] = tune("decision_tree", tree, d, folds, log);
    if (wants("random_forest")) trainers["random_forest"] = tune("random_forest", rf, d, folds, log);
    if (wants("gradient_boosting")) trainers["gradient_boosting"] = tune("gradient_boosting", gbm, d, folds, log);
    ctx.writer.write("cv_results_other.csv", log.str());
  } else {
    trainers["ridge"] = ridge_trainer(c.ridge_lambda);
    trainers["decision_tree"] = tree_trainer(c.tree);
    trainers["random_forest"] = forest_trainer(forest);
    trainers["gradient_boosting"] = gbm_trainer(c.gbm);
  }

  for (const auto& name : c.models) {
    const auto& t = trainers.at(name);
    nlohmann::json bundle{{"format_version", kModelFormatVersion},
                          {"name", name},
                          {"hyperparameters", t.params},
                          {"features", d.features},
                          {"feature_scaler", {{"means", to_std(d.feature_scaler.means())}, {"stds", to_std(d.feature_scaler.stds())}}},
                          {"target_scaler", {{"mean", d.target_scaler.means()[0]}, {"std", d.target_scaler.stds()[0]}}}};
    try {
      const auto model = t.trainer(d.train_x, d.train_y);
      bundle["status"] = "ok";
      bundle["model"] = to_json(model);
      if (const auto* svr = std::get_if<SvrModel>(&model); svr && !svr->converged)
        ctx.warnings.push_back("final svr fit stopped at violation " + format_double(svr->violation));
    } catch (const Error& e) {
      bundle["status"] = "failed";
      bundle["error"] = e.what();
      ctx.warnings.push_back("model '" + name + "' failed to train: " + e.what());
    }
    ctx.writer.write_json("models/" + name + ".json", bundle);
  }
}

/// Loads persisted models and scores them on the test rows.
inline std::vector<ComparisonRow> score_persisted(const PipelineConfig& c) {
  const auto prepared = prepare(c, read_screen(c));
  std::vector<ComparisonRow> rows;
  for (const auto& name : c.models) {
    const auto j = read_json_artifact(c, "models/" + name + ".json");
    try {
      if (j.at("status").get<std::string>() != "ok") {
        ComparisonRow row;
        row.model_name = name;
        row.converged = false;
        row.failure = j.at("error").get<std::string>();
        rows.push_back(std::move(row));
        continue;
      }
      const auto features = j.at("features").get<std::vector<std::string>>();
      const Scaler fs(to_eigen(j.at("feature_scaler").at("means").get<std::vector<double>>()),
                      to_eigen(j.at("feature_scaler").at("stds").get<std::vector<double>>()));
      const Scaler ts(Vector::Constant(1, j.at("target_scaler").at("mean").get<double>()),
                      Vector::Constant(1, j.at("target_scaler").at("std").get<double>()));
      const auto model = model_from_json(j.at("model"));

      std::map<std::string, Index> column;
      for (std::size_t k = 0; k < prepared.names.size(); ++k) column.emplace(prepared.names[k], static_cast<Index>(k));
      std::vector<Index> cols;
      for (const auto& f : features) {
        const auto it = column.find(f);
        if (it == column.end()) throw Error(ErrorCode::shape, "model feature '" + f + "' missing from data");
        cols.push_back(it->second);
      }
      const Matrix test_x = fs.transform(select_cols(prepared.split.test_x, cols));
      rows.push_back(comparison_row(name, model, test_x, prepared.split.test_y, ts));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, "models/" + name + ".json: " + e.what());
    }
  }
  sort_comparison(rows);
  return rows;
}

inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "model,mae,mse,rmse,r2,scale,converged\n";
  for (auto scale : {MetricScale::standardized, MetricScale::raw}) {
    for (const auto& row : rows) {
      const auto& rep = scale == MetricScale::standardized ? row.standardized : row.raw;
      os << csv_field(row.model_name) << ',';
      if (rep) {
        os << format_double(rep->mae) << ',' << format_double(rep->mse) << ',' << format_double(rep->rmse) << ','
           << format_double(rep->r2);
      } else {
        os << "NA,NA,NA,NA";
      }
      os << ',' << to_string(scale) << ',' << (row.failure.empty() ? (row.converged ? "true" : "false") : "failed") << '\n';
    }
  }
  return os.str();
}

inline void evaluate(StageContext& ctx) {
  ctx.writer.write("model_comparison.csv", comparison_csv(score_persisted(ctx.config)));
}

inline void report(StageContext& ctx) {
  const auto& c = ctx.config;
  const auto rows = score_persisted(c);
  ctx.writer.write("model_comparison.csv", comparison_csv(rows));

  std::ostringstream md;
  md << "# Model comparison\n\n";
  md << "Data: `" << c.data_path << "`, target `" << c.target_column << "`, seed " << c.seed << ", train fraction "
     << format_double(c.train_fraction) << ".\n\n";
  const auto features = read_selected(c);
  md << "Selected features (" << features.size() << " of top_k = " << c.top_k << "): ";
  for (std::size_t i = 0; i < features.size(); ++i) md << (i ? ", " : "") << '`' << features[i] << '`';
  md << "\n\n| model | MAE | MSE | RMSE | R^2 | hyperparameters |\n|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    const auto j = read_json_artifact(c, "models/" + row.model_name + ".json");
    const auto params = j.value("hyperparameters", std::string{});
    if (row.standardized) {
      const auto& r = *row.standardized;
      md << "| " << row.model_name << " | " << format_double(r.mae) << " | " << format_double(r.mse) << " | "
         << format_double(r.rmse) << " | " << format_double(r.r2) << " | " << params << " |\n";
    } else {
      md << "| " << row.model_name << " | failed | | | | " << row.failure << " |\n";
    }
  }
  md << "\nMetrics are on the standardized target (training mean and standard deviation); raw-scale values are in "
        "model_comparison.csv.\n";
  ctx.writer.write("report.md", md.str());
}

}  // namespace stages

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"eda", "select", "train", "evaluate", "report"};
  return names;
}

/// Runs the named stages in order and writes manifest.json. On failure the
/// manifest is still written, marked FAILED, and StageFailure is thrown.
inline RunManifest run_stages(const PipelineConfig& config, const std::vector<std::string>& names) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  ArtifactWriter writer(config.out_dir);
  RunManifest manifest;
  manifest.config = config_json::to_json(config);
  StageContext ctx{config, writer, manifest.warnings};

  auto finish = [&] {
    manifest.outputs = writer.entries();
    std::ofstream out(std::filesystem::path(config.out_dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.to_json().dump(2) << '\n';
  };

  for (const auto& name : names) {
    const auto start = std::chrono::steady_clock::now();
    StageRecord rec{name, 0, true};
    try {
      if (name == "eda") stages::eda(ctx);
      else if (name == "select") stages::select(ctx);
      else if (name == "train") stages::train(ctx);
      else if (name == "evaluate") stages::evaluate(ctx);
      else if (name == "report") stages::report(ctx);
      else throw Error(ErrorCode::config, "unknown stage '" + name + "'");
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.millis = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
      manifest.stages.push_back(rec);
      manifest.failed = true;
      manifest.failed_stage = name;
      manifest.error = e.what();
      finish();
      const auto* err = dynamic_cast<const Error*>(&e);
      throw StageFailure(name, err ? exit_code_for(err->code()) : 4, e.what());
    }
    rec.millis = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    manifest.stages.push_back(rec);
  }
  finish();
  return manifest;
}

inline RunManifest run_pipeline(const PipelineConfig& config) { return run_stages(config, stage_names()); }

}  // namespace foodprice
