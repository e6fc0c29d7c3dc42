// Command-line front end: `run` executes every stage, the other
// subcommands execute one stage against artifacts already in out_dir.

#include "foodprice/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::string> data;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> top_k;
  std::optional<std::string> target;
  std::optional<double> threshold;
  std::optional<double> train_fraction;
};

void add_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file; flags override its keys");
  cmd->add_option("--data", o.data, "indicator CSV (year, target, features)");
  cmd->add_option("--out-dir", o.out_dir, "artifact directory");
  cmd->add_option("--seed", o.seed, "seed for split, folds and forests");
  cmd->add_option("--top-k", o.top_k, "number of features to keep");
  cmd->add_option("--target", o.target, "target column name");
  cmd->add_option("--threshold", o.threshold, "clustering distance threshold on 1-|r|");
  cmd->add_option("--train-fraction", o.train_fraction, "fraction of rows used for training");
}

foodprice::PipelineConfig resolve(const Overrides& o) {
  foodprice::PipelineConfig c;
  if (!o.config_path.empty()) c = foodprice::config_json::load_file(o.config_path);
  if (o.data) c.data_path = *o.data;
  if (o.out_dir) c.out_dir = *o.out_dir;
  if (o.seed) c.seed = *o.seed;
  if (o.top_k) c.top_k = *o.top_k;
  if (o.target) c.target_column = *o.target;
  if (o.threshold) c.cluster_threshold = *o.threshold;
  if (o.train_fraction) c.train_fraction = *o.train_fraction;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Food price indicator pipeline"};
  app.require_subcommand(1);
  Overrides o;
  struct Command {
    const char* name;
    const char* help;
    std::vector<std::string> stages;
  };
  const std::vector<Command> commands{
      {"run", "run every stage", foodprice::stage_names()},
      {"eda", "summary statistics, normality screen, density curves", {"eda"}},
      {"select", "correlation clustering and top-k selection", {"select"}},
      {"train", "grid search and model fitting", {"train"}},
      {"evaluate", "score persisted models on the test rows", {"evaluate"}},
      {"report", "rebuild the comparison table and report.md", {"report"}},
  };
  std::vector<CLI::App*> subs;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_flags(sub, o);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::vector<std::string> stages;
  for (std::size_t i = 0; i < commands.size(); ++i)
    if (subs[i]->parsed()) stages = commands[i].stages;

  foodprice::PipelineConfig config;
  try {
    config = resolve(o);
  } catch (const foodprice::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto manifest = foodprice::run_stages(config, stages);
    for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& s : manifest.stages) std::cout << s.name << ": " << s.millis << " ms\n";
    std::cout << "wrote " << manifest.outputs.size() << " files to " << config.out_dir << '\n';
  } catch (const foodprice::StageFailure& e) {
    std::cerr << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
