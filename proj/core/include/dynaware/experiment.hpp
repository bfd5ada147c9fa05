#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dynaware/run_config.hpp"

namespace dynaware {

std::vector<Task> generate_suite(const RunConfig& config);
std::vector<Split> make_suite_splits(const RunConfig& config, const std::vector<Task>& tasks);
ActionCache build_cache(const RunConfig& config, const std::vector<Task>& tasks);

struct FoldRun {
  EvalReport report;
  std::vector<MetricRow> metrics;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

// Trains a fresh model on split.train and evaluates it on split.test. With a
// non-empty out_dir, writes metrics.csv, model.ckpt and eval_tasks.csv there.
FoldRun run_fold(const RunConfig& config, const std::vector<Task>& tasks, const Split& split, const ActionCache& cache,
                 const std::filesystem::path& out_dir = {}, std::ostream* progress = nullptr);

struct AblationPlan {
  std::string axis;  // config key; bare names refer to model.<name>
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds{0};
  // Seed s evaluates fold s mod folds; otherwise config.fold for every seed.
  bool fold_per_seed = true;
};

struct AblationCell {
  std::string axis;
  std::string value;
  std::vector<std::uint64_t> seeds;
  std::vector<int> folds;
  std::vector<double> auccess;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  double seconds = 0.0;
};

std::string resolve_axis(const std::string& axis);

// One cell per value, each averaged over the plan's seeds. Other settings are
// held at `base`.
std::vector<AblationCell> ablate(const RunConfig& base, const AblationPlan& plan, const std::vector<Task>& tasks,
                                 const std::vector<Split>& splits, const ActionCache& cache,
                                 const std::filesystem::path& out_dir = {}, std::ostream* progress = nullptr);

// axis,value,runs,mean_auccess,std_auccess,formatted
void write_ablation_csv(std::ostream& out, const std::vector<AblationCell>& cells);

}  // namespace dynaware
