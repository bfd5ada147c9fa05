#include "dynaware/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "dynaware/task_io.hpp"

namespace dynaware {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<Task> generate_suite(const RunConfig& c) {
  const auto ids = c.template_ids();
  return generate_tasks(ids, c.instances, c.task_seed, c.generate);
}

std::vector<Split> make_suite_splits(const RunConfig& c, const std::vector<Task>& tasks) {
  return make_splits(tasks, c.folds, c.split_mode, split_seed(c));
}

ActionCache build_cache(const RunConfig& c, const std::vector<Task>& tasks) {
  return ActionCache::build(tasks, c.cache_actions, cache_seed(c), c.generate.sim);
}

FoldRun run_fold(const RunConfig& c, const std::vector<Task>& tasks, const Split& split, const ActionCache& cache,
                 const std::filesystem::path& out_dir, std::ostream* progress) {
  validate(c);
  FoldRun run;
  Model<float> model(c.model, init_seed(c));
  TrainConfig tc = c.train;
  tc.seed = train_seed(c);
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.progress = progress;
  const auto train_idx = task_indices(tasks, split.train);
  const auto test_idx = task_indices(tasks, split.test);
  auto t0 = std::chrono::steady_clock::now();
  run.metrics = train(tc, model, tasks, train_idx, cache, opts);
  run.train_seconds = seconds_since(t0);

  EvalConfig ec = c.eval;
  ec.seed = eval_seed(c);
  ec.sim = c.generate.sim;
  t0 = std::chrono::steady_clock::now();
  run.report = evaluate(model_scorer(model), tasks, test_idx, ec, split.fold, to_string(c.model.loss));
  run.eval_seconds = seconds_since(t0);
  if (!out_dir.empty()) {
    std::ofstream out(out_dir / "eval_tasks.csv");
    write_task_csv(out, run.report);
  }
  return run;
}

std::string resolve_axis(const std::string& axis) {
  if (axis.find('.') != std::string::npos || axis == "seed" || axis == "task_seed" || axis == "threads") return axis;
  return "model." + axis;
}

std::vector<AblationCell> ablate(const RunConfig& base, const AblationPlan& plan, const std::vector<Task>& tasks,
                                 const std::vector<Split>& splits, const ActionCache& cache,
                                 const std::filesystem::path& out_dir, std::ostream* progress) {
  if (plan.values.empty()) throw ConfigError("ablate: no values given");
  if (plan.seeds.empty()) throw ConfigError("ablate: no seeds given");
  const std::string key = resolve_axis(plan.axis);
  // Reject a bad axis or value before any training starts.
  for (const auto& v : plan.values) {
    RunConfig probe = base;
    set_option(probe, key, v);
    validate(probe);
  }
  std::vector<AblationCell> cells;
  for (const auto& value : plan.values) {
    AblationCell cell;
    cell.axis = plan.axis;
    cell.value = value;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed : plan.seeds) {
      RunConfig c = base;
      set_option(c, key, value);
      c.seed = seed;
      if (plan.fold_per_seed) c.fold = static_cast<int>(seed % static_cast<std::uint64_t>(c.folds));
      const auto it = std::find_if(splits.begin(), splits.end(), [&](const Split& s) { return s.fold == c.fold; });
      if (it == splits.end()) throw ConfigError("ablate: no split for fold " + std::to_string(c.fold));
      std::filesystem::path dir;
      if (!out_dir.empty()) dir = out_dir / (plan.axis + "=" + value) / ("seed" + std::to_string(seed));
      if (progress) *progress << "[ablate] " << plan.axis << "=" << value << " seed " << seed << " fold " << c.fold << "\n";
      const FoldRun run = run_fold(c, tasks, *it, cache, dir, nullptr);
      cell.seeds.push_back(seed);
      cell.folds.push_back(c.fold);
      cell.auccess.push_back(run.report.auccess(c.eval.max_attempts));
      if (progress) {
        *progress << "[ablate]   auccess " << cell.auccess.back() << " (train " << run.train_seconds << " s, eval "
                  << run.eval_seconds << " s)\n";
      }
    }
    const double n = static_cast<double>(cell.auccess.size());
    cell.mean = std::accumulate(cell.auccess.begin(), cell.auccess.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : cell.auccess) ss += (a - cell.mean) * (a - cell.mean);
    cell.std = cell.auccess.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    cell.seconds = seconds_since(t0);
    cells.push_back(std::move(cell));
  }
  return cells;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationCell>& cells) {
  out << "axis,value,runs,mean_auccess,std_auccess,formatted\n";
  char buf[256];
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.1f ± %.1f", c.auccess.size(), c.mean, c.std, c.mean, c.std);
    out << c.axis << "," << c.value << "," << buf << "\n";
  }
}

}  // namespace dynaware
