#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynaware/model.hpp"
#include "dynaware/tasks.hpp"

namespace dynaware {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Scores for a task's candidate actions; higher is tried first.
using Scorer = std::function<std::vector<double>(const Task& task, std::span<const Action> actions)>;

struct TaskOutcome {
  std::string task_id;
  std::string template_id;
  int moving_objects = 0;
  std::size_t attempts = 0;              // simulations run
  std::optional<std::size_t> solved_at;  // 1-based attempt that solved the task

  bool operator==(const TaskOutcome&) const = default;
};

struct EvalConfig {
  std::size_t candidates = 1000;  // A
  std::size_t max_attempts = 100;
  std::uint64_t seed = 0;
  SimConfig sim;
};

// Candidate order: descending score, ties by sample index.
std::vector<std::size_t> attempt_order(std::span<const double> scores);

// Samples A valid actions (seed derive_seed(seed, fnv1a(task id))), scores
// them and simulates them in attempt order until one solves the task or
// max_attempts are spent.
TaskOutcome rank_and_attempt(const Scorer& scorer, const Task& task, const EvalConfig& config);

// Area under the success curve: s_k = percent of tasks solved within k
// attempts, weighted by w_k = ln(k + 1) - ln(k) for k = 1..max_attempts and
// normalized by the weight sum.
double auccess(std::span<const TaskOutcome> outcomes, std::size_t max_attempts = 100);

struct EvalReport {
  int fold = 0;
  std::string mode;
  std::vector<TaskOutcome> tasks;  // in task-list order

  double auccess(std::size_t max_attempts = 100) const { return dynaware::auccess(tasks, max_attempts); }
};

EvalReport evaluate(const Scorer& scorer, const std::vector<Task>& tasks, std::span<const std::size_t> test_tasks,
                    const EvalConfig& config, int fold = 0, const std::string& mode = "");

struct GroupRow {
  std::string group;  // template id, or moving-object count
  std::size_t tasks = 0;
  double auccess = 0.0;
};

// Groups keep first-appearance order of the report's tasks.
std::vector<GroupRow> per_template_report(const EvalReport& report);
std::vector<GroupRow> per_moving_objects_report(const EvalReport& report);

struct DeltaRow {
  std::string template_id;
  double baseline = 0.0;
  double ours = 0.0;
  double delta = 0.0;
};

struct DeltaCorrelation {
  std::vector<DeltaRow> rows;
  double pearson = 0.0;  // NaN when undefined
  bool defined = false;
};

double pearson(std::span<const double> x, std::span<const double> y, bool* defined = nullptr);

// Per-template (baseline AUCCESS, ours - baseline) and their Pearson
// correlation. Throws EvalError when the reports cover different tasks.
DeltaCorrelation delta_correlation(const EvalReport& baseline, const EvalReport& ours);

// Model scoring helpers. Forward passes run in chunks of `chunk` actions.
std::vector<double> score_actions(Model<float>& model, const Task& task, std::span<const Action> actions,
                                  std::size_t chunk = 250);
ad::Tensor<float> embed_actions(Model<float>& model, const Task& task, std::span<const Action> actions,
                                std::size_t chunk = 250);
Scorer model_scorer(Model<float>& model);

struct ActionMapRow {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  double max_cos = 0.0;
  bool above = false;
};

double cosine(std::span<const float> a, std::span<const float> b);

// Grid of resolution^2 actions at cell centers with fixed radius coordinate r
// (for two-ball tasks the second ball is taken from the first solving action).
// max_cos is the largest cosine similarity between the grid action's e_sa and
// the e_sa of any of `solving` actions.
std::vector<ActionMapRow> action_map_export(Model<float>& model, const Task& task, std::span<const Action> solving,
                                            std::size_t resolution, double threshold, double r = 0.5);

// CSV I/O.
void write_task_csv(std::ostream& out, const EvalReport& report);
EvalReport read_task_csv(std::istream& in);
void write_group_csv(std::ostream& out, const std::vector<GroupRow>& rows, const std::string& key);
void write_delta_csv(std::ostream& out, const DeltaCorrelation& d);
void write_action_map_csv(std::ostream& out, const std::vector<ActionMapRow>& rows);

}  // namespace dynaware
