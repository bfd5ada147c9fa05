#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynaware/action.hpp"
#include "dynaware/physics.hpp"

namespace dynaware {

struct ParamRange {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
};

// A parameterized scene family. `build` must return a valid Scene for every
// parameter vector inside `ranges`.
struct TaskTemplate {
  std::string id;
  std::vector<ParamRange> ranges;
  std::function<Scene(std::span<const double>)> build;
};

const std::vector<TaskTemplate>& builtin_templates();
const TaskTemplate& find_template(const std::string& id);
std::vector<std::string> builtin_template_ids();

struct Task {
  std::string id;           // "<template>:<instance>"
  std::string template_id;
  int instance = 0;
  Tier tier = Tier::kOneBall;
  std::vector<double> params;
  Scene scene;
  std::uint64_t screen_seed = 0;  // seed of the solvability screen that accepted it
  double screen_solve_rate = 0.0;

  // Dynamic bodies in the scene before any action is placed.
  int moving_objects() const;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenerateOptions {
  Tier tier = Tier::kOneBall;
  int screen_candidates = 1000;
  // Accepted instances solve with a fraction of uniform actions in
  // [min_solve_rate, max_solve_rate] and at least one screened action.
  double min_solve_rate = 0.001;
  double max_solve_rate = 0.2;
  int max_retries = 400;
  SimConfig sim;
};

// Seed rule: template stream = derive_seed(seed, fnv1a(template id));
// instance seed = derive_seed(template stream, instance); retry r draws
// parameters from derive_seed(instance seed, 2r) and screens with
// derive_seed(instance seed, 2r + 1). Output order: templates in argument
// order, instances ascending.
std::vector<Task> generate_tasks(std::span<const std::string> template_ids, int instances_per_template,
                                 std::uint64_t seed, const GenerateOptions& options = {});

// Solve rate of `candidates` uniformly sampled actions (rollout per action).
double screen_solve_rate(const Scene& scene, Tier tier, int candidates, std::uint64_t seed, const SimConfig& sim);

enum class SplitMode { kWithinTemplate, kCrossTemplate };

std::string to_string(SplitMode mode);
SplitMode split_mode_from_string(const std::string& name);

struct Split {
  int fold = 0;
  SplitMode mode = SplitMode::kWithinTemplate;
  std::vector<std::string> train;  // task ids, in task-list order
  std::vector<std::string> test;
};

class SplitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// within-template: each template's tasks are shuffled and dealt round-robin
// over folds. cross-template: templates are shuffled and dealt round-robin.
std::vector<Split> make_splits(const std::vector<Task>& tasks, int folds, SplitMode mode, std::uint64_t seed);

class DegenerateSceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SampleStats {
  std::size_t drawn = 0;
  std::size_t accepted = 0;
};

// Uniform draws from the action cube, keeping valid ones. Throws
// DegenerateSceneError once more than 99.9% of draws have been rejected
// (checked after at least 1000 * count draws).
std::vector<Action> sample_actions(const Scene& scene, Tier tier, std::size_t count, std::uint64_t seed,
                                   SampleStats* stats = nullptr);
std::vector<Action> sample_actions(const Task& task, std::size_t count, std::uint64_t seed,
                                   SampleStats* stats = nullptr);

// Rollout.solved for each action. Throws InvalidActionError.
std::vector<bool> label_actions(const Task& task, std::span<const Action> actions, const SimConfig& sim = {});

const Task& find_task(const std::vector<Task>& tasks, const std::string& id);

}  // namespace dynaware
