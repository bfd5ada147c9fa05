#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynaware/checkpoint.hpp"
#include "dynaware/model.hpp"
#include "dynaware/optim.hpp"
#include "dynaware/similarity.hpp"
#include "dynaware/tasks.hpp"

namespace dynaware {

// Sampled actions and their labels for every task. Rollouts are not stored;
// rollout() re-simulates on demand, which is exact because simulation is
// deterministic.
class ActionCache {
 public:
  struct Entry {
    std::vector<Action> actions;
    std::vector<bool> solved;
    std::vector<std::size_t> positives;  // indices into actions
    std::vector<std::size_t> negatives;
  };

  ActionCache() = default;
  // Per task: sample_actions(task, per_task, derive_seed(seed, fnv1a(task id))),
  // then label every action. Parallel over tasks.
  static ActionCache build(const std::vector<Task>& tasks, std::size_t per_task, std::uint64_t seed, const SimConfig& sim = {});

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t task) const { return entries_.at(task); }
  const SimConfig& sim() const { return sim_; }
  Rollout rollout(const Task& task, std::size_t task_index, std::size_t action) const;

  // Tasks with at least n positives and n negatives.
  std::vector<std::size_t> eligible(std::span<const std::size_t> tasks, std::size_t n) const;

 private:
  std::vector<Entry> entries_;
  SimConfig sim_;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BatchOptions {
  std::size_t tasks = 16;  // t
  std::size_t per_class = 4;  // n
  LossMode mode = LossMode::kHandcrafted;
  SimilarityConfig similarity;
  std::size_t frames = 2;  // K_c
};

struct Batch {
  std::vector<std::size_t> tasks;  // task index per slot, length t
  // Per sample, grouped by slot: n positives then n negatives.
  std::vector<std::size_t> slot;
  std::vector<std::size_t> action_index;  // into the cache entry
  std::vector<Action> actions;
  std::vector<bool> labels;
  // Handcrafted mode: all (2n)^2 ordered pairs within each slot.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<SimilarityTarget> targets;
  // Rollouts (handcrafted and selfsup modes) and, for selfsup, the first of
  // K_c consecutive frames per sample.
  std::vector<Rollout> rollouts;
  std::vector<std::size_t> frame_start;

  std::size_t samples() const { return actions.size(); }
};

// Samples t tasks uniformly from `pool` (without replacement when the pool is
// large enough) and n distinct positives and negatives per task. Throws
// TrainingError when a pooled task lacks n positives or negatives.
Batch compose_batch(const std::vector<Task>& tasks, std::span<const std::size_t> pool, const ActionCache& cache,
                    const BatchOptions& options, std::uint64_t seed);

// Rasterizes a batch into model inputs for the given configuration.
template <typename T>
ModelInputs<T> make_inputs(const ModelConfig& config, const std::vector<Task>& tasks, const Batch& batch);

struct TrainConfig {
  std::size_t batches = 2000;
  std::size_t tasks_per_batch = 16;  // t
  std::size_t per_class = 4;         // n
  double lr = 3e-4;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t eval_every = 0;        // 0: no periodic callback
  AdamConfig adam;
};

void validate(const TrainConfig& config);

struct MetricRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss_solved = 0.0;
  double loss_aux = 0.0;  // NaN in baseline mode
  std::string mode;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::function<void(std::size_t step, Model<float>& model)> on_eval;
  std::ostream* progress = nullptr;
};

// Writes metrics.csv (step,lr,loss_solved,loss_aux,mode) and checkpoints
// model_<step>.ckpt / model.ckpt when out_dir is set. Aborts with
// TrainingError (after writing diagnostic.ckpt) on a non-finite loss.
std::vector<MetricRow> train(const TrainConfig& config, Model<float>& model, const std::vector<Task>& tasks,
                             std::span<const std::size_t> train_tasks, const ActionCache& cache,
                             const TrainOptions& options = {});

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

Checkpoint checkpoint_of(const Model<float>& model);
// Replaces parameter values by name; every model parameter must be present
// with a matching shape.
void load_parameters(Model<float>& model, const Checkpoint& ckpt);
Model<float> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dynaware
