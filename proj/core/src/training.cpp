#include "dynaware/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "dynaware/raster.hpp"
#include "dynaware/rng.hpp"

namespace dynaware {

namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C4;

template <typename V>
void partial_shuffle(std::vector<V>& v, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) std::swap(v[i], v[i + rng.below(v.size() - i)]);
}

}  // namespace

// ---------------------------------------------------------------- cache

ActionCache ActionCache::build(const std::vector<Task>& tasks, std::size_t per_task, std::uint64_t seed, const SimConfig& sim) {
  if (per_task < 1) throw TrainingError("action cache: need at least one action per task");
  ActionCache cache;
  cache.sim_ = sim;
  cache.entries_.resize(tasks.size());
  std::vector<std::string> errors(tasks.size());
  const long n = static_cast<long>(tasks.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const Task& task = tasks[static_cast<std::size_t>(i)];
    Entry& e = cache.entries_[static_cast<std::size_t>(i)];
    try {
      e.actions = sample_actions(task, per_task, derive_seed(seed, fnv1a(task.id)));
      e.solved = label_actions(task, e.actions, sim);
      for (std::size_t a = 0; a < e.actions.size(); ++a) (e.solved[a] ? e.positives : e.negatives).push_back(a);
    } catch (const std::exception& ex) {
      errors[static_cast<std::size_t>(i)] = task.id + ": " + ex.what();
    }
  }
  for (const auto& err : errors) {
    if (!err.empty()) throw TrainingError("action cache: " + err);
  }
  return cache;
}

Rollout ActionCache::rollout(const Task& task, std::size_t task_index, std::size_t action) const {
  return dynaware::rollout(task.scene, entry(task_index).actions.at(action), sim_);
}

std::vector<std::size_t> ActionCache::eligible(std::span<const std::size_t> tasks, std::size_t n) const {
  std::vector<std::size_t> out;
  for (std::size_t t : tasks) {
    const Entry& e = entry(t);
    if (e.positives.size() >= n && e.negatives.size() >= n) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------- batches

Batch compose_batch(const std::vector<Task>& tasks, std::span<const std::size_t> pool, const ActionCache& cache,
                    const BatchOptions& opt, std::uint64_t seed) {
  if (opt.tasks < 1 || opt.per_class < 1) throw TrainingError("compose_batch: t and n must be >= 1");
  if (pool.empty()) throw TrainingError("compose_batch: empty task pool");
  const std::size_t n = opt.per_class;
  for (std::size_t t : pool) {
    if (t >= tasks.size() || t >= cache.size()) throw TrainingError("compose_batch: task index out of range");
    const auto& e = cache.entry(t);
    if (e.positives.size() < n || e.negatives.size() < n) {
      throw TrainingError("compose_batch: task " + tasks[t].id + " has " + std::to_string(e.positives.size()) +
                          " positives and " + std::to_string(e.negatives.size()) + " negatives, need " + std::to_string(n) +
                          " of each");
    }
  }
  Rng rng(seed);
  Batch b;
  if (pool.size() >= opt.tasks) {
    std::vector<std::size_t> p(pool.begin(), pool.end());
    partial_shuffle(p, opt.tasks, rng);
    b.tasks.assign(p.begin(), p.begin() + static_cast<long>(opt.tasks));
  } else {
    for (std::size_t i = 0; i < opt.tasks; ++i) b.tasks.push_back(pool[rng.below(pool.size())]);
  }

  for (std::size_t s = 0; s < b.tasks.size(); ++s) {
    const auto& e = cache.entry(b.tasks[s]);
    for (const auto* group : {&e.positives, &e.negatives}) {
      std::vector<std::size_t> idx = *group;
      partial_shuffle(idx, n, rng);
      for (std::size_t k = 0; k < n; ++k) {
        b.slot.push_back(s);
        b.action_index.push_back(idx[k]);
        b.actions.push_back(e.actions[idx[k]]);
        b.labels.push_back(e.solved[idx[k]]);
      }
    }
  }

  if (opt.mode == LossMode::kBaseline) return b;

  b.rollouts.resize(b.samples());
  const long ns = static_cast<long>(b.samples());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < ns; ++i) {
    const auto k = static_cast<std::size_t>(i);
    b.rollouts[k] = cache.rollout(tasks[b.tasks[b.slot[k]]], b.tasks[b.slot[k]], b.action_index[k]);
  }

  const std::size_t per_slot = 2 * n;
  if (opt.mode == LossMode::kHandcrafted) {
    for (std::size_t s = 0; s < b.tasks.size(); ++s) {
      const std::size_t base = s * per_slot;
      const auto m = pair_matrix(std::span<const Rollout>(b.rollouts.data() + base, per_slot), opt.similarity);
      for (std::size_t i = 0; i < per_slot; ++i) {
        for (std::size_t j = 0; j < per_slot; ++j) {
          b.pairs.emplace_back(base + i, base + j);
          b.targets.push_back(m[i * per_slot + j]);
        }
      }
    }
  } else {
    for (std::size_t k = 0; k < b.samples(); ++k) {
      const std::size_t len = b.rollouts[k].length();
      if (len < opt.frames) {
        throw TrainingError("compose_batch: rollout of " + std::to_string(len) + " frames is shorter than K_c = " +
                            std::to_string(opt.frames));
      }
      b.frame_start.push_back(rng.below(len - opt.frames + 1));
    }
  }
  return b;
}

template <typename T>
ModelInputs<T> make_inputs(const ModelConfig& config, const std::vector<Task>& tasks, const Batch& b) {
  const std::size_t R = config.raster, px = raster_numel(R), N = b.samples();
  const std::size_t adim = action_dim(config.tier);
  ModelInputs<T> in;
  in.task_of = b.slot;
  for (bool l : b.labels) in.labels.push_back(l ? T(1) : T(0));
  in.actions = ad::Tensor<T>({N, adim});
  for (std::size_t i = 0; i < N; ++i) {
    if (b.actions[i].size() != adim) throw TrainingError("make_inputs: action tier differs from the model's");
    for (std::size_t d = 0; d < adim; ++d) in.actions[i * adim + d] = static_cast<T>(b.actions[i][d]);
  }
  if (config.resolved_action_repr() == ActionRepr::kFilm) {
    in.scenes = ad::Tensor<T>({b.tasks.size(), kRasterChannels, R, R});
    for (std::size_t s = 0; s < b.tasks.size(); ++s) {
      rasterize_into(tasks[b.tasks[s]].scene, std::span<T>(in.scenes.ptr() + s * px, px), R);
    }
  } else {
    in.rendered = ad::Tensor<T>({N, kRasterChannels, R, R});
    const long n = static_cast<long>(N);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      rasterize_into(tasks[b.tasks[b.slot[k]]].scene, b.actions[k], std::span<T>(in.rendered.ptr() + k * px, px), R);
    }
  }
  if (config.loss == LossMode::kHandcrafted) {
    in.pairs = b.pairs;
    for (const auto& t : b.targets) {
      in.pair_bins.push_back(t.bin);
      in.pair_v.push_back(static_cast<T>(t.v));
    }
  }
  if (config.loss == LossMode::kSelfSupervised) {
    if (b.frame_start.size() != N) throw TrainingError("make_inputs: batch has no rollout frames for the selfsup loss");
    const std::size_t K = config.frames;
    in.frames = ad::Tensor<T>({N * K, kRasterChannels, R, R});
    const long n = static_cast<long>(N * K);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i) / K, f = static_cast<std::size_t>(i) % K;
      const Task& task = tasks[b.tasks[b.slot[k]]];
      const Scene state = state_at_frame(task.scene, b.actions[k], b.rollouts[k], b.frame_start[k] + f);
      rasterize_into(state, std::span<T>(in.frames.ptr() + static_cast<std::size_t>(i) * px, px), R);
    }
  }
  return in;
}

template ModelInputs<float> make_inputs<float>(const ModelConfig&, const std::vector<Task>&, const Batch&);
template ModelInputs<double> make_inputs<double>(const ModelConfig&, const std::vector<Task>&, const Batch&);

// ---------------------------------------------------------------- training loop

void validate(const TrainConfig& c) {
  if (c.batches < 1) throw TrainingError("train: batches must be >= 1");
  if (c.tasks_per_batch < 1 || c.per_class < 1) throw TrainingError("train: t and n must be >= 1");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw TrainingError("train: lr must be positive");
}

namespace {

std::string metric_line(const MetricRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,", r.step, r.lr, r.loss_solved, r.loss_aux);
  return buf + r.mode + "\n";
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "step,lr,loss_solved,loss_aux,mode\n";
  for (const auto& r : rows) out << metric_line(r);
}

std::vector<MetricRow> train(const TrainConfig& config, Model<float>& model, const std::vector<Task>& tasks,
                             std::span<const std::size_t> train_tasks, const ActionCache& cache,
                             const TrainOptions& options) {
  validate(config);
  const ModelConfig& mc = model.config();
  const auto pool = cache.eligible(train_tasks, config.per_class);
  if (pool.empty()) {
    throw TrainingError("train: no training task has " + std::to_string(config.per_class) +
                        " positive and negative cached actions");
  }
  BatchOptions bo;
  bo.tasks = config.tasks_per_batch;
  bo.per_class = config.per_class;
  bo.mode = mc.loss;
  bo.similarity = mc.similarity;
  bo.frames = mc.frames;

  Adam<float> opt(model.parameter_ptrs(), config.adam);
  std::vector<MetricRow> rows;
  std::ofstream metrics;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(options.out_dir / "metrics.csv");
    if (!metrics) throw TrainingError("train: cannot write " + (options.out_dir / "metrics.csv").string());
    metrics << "step,lr,loss_solved,loss_aux,mode\n";
  }
  const std::uint64_t batch_seed = derive_seed(config.seed, kBatchStream);
  for (std::size_t step = 0; step < config.batches; ++step) {
    const double lr = cosine_lr(static_cast<std::int64_t>(step), static_cast<std::int64_t>(config.batches), config.lr);
    const Batch batch = compose_batch(tasks, pool, cache, bo, derive_seed(batch_seed, step));
    const auto inputs = make_inputs<float>(mc, tasks, batch);
    model.zero_grad();
    MetricRow row;
    {
      Model<float>::Graph g(model);
      const auto parts = model.loss(g, inputs);
      row.step = step;
      row.lr = lr;
      row.loss_solved = parts.solved.value()[0];
      row.loss_aux = parts.aux.valid() ? static_cast<double>(parts.aux.value()[0]) : std::numeric_limits<double>::quiet_NaN();
      row.mode = to_string(mc.loss);
      if (!std::isfinite(parts.total.value()[0])) {
        if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "diagnostic.ckpt", checkpoint_of(model));
        throw TrainingError("train: non-finite loss at step " + std::to_string(step) + " (solved " +
                            std::to_string(row.loss_solved) + ", aux " + std::to_string(row.loss_aux) + ")");
      }
      g.tape().backward(parts.total);
    }
    opt.step(lr);
    rows.push_back(row);
    if (metrics.is_open()) metrics << metric_line(row);
    const std::size_t done = step + 1;
    if (!options.out_dir.empty() && config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.batches) {
      save_checkpoint(options.out_dir / ("model_" + std::to_string(done) + ".ckpt"), checkpoint_of(model));
    }
    if (options.on_eval && config.eval_every > 0 && done % config.eval_every == 0) options.on_eval(done, model);
    if (options.progress && (done % 100 == 0 || done == config.batches)) {
      *options.progress << "step " << done << "/" << config.batches << " lr " << lr << " loss_solved " << row.loss_solved
                        << " loss_aux " << row.loss_aux << "\n";
    }
  }
  if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "model.ckpt", checkpoint_of(model));
  return rows;
}

// ---------------------------------------------------------------- checkpoints

Checkpoint checkpoint_of(const Model<float>& model) {
  Checkpoint c;
  c.metadata = model_config_text(model.config());
  for (const auto& p : model.parameters()) c.tensors.push_back({p.name, p.value});
  return c;
}

void load_parameters(Model<float>& model, const Checkpoint& ckpt) {
  for (auto& p : model.parameters()) {
    const NamedTensor* t = ckpt.find(p.name);
    if (!t) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    if (t->value.shape != p.value.shape) {
      throw FormatError("checkpoint parameter '" + p.name + "' has shape " + ad::shape_string(t->value.shape) +
                        ", model expects " + ad::shape_string(p.value.shape));
    }
    p.value = t->value;
  }
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  Model<float> m(model_config_from_text(ckpt.metadata), 0);
  load_parameters(m, ckpt);
  return m;
}

}  // namespace dynaware
