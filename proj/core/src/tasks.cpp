#include "dynaware/tasks.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "dynaware/rng.hpp"

namespace dynaware {

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

int Task::moving_objects() const {
  return static_cast<int>(std::count_if(scene.bodies.begin(), scene.bodies.end(), [](const Body& b) { return b.dynamic; }));
}

std::vector<Action> sample_actions(const Scene& scene, Tier tier, std::size_t count, std::uint64_t seed,
                                   SampleStats* stats) {
  if (count < 1) throw std::invalid_argument("sample_actions: count must be >= 1");
  Rng rng(seed);
  std::vector<Action> out;
  out.reserve(count);
  const std::size_t dim = action_dim(tier);
  const std::size_t budget = 1000 * count;
  std::array<double, 6> c{};
  std::size_t drawn = 0;
  while (out.size() < count) {
    if (drawn >= budget) {
      throw DegenerateSceneError("sample_actions: more than 99.9% of uniform actions are invalid");
    }
    for (std::size_t i = 0; i < dim; ++i) c[i] = rng.uniform();
    ++drawn;
    Action a(tier, std::span<const double>(c.data(), dim));
    if (is_valid_action(scene, a)) out.push_back(a);
  }
  if (stats) *stats = {drawn, out.size()};
  return out;
}

std::vector<Action> sample_actions(const Task& task, std::size_t count, std::uint64_t seed, SampleStats* stats) {
  return sample_actions(task.scene, task.tier, count, seed, stats);
}

std::vector<bool> label_actions(const Task& task, std::span<const Action> actions, const SimConfig& sim) {
  std::vector<bool> labels(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) labels[i] = rollout(task.scene, actions[i], sim).solved();
  return labels;
}

double screen_solve_rate(const Scene& scene, Tier tier, int candidates, std::uint64_t seed, const SimConfig& sim) {
  const auto actions = sample_actions(scene, tier, static_cast<std::size_t>(candidates), seed);
  int solved = 0;
  for (const Action& a : actions) solved += rollout(scene, a, sim).solved() ? 1 : 0;
  return static_cast<double>(solved) / candidates;
}

std::vector<Task> generate_tasks(std::span<const std::string> template_ids, int instances_per_template,
                                 std::uint64_t seed, const GenerateOptions& opt) {
  if (instances_per_template < 1) throw std::invalid_argument("generate_tasks: instances_per_template must be >= 1");
  if (opt.screen_candidates < 1) throw std::invalid_argument("generate_tasks: screen_candidates must be >= 1");
  std::vector<const TaskTemplate*> templates;
  for (const auto& id : template_ids) templates.push_back(&find_template(id));

  const std::size_t per = static_cast<std::size_t>(instances_per_template);
  const std::size_t total = templates.size() * per;
  std::vector<Task> tasks(total);
  std::vector<std::string> failures(total);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t k = 0; k < total; ++k) {
    const TaskTemplate& tpl = *templates[k / per];
    const int instance = static_cast<int>(k % per);
    const std::uint64_t instance_seed = derive_seed(derive_seed(seed, fnv1a(tpl.id)), static_cast<std::uint64_t>(instance));
    bool accepted = false;
    try {
      for (int attempt = 0; attempt < opt.max_retries && !accepted; ++attempt) {
        Rng rng(derive_seed(instance_seed, 2 * static_cast<std::uint64_t>(attempt)));
        std::vector<double> params;
        for (const auto& range : tpl.ranges) params.push_back(rng.uniform(range.lo, range.hi));
        Scene scene = tpl.build(params);
        validate_scene(scene);
        const std::uint64_t screen_seed = derive_seed(instance_seed, 2 * static_cast<std::uint64_t>(attempt) + 1);
        double rate = 0.0;
        try {
          rate = screen_solve_rate(scene, opt.tier, opt.screen_candidates, screen_seed, opt.sim);
        } catch (const DegenerateSceneError&) {
          continue;
        }
        if (rate > 0.0 && rate >= opt.min_solve_rate && rate <= opt.max_solve_rate) {
          Task& t = tasks[k];
          t.id = tpl.id + ":" + std::to_string(instance);
          t.template_id = tpl.id;
          t.instance = instance;
          t.tier = opt.tier;
          t.params = std::move(params);
          t.scene = std::move(scene);
          t.screen_seed = screen_seed;
          t.screen_solve_rate = rate;
          accepted = true;
        }
      }
    } catch (const std::exception& e) {
      failures[k] = "template '" + tpl.id + "' instance " + std::to_string(instance) + ": " + e.what();
      continue;
    }
    if (!accepted) {
      failures[k] = "template '" + tpl.id + "' instance " + std::to_string(instance) +
                    " failed the solvability screen after " + std::to_string(opt.max_retries) + " retries";
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw GenerationError(f);
  }
  return tasks;
}

std::string to_string(SplitMode mode) {
  return mode == SplitMode::kWithinTemplate ? "within" : "cross";
}

SplitMode split_mode_from_string(const std::string& name) {
  if (name == "within" || name == "within-template") return SplitMode::kWithinTemplate;
  if (name == "cross" || name == "cross-template") return SplitMode::kCrossTemplate;
  throw std::invalid_argument("unknown split mode '" + name + "'");
}

std::vector<Split> make_splits(const std::vector<Task>& tasks, int folds, SplitMode mode, std::uint64_t seed) {
  if (folds < 2) throw SplitError("make_splits: folds must be >= 2");
  std::vector<std::string> template_order;
  std::map<std::string, std::vector<std::size_t>> by_template;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto [it, inserted] = by_template.try_emplace(tasks[i].template_id);
    if (inserted) template_order.push_back(tasks[i].template_id);
    it->second.push_back(i);
  }
  Rng rng(seed);
  std::vector<int> fold_of(tasks.size(), 0);
  if (mode == SplitMode::kWithinTemplate) {
    for (const auto& tpl : template_order) {
      auto members = by_template[tpl];
      if (members.size() < static_cast<std::size_t>(folds)) {
        throw SplitError("within-template split: template '" + tpl + "' has " + std::to_string(members.size()) +
                         " tasks, fewer than " + std::to_string(folds) + " folds");
      }
      shuffle(members, rng);
      for (std::size_t k = 0; k < members.size(); ++k) fold_of[members[k]] = static_cast<int>(k % folds);
    }
  } else {
    if (template_order.size() < static_cast<std::size_t>(folds)) {
      throw SplitError("cross-template split: " + std::to_string(template_order.size()) + " templates, fewer than " +
                       std::to_string(folds) + " folds");
    }
    auto order = template_order;
    shuffle(order, rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      for (std::size_t i : by_template[order[k]]) fold_of[i] = static_cast<int>(k % folds);
    }
  }
  std::vector<Split> splits(folds);
  for (int f = 0; f < folds; ++f) {
    splits[f].fold = f;
    splits[f].mode = mode;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      (fold_of[i] == f ? splits[f].test : splits[f].train).push_back(tasks[i].id);
    }
  }
  return splits;
}

const Task& find_task(const std::vector<Task>& tasks, const std::string& id) {
  for (const auto& t : tasks) {
    if (t.id == id) return t;
  }
  throw std::invalid_argument("unknown task '" + id + "'");
}

}  // namespace dynaware
