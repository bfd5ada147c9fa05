#include "dynaware/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dynaware/raster.hpp"
#include "dynaware/rng.hpp"
#include "dynaware/text_parse.hpp"

namespace dynaware {

std::vector<std::size_t> attempt_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

TaskOutcome rank_and_attempt(const Scorer& scorer, const Task& task, const EvalConfig& config) {
  if (config.max_attempts < 1 || config.candidates < config.max_attempts) {
    throw EvalError("rank_and_attempt: need A >= max_attempts >= 1");
  }
  const auto actions = sample_actions(task, config.candidates, derive_seed(config.seed, fnv1a(task.id)));
  const auto scores = scorer(task, actions);
  if (scores.size() != actions.size()) throw EvalError("rank_and_attempt: scorer returned the wrong number of scores");
  for (double s : scores) {
    if (std::isnan(s)) throw EvalError("rank_and_attempt: scorer returned NaN for task " + task.id);
  }
  const auto order = attempt_order(scores);
  TaskOutcome out;
  out.task_id = task.id;
  out.template_id = task.template_id;
  out.moving_objects = task.moving_objects();
  for (std::size_t k = 0; k < config.max_attempts; ++k) {
    ++out.attempts;
    if (rollout(task.scene, actions[order[k]], config.sim).solved()) {
      out.solved_at = k + 1;
      break;
    }
  }
  return out;
}

double auccess(std::span<const TaskOutcome> outcomes, std::size_t max_attempts) {
  if (outcomes.empty()) throw EvalError("auccess: empty task set");
  if (max_attempts < 1) throw EvalError("auccess: max_attempts must be >= 1");
  // solved_within[k] counts tasks solved at attempt <= k.
  std::vector<double> solved_at(max_attempts + 2, 0.0);
  for (const auto& o : outcomes) {
    if (o.solved_at && *o.solved_at >= 1 && *o.solved_at <= max_attempts) solved_at[*o.solved_at] += 1.0;
  }
  double within = 0.0, num = 0.0, den = 0.0;
  for (std::size_t k = 1; k <= max_attempts; ++k) {
    within += solved_at[k];
    const double w = std::log(static_cast<double>(k + 1)) - std::log(static_cast<double>(k));
    num += w * 100.0 * within / static_cast<double>(outcomes.size());
    den += w;
  }
  return num / den;
}

EvalReport evaluate(const Scorer& scorer, const std::vector<Task>& tasks, std::span<const std::size_t> test_tasks,
                    const EvalConfig& config, int fold, const std::string& mode) {
  if (test_tasks.empty()) throw EvalError("evaluate: empty task set");
  EvalReport r;
  r.fold = fold;
  r.mode = mode;
  for (std::size_t t : test_tasks) r.tasks.push_back(rank_and_attempt(scorer, tasks.at(t), config));
  return r;
}

namespace {

template <typename Key>
std::vector<GroupRow> group_by(const EvalReport& report, Key key) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<TaskOutcome>> groups;
  for (const auto& t : report.tasks) {
    const std::string k = key(t);
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(t);
  }
  std::vector<GroupRow> rows;
  for (const auto& k : order) rows.push_back({k, groups[k].size(), auccess(groups[k])});
  return rows;
}

}  // namespace

std::vector<GroupRow> per_template_report(const EvalReport& report) {
  return group_by(report, [](const TaskOutcome& t) { return t.template_id; });
}

std::vector<GroupRow> per_moving_objects_report(const EvalReport& report) {
  return group_by(report, [](const TaskOutcome& t) { return std::to_string(t.moving_objects); });
}

double pearson(std::span<const double> x, std::span<const double> y, bool* defined) {
  if (x.size() != y.size()) throw EvalError("pearson: series lengths differ");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (defined) *defined = false;
  if (x.size() < 2) return nan;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return nan;
  if (defined) *defined = true;
  return sxy / std::sqrt(sxx * syy);
}

DeltaCorrelation delta_correlation(const EvalReport& baseline, const EvalReport& ours) {
  auto ids = [](const EvalReport& r) {
    std::vector<std::string> v;
    for (const auto& t : r.tasks) v.push_back(t.task_id);
    std::sort(v.begin(), v.end());
    return v;
  };
  if (ids(baseline) != ids(ours)) throw EvalError("delta_correlation: reports cover different task sets");
  const auto b = per_template_report(baseline);
  std::map<std::string, double> o;
  for (const auto& row : per_template_report(ours)) o[row.group] = row.auccess;
  DeltaCorrelation d;
  std::vector<double> x, y;
  for (const auto& row : b) {
    const double theirs = o.at(row.group);
    d.rows.push_back({row.group, row.auccess, theirs, theirs - row.auccess});
    x.push_back(row.auccess);
    y.push_back(theirs - row.auccess);
  }
  d.pearson = pearson(x, y, &d.defined);
  return d;
}

// ---------------------------------------------------------------- model helpers

namespace {

// Runs `fn(graph, e_sa)` over chunks of actions and concatenates `fn` outputs.
template <typename Fn>
void for_each_chunk(Model<float>& model, const Task& task, std::span<const Action> actions, std::size_t chunk, Fn fn) {
  const ModelConfig& c = model.config();
  const std::size_t R = c.raster, px = raster_numel(R), adim = action_dim(c.tier);
  if (chunk == 0) chunk = actions.size();
  ad::Tensor<float> scene({1, kRasterChannels, R, R});
  const bool film = c.resolved_action_repr() == ActionRepr::kFilm;
  if (film) rasterize_into(task.scene, std::span<float>(scene.data), R);
  for (std::size_t lo = 0; lo < actions.size(); lo += chunk) {
    const std::size_t hi = std::min(actions.size(), lo + chunk), n = hi - lo;
    ModelInputs<float> in;
    in.task_of.assign(n, 0);
    in.actions = ad::Tensor<float>({n, adim});
    for (std::size_t i = 0; i < n; ++i) {
      if (actions[lo + i].size() != adim) throw EvalError("model scoring: action tier differs from the model's");
      for (std::size_t d = 0; d < adim; ++d) in.actions[i * adim + d] = static_cast<float>(actions[lo + i][d]);
    }
    if (film) {
      in.scenes = scene;
    } else {
      in.rendered = ad::Tensor<float>({n, kRasterChannels, R, R});
      for (std::size_t i = 0; i < n; ++i) {
        rasterize_into(task.scene, actions[lo + i], std::span<float>(in.rendered.ptr() + i * px, px), R);
      }
    }
    Model<float>::Graph g(model, false);
    fn(g, model.embed(g, in));
  }
}

}  // namespace

std::vector<double> score_actions(Model<float>& model, const Task& task, std::span<const Action> actions, std::size_t chunk) {
  std::vector<double> out;
  out.reserve(actions.size());
  for_each_chunk(model, task, actions, chunk, [&](Model<float>::Graph& g, ad::Var<float> e) {
    const auto logits = model.score(g, e);
    for (float v : logits.value().data) out.push_back(v);
  });
  return out;
}

ad::Tensor<float> embed_actions(Model<float>& model, const Task& task, std::span<const Action> actions, std::size_t chunk) {
  const std::size_t d = model.config().embed_dim;
  ad::Tensor<float> out({actions.size(), d});
  std::size_t row = 0;
  for_each_chunk(model, task, actions, chunk, [&](Model<float>::Graph&, ad::Var<float> e) {
    std::copy(e.value().data.begin(), e.value().data.end(), out.ptr() + row * d);
    row += e.dim(0);
  });
  return out;
}

Scorer model_scorer(Model<float>& model) {
  return [&model](const Task& task, std::span<const Action> actions) { return score_actions(model, task, actions); };
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw EvalError("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::vector<ActionMapRow> action_map_export(Model<float>& model, const Task& task, std::span<const Action> solving,
                                            std::size_t resolution, double threshold, double r) {
  if (resolution < 8) throw EvalError("action_map_export: grid resolution must be >= 8");
  if (solving.empty()) throw EvalError("action_map_export: task " + task.id + " has no known solving action");
  if (!(r >= 0.0 && r <= 1.0)) throw EvalError("action_map_export: radius coordinate outside [0, 1]");
  std::vector<Action> grid;
  for (std::size_t j = 0; j < resolution; ++j) {
    for (std::size_t i = 0; i < resolution; ++i) {
      const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(resolution);
      const double y = (static_cast<double>(j) + 0.5) / static_cast<double>(resolution);
      if (task.tier == Tier::kOneBall) {
        grid.push_back(Action::one_ball(x, y, r));
      } else {
        grid.push_back(Action::two_ball(x, y, r, solving[0][3], solving[0][4], solving[0][5]));
      }
    }
  }
  const auto scores = score_actions(model, task, grid);
  const auto eg = embed_actions(model, task, grid);
  const auto es = embed_actions(model, task, solving);
  const std::size_t d = eg.dim(1);
  std::vector<ActionMapRow> rows;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double best = -1.0;
    for (std::size_t s = 0; s < solving.size(); ++s) {
      best = std::max(best, cosine({eg.ptr() + k * d, d}, {es.ptr() + s * d, d}));
    }
    rows.push_back({grid[k][0], grid[k][1], scores[k], best, best > threshold});
  }
  return rows;
}

// ---------------------------------------------------------------- CSV

void write_task_csv(std::ostream& out, const EvalReport& report) {
  out << "fold,mode,task_id,template_id,moving_objects,attempts,solved_at\n";
  for (const auto& t : report.tasks) {
    out << report.fold << "," << report.mode << "," << t.task_id << "," << t.template_id << "," << t.moving_objects << ","
        << t.attempts << "," << (t.solved_at ? std::to_string(*t.solved_at) : "") << "\n";
  }
}

EvalReport read_task_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "fold,mode,task_id,template_id,moving_objects,attempts,solved_at") {
    throw EvalError("task CSV: unexpected header");
  }
  EvalReport r;
  bool first = true;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    // Keep the trailing empty field of unsolved tasks.
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      f.push_back(trim(line.substr(start, pos - start)));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (f.size() != 7) throw EvalError("task CSV line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      const int fold = static_cast<int>(parse_int(f[0]));
      if (first) {
        r.fold = fold;
        r.mode = f[1];
        first = false;
      }
      TaskOutcome t;
      t.task_id = f[2];
      t.template_id = f[3];
      t.moving_objects = static_cast<int>(parse_int(f[4]));
      t.attempts = parse_size(f[5]);
      if (!f[6].empty()) t.solved_at = parse_size(f[6]);
      r.tasks.push_back(std::move(t));
    } catch (const std::invalid_argument& e) {
      throw EvalError("task CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return r;
}

namespace {
std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

void write_group_csv(std::ostream& out, const std::vector<GroupRow>& rows, const std::string& key) {
  out << key << ",tasks,auccess\n";
  for (const auto& r : rows) out << r.group << "," << r.tasks << "," << num(r.auccess) << "\n";
}

void write_delta_csv(std::ostream& out, const DeltaCorrelation& d) {
  out << "# pearson=" << (d.defined ? num(d.pearson) : "nan") << " defined=" << (d.defined ? "true" : "false") << "\n";
  out << "template,baseline_auccess,ours_auccess,delta\n";
  for (const auto& r : d.rows) out << r.template_id << "," << num(r.baseline) << "," << num(r.ours) << "," << num(r.delta) << "\n";
}

void write_action_map_csv(std::ostream& out, const std::vector<ActionMapRow>& rows) {
  out << "x,y,score,max_cos,above_threshold\n";
  for (const auto& r : rows) out << num(r.x) << "," << num(r.y) << "," << num(r.score) << "," << num(r.max_cos) << "," << (r.above ? 1 : 0) << "\n";
}

}  // namespace dynaware
