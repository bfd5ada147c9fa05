#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dynaware/checkpoint.hpp"
#include "dynaware/experiment.hpp"
#include "dynaware/similarity.hpp"
#include "dynaware/task_io.hpp"
#include "dynaware/text_parse.hpp"
#include "dynaware/trace_io.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace dynaware;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kRuntimeError = 3, kAssertionFailure = 4 };

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_file, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("-s,--set", c.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "run seed (config key 'seed')")->each([&c](const std::string&) { c.seed_set = true; });
  cmd->add_option("--threads", c.threads, "OpenMP threads (1 gives bit-reproducible runs)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_file.empty() ? RunConfig{} : load_config(c.config_file);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed_set) cfg.seed = c.seed;
  if (c.threads >= 0) cfg.threads = c.threads;
  validate(cfg);
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
  return cfg;
}

void snapshot(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  save_config(dir / "config.txt", cfg);
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  for (const auto& p : split_list(text)) out.push_back(parse_double(p));
  return out;
}

Action parse_action(const std::string& text) {
  const auto v = parse_doubles(text);
  if (v.size() != 3 && v.size() != 6) throw ConfigError("--action needs 3 (x,y,r) or 6 (x1,y1,r1,x2,y2,r2) numbers");
  try {
    return Action(v.size() == 3 ? Tier::kOneBall : Tier::kTwoBall, v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("--action: ") + e.what());
  }
}

std::vector<Task> tasks_for(const RunConfig& cfg, const std::string& tasks_file) {
  return tasks_file.empty() ? generate_suite(cfg) : load_tasks(tasks_file);
}

Split split_for(const RunConfig& cfg, const std::vector<Task>& tasks, const std::string& splits_file) {
  const auto splits = splits_file.empty() ? make_suite_splits(cfg, tasks) : load_splits(splits_file);
  for (const auto& s : splits) {
    if (s.fold == cfg.fold) return s;
  }
  throw ConfigError("no split for fold " + std::to_string(cfg.fold));
}

void write_eval_outputs(const fs::path& dir, const EvalReport& report, std::size_t max_attempts) {
  {
    std::ofstream out(dir / "eval_tasks.csv");
    write_task_csv(out, report);
  }
  {
    std::ofstream out(dir / "eval_templates.csv");
    write_group_csv(out, per_template_report(report), "template");
  }
  {
    std::ofstream out(dir / "eval_objects.csv");
    write_group_csv(out, per_moving_objects_report(report), "moving_objects");
  }
  std::size_t solved = 0;
  for (const auto& t : report.tasks) solved += t.solved_at.has_value();
  std::ofstream out(dir / "eval_summary.csv");
  out << "fold,mode,tasks,solved,auccess\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", report.auccess(max_attempts));
  out << report.fold << "," << report.mode << "," << report.tasks.size() << "," << solved << "," << buf << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamics-aware value learning on a 2D physics puzzle suite"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("dynaware ") + DYNAWARE_VERSION);

  // gen-tasks
  Common gen_c;
  std::string gen_out = "tasks";
  auto* gen = app.add_subcommand("gen-tasks", "generate the task suite and fold splits");
  add_common(gen, gen_c);
  gen->add_option("-o,--out", gen_out, "output directory (tasks.json, splits.json, config.txt)");

  // rollout
  Common ro_c;
  std::string ro_tasks, ro_task, ro_action, ro_out;
  int ro_frames = 0;
  auto* ro = app.add_subcommand("rollout", "simulate one action on one task and write its trace");
  add_common(ro, ro_c);
  ro->add_option("--tasks", ro_tasks, "task file")->required()->check(CLI::ExistingFile);
  ro->add_option("--task", ro_task, "task id, e.g. ramp:3")->required();
  ro->add_option("--action", ro_action, "x,y,r or x1,y1,r1,x2,y2,r2 in [0,1]")->required();
  ro->add_option("--max-frames", ro_frames, "recorded frame limit (default sim.max_frames)");
  ro->add_option("-o,--out", ro_out, "trace file to write");

  // sim-metric
  std::string sm_a, sm_b, sm_window = "entire";
  double sm_alpha = std::sqrt(2.0);
  int sm_bins = 20;
  auto* sm = app.add_subcommand("sim-metric", "rollout similarity v and bin of two trace files");
  sm->add_option("trace_a", sm_a, "first trace")->required()->check(CLI::ExistingFile);
  sm->add_option("trace_b", sm_b, "second trace")->required()->check(CLI::ExistingFile);
  sm->add_option("--alpha", sm_alpha, "distance clip")->capture_default_str();
  sm->add_option("--bins", sm_bins, "number of bins K")->capture_default_str();
  sm->add_option("--window", sm_window, "entire | first:n | last:n")->capture_default_str();

  // train
  Common tr_c;
  std::string tr_tasks, tr_splits, tr_out = "run";
  auto* tr = app.add_subcommand("train", "train a model on one fold's training tasks");
  add_common(tr, tr_c);
  tr->add_option("--tasks", tr_tasks, "task file (default: generate from config)")->check(CLI::ExistingFile);
  tr->add_option("--splits", tr_splits, "split file (default: derive from config)")->check(CLI::ExistingFile);
  tr->add_option("-o,--out", tr_out, "output directory");

  // eval
  Common ev_c;
  std::string ev_tasks, ev_splits, ev_ckpt, ev_out = "eval";
  auto* ev = app.add_subcommand("eval", "rank-and-attempt evaluation of a checkpoint on a fold's test tasks");
  add_common(ev, ev_c);
  ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--tasks", ev_tasks, "task file (default: generate from config)")->check(CLI::ExistingFile);
  ev->add_option("--splits", ev_splits, "split file (default: derive from config)")->check(CLI::ExistingFile);
  ev->add_option("-o,--out", ev_out, "output directory");

  // ablate
  Common ab_c;
  std::string ab_axis, ab_values, ab_seeds = "0", ab_tasks, ab_out = "ablate";
  bool ab_dry = false;
  auto* ab = app.add_subcommand("ablate", "vary one config key over a grid, averaging over seeds");
  add_common(ab, ab_c);
  ab->add_option("--axis", ab_axis, "config key to vary (bare names mean model.<name>)")->required();
  ab->add_option("--values", ab_values, "comma-separated values")->required();
  ab->add_option("--seeds", ab_seeds, "comma-separated seeds; seed s uses fold s mod split.folds")->capture_default_str();
  ab->add_option("--tasks", ab_tasks, "task file (default: generate from config)")->check(CLI::ExistingFile);
  ab->add_option("-o,--out", ab_out, "output directory");
  ab->add_flag("--dry-run", ab_dry, "validate the grid and write the plan without training");

  // report
  Common rp_c;
  std::string rp_base, rp_ours, rp_ckpt, rp_tasks, rp_task, rp_out = "report";
  std::size_t rp_grid = 32;
  double rp_threshold = 0.9, rp_r = 0.5;
  auto* rp = app.add_subcommand("report", "template delta table and Pearson r, or an action-space similarity map");
  add_common(rp, rp_c);
  rp->add_option("--baseline", rp_base, "baseline eval_tasks.csv")->check(CLI::ExistingFile);
  rp->add_option("--ours", rp_ours, "compared eval_tasks.csv")->check(CLI::ExistingFile);
  rp->add_option("--checkpoint", rp_ckpt, "checkpoint for the action map")->check(CLI::ExistingFile);
  rp->add_option("--tasks", rp_tasks, "task file for the action map")->check(CLI::ExistingFile);
  rp->add_option("--task", rp_task, "task id for the action map");
  rp->add_option("--grid", rp_grid, "action map resolution")->capture_default_str();
  rp->add_option("--threshold", rp_threshold, "cosine threshold")->capture_default_str();
  rp->add_option("--radius", rp_r, "normalized radius of grid actions")->capture_default_str();
  rp->add_option("-o,--out", rp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen) {
      const RunConfig cfg = resolve(gen_c);
      const fs::path dir = gen_out;
      snapshot(dir, cfg);
      const auto tasks = generate_suite(cfg);
      save_tasks(dir / "tasks.json", tasks);
      save_splits(dir / "splits.json", make_suite_splits(cfg, tasks));
      std::cout << "wrote " << tasks.size() << " tasks and " << cfg.folds << " " << to_string(cfg.split_mode)
                << " folds to " << dir.string() << "\n";
    } else if (*ro) {
      const RunConfig cfg = resolve(ro_c);
      const auto tasks = load_tasks(ro_tasks);
      const Task& task = find_task(tasks, ro_task);
      const Action action = parse_action(ro_action);
      const Rollout r = rollout(task.scene, action, ro_frames > 0 ? ro_frames : cfg.generate.sim.max_frames, cfg.generate.sim);
      if (!ro_out.empty()) {
        const fs::path out = ro_out;
        if (out.has_parent_path()) snapshot(out.parent_path(), cfg);
        else snapshot(".", cfg);
        save_trace(ro_out, r);
      }
      std::cout << "solved=" << (r.solved() ? "true" : "false") << " frames=" << r.length() << " objects=" << r.object_count() << "\n";
    } else if (*sm) {
      SimilarityConfig sc;
      sc.alpha = sm_alpha;
      sc.bins = sm_bins;
      sc.window = frame_window_from_string(sm_window);
      validate(sc);
      const auto t = similarity(load_trace(sm_a), load_trace(sm_b), sc);
      std::printf("v=%.12g bin=%d\n", t.v, t.bin);
    } else if (*tr) {
      const RunConfig cfg = resolve(tr_c);
      const fs::path dir = tr_out;
      snapshot(dir, cfg);
      const auto tasks = tasks_for(cfg, tr_tasks);
      const Split split = split_for(cfg, tasks, tr_splits);
      const ActionCache cache = build_cache(cfg, tasks);
      Model<float> model(cfg.model, init_seed(cfg));
      TrainConfig tc = cfg.train;
      tc.seed = train_seed(cfg);
      TrainOptions opts;
      opts.out_dir = dir;
      opts.progress = &std::cerr;
      const auto rows = train(tc, model, tasks, task_indices(tasks, split.train), cache, opts);
      std::cout << "trained " << rows.size() << " batches; final loss_solved " << rows.back().loss_solved << "; checkpoint "
                << (dir / "model.ckpt").string() << "\n";
    } else if (*ev) {
      RunConfig cfg = resolve(ev_c);
      Model<float> model = model_from_checkpoint(load_checkpoint(ev_ckpt));
      cfg.model = model.config();
      const fs::path dir = ev_out;
      snapshot(dir, cfg);
      const auto tasks = tasks_for(cfg, ev_tasks);
      const Split split = split_for(cfg, tasks, ev_splits);
      EvalConfig ec = cfg.eval;
      ec.seed = eval_seed(cfg);
      ec.sim = cfg.generate.sim;
      const auto report = evaluate(model_scorer(model), tasks, task_indices(tasks, split.test), ec, split.fold,
                                   to_string(cfg.model.loss));
      write_eval_outputs(dir, report, ec.max_attempts);
      std::printf("auccess=%.4f tasks=%zu\n", report.auccess(ec.max_attempts), report.tasks.size());
    } else if (*ab) {
      const RunConfig cfg = resolve(ab_c);
      const fs::path dir = ab_out;
      snapshot(dir, cfg);
      AblationPlan plan;
      plan.axis = ab_axis;
      plan.values = split_list(ab_values);
      plan.seeds.clear();
      for (const auto& s : split_list(ab_seeds)) plan.seeds.push_back(parse_u64(s));
      if (ab_dry) {
        for (const auto& v : plan.values) {
          RunConfig probe = cfg;
          set_option(probe, resolve_axis(plan.axis), v);
          validate(probe);
        }
        std::ofstream out(dir / "plan.csv");
        out << "axis,value,seed,fold\n";
        for (const auto& v : plan.values) {
          for (auto s : plan.seeds) out << plan.axis << "," << v << "," << s << "," << s % static_cast<std::uint64_t>(cfg.folds) << "\n";
        }
        std::cout << "plan: " << plan.values.size() << " values x " << plan.seeds.size() << " seeds\n";
        return kOk;
      }
      const auto tasks = tasks_for(cfg, ab_tasks);
      const auto splits = make_suite_splits(cfg, tasks);
      const ActionCache cache = build_cache(cfg, tasks);
      const auto cells = ablate(cfg, plan, tasks, splits, cache, dir, &std::cerr);
      std::ofstream out(dir / "ablation.csv");
      write_ablation_csv(out, cells);
      write_ablation_csv(std::cout, cells);
    } else if (*rp) {
      const RunConfig cfg = resolve(rp_c);
      const fs::path dir = rp_out;
      const bool delta = !rp_base.empty() || !rp_ours.empty();
      const bool map = !rp_ckpt.empty() || !rp_task.empty();
      if (!delta && !map) throw ConfigError("report: give --baseline/--ours and/or --checkpoint/--tasks/--task");
      snapshot(dir, cfg);
      if (delta) {
        if (rp_base.empty() || rp_ours.empty()) throw ConfigError("report: --baseline and --ours go together");
        std::ifstream b(rp_base), o(rp_ours);
        const auto d = delta_correlation(read_task_csv(b), read_task_csv(o));
        std::ofstream out(dir / "template_delta.csv");
        write_delta_csv(out, d);
        if (d.defined) std::printf("pearson=%.6f templates=%zu\n", d.pearson, d.rows.size());
        else std::printf("pearson=nan (undefined) templates=%zu\n", d.rows.size());
      }
      if (map) {
        if (rp_ckpt.empty() || rp_tasks.empty() || rp_task.empty()) {
          throw ConfigError("report: the action map needs --checkpoint, --tasks and --task");
        }
        Model<float> model = model_from_checkpoint(load_checkpoint(rp_ckpt));
        const auto tasks = load_tasks(rp_tasks);
        const Task& task = find_task(tasks, rp_task);
        const ActionCache cache = ActionCache::build({task}, cfg.cache_actions, cache_seed(cfg), cfg.generate.sim);
        std::vector<Action> solving;
        for (std::size_t a : cache.entry(0).positives) solving.push_back(cache.entry(0).actions[a]);
        const auto rows = action_map_export(model, task, solving, rp_grid, rp_threshold, rp_r);
        std::ofstream out(dir / "action_map.csv");
        write_action_map_csv(out, rows);
        std::size_t above = 0;
        for (const auto& r : rows) above += r.above;
        std::printf("action map: %zu points, %zu above %.3g, %zu known solving actions\n", rows.size(), above, rp_threshold,
                    solving.size());
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ModelConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const SplitError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const SimilarityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidActionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const ad::NonFiniteError& e) {
    std::cerr << "assertion failure: " << e.what() << "\n";
    return kAssertionFailure;
  } catch (const std::logic_error& e) {
    std::cerr << "assertion failure: " << e.what() << "\n";
    return kAssertionFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
