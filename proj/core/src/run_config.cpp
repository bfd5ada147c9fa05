#include "dynaware/run_config.hpp"

#include <fstream>
#include <sstream>

#include "dynaware/rng.hpp"
#include "dynaware/text_parse.hpp"

namespace dynaware {

std::vector<std::string> RunConfig::template_ids() const {
  return templates.empty() ? builtin_template_ids() : templates;
}

std::vector<std::pair<std::string, std::string>> config_options(const RunConfig& c) {
  std::string tpl;
  for (std::size_t i = 0; i < c.templates.size(); ++i) tpl += (i ? "," : "") + c.templates[i];
  std::vector<std::pair<std::string, std::string>> out = {
      {"seed", std::to_string(c.seed)},
      {"task_seed", std::to_string(c.task_seed)},
      {"data.templates", tpl.empty() ? "all" : tpl},
      {"data.instances", std::to_string(c.instances)},
      {"data.tier", c.generate.tier == Tier::kOneBall ? "1" : "2"},
      {"data.screen_candidates", std::to_string(c.generate.screen_candidates)},
      {"data.min_solve_rate", format_double(c.generate.min_solve_rate)},
      {"data.max_solve_rate", format_double(c.generate.max_solve_rate)},
      {"data.max_retries", std::to_string(c.generate.max_retries)},
      {"split.folds", std::to_string(c.folds)},
      {"split.mode", to_string(c.split_mode)},
      {"split.fold", std::to_string(c.fold)},
      {"cache.actions", std::to_string(c.cache_actions)},
      {"train.batches", std::to_string(c.train.batches)},
      {"train.tasks", std::to_string(c.train.tasks_per_batch)},
      {"train.per_class", std::to_string(c.train.per_class)},
      {"train.lr", format_double(c.train.lr)},
      {"train.checkpoint_every", std::to_string(c.train.checkpoint_every)},
      {"train.adam_beta1", format_double(c.train.adam.beta1)},
      {"train.adam_beta2", format_double(c.train.adam.beta2)},
      {"train.adam_eps", format_double(c.train.adam.eps)},
      {"eval.candidates", std::to_string(c.eval.candidates)},
      {"eval.max_attempts", std::to_string(c.eval.max_attempts)},
      {"sim.dt", format_double(c.generate.sim.dt)},
      {"sim.stride", std::to_string(c.generate.sim.stride)},
      {"sim.max_frames", std::to_string(c.generate.sim.max_frames)},
      {"sim.restitution", format_double(c.generate.sim.restitution)},
      {"sim.friction", format_double(c.generate.sim.friction)},
      {"sim.max_speed", format_double(c.generate.sim.max_speed)},
      {"threads", std::to_string(c.threads)},
  };
  for (auto& [k, v] : model_options(c.model)) {
    if (k != "tier") out.emplace_back("model." + k, v);
  }
  return out;
}

void set_option(RunConfig& c, const std::string& key, const std::string& value) {
  try {
    SimConfig& sim = c.generate.sim;
    if (key == "seed") c.seed = parse_u64(value);
    else if (key == "task_seed") c.task_seed = parse_u64(value);
    else if (key == "data.templates") {
      c.templates = value == "all" ? std::vector<std::string>{} : split_list(value);
      for (const auto& id : c.templates) find_template(id);
    } else if (key == "data.instances") c.instances = static_cast<int>(parse_int(value));
    else if (key == "data.tier") {
      const auto t = parse_int(value);
      if (t != 1 && t != 2) throw ConfigError("tier must be 1 or 2");
      c.generate.tier = t == 1 ? Tier::kOneBall : Tier::kTwoBall;
      c.model.tier = c.generate.tier;
    } else if (key == "data.screen_candidates") c.generate.screen_candidates = static_cast<int>(parse_int(value));
    else if (key == "data.min_solve_rate") c.generate.min_solve_rate = parse_double(value);
    else if (key == "data.max_solve_rate") c.generate.max_solve_rate = parse_double(value);
    else if (key == "data.max_retries") c.generate.max_retries = static_cast<int>(parse_int(value));
    else if (key == "split.folds") c.folds = static_cast<int>(parse_int(value));
    else if (key == "split.mode") c.split_mode = split_mode_from_string(value);
    else if (key == "split.fold") c.fold = static_cast<int>(parse_int(value));
    else if (key == "cache.actions") c.cache_actions = parse_size(value);
    else if (key == "train.batches") c.train.batches = parse_size(value);
    else if (key == "train.tasks") c.train.tasks_per_batch = parse_size(value);
    else if (key == "train.per_class") c.train.per_class = parse_size(value);
    else if (key == "train.lr") c.train.lr = parse_double(value);
    else if (key == "train.checkpoint_every") c.train.checkpoint_every = parse_size(value);
    else if (key == "train.adam_beta1") c.train.adam.beta1 = parse_double(value);
    else if (key == "train.adam_beta2") c.train.adam.beta2 = parse_double(value);
    else if (key == "train.adam_eps") c.train.adam.eps = parse_double(value);
    else if (key == "eval.candidates") c.eval.candidates = parse_size(value);
    else if (key == "eval.max_attempts") c.eval.max_attempts = parse_size(value);
    else if (key == "sim.dt") sim.dt = parse_double(value);
    else if (key == "sim.stride") sim.stride = static_cast<int>(parse_int(value));
    else if (key == "sim.max_frames") sim.max_frames = static_cast<int>(parse_int(value));
    else if (key == "sim.restitution") sim.restitution = parse_double(value);
    else if (key == "sim.friction") sim.friction = parse_double(value);
    else if (key == "sim.max_speed") sim.max_speed = parse_double(value);
    else if (key == "threads") c.threads = static_cast<int>(parse_int(value));
    else if (key.rfind("model.", 0) == 0 && key != "model.tier") set_model_option(c.model, key.substr(6), value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const ModelConfigError& e) {
    throw ConfigError(e.what());
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
  c.eval.sim = c.generate.sim;
}

void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_option(c, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void validate(const RunConfig& c) {
  if (c.instances < 1) throw ConfigError("data.instances must be >= 1");
  if (c.generate.screen_candidates < 1) throw ConfigError("data.screen_candidates must be >= 1");
  if (c.folds < 2) throw ConfigError("split.folds must be >= 2");
  if (c.fold < 0 || c.fold >= c.folds) throw ConfigError("split.fold must be in [0, split.folds)");
  if (c.cache_actions < 1) throw ConfigError("cache.actions must be >= 1");
  if (c.eval.max_attempts < 1 || c.eval.candidates < c.eval.max_attempts) {
    throw ConfigError("need eval.candidates >= eval.max_attempts >= 1");
  }
  if (!(c.generate.sim.dt > 0.0) || c.generate.sim.stride < 1 || c.generate.sim.max_frames < 1) {
    throw ConfigError("sim.dt, sim.stride and sim.max_frames must be positive");
  }
  if (c.threads < 0) throw ConfigError("threads must be >= 0");
  try {
    validate(c.model);
    validate(c.train);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string config_text(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_options(c)) out += k + "=" + v + "\n";
  return out;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(c, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out || !(out << config_text(config))) throw std::runtime_error("cannot write " + path.string());
}

std::uint64_t init_seed(const RunConfig& c) { return derive_seed(c.seed, fnv1a("init")); }
std::uint64_t train_seed(const RunConfig& c) { return derive_seed(c.seed, fnv1a("train")); }
std::uint64_t eval_seed(const RunConfig& c) { return derive_seed(c.seed, fnv1a("eval")); }
std::uint64_t cache_seed(const RunConfig& c) { return derive_seed(c.task_seed, fnv1a("cache")); }
std::uint64_t split_seed(const RunConfig& c) { return derive_seed(c.task_seed, fnv1a("split")); }

}  // namespace dynaware
