#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dynaware/eval.hpp"
#include "dynaware/model.hpp"
#include "dynaware/tasks.hpp"
#include "dynaware/training.hpp"

namespace dynaware {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Everything a CLI run depends on. Text form is one `key=value` per line,
// '#' starts a comment; keys are listed by config_options().
struct RunConfig {
  std::uint64_t seed = 0;       // model init, batch sampling, eval candidates
  std::uint64_t task_seed = 0;  // task generation, splits, action cache

  std::vector<std::string> templates;  // empty: all built-in templates
  int instances = 20;
  GenerateOptions generate;

  int folds = 4;
  SplitMode split_mode = SplitMode::kWithinTemplate;
  int fold = 0;

  std::size_t cache_actions = 1000;
  TrainConfig train;
  EvalConfig eval;
  ModelConfig model;
  int threads = 0;  // 0: OpenMP default

  std::vector<std::string> template_ids() const;
};

std::vector<std::pair<std::string, std::string>> config_options(const RunConfig& config);
// Throws ConfigError for unknown keys or bad values.
void set_option(RunConfig& config, const std::string& key, const std::string& value);
// "key=value" override as given on the command line.
void apply_override(RunConfig& config, const std::string& assignment);
void validate(const RunConfig& config);

std::string config_text(const RunConfig& config);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

// Derived seeds for each stage, so stages never share a random stream.
std::uint64_t init_seed(const RunConfig& c);
std::uint64_t cache_seed(const RunConfig& c);
std::uint64_t split_seed(const RunConfig& c);
std::uint64_t train_seed(const RunConfig& c);
std::uint64_t eval_seed(const RunConfig& c);

}  // namespace dynaware
