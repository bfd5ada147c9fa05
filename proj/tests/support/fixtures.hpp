#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "dynaware/physics.hpp"

#ifndef DYNAWARE_FIXTURE_DIR
#error "DYNAWARE_FIXTURE_DIR must be defined"
#endif

namespace dwtest {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(DYNAWARE_FIXTURE_DIR) / name; }

inline nlohmann::json load_json(const std::string& name) {
  std::ifstream in(fixture(name));
  if (!in) throw std::runtime_error("missing fixture " + name);
  return nlohmann::json::parse(in);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Scratch directory under the system temp dir, wiped on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dynaware_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Floor segment, subject ball far left, target ball far right. Nothing moves
// them towards each other, so the goal never self-solves.
inline dynaware::Scene idle_scene() {
  using namespace dynaware;
  Scene s;
  s.bodies.push_back(Body::segment({0.0, 0.05}, {1.0, 0.05}, 0.01, Role::kScenery));
  s.bodies.push_back(Body::circle({0.15, 0.06 + 0.04}, 0.04, true, Role::kGoalSubject));
  s.bodies.push_back(Body::circle({0.85, 0.06 + 0.04}, 0.04, false, Role::kGoalTarget));
  return s;
}

// Subject already resting on the target: the goal holds from frame 0.
inline dynaware::Scene touching_scene() {
  using namespace dynaware;
  Scene s;
  s.bodies.push_back(Body::segment({0.0, 0.05}, {1.0, 0.05}, 0.01, Role::kScenery));
  s.bodies.push_back(Body::circle({0.5, 0.1}, 0.04, false, Role::kGoalTarget));
  s.bodies.push_back(Body::circle({0.5, 0.1 + 0.04 + 0.03}, 0.03, true, Role::kGoalSubject));
  return s;
}

}  // namespace dwtest
