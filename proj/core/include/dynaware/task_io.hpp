#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dynaware/tasks.hpp"

namespace dynaware {

// Task file (JSON), format "dynaware-tasks", version 1:
//
//   {
//     "format": "dynaware-tasks", "version": 1,
//     "tasks": [{
//       "id": "ramp:0", "template": "ramp", "instance": 0, "tier": 1,
//       "params": [..], "screen_seed": <u64>, "screen_solve_rate": <double>,
//       "scene": {
//         "gravity": 4.0,
//         "goal": {"subject": "subject", "target": "target", "dwell": 10},
//         "bodies": [
//           {"shape": "circle", "radius": r, "position": [x, y], "velocity": [vx, vy],
//            "angular_velocity": w, "dynamic": true, "role": "subject"},
//           {"shape": "segment", "p0": [x, y], "p1": [x, y], "thickness": t,
//            "role": "scenery"}
//         ]}}]
//   }
//
// Split file (JSON), format "dynaware-splits", version 1:
//
//   {"format": "dynaware-splits", "version": 1,
//    "folds": [{"fold": 0, "mode": "within", "train": [ids], "test": [ids]}]}
//
// Doubles are written with full round-trip precision.
inline constexpr int kTaskFileVersion = 1;
inline constexpr int kSplitFileVersion = 1;

class TaskFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string tasks_to_json(const std::vector<Task>& tasks);
std::vector<Task> tasks_from_json(const std::string& text);
void save_tasks(const std::filesystem::path& path, const std::vector<Task>& tasks);
std::vector<Task> load_tasks(const std::filesystem::path& path);

std::string splits_to_json(const std::vector<Split>& splits);
std::vector<Split> splits_from_json(const std::string& text);
void save_splits(const std::filesystem::path& path, const std::vector<Split>& splits);
std::vector<Split> load_splits(const std::filesystem::path& path);

// Indices of `ids` within `tasks`; throws TaskFileError for unknown ids.
std::vector<std::size_t> task_indices(const std::vector<Task>& tasks, const std::vector<std::string>& ids);

}  // namespace dynaware
