#include "dynaware/task_io.hpp"

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dynaware {

using nlohmann::json;

namespace {

json vec(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw TaskFileError("expected an [x, y] pair");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json body_json(const Body& b) {
  json j;
  if (const auto* seg = std::get_if<Segment>(&b.shape)) {
    j["shape"] = "segment";
    j["p0"] = vec(seg->p0);
    j["p1"] = vec(seg->p1);
    j["thickness"] = seg->thickness;
  } else {
    j["shape"] = "circle";
    j["radius"] = b.radius();
    j["position"] = vec(b.position);
    j["velocity"] = vec(b.velocity);
    j["angular_velocity"] = b.angular_velocity;
    j["dynamic"] = b.dynamic;
  }
  j["role"] = to_string(b.role);
  return j;
}

Body body_from(const json& j) {
  const std::string shape = j.at("shape").get<std::string>();
  const Role role = role_from_string(j.at("role").get<std::string>());
  if (shape == "segment") return Body::segment(vec_from(j.at("p0")), vec_from(j.at("p1")), j.at("thickness").get<double>(), role);
  if (shape != "circle") throw TaskFileError("unknown body shape '" + shape + "'");
  Body b = Body::circle(vec_from(j.at("position")), j.at("radius").get<double>(), j.at("dynamic").get<bool>(), role);
  b.velocity = vec_from(j.at("velocity"));
  b.angular_velocity = j.at("angular_velocity").get<double>();
  return b;
}

void check_header(const json& j, const char* format, int version) {
  if (!j.is_object() || j.value("format", "") != format) throw TaskFileError(std::string("not a ") + format + " file");
  const int v = j.at("version").get<int>();
  if (v != version) throw TaskFileError(std::string(format) + ": unsupported version " + std::to_string(v));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TaskFileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw TaskFileError("cannot write " + path.string());
}

}  // namespace

std::string tasks_to_json(const std::vector<Task>& tasks) {
  json arr = json::array();
  for (const Task& t : tasks) {
    json scene;
    scene["gravity"] = t.scene.gravity;
    scene["goal"] = {{"subject", to_string(t.scene.goal.subject)},
                     {"target", to_string(t.scene.goal.target)},
                     {"dwell", t.scene.goal.dwell}};
    json bodies = json::array();
    for (const Body& b : t.scene.bodies) bodies.push_back(body_json(b));
    scene["bodies"] = std::move(bodies);
    arr.push_back({{"id", t.id},
                   {"template", t.template_id},
                   {"instance", t.instance},
                   {"tier", static_cast<int>(t.tier)},
                   {"params", t.params},
                   {"screen_seed", t.screen_seed},
                   {"screen_solve_rate", t.screen_solve_rate},
                   {"scene", std::move(scene)}});
  }
  json root = {{"format", "dynaware-tasks"}, {"version", kTaskFileVersion}, {"tasks", std::move(arr)}};
  return root.dump(1) + "\n";
}

std::vector<Task> tasks_from_json(const std::string& text) {
  try {
    const json root = json::parse(text);
    check_header(root, "dynaware-tasks", kTaskFileVersion);
    std::vector<Task> tasks;
    for (const json& j : root.at("tasks")) {
      Task t;
      t.id = j.at("id").get<std::string>();
      t.template_id = j.at("template").get<std::string>();
      t.instance = j.at("instance").get<int>();
      const int tier = j.at("tier").get<int>();
      if (tier != 1 && tier != 2) throw TaskFileError("task " + t.id + ": tier must be 1 or 2");
      t.tier = static_cast<Tier>(tier);
      t.params = j.at("params").get<std::vector<double>>();
      t.screen_seed = j.at("screen_seed").get<std::uint64_t>();
      t.screen_solve_rate = j.at("screen_solve_rate").get<double>();
      const json& s = j.at("scene");
      t.scene.gravity = s.at("gravity").get<double>();
      t.scene.goal.subject = role_from_string(s.at("goal").at("subject").get<std::string>());
      t.scene.goal.target = role_from_string(s.at("goal").at("target").get<std::string>());
      t.scene.goal.dwell = s.at("goal").at("dwell").get<int>();
      for (const json& b : s.at("bodies")) t.scene.bodies.push_back(body_from(b));
      try {
        validate_scene(t.scene);
      } catch (const SceneError& e) {
        throw TaskFileError("task " + t.id + ": " + e.what());
      }
      tasks.push_back(std::move(t));
    }
    return tasks;
  } catch (const TaskFileError&) {
    throw;
  } catch (const std::exception& e) {
    throw TaskFileError(std::string("task file: ") + e.what());
  }
}

void save_tasks(const std::filesystem::path& path, const std::vector<Task>& tasks) { write_file(path, tasks_to_json(tasks)); }
std::vector<Task> load_tasks(const std::filesystem::path& path) { return tasks_from_json(read_file(path)); }

std::string splits_to_json(const std::vector<Split>& splits) {
  json folds = json::array();
  for (const Split& s : splits) {
    folds.push_back({{"fold", s.fold}, {"mode", to_string(s.mode)}, {"train", s.train}, {"test", s.test}});
  }
  json root = {{"format", "dynaware-splits"}, {"version", kSplitFileVersion}, {"folds", std::move(folds)}};
  return root.dump(1) + "\n";
}

std::vector<Split> splits_from_json(const std::string& text) {
  try {
    const json root = json::parse(text);
    check_header(root, "dynaware-splits", kSplitFileVersion);
    std::vector<Split> out;
    for (const json& j : root.at("folds")) {
      Split s;
      s.fold = j.at("fold").get<int>();
      s.mode = split_mode_from_string(j.at("mode").get<std::string>());
      s.train = j.at("train").get<std::vector<std::string>>();
      s.test = j.at("test").get<std::vector<std::string>>();
      out.push_back(std::move(s));
    }
    return out;
  } catch (const TaskFileError&) {
    throw;
  } catch (const std::exception& e) {
    throw TaskFileError(std::string("split file: ") + e.what());
  }
}

void save_splits(const std::filesystem::path& path, const std::vector<Split>& splits) { write_file(path, splits_to_json(splits)); }
std::vector<Split> load_splits(const std::filesystem::path& path) { return splits_from_json(read_file(path)); }

std::vector<std::size_t> task_indices(const std::vector<Task>& tasks, const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < tasks.size(); ++i) where[tasks[i].id] = i;
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    const auto it = where.find(id);
    if (it == where.end()) throw TaskFileError("unknown task id '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace dynaware
