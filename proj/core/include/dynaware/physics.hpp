#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dynaware/action.hpp"

namespace dynaware {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

enum class Role { kAgentPlaced, kGoalSubject, kGoalTarget, kScenery };

std::string to_string(Role role);
Role role_from_string(const std::string& name);

struct Circle {
  double radius = 0.0;
};

// A capsule: the segment p0-p1 swept by `thickness`. Segments are always static.
struct Segment {
  Vec2 p0;
  Vec2 p1;
  double thickness = 0.01;
};

struct Body {
  std::variant<Circle, Segment> shape;
  Vec2 position;  // circle center; midpoint for segments
  Vec2 velocity;
  double angular_velocity = 0.0;
  bool dynamic = false;
  Role role = Role::kScenery;

  static Body circle(Vec2 center, double radius, bool dynamic, Role role);
  static Body segment(Vec2 p0, Vec2 p1, double thickness, Role role);

  bool is_circle() const { return std::holds_alternative<Circle>(shape); }
  double radius() const;  // circle radius, or capsule thickness for segments
};

struct GoalSpec {
  Role subject = Role::kGoalSubject;
  Role target = Role::kGoalTarget;
  int dwell = 10;  // consecutive recorded frames
};

// A task's world. Also used as the mutable state that step() advances.
struct Scene {
  std::vector<Body> bodies;
  double gravity = 4.0;  // world-units / s^2, pointing towards -y
  GoalSpec goal;
};

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws SceneError when an invariant fails: positive radii, distinct segment
// endpoints, static segments, bodies inside the unit square, exactly one
// goal-subject and one goal-target, dwell >= 1.
void validate_scene(const Scene& scene);

// Simulation constants. dt and the frame stride give ~60 recorded frames
// over a 3 s horizon; the horizon is a desk-scale stand-in, not a measured
// property of any reference simulator.
struct SimConfig {
  double dt = 1.0 / 60.0;
  int stride = 3;
  int max_frames = 60;
  double restitution = 0.3;
  double friction = 0.4;
  double max_speed = 5.0;
  bool boundary_walls = true;
  double density = 1.0;
  // Below this approach speed contacts are treated as inelastic.
  double restitution_threshold = 0.1;
  // Contacts are active once the gap shrinks below `contact_skin`.
  double contact_skin = 1e-4;
  double correction_percent = 0.8;
  double correction_slop = 1e-3;
  // Gap at which goal bodies count as touching.
  double touch_tolerance = 5e-3;
};

// Advances the state by one semi-implicit Euler step: gravity, one pass of
// sequential impulses over all contacts, speed clamp, position update, then
// positional correction. Static bodies are never moved.
Scene step(Scene state, double dt, const SimConfig& config = {});
void step_in_place(Scene& state, double dt, const SimConfig& config = {});

// Shortest distance between the surfaces of two bodies (negative when
// overlapping).
double surface_gap(const Body& a, const Body& b);

bool goal_holds(const Scene& state, const SimConfig& config = {});

// Per-frame (x, y) of every dynamic object. Object order is the scene's
// dynamic bodies in scene order followed by the action's balls.
class Rollout {
 public:
  Rollout() = default;
  Rollout(std::size_t object_count, std::vector<float> positions, bool solved,
          double dt = 1.0 / 60.0, int stride = 3);

  std::size_t object_count() const { return object_count_; }
  std::size_t length() const { return object_count_ == 0 ? 0 : positions_.size() / (2 * object_count_); }
  bool solved() const { return solved_; }
  double dt() const { return dt_; }
  int stride() const { return stride_; }

  // frame in [0, length()), object in [0, object_count())
  Vec2 at(std::size_t frame, std::size_t object) const;
  const std::vector<float>& positions() const { return positions_; }

  bool operator==(const Rollout&) const = default;

 private:
  std::size_t object_count_ = 0;
  std::vector<float> positions_;  // [frame][object][x, y]
  bool solved_ = false;
  double dt_ = 1.0 / 60.0;
  int stride_ = 3;
};

// The scene with the action's balls appended.
Scene place_action(const Scene& scene, const Action& action);

// Simulates scene + action. Frame 0 is the initial state; a frame is recorded
// every `stride` steps until the goal has held for `dwell` consecutive frames
// or `max_frames` frames have been recorded. Throws InvalidActionError.
Rollout rollout(const Scene& scene, const Action& action, const SimConfig& config = {});
Rollout rollout(const Scene& scene, const Action& action, int max_frames, const SimConfig& config = {});

// Scene state at a recorded frame: dynamic bodies moved to their recorded
// positions (velocities zeroed). Used to render rollout frames.
Scene state_at_frame(const Scene& scene, const Action& action, const Rollout& rollout, std::size_t frame);

}  // namespace dynaware
