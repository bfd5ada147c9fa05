#include <algorithm>
#include <stdexcept>

#include "dynaware/tasks.hpp"

namespace dynaware {

namespace {

constexpr double kThick = 0.01;

Body wall(Vec2 a, Vec2 b) { return Body::segment(a, b, kThick, Role::kScenery); }

// Circle of radius r resting on a horizontal segment whose centerline is at y.
Body ball_on(double x, double surface_y, double r, Role role) {
  return Body::circle({x, surface_y + kThick + r}, r, /*dynamic=*/true, role);
}

// Open-top container standing on `base_y`; its floor is the goal target.
void add_cup(Scene& s, double cx, double width, double depth, double base_y = kThick) {
  const double l = cx - 0.5 * width;
  const double r = cx + 0.5 * width;
  s.bodies.push_back(Body::segment({l, base_y}, {r, base_y}, kThick, Role::kGoalTarget));
  s.bodies.push_back(wall({l, base_y}, {l, base_y + depth}));
  s.bodies.push_back(wall({r, base_y}, {r, base_y + depth}));
}

// Parameter vectors are read positionally in the order of `ranges`.

// Subject rests near the end of a ledge; the cup waits beyond it.
Scene build_ledge(std::span<const double> p) {
  const double ledge_y = p[0], ledge_end = p[1], r = p[2], back = p[3], gap = p[4], cup_w = p[5];
  Scene s;
  s.bodies.push_back(wall({0.0, ledge_y}, {ledge_end, ledge_y}));
  s.bodies.push_back(ball_on(ledge_end - back, ledge_y, r, Role::kGoalSubject));
  const double cx = std::min(ledge_end + gap + 0.5 * cup_w, 0.98 - 0.5 * cup_w);
  add_cup(s, cx, cup_w, 0.1);
  return s;
}

// A pushed subject drops off a high shelf onto a ramp that feeds the cup.
Scene build_ramp(std::span<const double> p) {
  const double shelf_y = p[0], shelf_end = p[1], r = p[2], back = p[3], ramp_top = p[4], ramp_len = p[5],
               cup_w = p[6];
  Scene s;
  s.bodies.push_back(wall({0.0, shelf_y}, {shelf_end, shelf_y}));
  s.bodies.push_back(ball_on(shelf_end - back, shelf_y, r, Role::kGoalSubject));
  const double x0 = shelf_end + 0.02;
  const double x1 = std::min(x0 + ramp_len, 0.96 - cup_w);
  s.bodies.push_back(wall({x0, ramp_top}, {x1, 0.16}));
  add_cup(s, x1 + 0.01 + 0.5 * cup_w, cup_w, 0.12);
  return s;
}

// The subject must clear a gap and roll down a gentle slope to a post.
Scene build_gap(std::span<const double> p) {
  const double shelf_y = p[0], shelf_end = p[1], r = p[2], back = p[3], gap = p[4], drop = p[5];
  Scene s;
  s.bodies.push_back(wall({0.0, shelf_y}, {shelf_end, shelf_y}));
  s.bodies.push_back(ball_on(shelf_end - back, shelf_y, r, Role::kGoalSubject));
  const double far_y = shelf_y - drop;
  const double x0 = shelf_end + gap;
  s.bodies.push_back(wall({x0, far_y}, {0.99, far_y - 0.04}));
  const double post_x = std::min(x0 + 0.22, 0.92);
  const double post_base = far_y - 0.04 * (post_x - x0) / (0.99 - x0);
  s.bodies.push_back(Body::segment({post_x, post_base + kThick}, {post_x, post_base + 0.12}, kThick, Role::kGoalTarget));
  return s;
}

// Raised floor with a pit; the pit bottom is the target.
Scene build_pit(std::span<const double> p) {
  const double floor_y = p[0], pit_left = p[1], pit_w = p[2], r = p[3], dist = p[4];
  Scene s;
  const double pit_right = pit_left + pit_w;
  s.bodies.push_back(wall({0.0, floor_y}, {pit_left, floor_y}));
  s.bodies.push_back(wall({pit_left, floor_y}, {pit_left, kThick}));
  s.bodies.push_back(wall({pit_right, floor_y}, {1.0, floor_y}));
  s.bodies.push_back(wall({pit_right, floor_y}, {pit_right, kThick}));
  s.bodies.push_back(Body::segment({pit_left, kThick}, {pit_right, kThick}, kThick, Role::kGoalTarget));
  s.bodies.push_back(ball_on(std::max(pit_left - dist, r + 0.01), floor_y, r, Role::kGoalSubject));
  return s;
}

// Subject on a free-standing pedestal; the cup is on one side only.
Scene build_cup(std::span<const double> p) {
  const double ped_y = p[0], ped_x = p[1], half_w = p[2], offset = p[3], side = p[4], gap = p[5], r = p[6];
  Scene s;
  s.bodies.push_back(wall({ped_x - half_w, ped_y}, {ped_x + half_w, ped_y}));
  s.bodies.push_back(wall({ped_x, ped_y}, {ped_x, kThick}));
  s.bodies.push_back(ball_on(ped_x + offset * half_w, ped_y, r, Role::kGoalSubject));
  const double cup_w = 0.18;
  double cx = side < 0.5 ? ped_x - half_w - gap - 0.5 * cup_w : ped_x + half_w + gap + 0.5 * cup_w;
  cx = std::clamp(cx, 0.02 + 0.5 * cup_w, 0.98 - 0.5 * cup_w);
  add_cup(s, cx, cup_w, 0.1);
  return s;
}

// A ceiling shields the subject; a second ball on the shelf has to carry the
// push into it.
Scene build_relay(std::span<const double> p) {
  const double shelf_y = p[0], shelf_end = p[1], r = p[2], back = p[3], relay_dist = p[4], relay_r = p[5],
               cup_gap = p[6];
  Scene s;
  s.bodies.push_back(wall({0.0, shelf_y}, {shelf_end, shelf_y}));
  const double sx = shelf_end - back;
  s.bodies.push_back(ball_on(sx, shelf_y, r, Role::kGoalSubject));
  const double ceiling_y = shelf_y + kThick + 2.0 * r + 0.04;
  s.bodies.push_back(wall({sx - r - 0.06, ceiling_y}, {std::min(shelf_end + 0.08, 0.99), ceiling_y}));
  s.bodies.push_back(ball_on(sx - r - relay_dist - relay_r, shelf_y, relay_r, Role::kScenery));
  const double cup_w = 0.2;
  add_cup(s, std::min(shelf_end + cup_gap + 0.5 * cup_w, 0.98 - 0.5 * cup_w), cup_w, 0.1);
  return s;
}

// A funnel over the cup; the subject starts on a high shelf to one side and a
// loose ball sits on the other.
Scene build_funnel(std::span<const double> p) {
  const double cx = p[0], mouth = p[1], top_y = p[2], shelf_y = p[3], side = p[4], r = p[5], back = p[6];
  Scene s;
  const double cup_w = 0.16;
  add_cup(s, cx, cup_w, 0.08);
  const double neck_y = 0.14;
  s.bodies.push_back(wall({cx - 0.5 * cup_w - 0.01, neck_y}, {std::max(cx - mouth, 0.01), top_y}));
  s.bodies.push_back(wall({cx + 0.5 * cup_w + 0.01, neck_y}, {std::min(cx + mouth, 0.99), top_y}));
  const bool left = side < 0.5;
  const double shelf_end = left ? 0.22 : 0.78;
  if (left) {
    s.bodies.push_back(wall({0.0, shelf_y}, {shelf_end, shelf_y}));
    s.bodies.push_back(ball_on(shelf_end - back, shelf_y, r, Role::kGoalSubject));
    s.bodies.push_back(Body::circle({0.93, kThick + 0.04}, 0.04, true, Role::kScenery));
  } else {
    s.bodies.push_back(wall({shelf_end, shelf_y}, {1.0, shelf_y}));
    s.bodies.push_back(ball_on(shelf_end + back, shelf_y, r, Role::kGoalSubject));
    s.bodies.push_back(Body::circle({0.07, kThick + 0.04}, 0.04, true, Role::kScenery));
  }
  return s;
}

// Subject rolls along a bridge and drops through a hole into the cup below.
Scene build_bridge(std::span<const double> p) {
  const double bridge_y = p[0], hole_x = p[1], slack = p[2], r = p[3], dist = p[4];
  Scene s;
  const double hole_w = 2.0 * r + slack;
  s.bodies.push_back(wall({0.02, bridge_y}, {hole_x, bridge_y}));
  s.bodies.push_back(wall({hole_x + hole_w, bridge_y}, {0.98, bridge_y}));
  s.bodies.push_back(ball_on(std::max(hole_x - dist, 0.03 + r), bridge_y, r, Role::kGoalSubject));
  add_cup(s, hole_x + 0.5 * hole_w, 0.2, 0.1);
  return s;
}

// The subject has to be launched off a high shelf over a wall.
Scene build_wall(std::span<const double> p) {
  const double shelf_y = p[0], shelf_end = p[1], r = p[2], back = p[3], wall_gap = p[4], wall_h = p[5];
  const double wall_x = shelf_end + wall_gap;
  Scene s;
  s.bodies.push_back(wall({0.0, shelf_y}, {shelf_end, shelf_y}));
  s.bodies.push_back(ball_on(shelf_end - back, shelf_y, r, Role::kGoalSubject));
  s.bodies.push_back(wall({wall_x, kThick}, {wall_x, wall_h}));
  const double cup_l = wall_x + 0.02;
  const double cup_r = 0.98;
  add_cup(s, 0.5 * (cup_l + cup_r), cup_r - cup_l, 0.08);
  return s;
}

std::vector<TaskTemplate> make_templates() {
  std::vector<TaskTemplate> t;
  t.push_back({"ledge",
               {{"ledge_y", 0.3, 0.55}, {"ledge_end", 0.3, 0.5}, {"subject_r", 0.04, 0.06},
                {"subject_back", 0.02, 0.12}, {"cup_gap", 0.0, 0.12}, {"cup_w", 0.14, 0.22}},
               build_ledge});
  t.push_back({"ramp",
               {{"shelf_y", 0.55, 0.75}, {"shelf_end", 0.2, 0.35}, {"subject_r", 0.04, 0.06},
                {"subject_back", 0.02, 0.1}, {"ramp_top", 0.3, 0.45}, {"ramp_len", 0.25, 0.4},
                {"cup_w", 0.14, 0.2}},
               build_ramp});
  t.push_back({"gap",
               {{"shelf_y", 0.35, 0.5}, {"shelf_end", 0.3, 0.45}, {"subject_r", 0.04, 0.06},
                {"subject_back", 0.02, 0.1}, {"gap", 0.1, 0.16}, {"drop", 0.1, 0.2}},
               build_gap});
  t.push_back({"pit",
               {{"floor_y", 0.15, 0.3}, {"pit_left", 0.4, 0.6}, {"pit_w", 0.14, 0.24}, {"subject_r", 0.04, 0.06},
                {"distance", 0.06, 0.3}},
               build_pit});
  t.push_back({"cup",
               {{"pedestal_y", 0.3, 0.55}, {"pedestal_x", 0.35, 0.65}, {"half_w", 0.06, 0.12},
                {"offset", -0.3, 0.3}, {"side", 0.0, 1.0}, {"cup_gap", 0.03, 0.15}, {"subject_r", 0.04, 0.06}},
               build_cup});
  t.push_back({"relay",
               {{"shelf_y", 0.3, 0.5}, {"shelf_end", 0.55, 0.75}, {"subject_r", 0.04, 0.055},
                {"subject_back", 0.02, 0.08}, {"relay_dist", 0.06, 0.2}, {"relay_r", 0.04, 0.06},
                {"cup_gap", 0.0, 0.15}},
               build_relay});
  t.push_back({"funnel",
               {{"cup_x", 0.4, 0.6}, {"mouth", 0.18, 0.3}, {"top_y", 0.3, 0.4}, {"shelf_y", 0.55, 0.8},
                {"side", 0.0, 1.0}, {"subject_r", 0.04, 0.06}, {"subject_back", 0.02, 0.1}},
               build_funnel});
  t.push_back({"bridge",
               {{"bridge_y", 0.3, 0.5}, {"hole_x", 0.4, 0.65}, {"slack", 0.02, 0.06}, {"subject_r", 0.04, 0.06},
                {"distance", 0.08, 0.3}},
               build_bridge});
  t.push_back({"wall",
               {{"shelf_y", 0.6, 0.8}, {"shelf_end", 0.25, 0.4}, {"subject_r", 0.04, 0.06},
                {"subject_back", 0.02, 0.1}, {"wall_gap", 0.06, 0.2}, {"wall_h", 0.1, 0.2}},
               build_wall});
  return t;
}

}  // namespace

const std::vector<TaskTemplate>& builtin_templates() {
  static const std::vector<TaskTemplate> templates = make_templates();
  return templates;
}

const TaskTemplate& find_template(const std::string& id) {
  for (const auto& t : builtin_templates()) {
    if (t.id == id) return t;
  }
  throw std::invalid_argument("unknown template '" + id + "'");
}

std::vector<std::string> builtin_template_ids() {
  std::vector<std::string> ids;
  for (const auto& t : builtin_templates()) ids.push_back(t.id);
  return ids;
}

}  // namespace dynaware
