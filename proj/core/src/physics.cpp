#include "dynaware/physics.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace dynaware {

std::string to_string(Role role) {
  switch (role) {
    case Role::kAgentPlaced: return "agent";
    case Role::kGoalSubject: return "subject";
    case Role::kGoalTarget: return "target";
    case Role::kScenery: return "scenery";
  }
  return "scenery";
}

Role role_from_string(const std::string& name) {
  if (name == "agent") return Role::kAgentPlaced;
  if (name == "subject") return Role::kGoalSubject;
  if (name == "target") return Role::kGoalTarget;
  if (name == "scenery") return Role::kScenery;
  throw std::invalid_argument("unknown body role '" + name + "'");
}

Body Body::circle(Vec2 center, double radius, bool dynamic, Role role) {
  Body b;
  b.shape = Circle{radius};
  b.position = center;
  b.dynamic = dynamic;
  b.role = role;
  return b;
}

Body Body::segment(Vec2 p0, Vec2 p1, double thickness, Role role) {
  Body b;
  b.shape = Segment{p0, p1, thickness};
  b.position = (p0 + p1) * 0.5;
  b.dynamic = false;
  b.role = role;
  return b;
}

double Body::radius() const {
  if (const auto* c = std::get_if<Circle>(&shape)) return c->radius;
  return std::get<Segment>(shape).thickness;
}

namespace {

bool inside_unit_square(Vec2 p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; }

Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return a + ab * t;
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

double mass_of(const Body& b, const SimConfig& cfg) {
  const double r = b.radius();
  return cfg.density * M_PI * r * r;
}

struct Contact {
  std::size_t a = 0;
  std::size_t b = 0;  // index of B; kWall when B is a boundary wall
  Vec2 normal;        // unit, from A towards B
  double penetration = 0.0;
};

constexpr std::size_t kWall = std::numeric_limits<std::size_t>::max();

// Circle A against body B. Returns false when B is not near enough.
bool circle_contact(const Body& a, const Body& b, double skin, Contact& out) {
  const double ra = a.radius();
  Vec2 d;
  double reach;
  if (b.is_circle()) {
    d = b.position - a.position;
    reach = ra + b.radius();
  } else {
    const auto& s = std::get<Segment>(b.shape);
    d = closest_on_segment(a.position, s.p0, s.p1) - a.position;
    reach = ra + s.thickness;
  }
  const double dist = norm(d);
  const double pen = reach - dist;
  if (pen <= -skin) return false;
  if (dist > 1e-12) {
    out.normal = d * (1.0 / dist);
  } else if (b.is_circle()) {
    out.normal = {0.0, 1.0};
  } else {
    const auto& s = std::get<Segment>(b.shape);
    const Vec2 e = s.p1 - s.p0;
    const double len = norm(e);
    out.normal = {-e.y / len, e.x / len};
  }
  out.penetration = pen;
  return true;
}

void collect_contacts(const Scene& s, const SimConfig& cfg, std::vector<Contact>& contacts) {
  contacts.clear();
  const auto& bodies = s.bodies;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      const Body& bi = bodies[i];
      const Body& bj = bodies[j];
      if (!bi.dynamic && !bj.dynamic) continue;
      Contact c;
      if (bi.is_circle()) {
        if (circle_contact(bi, bj, cfg.contact_skin, c)) {
          c.a = i;
          c.b = j;
          contacts.push_back(c);
        }
      } else if (bj.is_circle()) {
        if (circle_contact(bj, bi, cfg.contact_skin, c)) {
          c.a = j;
          c.b = i;
          contacts.push_back(c);
        }
      }
    }
    if (cfg.boundary_walls && bodies[i].dynamic && bodies[i].is_circle()) {
      const double r = bodies[i].radius();
      const Vec2 p = bodies[i].position;
      const std::array<std::pair<Vec2, double>, 4> walls{{
          {{-1.0, 0.0}, r - p.x},
          {{1.0, 0.0}, p.x + r - 1.0},
          {{0.0, -1.0}, r - p.y},
          {{0.0, 1.0}, p.y + r - 1.0},
      }};
      for (const auto& [n, pen] : walls) {
        if (pen > -cfg.contact_skin) contacts.push_back({i, kWall, n, pen});
      }
    }
  }
}

struct BodyMass {
  double inv_mass = 0.0;
  double inv_inertia = 0.0;
};

BodyMass mass_props(const Body& b, const SimConfig& cfg) {
  if (!b.dynamic) return {};
  const double m = mass_of(b, cfg);
  const double r = b.radius();
  return {1.0 / m, 2.0 / (m * r * r)};  // solid disc
}

Vec2 perp_velocity(double omega, Vec2 r) { return {-omega * r.y, omega * r.x}; }

void solve_velocity(Scene& s, const Contact& c, const SimConfig& cfg) {
  Body& A = s.bodies[c.a];
  static Body wall = Body::segment({0, 0}, {1, 0}, 0.0, Role::kScenery);
  Body& B = c.b == kWall ? wall : s.bodies[c.b];
  const BodyMass ma = mass_props(A, cfg);
  const BodyMass mb = c.b == kWall ? BodyMass{} : mass_props(B, cfg);
  const double k_normal = ma.inv_mass + mb.inv_mass;
  if (k_normal <= 0.0) return;

  const Vec2 n = c.normal;
  const Vec2 ra = n * A.radius();
  const Vec2 rb = B.is_circle() ? n * (-B.radius()) : Vec2{};

  auto relative_velocity = [&] {
    const Vec2 va = A.velocity + perp_velocity(A.angular_velocity, ra);
    const Vec2 vb = c.b == kWall ? Vec2{} : B.velocity + perp_velocity(B.angular_velocity, rb);
    return vb - va;
  };

  Vec2 vrel = relative_velocity();
  const double vn = dot(vrel, n);
  if (vn >= 0.0) return;
  const double e = -vn > cfg.restitution_threshold ? cfg.restitution : 0.0;
  const double jn = -(1.0 + e) * vn / k_normal;
  const Vec2 pn = n * jn;
  A.velocity -= pn * ma.inv_mass;
  if (c.b != kWall) B.velocity += pn * mb.inv_mass;

  if (cfg.friction <= 0.0) return;
  vrel = relative_velocity();
  Vec2 tangent = vrel - n * dot(vrel, n);
  const double tlen = norm(tangent);
  if (tlen < 1e-12) return;
  tangent = tangent * (1.0 / tlen);
  const double k_tangent = k_normal + dot(ra, ra) * ma.inv_inertia + dot(rb, rb) * mb.inv_inertia;
  const double jt = std::clamp(-dot(vrel, tangent) / k_tangent, -cfg.friction * jn, cfg.friction * jn);
  const Vec2 pt = tangent * jt;
  A.velocity -= pt * ma.inv_mass;
  A.angular_velocity -= ma.inv_inertia * cross(ra, pt);
  if (c.b != kWall) {
    B.velocity += pt * mb.inv_mass;
    B.angular_velocity += mb.inv_inertia * cross(rb, pt);
  }
}

void correct_position(Scene& s, const Contact& c, const SimConfig& cfg) {
  if (c.penetration <= cfg.correction_slop) return;
  Body& A = s.bodies[c.a];
  const BodyMass ma = mass_props(A, cfg);
  const BodyMass mb = c.b == kWall ? BodyMass{} : mass_props(s.bodies[c.b], cfg);
  const double k = ma.inv_mass + mb.inv_mass;
  if (k <= 0.0) return;
  const Vec2 corr = c.normal * (cfg.correction_percent * (c.penetration - cfg.correction_slop) / k);
  A.position -= corr * ma.inv_mass;
  if (c.b != kWall) s.bodies[c.b].position += corr * mb.inv_mass;
}

}  // namespace

double surface_gap(const Body& a, const Body& b) {
  if (a.is_circle() && b.is_circle()) return norm(b.position - a.position) - a.radius() - b.radius();
  if (a.is_circle() || b.is_circle()) {
    const Body& circ = a.is_circle() ? a : b;
    const auto& seg = std::get<Segment>((a.is_circle() ? b : a).shape);
    return norm(closest_on_segment(circ.position, seg.p0, seg.p1) - circ.position) - circ.radius() -
           seg.thickness;
  }
  const auto& s = std::get<Segment>(a.shape);
  const auto& t = std::get<Segment>(b.shape);
  if (segments_intersect(s.p0, s.p1, t.p0, t.p1)) return -(s.thickness + t.thickness);
  const double d = std::min({norm(closest_on_segment(s.p0, t.p0, t.p1) - s.p0),
                             norm(closest_on_segment(s.p1, t.p0, t.p1) - s.p1),
                             norm(closest_on_segment(t.p0, s.p0, s.p1) - t.p0),
                             norm(closest_on_segment(t.p1, s.p0, s.p1) - t.p1)});
  return d - s.thickness - t.thickness;
}

void validate_scene(const Scene& scene) {
  int subjects = 0;
  int targets = 0;
  for (std::size_t i = 0; i < scene.bodies.size(); ++i) {
    const Body& b = scene.bodies[i];
    const std::string where = "body " + std::to_string(i) + ": ";
    if (const auto* c = std::get_if<Circle>(&b.shape)) {
      if (!(c->radius > 0.0)) throw SceneError(where + "circle radius must be positive");
      if (!inside_unit_square(b.position)) throw SceneError(where + "position outside the unit square");
    } else {
      const auto& s = std::get<Segment>(b.shape);
      if (s.p0 == s.p1) throw SceneError(where + "segment endpoints coincide");
      if (b.dynamic) throw SceneError(where + "segments must be static");
      if (!(s.thickness >= 0.0)) throw SceneError(where + "negative segment thickness");
      if (!inside_unit_square(s.p0) || !inside_unit_square(s.p1)) {
        throw SceneError(where + "segment endpoint outside the unit square");
      }
    }
    subjects += b.role == Role::kGoalSubject;
    targets += b.role == Role::kGoalTarget;
  }
  if (subjects != 1 || targets != 1) {
    throw SceneError("scene needs exactly one goal subject and one goal target");
  }
  if (scene.goal.dwell < 1) throw SceneError("goal dwell must be >= 1");
}

void step_in_place(Scene& s, double dt, const SimConfig& cfg) {
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  for (Body& b : s.bodies) {
    if (b.dynamic) b.velocity.y -= s.gravity * dt;
  }
  std::vector<Contact> contacts;
  collect_contacts(s, cfg, contacts);
  for (const Contact& c : contacts) solve_velocity(s, c, cfg);
  for (Body& b : s.bodies) {
    if (!b.dynamic) continue;
    const double speed = norm(b.velocity);
    if (speed > cfg.max_speed) b.velocity = b.velocity * (cfg.max_speed / speed);
    b.position += b.velocity * dt;
  }
  collect_contacts(s, cfg, contacts);
  for (const Contact& c : contacts) correct_position(s, c, cfg);
}

Scene step(Scene state, double dt, const SimConfig& cfg) {
  step_in_place(state, dt, cfg);
  return state;
}

bool goal_holds(const Scene& state, const SimConfig& cfg) {
  const Body* subject = nullptr;
  const Body* target = nullptr;
  for (const Body& b : state.bodies) {
    if (b.role == state.goal.subject && !subject) subject = &b;
    else if (b.role == state.goal.target && !target) target = &b;
  }
  if (!subject || !target) return false;
  return surface_gap(*subject, *target) <= cfg.touch_tolerance;
}

Rollout::Rollout(std::size_t object_count, std::vector<float> positions, bool solved, double dt, int stride)
    : object_count_(object_count), positions_(std::move(positions)), solved_(solved), dt_(dt), stride_(stride) {
  if (object_count_ == 0 || positions_.empty() || positions_.size() % (2 * object_count_) != 0) {
    throw std::invalid_argument("rollout needs >= 1 object and >= 1 whole frame");
  }
}

Vec2 Rollout::at(std::size_t frame, std::size_t object) const {
  if (frame >= length() || object >= object_count_) throw std::out_of_range("rollout index out of range");
  const std::size_t k = 2 * (frame * object_count_ + object);
  return {positions_[k], positions_[k + 1]};
}

Scene place_action(const Scene& scene, const Action& action) {
  if (auto why = action_violation(scene, action)) throw InvalidActionError("invalid action: " + *why);
  Scene world = scene;
  for (Body& b : action_bodies(action)) world.bodies.push_back(std::move(b));
  return world;
}

Rollout rollout(const Scene& scene, const Action& action, const SimConfig& cfg) {
  return rollout(scene, action, cfg.max_frames, cfg);
}

Rollout rollout(const Scene& scene, const Action& action, int max_frames, const SimConfig& cfg) {
  if (max_frames < 1) throw std::invalid_argument("rollout: max_frames must be >= 1");
  Scene world = place_action(scene, action);
  std::vector<std::size_t> moving;
  for (std::size_t i = 0; i < world.bodies.size(); ++i) {
    if (world.bodies[i].dynamic) moving.push_back(i);
  }
  std::vector<float> positions;
  positions.reserve(static_cast<std::size_t>(max_frames) * moving.size() * 2);
  auto record = [&] {
    for (std::size_t i : moving) {
      positions.push_back(static_cast<float>(world.bodies[i].position.x));
      positions.push_back(static_cast<float>(world.bodies[i].position.y));
    }
  };

  record();
  int held = goal_holds(world, cfg) ? 1 : 0;
  int frames = 1;
  while (held < world.goal.dwell && frames < max_frames) {
    for (int s = 0; s < cfg.stride; ++s) step_in_place(world, cfg.dt, cfg);
    record();
    ++frames;
    held = goal_holds(world, cfg) ? held + 1 : 0;
  }
  return Rollout(moving.size(), std::move(positions), held >= world.goal.dwell, cfg.dt, cfg.stride);
}

Scene state_at_frame(const Scene& scene, const Action& action, const Rollout& roll, std::size_t frame) {
  Scene world = scene;
  for (Body& b : action_bodies(action)) world.bodies.push_back(std::move(b));
  std::size_t k = 0;
  for (Body& b : world.bodies) {
    if (!b.dynamic) continue;
    if (k >= roll.object_count()) throw std::invalid_argument("rollout does not match scene + action");
    b.position = roll.at(frame, k++);
    b.velocity = {};
    b.angular_velocity = 0.0;
  }
  if (k != roll.object_count()) throw std::invalid_argument("rollout does not match scene + action");
  return world;
}

}  // namespace dynaware
