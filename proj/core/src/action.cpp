#include "dynaware/action.hpp"

#include <algorithm>

#include "dynaware/physics.hpp"

namespace dynaware {

double ball_radius(double normalized) {
  return kMinBallRadius + std::clamp(normalized, 0.0, 1.0) * (kMaxBallRadius - kMinBallRadius);
}

std::size_t action_dim(Tier tier) { return tier == Tier::kOneBall ? 3 : 6; }

Action::Action(Tier tier, std::span<const double> coords) : tier_(tier) {
  if (coords.size() != action_dim(tier)) {
    throw std::invalid_argument("action expects " + std::to_string(action_dim(tier)) +
                                " coordinates, got " + std::to_string(coords.size()));
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!(coords[i] >= 0.0 && coords[i] <= 1.0)) {
      throw std::invalid_argument("action coordinate " + std::to_string(i) + " outside [0, 1]");
    }
    coords_[i] = coords[i];
  }
}

Action Action::one_ball(double x, double y, double r) {
  const std::array<double, 3> c{x, y, r};
  return Action(Tier::kOneBall, c);
}

Action Action::two_ball(double x1, double y1, double r1, double x2, double y2, double r2) {
  const std::array<double, 6> c{x1, y1, r1, x2, y2, r2};
  return Action(Tier::kTwoBall, c);
}

std::vector<Body> action_bodies(const Action& action) {
  std::vector<Body> balls;
  for (std::size_t b = 0; b < action.ball_count(); ++b) {
    balls.push_back(Body::circle({action[3 * b], action[3 * b + 1]}, ball_radius(action[3 * b + 2]),
                                 /*dynamic=*/true, Role::kAgentPlaced));
  }
  return balls;
}

std::optional<std::string> action_violation(const Scene& scene, const Action& action) {
  const auto balls = action_bodies(action);
  for (std::size_t b = 0; b < balls.size(); ++b) {
    const Body& ball = balls[b];
    const double r = ball.radius();
    const Vec2 c = ball.position;
    if (c.x - r < 0.0 || c.x + r > 1.0 || c.y - r < 0.0 || c.y + r > 1.0) {
      return "ball " + std::to_string(b) + " leaves the unit square";
    }
    for (std::size_t i = 0; i < scene.bodies.size(); ++i) {
      if (surface_gap(ball, scene.bodies[i]) <= 0.0) {
        return "ball " + std::to_string(b) + " overlaps body " + std::to_string(i);
      }
    }
    for (std::size_t o = 0; o < b; ++o) {
      if (surface_gap(ball, balls[o]) <= 0.0) return "placed balls overlap";
    }
  }
  return std::nullopt;
}

}  // namespace dynaware
