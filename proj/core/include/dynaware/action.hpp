#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynaware {

struct Scene;
struct Body;

enum class Tier { kOneBall = 1, kTwoBall = 2 };

// Placed-ball radius in world units for a normalized radius coordinate r in
// [0, 1]: kMinBallRadius + r * (kMaxBallRadius - kMinBallRadius).
inline constexpr double kMinBallRadius = 0.025;
inline constexpr double kMaxBallRadius = 0.1;

double ball_radius(double normalized);

// A point in the action cube: (x, y, r) for one ball, (x1, y1, r1, x2, y2, r2)
// for two. (x, y) is the ball center in world coordinates.
class Action {
 public:
  Action() = default;
  Action(Tier tier, std::span<const double> coords);
  static Action one_ball(double x, double y, double r);
  static Action two_ball(double x1, double y1, double r1, double x2, double y2, double r2);

  Tier tier() const { return tier_; }
  std::size_t size() const { return tier_ == Tier::kOneBall ? 3 : 6; }
  std::size_t ball_count() const { return tier_ == Tier::kOneBall ? 1 : 2; }
  std::span<const double> coords() const { return {coords_.data(), size()}; }
  double operator[](std::size_t i) const { return coords_[i]; }

  bool operator==(const Action&) const = default;

 private:
  Tier tier_ = Tier::kOneBall;
  std::array<double, 6> coords_{};
};

std::size_t action_dim(Tier tier);

class InvalidActionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Returns a reason string when the action's balls leave the unit square,
// overlap a scene body, or overlap each other; std::nullopt when valid.
std::optional<std::string> action_violation(const Scene& scene, const Action& action);

inline bool is_valid_action(const Scene& scene, const Action& action) {
  return !action_violation(scene, action).has_value();
}

// The agent-placed dynamic bodies an action contributes, in ball order.
std::vector<Body> action_bodies(const Action& action);

}  // namespace dynaware
