#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dynaware/physics.hpp"
#include "dynaware/trace_io.hpp"
#include "fixtures.hpp"

using namespace dynaware;

namespace {

Scene free_space(double gravity) {
  Scene s;
  s.gravity = gravity;
  return s;
}

SimConfig elastic() {
  SimConfig c;
  c.restitution = 1.0;
  c.friction = 0.0;
  c.boundary_walls = false;
  c.restitution_threshold = 0.0;
  return c;
}

Vec2 momentum(const Scene& s, const SimConfig& c) {
  Vec2 p;
  for (const Body& b : s.bodies) {
    if (b.dynamic) p += b.velocity * (c.density * M_PI * b.radius() * b.radius());
  }
  return p;
}

}  // namespace

TEST(Physics, BallRestsOnFloor) {
  Scene s;
  s.bodies.push_back(Body::segment({0.0, 0.2}, {1.0, 0.2}, 0.01, Role::kScenery));
  s.bodies.push_back(Body::circle({0.5, 0.2 + 0.01 + 0.05}, 0.05, true, Role::kGoalSubject));
  const Vec2 start = s.bodies[1].position;
  for (int i = 0; i < 100; ++i) step_in_place(s, 1.0 / 60.0);
  EXPECT_NEAR(s.bodies[1].position.x, start.x, 1e-6);
  EXPECT_NEAR(s.bodies[1].position.y, start.y, 2e-3);  // within contact tolerance
  EXPECT_EQ(s.bodies[0].position, (Vec2{0.5, 0.2}));
}

TEST(Physics, FreeFallMatchesSemiImplicitEuler) {
  const double g = 4.0, dt = 1.0 / 60.0;
  Scene s = free_space(g);
  s.bodies.push_back(Body::circle({0.3, 0.9}, 0.03, true, Role::kGoalSubject));
  s.bodies[0].velocity = {0.2, 0.5};
  // v_k = v0 - k g dt ; y_n = y0 + dt * sum_{k=1..n} v_k
  const int n = 30;
  double vy = 0.5, y = 0.9, x = 0.3;
  for (int k = 1; k <= n; ++k) {
    vy = 0.5 - k * g * dt;
    y += vy * dt;
    x += 0.2 * dt;
  }
  for (int i = 0; i < n; ++i) step_in_place(s, dt);
  EXPECT_NEAR(s.bodies[0].velocity.y, 0.5 - n * g * dt, 1e-12);
  const double closed = 0.9 + n * dt * 0.5 - g * dt * dt * n * (n + 1) / 2.0;
  EXPECT_NEAR(y, closed, 1e-12);
  EXPECT_NEAR(s.bodies[0].position.y, closed, 1e-12);
  EXPECT_NEAR(s.bodies[0].position.x, x, 1e-12);
}

TEST(Physics, HeadOnElasticCollisionSwapsVelocities) {
  const SimConfig c = elastic();
  Scene s = free_space(0.0);
  s.bodies.push_back(Body::circle({0.4, 0.5}, 0.04, true, Role::kGoalSubject));
  s.bodies.push_back(Body::circle({0.6, 0.5}, 0.04, true, Role::kGoalTarget));
  s.bodies[0].velocity = {0.8, 0.0};
  s.bodies[1].velocity = {-0.8, 0.0};
  const Vec2 p0 = momentum(s, c);
  for (int i = 0; i < 40; ++i) step_in_place(s, 1.0 / 60.0, c);
  EXPECT_NEAR(s.bodies[0].velocity.x, -0.8, 1e-9);
  EXPECT_NEAR(s.bodies[1].velocity.x, 0.8, 1e-9);
  const Vec2 p1 = momentum(s, c);
  EXPECT_NEAR(p1.x, p0.x, 1e-9);
  EXPECT_NEAR(p1.y, p0.y, 1e-9);
}

TEST(Physics, MomentumConservedWithoutGravity) {
  const SimConfig c = elastic();
  Scene s = free_space(0.0);
  s.bodies.push_back(Body::circle({0.2, 0.5}, 0.05, true, Role::kGoalSubject));
  s.bodies.push_back(Body::circle({0.5, 0.52}, 0.03, true, Role::kGoalTarget));
  s.bodies.push_back(Body::circle({0.8, 0.45}, 0.06, true, Role::kScenery));
  s.bodies.push_back(Body::circle({0.5, 0.2}, 0.04, true, Role::kScenery));
  s.bodies[0].velocity = {0.6, 0.0};
  s.bodies[2].velocity = {-0.5, 0.05};
  s.bodies[3].velocity = {0.0, 0.7};
  const Vec2 p0 = momentum(s, c);
  int contacts = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec2 v = s.bodies[1].velocity;
    step_in_place(s, 1.0 / 60.0, c);
    contacts += !(s.bodies[1].velocity == v);
  }
  EXPECT_GT(contacts, 0) << "fixture should produce collisions";
  const Vec2 p1 = momentum(s, c);
  EXPECT_LT(std::hypot(p1.x - p0.x, p1.y - p0.y), 1e-6);
}

TEST(Physics, StaticBodiesNeverMove) {
  Scene s = dwtest::idle_scene();
  s.bodies[1].velocity = {1.0, 0.0};
  const Scene before = s;
  for (int i = 0; i < 200; ++i) step_in_place(s, 1.0 / 60.0);
  for (std::size_t i = 0; i < s.bodies.size(); ++i) {
    if (!before.bodies[i].dynamic) {
      EXPECT_EQ(s.bodies[i].position, before.bodies[i].position);
    }
  }
}

TEST(Physics, StepRejectsNonPositiveDt) {
  Scene s = dwtest::idle_scene();
  EXPECT_THROW(step_in_place(s, 0.0), std::invalid_argument);
}

TEST(Physics, NoEscapeWithBoundaryWalls) {
  Scene s = free_space(4.0);
  for (int i = 0; i < 5; ++i) {
    s.bodies.push_back(Body::circle({0.15 + 0.17 * i, 0.5 + 0.05 * (i % 2)}, 0.04 + 0.01 * i, true, Role::kScenery));
    s.bodies.back().velocity = {(i % 2 ? -1.0 : 1.0) * 4.5, 3.0};
  }
  SimConfig c;
  c.restitution = 0.9;
  for (int k = 0; k < 3000; ++k) {
    step_in_place(s, c.dt, c);
    for (const Body& b : s.bodies) {
      const double r = b.radius();
      ASSERT_GE(b.position.x, -r);
      ASSERT_LE(b.position.x, 1.0 + r);
      ASSERT_GE(b.position.y, -r);
      ASSERT_LE(b.position.y, 1.0 + r);
    }
  }
}

TEST(Physics, SpeedIsClamped) {
  Scene s = free_space(0.0);
  s.bodies.push_back(Body::circle({0.5, 0.5}, 0.03, true, Role::kScenery));
  s.bodies[0].velocity = {30.0, 40.0};
  SimConfig c;
  step_in_place(s, c.dt, c);
  EXPECT_NEAR(norm(s.bodies[0].velocity), c.max_speed, 1e-12);
}

TEST(Physics, RolloutSolvesWhenGoalAlreadyHolds) {
  const Scene s = dwtest::touching_scene();
  const Rollout r = rollout(s, Action::one_ball(0.1, 0.9, 0.0));
  EXPECT_TRUE(r.solved());
  EXPECT_EQ(r.length(), static_cast<std::size_t>(s.goal.dwell));
}

TEST(Physics, RolloutInCornerDoesNotSolve) {
  SimConfig c;
  const Rollout r = rollout(dwtest::idle_scene(), Action::one_ball(0.95, 0.95, 0.0), c);
  EXPECT_FALSE(r.solved());
  EXPECT_EQ(r.length(), static_cast<std::size_t>(c.max_frames));
}

TEST(Physics, RolloutIsDeterministic) {
  const Scene s = dwtest::idle_scene();
  const Action a = Action::one_ball(0.3, 0.7, 0.6);
  EXPECT_EQ(rollout(s, a), rollout(s, a));
}

TEST(Physics, FrameObjectOrderFollowsScene) {
  const Scene s = dwtest::idle_scene();
  const Action a = Action::one_ball(0.5, 0.8, 0.2);
  const Rollout r = rollout(s, a);
  ASSERT_EQ(r.object_count(), 2u);  // subject, then the placed ball
  EXPECT_FLOAT_EQ(r.at(0, 0).x, static_cast<float>(s.bodies[1].position.x));
  EXPECT_FLOAT_EQ(r.at(0, 1).x, 0.5f);
  EXPECT_FLOAT_EQ(r.at(0, 1).y, 0.8f);
}

TEST(Physics, InvalidActionIsDistinctError) {
  const Scene s = dwtest::idle_scene();
  EXPECT_THROW(rollout(s, Action::one_ball(0.15, 0.1, 0.5)), InvalidActionError);  // overlaps subject
  EXPECT_THROW(rollout(s, Action::one_ball(0.0, 0.5, 0.5)), InvalidActionError);   // leaves the square
}

TEST(Physics, StateAtFrameRestoresPositions) {
  const Scene s = dwtest::idle_scene();
  const Action a = Action::one_ball(0.5, 0.8, 0.2);
  const Rollout r = rollout(s, a);
  const Scene w = state_at_frame(s, a, r, r.length() - 1);
  EXPECT_FLOAT_EQ(static_cast<float>(w.bodies.back().position.y), r.at(r.length() - 1, 1).y);
}

TEST(Physics, SceneValidation) {
  Scene s = dwtest::idle_scene();
  EXPECT_NO_THROW(validate_scene(s));
  Scene two = s;
  two.bodies[2].role = Role::kGoalSubject;
  EXPECT_THROW(validate_scene(two), SceneError);
  Scene bad = s;
  bad.bodies.push_back(Body::circle({0.5, 0.5}, 0.0, true, Role::kScenery));
  EXPECT_THROW(validate_scene(bad), SceneError);
  Scene dwell = s;
  dwell.goal.dwell = 0;
  EXPECT_THROW(validate_scene(dwell), SceneError);
}

TEST(TraceFile, RoundTripIsLossless) {
  const Rollout r = rollout(dwtest::idle_scene(), Action::one_ball(0.4, 0.6, 0.3));
  std::stringstream ss;
  write_trace(ss, r);
  EXPECT_EQ(ss.str().size(), 28 + 8 * r.object_count() * r.length() + 1);
  EXPECT_EQ(read_trace(ss), r);
}

TEST(TraceFile, RejectsCorruptInput) {
  std::stringstream bad("DWTX....");
  EXPECT_THROW(read_trace(bad), FormatError);
  const Rollout r = rollout(dwtest::idle_scene(), Action::one_ball(0.4, 0.6, 0.3));
  std::stringstream ss;
  write_trace(ss, r);
  std::stringstream cut(ss.str().substr(0, 40));
  EXPECT_THROW(read_trace(cut), FormatError);
}
