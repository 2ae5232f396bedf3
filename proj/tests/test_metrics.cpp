// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "flowplan/core.hpp"
#include "flowplan/io/rng.hpp"
#include "flowplan/metrics.hpp"
#include "flowplan/qp/kinematics.hpp"
#include "flowplan/scenegen.hpp"

using namespace flowplan;
using namespace flowplan::metrics;

namespace {

Trajectory circle(double radius, double speed, double dt, int steps, double phase = 0.0) {
  Trajectory t;
  t.dt = dt;
  t.states.resize(static_cast<std::size_t>(steps));
  const double w = speed / radius;
  for (int k = 0; k <= steps; ++k) {
    const double a = phase + w * dt * k;
    const double x = radius * std::cos(a), y = radius * std::sin(a);
    if (k < steps) {
      t.states[static_cast<std::size_t>(k)].x = x;
      t.states[static_cast<std::size_t>(k)].y = y;
    }
    if (k > 0) {
      auto& prev = t.states[static_cast<std::size_t>(k - 1)];
      prev.vx = (x - prev.x) / dt;
      prev.vy = (y - prev.y) / dt;
    }
  }
  auto& lastv = t.states.back();
  if (steps >= 2) {
    const auto& p = t.states[static_cast<std::size_t>(steps - 2)];
    lastv.vx = p.vx;
    lastv.vy = p.vy;
  }
  return t;
}

Trajectory straight(double speed, double dt, int steps, double y = 0.0) {
  Trajectory t;
  t.dt = dt;
  t.states.resize(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    t.states[static_cast<std::size_t>(k)] = {speed * dt * (k + 1), y, speed, 0.0};
  }
  return t;
}

}  // namespace

TEST_CASE("ade and fde against hand-computed values") {
  Trajectory truth = straight(5.0, 0.1, 4);  // x = 0.5, 1.0, 1.5, 2.0
  Trajectory pred = truth;
  pred.states[1].y += 1.0;   // distance 1 at one step
  pred.states[3].x += 0.5;   // distance 0.5 at the end
  CHECK(ade(pred, truth) == doctest::Approx((0.0 + 1.0 + 0.0 + 0.5) / 4.0));
  CHECK(fde(pred, truth) == doctest::Approx(0.5));
  Trajectory short_pred = pred;
  short_pred.states.pop_back();
  CHECK_THROWS_AS((void)ade(short_pred, truth), std::invalid_argument);
}

TEST_CASE("min ade and min fde take independent minima") {
  Trajectory truth = straight(5.0, 0.1, 10);
  // candidate A: good everywhere except a bad endpoint
  Trajectory a = truth;
  a.states.back().y += 3.0;
  // candidate B: offset everywhere but with an exact endpoint
  Trajectory b = truth;
  for (auto& s : b.states) s.y += 1.0;
  b.states.back().y = truth.states.back().y;

  std::vector<Trajectory> cands{a, b};
  CHECK(min_ade(cands, truth) == doctest::Approx(3.0 / 10.0));  // from A
  CHECK(min_fde(cands, truth) == doctest::Approx(0.0));         // from B
  CHECK(min_ade(cands, truth) < ade(b, truth));
  CHECK(min_fde(cands, truth) < fde(a, truth));
}

TEST_CASE("full circle matches closed-form length, curvature, and angle") {
  const double R = 10.0, v = 5.0, dt = 0.1;
  const int steps = static_cast<int>(std::ceil(2.0 * M_PI * R / (v * dt)));
  Trajectory t = circle(R, v, dt, steps);

  CHECK(path_length(t) == doctest::Approx(2.0 * M_PI * R).epsilon(0.02));
  CHECK(mean_curvature(t) == doctest::Approx(1.0 / R).epsilon(0.02));
  CHECK(angle_change(t) == doctest::Approx(2.0 * M_PI).epsilon(0.02));
}

TEST_CASE("angle change skips crawl segments") {
  Trajectory t;
  t.dt = 0.1;
  // forward, crawl with a direction flip, forward again: the flip at crawl
  // speed must not count
  t.states = {
      {0.0, 0.0, 5.0, 0.0},  {0.5, 0.0, 5.0, 0.0},  {1.0, 0.0, 0.1, 0.0},
      {1.01, 0.0, -0.1, 0.0}, {1.0, 0.0, 5.0, 0.0},  {1.5, 0.0, 5.0, 0.0},
      {2.0, 0.0, 5.0, 0.0},
  };
  CHECK(angle_change(t) == doctest::Approx(0.0));
  Trajectory turn = circle(10.0, 5.0, 0.1, 40);
  CHECK(angle_change(turn) > 0.5);
}

TEST_CASE("goal error is the endpoint distance") {
  Trajectory t = straight(4.0, 0.1, 5);
  GoalPose g{t.states.back().x + 3.0, t.states.back().y + 4.0, 0.0};
  CHECK(goal_error(t, g) == doctest::Approx(5.0));
}

TEST_CASE("collision threshold is closed at the radius") {
  HorizonConfig h{};
  h.future_steps = 5;
  SceneSample scene;
  scene.scene_id = "synthetic";
  scene.neighbor_valid = {1, 0, 0, 0, 0};
  scene.neighbor_histories.assign(5, Trajectory{{}, 0.1});
  scene.neighbor_futures.assign(5, Trajectory{{}, 0.1});
  scene.neighbor_futures[0] = straight(5.0, 0.1, 5, 2.0);  // parallel at y = 2
  // the invalid slots would collide if they were counted
  scene.neighbor_futures[1] = straight(5.0, 0.1, 5, 0.0);

  Trajectory ego = straight(5.0, 0.1, 5, 0.0);
  CHECK(has_collision(ego, scene, 2.0));       // distance exactly 2.0
  CHECK_FALSE(has_collision(ego, scene, 1.99));
  scene.neighbor_futures[0] = straight(5.0, 0.1, 5, 2.01);
  CHECK_FALSE(has_collision(ego, scene, 2.0));
}

TEST_CASE("violation metrics average the positive excess only") {
  // piecewise speed profile along +x: accelerate at 4 m/s^2 for 3 steps,
  // then cruise; alpha limit 3 leaves excess 1 on the ramp steps
  Trajectory t;
  t.dt = 0.1;
  double x = 0.0, v = 2.0;
  for (int k = 0; k < 10; ++k) {
    t.states.push_back({x, 0.0, v, 0.0});
    const double a = k < 3 ? 4.0 : 0.0;
    x += v * t.dt + 0.5 * a * t.dt * t.dt;
    v += a * t.dt;
  }
  // rebuild positions as exact forward differences of the stored velocities
  for (std::size_t k = 0; k + 1 < t.states.size(); ++k) {
    t.states[k + 1].x = t.states[k].x + t.states[k].vx * t.dt;
  }
  const auto prof = qp::kinematics(t);
  double expected = 0.0;
  for (double a : prof.alpha) expected += std::max(0.0, std::abs(a) - 3.0);
  expected /= static_cast<double>(prof.alpha.size());
  CHECK(acc_violation(t) == doctest::Approx(expected));
  CHECK(expected > 0.0);
  CHECK(omega_violation(t) == doctest::Approx(0.0));

  Trajectory gentle = straight(5.0, 0.1, 10);
  CHECK(acc_violation(gentle) == 0.0);
}

TEST_CASE("metrics are invariant under rigid motion of the whole scene") {
  scenegen::ScenarioSpec spec{scenegen::ScenarioKind::kLeftTurn, 5, 0.1, 3};
  HorizonConfig h{};
  SceneSample scene = scenegen::generate_scene(spec, h);

  // synthetic candidates: ground truth plus two perturbed copies
  Rng rng(9, 9);
  std::vector<Trajectory> cands{scene.ego_future, scene.ego_future, scene.ego_future};
  for (auto& s : cands[1].states) {
    s.x += rng.normal() * 0.3;
    s.y += rng.normal() * 0.3;
  }
  for (auto& s : cands[2].states) {
    s.x += 0.5;
    s.y -= 0.2;
  }

  auto base = evaluate_split({scene}, {cands});

  const auto tf = RigidTransform2::from(1.1, -20.0, 35.0);
  SceneSample moved = apply_rigid(scene, tf);
  std::vector<Trajectory> moved_cands = cands;
  for (auto& c : moved_cands) {
    for (auto& s : c.states) {
      tf.apply_point(s.x, s.y);
      tf.apply_vector(s.vx, s.vy);
    }
  }
  auto shifted = evaluate_split({moved}, {moved_cands});

  CHECK(shifted.min_ade == doctest::Approx(base.min_ade).epsilon(1e-9));
  CHECK(shifted.min_fde == doctest::Approx(base.min_fde).epsilon(1e-9));
  CHECK(shifted.goal_error == doctest::Approx(base.goal_error).epsilon(1e-9));
  CHECK(shifted.angle_change == doctest::Approx(base.angle_change).epsilon(1e-9));
  CHECK(shifted.path_length == doctest::Approx(base.path_length).epsilon(1e-9));
  CHECK(shifted.curvature == doctest::Approx(base.curvature).epsilon(1e-9));
  CHECK(shifted.collision_rate == base.collision_rate);
  CHECK(shifted.acc_violation == doctest::Approx(base.acc_violation).epsilon(1e-8));
  CHECK(shifted.omega_violation == doctest::Approx(base.omega_violation).epsilon(1e-8));
}

TEST_CASE("evaluate_split aggregates row means and collision fraction") {
  HorizonConfig h{};
  h.future_steps = 6;
  SceneSample a;
  a.scene_id = "a";
  a.neighbor_valid.assign(5, 0);
  a.neighbor_histories.assign(5, Trajectory{{}, 0.1});
  a.neighbor_futures.assign(5, Trajectory{{}, 0.1});
  a.ego_future = straight(5.0, 0.1, 6);
  a.goal = {a.ego_future.states.back().x, 0.0, 0.0};
  SceneSample b = a;
  b.scene_id = "b";
  b.neighbor_valid[0] = 1;
  b.neighbor_futures[0] = straight(5.0, 0.1, 6, 1.0);  // collides with ego

  std::vector<std::vector<Trajectory>> cands{{a.ego_future}, {b.ego_future}};
  auto split = evaluate_split({a, b}, cands);
  REQUIRE(split.rows.size() == 2);
  CHECK(split.rows[0].scene_id == "a");
  CHECK_FALSE(split.rows[0].collision);
  CHECK(split.rows[1].collision);
  CHECK(split.collision_rate == doctest::Approx(0.5));
  CHECK(split.min_ade == doctest::Approx(0.0));
  CHECK(split.goal_error ==
        doctest::Approx((split.rows[0].goal_error + split.rows[1].goal_error) / 2.0));

  CHECK_THROWS_AS((void)evaluate_split({a}, {}), std::invalid_argument);
  CHECK_THROWS_AS((void)evaluate_split({a}, {{}}), std::invalid_argument);
}
