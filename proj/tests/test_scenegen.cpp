// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "flowplan/core.hpp"
#include "flowplan/io/rng.hpp"
#include "flowplan/qp/kinematics.hpp"
#include "flowplan/scenegen.hpp"

using namespace flowplan;
using namespace flowplan::scenegen;

namespace {

const HorizonConfig kHorizon{};

std::vector<ScenarioSpec> all_kind_specs(std::uint64_t seed0, int per_kind, double noise = 0.1) {
  std::vector<ScenarioSpec> specs;
  for (int k = 0; k < kNumScenarioKinds; ++k) {
    for (int i = 0; i < per_kind; ++i) {
      specs.push_back({static_cast<ScenarioKind>(k), seed0 + static_cast<std::uint64_t>(i), noise,
                       (i % 3 == 0) ? 0 : 1 + (i % 4)});
    }
  }
  return specs;
}

bool same_states(const Trajectory& a, const Trajectory& b) {
  if (a.states.size() != b.states.size()) return false;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    if (a.states[i].x != b.states[i].x || a.states[i].y != b.states[i].y ||
        a.states[i].vx != b.states[i].vx || a.states[i].vy != b.states[i].vy) {
      return false;
    }
  }
  return true;
}

Trajectory concat_history_future(const SceneSample& s) {
  Trajectory full;
  full.dt = s.ego_history.dt;
  full.states = s.ego_history.states;
  full.states.insert(full.states.end(), s.ego_future.states.begin(), s.ego_future.states.end());
  return full;
}

}  // namespace

TEST_CASE("speed profile distance matches numeric integration") {
  SpeedProfile p;
  p.hold(1.0, 6.0);
  p.ramp(2.0, 6.0, 2.0);
  p.hold(0.5, 2.0);
  p.ramp(1.5, 2.0, 5.0);
  for (double t : {0.0, 0.4, 1.0, 1.7, 2.9, 3.2, 3.6, 4.9, 5.0, 6.0, 8.5}) {
    double acc = 0.0;
    const int n = 200000;
    const double ht = t / n;
    for (int i = 0; i < n; ++i) acc += p.speed((i + 0.5) * ht) * ht;
    CHECK(p.distance(t) == doctest::Approx(acc).epsilon(1e-6));
  }
  // beyond the profile the final speed extends
  CHECK(p.distance(7.0) == doctest::Approx(p.distance(5.0) + 2.0 * 5.0));
  CHECK(p.speed(100.0) == doctest::Approx(5.0));
}

TEST_CASE("piecewise path arcs bend with the stated radius and extend past the end") {
  PiecewisePath path;
  path.add_straight(10.0);
  path.add_arc(10.0, M_PI / 2.0, true);
  const double arc_len = 10.0 * M_PI / 2.0;

  auto p0 = path.at(0.0);
  CHECK(p0.x == doctest::Approx(0.0));
  CHECK(p0.heading == doctest::Approx(0.0));

  auto mid = path.at(10.0 + arc_len / 2.0);
  CHECK(mid.heading == doctest::Approx(M_PI / 4.0));

  auto end = path.at(10.0 + arc_len);
  CHECK(end.x == doctest::Approx(20.0));
  CHECK(end.y == doctest::Approx(10.0));
  CHECK(end.heading == doctest::Approx(M_PI / 2.0));

  // straight extension beyond the last segment keeps the exit heading
  auto beyond = path.at(10.0 + arc_len + 5.0);
  CHECK(beyond.x == doctest::Approx(20.0));
  CHECK(beyond.y == doctest::Approx(15.0));

  // and before the start keeps the entry heading
  auto before = path.at(-3.0);
  CHECK(before.x == doctest::Approx(-3.0));
  CHECK(before.y == doctest::Approx(0.0));
}

TEST_CASE("path offset builds a parallel curve") {
  PiecewisePath path;
  path.add_straight(5.0);
  path.add_arc(10.0, M_PI / 2.0, true);

  PiecewisePath left = path.offset(2.0);
  auto a = left.at(1.0);
  CHECK(a.x == doctest::Approx(1.0));
  CHECK(a.y == doctest::Approx(2.0));

  // inner offset of a left arc shrinks the radius to 8 and the length by the
  // same ratio, preserving the swept angle
  const double inner_arc = 8.0 * M_PI / 2.0;
  auto e = left.at(5.0 + inner_arc);
  CHECK(e.heading == doctest::Approx(M_PI / 2.0));
  CHECK(e.x == doctest::Approx(5.0 + 8.0));
  CHECK(e.y == doctest::Approx(2.0 + 8.0));

  CHECK_THROWS_AS((void)path.offset(15.0), std::invalid_argument);
}

TEST_CASE("sampled arc motion reproduces v/R angular velocity") {
  PiecewisePath path;
  path.add_arc(10.0, M_PI, true);
  SpeedProfile prof;
  prof.hold(10.0, 5.0);
  Trajectory traj = sample_motion(path, prof, 0.0, 0.0, 40, 0.1);
  auto prof_k = qp::kinematics(traj);
  // forward differences on an arc bias alpha by (v^2/R) sin(v dt / (2R))
  const double alpha_bias = (5.0 * 5.0 / 10.0) * std::sin(5.0 * 0.1 / 20.0);
  for (std::size_t k = 0; k < prof_k.omega.size(); ++k) {
    CHECK(prof_k.omega[k] == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(prof_k.alpha[k]) < alpha_bias + 0.01);
  }
}

TEST_CASE("sample_motion velocities are forward differences of positions") {
  Rng rng(7, 1);
  PiecewisePath path;
  path.add_straight(20.0);
  path.add_arc(12.0, 1.0, false);
  path.add_straight(100.0);
  SpeedProfile prof;
  prof.hold(2.0, 8.0);
  prof.ramp(3.0, 8.0, 3.0);
  SmoothNoise nx(0.3, rng), ny(0.3, rng);
  Trajectory traj = sample_motion(path, prof, 1.5, 0.0, 60, 0.1, &nx, &ny);
  REQUIRE(traj.states.size() == 60);
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const auto& a = traj.states[k];
    const auto& b = traj.states[k + 1];
    CHECK(a.vx == doctest::Approx((b.x - a.x) / 0.1).epsilon(1e-9));
    CHECK(a.vy == doctest::Approx((b.y - a.y) / 0.1).epsilon(1e-9));
  }
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  const ScenarioSpec spec{ScenarioKind::kLeftTurn, 42, 0.1, 3};
  SceneSample a = generate_scene(spec, kHorizon);
  SceneSample b = generate_scene(spec, kHorizon);
  CHECK(a.scene_id == b.scene_id);
  CHECK(same_states(a.ego_history, b.ego_history));
  CHECK(same_states(a.ego_future, b.ego_future));
  CHECK(a.map.data == b.map.data);
  CHECK(a.goal.x == b.goal.x);
  for (std::size_t n = 0; n < a.neighbor_futures.size(); ++n) {
    CHECK(same_states(a.neighbor_futures[n], b.neighbor_futures[n]));
  }

  ScenarioSpec other = spec;
  other.seed = 43;
  SceneSample c = generate_scene(other, kHorizon);
  CHECK_FALSE(same_states(a.ego_future, c.ego_future));
}

TEST_CASE("every kind produces valid, kinematically feasible scenes") {
  for (const auto& spec : all_kind_specs(100, 6)) {
    CAPTURE(kind_name(spec.kind));
    CAPTURE(spec.seed);
    SceneSample s = generate_scene(spec, kHorizon);  // validate() runs inside

    Trajectory full = concat_history_future(s);
    auto prof = qp::kinematics(full);
    for (std::size_t k = 0; k < prof.alpha.size(); ++k) {
      CHECK(std::abs(prof.alpha[k]) <= 4.0);
      CHECK(std::abs(prof.omega[k]) <= 1.0);
    }

    // velocities stay forward-consistent across the history/future junction
    for (std::size_t k = 0; k + 1 < full.states.size(); ++k) {
      const auto& a = full.states[k];
      const auto& b = full.states[k + 1];
      CHECK(a.vx == doctest::Approx((b.x - a.x) / kHorizon.dt).epsilon(1e-9));
      CHECK(a.vy == doctest::Approx((b.y - a.y) / kHorizon.dt).epsilon(1e-9));
    }

    // goal is exactly the final ground-truth pose
    const auto& last = s.ego_future.states.back();
    CHECK(s.goal.x == last.x);
    CHECK(s.goal.y == last.y);
    CHECK(std::isfinite(s.goal.heading));
    const double last_speed = std::hypot(last.vx, last.vy);
    if (last_speed >= 0.5) {
      CHECK(s.goal.heading == doctest::Approx(std::atan2(last.vy, last.vx)));
    }
  }
}

TEST_CASE("scenes stay feasible at five times the default noise") {
  for (const auto& spec : all_kind_specs(900, 4, 0.5)) {
    CAPTURE(kind_name(spec.kind));
    CAPTURE(spec.seed);
    SceneSample s = generate_scene(spec, kHorizon);
    auto prof = qp::kinematics(concat_history_future(s));
    for (std::size_t k = 0; k < prof.alpha.size(); ++k) {
      CHECK(std::abs(prof.alpha[k]) <= 4.0);
      CHECK(std::abs(prof.omega[k]) <= 1.0);
    }
  }
}

TEST_CASE("neighbors start inside the sensing radius and never hit the ego") {
  for (const auto& spec : all_kind_specs(300, 5)) {
    SceneSample s = generate_scene(spec, kHorizon);
    const auto& ego_cur = s.ego_history.states.back();
    int valid_count = 0;
    for (std::size_t n = 0; n < s.neighbor_valid.size(); ++n) {
      if (!s.neighbor_valid[n]) {
        // padded slots keep the expected lengths and stay zero
        CHECK(s.neighbor_histories[n].states.size() == std::size_t(kHorizon.past_steps));
        CHECK(s.neighbor_futures[n].states.size() == std::size_t(kHorizon.future_steps));
        continue;
      }
      ++valid_count;
      const auto& nb_cur = s.neighbor_histories[n].states.back();
      CHECK(std::hypot(nb_cur.x - ego_cur.x, nb_cur.y - ego_cur.y) <= kHorizon.neighbor_radius);
      for (std::size_t k = 0; k < s.neighbor_futures[n].states.size(); ++k) {
        const auto& e = s.ego_future.states[k];
        const auto& v = s.neighbor_futures[n].states[k];
        CHECK(std::hypot(e.x - v.x, e.y - v.y) > kHorizon.collision_radius);
      }
    }
    CHECK(valid_count == spec.num_neighbors);
  }
}

TEST_CASE("fork goal branch follows seed parity") {
  for (std::uint64_t seed = 50; seed < 58; ++seed) {
    ScenarioSpec spec{ScenarioKind::kTwoGoalFork, seed, 0.1, 2};
    SceneSample s = generate_scene(spec, kHorizon);
    EgoFramed framed = to_ego_frame(s);
    const bool left = (seed % 2) == 0;
    CAPTURE(seed);
    CHECK((framed.sample.goal.y > 1.0) == left);

    auto [chosen, alternate] = fork_goals(spec, kHorizon);
    CHECK(chosen.x == doctest::Approx(s.goal.x).epsilon(1e-12));
    CHECK(chosen.y == doctest::Approx(s.goal.y).epsilon(1e-12));
    const double gap = std::hypot(chosen.x - alternate.x, chosen.y - alternate.y);
    CHECK(gap > 6.0);
    CHECK(gap < 10.0);
  }
  CHECK_THROWS_AS((void)fork_goals({ScenarioKind::kLeftTurn, 1, 0.1, 0}, kHorizon),
                  std::invalid_argument);
}

TEST_CASE("stop-and-go actually stops") {
  for (std::uint64_t seed = 70; seed < 76; ++seed) {
    SceneSample s = generate_scene({ScenarioKind::kStopAndGo, seed, 0.1, 2}, kHorizon);
    double vmin = 1e9, vmax = 0.0;
    for (const auto& st : s.ego_future.states) {
      const double v = std::hypot(st.vx, st.vy);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    CHECK(vmin < 0.5);  // crawls to a stop (noise keeps it slightly above zero)
    CHECK(vmax > 2.0);  // and moves again
  }
}

TEST_CASE("map polylines use fixed slots, 2 m spacing, and zero padding") {
  SceneSample s = generate_scene({ScenarioKind::kRightTurn, 11, 0.1, 2}, kHorizon);
  const auto& m = s.map;
  CHECK(m.num_polylines == 12);
  CHECK(m.points_per == 20);
  CHECK(m.attr_dim == 8);

  int populated = 0;
  for (int p = 0; p < m.num_polylines; ++p) {
    bool any_valid = false;
    for (int i = 0; i < m.points_per; ++i) {
      const double valid = m.at(p, i, 7);
      CHECK((valid == 0.0 || valid == 1.0));
      if (valid == 0.0) {
        for (int a = 0; a < m.attr_dim; ++a) CHECK(m.at(p, i, a) == 0.0);
        continue;
      }
      any_valid = true;
      double onehot = 0.0;
      for (int a = 3; a < 7; ++a) onehot += m.at(p, i, a);
      CHECK(onehot == 1.0);
      if (i > 0 && m.at(p, i - 1, 7) == 1.0) {
        const double dx = m.at(p, i, 0) - m.at(p, i - 1, 0);
        const double dy = m.at(p, i, 1) - m.at(p, i - 1, 1);
        CHECK(std::hypot(dx, dy) == doctest::Approx(2.0).epsilon(0.01));
      }
    }
    if (any_valid) ++populated;
  }
  CHECK(populated >= 6);

  // crosswalk points exist for turn scenes
  bool has_crosswalk = false;
  for (int p = 0; p < m.num_polylines; ++p) {
    if (m.at(p, 0, 7) == 1.0 && m.at(p, 0, 5) == 1.0) has_crosswalk = true;
  }
  CHECK(has_crosswalk);
}

TEST_CASE("spec violations are rejected") {
  CHECK_THROWS_AS((void)generate_scene({ScenarioKind::kStraightCruise, 1, 0.1, 6}, kHorizon),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)generate_scene({ScenarioKind::kStraightCruise, 1, -0.5, 2}, kHorizon),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)kind_from_name("zigzag"), std::invalid_argument);
  CHECK(kind_from_name("two-goal-fork") == ScenarioKind::kTwoGoalFork);
  CHECK(std::string(kind_name(ScenarioKind::kStopAndGo)) == "stop-and-go");
}

TEST_CASE("dataset generation yields distinct scene ids") {
  std::vector<ScenarioSpec> specs;
  for (int k = 0; k < kNumScenarioKinds; ++k) {
    for (std::uint64_t i = 0; i < 18; ++i) {
      specs.push_back({static_cast<ScenarioKind>(k), 1000 + i, 0.1, 2});
    }
  }
  auto scenes = generate_dataset(specs, kHorizon);
  REQUIRE(scenes.size() == specs.size());
  std::set<std::string> ids;
  for (const auto& s : scenes) ids.insert(s.scene_id);
  CHECK(ids.size() == scenes.size());
}
