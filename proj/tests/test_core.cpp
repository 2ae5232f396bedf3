// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowplan/core.hpp"
#include "flowplan/io/rng.hpp"

using namespace flowplan;

namespace {

// Hand-built sample: ego drives north at 2 m/s through (5,5), goal 10 m ahead.
SceneSample make_sample(const HorizonConfig& h) {
  SceneSample s;
  s.scene_id = "manual";
  s.ego_history.dt = h.dt;
  for (int k = 0; k < h.past_steps; ++k) {
    const double t = (k - (h.past_steps - 1)) * h.dt;
    s.ego_history.states.push_back({5.0, 5.0 + 2.0 * t, 0.0, 2.0});
  }
  s.ego_future.dt = h.dt;
  for (int k = 1; k <= h.future_steps; ++k) {
    s.ego_future.states.push_back({5.0, 5.0 + 2.0 * k * h.dt, 0.0, 2.0});
  }
  s.goal = {5.0, 15.0, M_PI / 2.0};
  s.neighbor_valid.assign(static_cast<std::size_t>(h.max_neighbors), 0);
  s.neighbor_histories.resize(static_cast<std::size_t>(h.max_neighbors));
  s.neighbor_futures.resize(static_cast<std::size_t>(h.max_neighbors));
  s.neighbor_valid[0] = 1;
  s.neighbor_histories[0].dt = h.dt;
  s.neighbor_futures[0].dt = h.dt;
  for (int k = 0; k < h.past_steps; ++k) {
    s.neighbor_histories[0].states.push_back({8.0, 3.0 + 0.1 * k, 0.0, 1.0});
  }
  for (int k = 1; k <= h.future_steps; ++k) {
    s.neighbor_futures[0].states.push_back({8.0, 3.0 + 0.1 * (h.past_steps - 1) + k * h.dt, 0.0, 1.0});
  }
  s.map.num_polylines = 1;
  s.map.points_per = 4;
  s.map.attr_dim = 8;
  s.map.data.assign(static_cast<std::size_t>(1 * 4 * 8), 0.0);
  for (int i = 0; i < 4; ++i) {
    s.map.at(0, i, 0) = 5.0;
    s.map.at(0, i, 1) = 2.0 * i;
    s.map.at(0, i, 2) = M_PI / 2.0;
    s.map.at(0, i, 3) = 1.0;  // lane center tag
    s.map.at(0, i, 7) = 1.0;
  }
  return s;
}

}  // namespace

TEST_CASE("to_ego_frame canonicalizes position and heading") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  auto s = make_sample(h);
  validate(s, h);

  auto framed = to_ego_frame(s);
  const auto& cur = framed.sample.ego_history.states.back();
  CHECK(cur.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cur.y == doctest::Approx(0.0).epsilon(1e-12));
  // heading along +x: current velocity rotated onto the x axis
  CHECK(cur.vx == doctest::Approx(2.0));
  CHECK(cur.vy == doctest::Approx(0.0).epsilon(1e-12));
  // goal 10 m ahead becomes (10, 0)
  CHECK(framed.sample.goal.x == doctest::Approx(10.0));
  CHECK(framed.sample.goal.y == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(framed.sample.goal.heading == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ego frame round trip restores original coordinates") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  auto s = make_sample(h);
  auto framed = to_ego_frame(s);
  auto back = to_world_frame(framed.sample.ego_future, framed.world_from_ego);
  for (std::size_t k = 0; k < back.states.size(); ++k) {
    CHECK(back.states[k].x == doctest::Approx(s.ego_future.states[k].x).epsilon(1e-9));
    CHECK(back.states[k].y == doctest::Approx(s.ego_future.states[k].y).epsilon(1e-9));
    CHECK(back.states[k].vx == doctest::Approx(s.ego_future.states[k].vx).epsilon(1e-9));
    CHECK(back.states[k].vy == doctest::Approx(s.ego_future.states[k].vy).epsilon(1e-9));
  }
}

TEST_CASE("to_ego_frame is idempotent") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  auto once = to_ego_frame(make_sample(h));
  auto twice = to_ego_frame(once.sample);
  for (std::size_t k = 0; k < once.sample.ego_future.states.size(); ++k) {
    CHECK(std::abs(twice.sample.ego_future.states[k].x - once.sample.ego_future.states[k].x) < 1e-9);
    CHECK(std::abs(twice.sample.ego_future.states[k].y - once.sample.ego_future.states[k].y) < 1e-9);
  }
  CHECK(std::abs(twice.sample.goal.x - once.sample.goal.x) < 1e-9);
  CHECK(std::abs(twice.sample.goal.y - once.sample.goal.y) < 1e-9);
}

TEST_CASE("to_ego_frame preserves pairwise distances") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  auto s = make_sample(h);
  auto framed = to_ego_frame(s);

  auto dist_before = [](const AgentState& a, const AgentState& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
  };
  for (std::size_t i = 0; i + 1 < s.ego_future.states.size(); ++i) {
    const double d0 = dist_before(s.ego_future.states[i], s.ego_future.states[i + 1]);
    const double d1 = dist_before(framed.sample.ego_future.states[i],
                                  framed.sample.ego_future.states[i + 1]);
    CHECK(std::abs(d0 - d1) < 1e-6);
  }
  // ego-neighbor distance at the current step is an isometry invariant too
  const double e0 = dist_before(s.ego_history.states.back(), s.neighbor_histories[0].states.back());
  const double e1 = dist_before(framed.sample.ego_history.states.back(),
                                framed.sample.neighbor_histories[0].states.back());
  CHECK(std::abs(e0 - e1) < 1e-6);
}

TEST_CASE("low-speed heading falls back to +x") {
  HorizonConfig h;
  h.past_steps = 2;
  h.future_steps = 2;
  SceneSample s = make_sample(h);
  for (auto& st : s.ego_history.states) {
    st.vx = 0.01;
    st.vy = 0.02;  // below the 0.1 m/s speed threshold
  }
  auto framed = to_ego_frame(s);
  // rotation is identity; only translation applied
  CHECK(framed.sample.ego_history.states.back().vx == doctest::Approx(0.01));
  CHECK(framed.sample.ego_history.states.back().vy == doctest::Approx(0.02));
}

TEST_CASE("normalize round trip and validation") {
  NormalizationStats st;
  st.mean[0] = 2.0;
  st.std[0] = 3.0;
  st.mean[3] = -1.0;
  st.std[3] = 0.5;
  AgentState a{5.0, 1.0, 2.0, 3.0};
  auto n = normalize(a, st);
  CHECK(n.x == doctest::Approx(1.0));
  auto back = denormalize(n, st);
  CHECK(back.x == doctest::Approx(a.x).epsilon(1e-12));
  CHECK(back.vy == doctest::Approx(a.vy).epsilon(1e-12));

  NormalizationStats bad;
  bad.std[1] = 0.0;
  CHECK_THROWS_AS((void)normalize(a, bad), std::invalid_argument);
  bad.std[1] = -1.0;
  CHECK_THROWS_AS((void)denormalize(a, bad), std::invalid_argument);
}

TEST_CASE("fit_normalization floors std and centers means") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  std::vector<SceneSample> samples{make_sample(h)};
  auto st = fit_normalization(samples);
  for (double sd : st.std) CHECK(sd >= 1e-3);
  // x channel of futures is constant at 5 or 8 -> mean in between
  CHECK(st.mean[0] > 5.0);
  CHECK(st.mean[0] < 8.0);
}

TEST_CASE("validate rejects wrong history length") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  auto s = make_sample(h);
  s.ego_history.states.pop_back();
  CHECK_THROWS_WITH_AS(validate(s, h), doctest::Contains("ego_history"), std::invalid_argument);
}

TEST_CASE("validate rejects non-finite values") {
  HorizonConfig h;
  h.past_steps = 4;
  h.future_steps = 6;
  auto s = make_sample(h);
  s.ego_future.states[2].vx = std::nan("");
  CHECK_THROWS_AS(validate(s, h), std::invalid_argument);
}

TEST_CASE("rigid transform compose and inverse") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto tf = RigidTransform2::from(rng.uniform(-3.0, 3.0), rng.uniform(-10.0, 10.0),
                                    rng.uniform(-10.0, 10.0));
    auto inv = tf.inverse();
    double x = rng.uniform(-5.0, 5.0), y = rng.uniform(-5.0, 5.0);
    double ox = x, oy = y;
    tf.apply_point(x, y);
    inv.apply_point(x, y);
    CHECK(std::abs(x - ox) < 1e-9);
    CHECK(std::abs(y - oy) < 1e-9);
  }
}
