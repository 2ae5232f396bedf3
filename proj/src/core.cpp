// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flowplan {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument("SceneSample: " + what);
}

bool all_finite(const Trajectory& t) {
  for (const auto& s : t.states) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.vx) ||
        !std::isfinite(s.vy)) {
      return false;
    }
  }
  return true;
}

double wrap_angle(double a) { return std::atan2(std::sin(a), std::cos(a)); }

}  // namespace

RigidTransform2 RigidTransform2::from(double angle, double tx, double ty) {
  return RigidTransform2{std::cos(angle), std::sin(angle), tx, ty};
}

RigidTransform2 RigidTransform2::inverse() const {
  // R' * (p - t): rotation transposes, translation becomes -R' t.
  RigidTransform2 inv;
  inv.cos_a = cos_a;
  inv.sin_a = -sin_a;
  inv.tx = -(cos_a * tx + sin_a * ty);
  inv.ty = -(-sin_a * tx + cos_a * ty);
  return inv;
}

void RigidTransform2::apply_point(double& x, double& y) const {
  const double nx = cos_a * x - sin_a * y + tx;
  const double ny = sin_a * x + cos_a * y + ty;
  x = nx;
  y = ny;
}

void RigidTransform2::apply_vector(double& vx, double& vy) const {
  const double nx = cos_a * vx - sin_a * vy;
  const double ny = sin_a * vx + cos_a * vy;
  vx = nx;
  vy = ny;
}

void validate(const SceneSample& sample, const HorizonConfig& horizon) {
  const auto K = static_cast<std::size_t>(horizon.past_steps);
  const auto T = static_cast<std::size_t>(horizon.future_steps);
  const auto N = static_cast<std::size_t>(horizon.max_neighbors);

  require(sample.ego_history.size() == K, "ego_history length " +
              std::to_string(sample.ego_history.size()) + ", expected " + std::to_string(K));
  require(sample.ego_future.size() == T, "ego_future length " +
              std::to_string(sample.ego_future.size()) + ", expected " + std::to_string(T));
  require(sample.neighbor_histories.size() == N, "neighbor_histories size");
  require(sample.neighbor_futures.size() == N, "neighbor_futures size");
  require(sample.neighbor_valid.size() == N, "neighbor_valid size");
  for (std::size_t i = 0; i < N; ++i) {
    if (!sample.neighbor_valid[i]) continue;
    require(sample.neighbor_histories[i].size() == K,
            "neighbor " + std::to_string(i) + " history length");
    require(sample.neighbor_futures[i].size() == T,
            "neighbor " + std::to_string(i) + " future length");
    require(all_finite(sample.neighbor_histories[i]) && all_finite(sample.neighbor_futures[i]),
            "neighbor " + std::to_string(i) + " non-finite state");
  }
  require(all_finite(sample.ego_history) && all_finite(sample.ego_future),
          "ego non-finite state");
  require(std::isfinite(sample.goal.x) && std::isfinite(sample.goal.y) &&
              std::isfinite(sample.goal.heading), "goal non-finite");
  const auto map_size = static_cast<std::size_t>(sample.map.num_polylines) *
                        static_cast<std::size_t>(sample.map.points_per) *
                        static_cast<std::size_t>(sample.map.attr_dim);
  require(sample.map.data.size() == map_size, "map data size");
  for (double v : sample.map.data) require(std::isfinite(v), "map non-finite value");
}

namespace {

void transform_traj(Trajectory& t, const RigidTransform2& tf) {
  for (auto& s : t.states) {
    tf.apply_point(s.x, s.y);
    tf.apply_vector(s.vx, s.vy);
  }
}

void transform_sample(SceneSample& s, const RigidTransform2& tf, double dheading) {
  transform_traj(s.ego_history, tf);
  transform_traj(s.ego_future, tf);
  for (auto& n : s.neighbor_histories) transform_traj(n, tf);
  for (auto& n : s.neighbor_futures) transform_traj(n, tf);
  tf.apply_point(s.goal.x, s.goal.y);
  s.goal.heading = wrap_angle(s.goal.heading + dheading);
  for (int p = 0; p < s.map.num_polylines; ++p) {
    for (int i = 0; i < s.map.points_per; ++i) {
      if (s.map.at(p, i, 7) == 0.0) continue;  // padded point stays all-zero
      double x = s.map.at(p, i, 0), y = s.map.at(p, i, 1);
      tf.apply_point(x, y);
      s.map.at(p, i, 0) = x;
      s.map.at(p, i, 1) = y;
      s.map.at(p, i, 2) = wrap_angle(s.map.at(p, i, 2) + dheading);
    }
  }
}

}  // namespace

SceneSample apply_rigid(const SceneSample& sample, const RigidTransform2& tf) {
  SceneSample out = sample;
  transform_sample(out, tf, std::atan2(tf.sin_a, tf.cos_a));
  return out;
}

EgoFramed to_ego_frame(const SceneSample& sample) {
  if (sample.ego_history.states.empty()) {
    throw std::invalid_argument("to_ego_frame: empty ego history");
  }
  const AgentState& cur = sample.ego_history.states.back();
  const double speed = std::hypot(cur.vx, cur.vy);
  const double heading = speed >= 0.1 ? std::atan2(cur.vy, cur.vx) : 0.0;

  // ego_from_world = R(-heading) * (p - cur)
  RigidTransform2 ego_from_world;
  ego_from_world.cos_a = std::cos(-heading);
  ego_from_world.sin_a = std::sin(-heading);
  ego_from_world.tx = -(ego_from_world.cos_a * cur.x - ego_from_world.sin_a * cur.y);
  ego_from_world.ty = -(ego_from_world.sin_a * cur.x + ego_from_world.cos_a * cur.y);

  EgoFramed out;
  out.sample = sample;
  transform_sample(out.sample, ego_from_world, -heading);
  out.world_from_ego = ego_from_world.inverse();
  return out;
}

Trajectory to_world_frame(const Trajectory& ego_traj, const RigidTransform2& world_from_ego) {
  Trajectory out = ego_traj;
  transform_traj(out, world_from_ego);
  return out;
}

namespace {

void check_std(const NormalizationStats& stats) {
  for (double s : stats.std) {
    if (!(s > 0.0)) throw std::invalid_argument("NormalizationStats: std must be positive");
  }
}

}  // namespace

AgentState normalize(const AgentState& s, const NormalizationStats& st) {
  check_std(st);
  return AgentState{(s.x - st.mean[0]) / st.std[0], (s.y - st.mean[1]) / st.std[1],
                    (s.vx - st.mean[2]) / st.std[2], (s.vy - st.mean[3]) / st.std[3]};
}

AgentState denormalize(const AgentState& s, const NormalizationStats& st) {
  check_std(st);
  return AgentState{s.x * st.std[0] + st.mean[0], s.y * st.std[1] + st.mean[1],
                    s.vx * st.std[2] + st.mean[2], s.vy * st.std[3] + st.mean[3]};
}

Trajectory normalize(const Trajectory& t, const NormalizationStats& st) {
  Trajectory out = t;
  for (auto& s : out.states) s = normalize(s, st);
  return out;
}

Trajectory denormalize(const Trajectory& t, const NormalizationStats& st) {
  Trajectory out = t;
  for (auto& s : out.states) s = denormalize(s, st);
  return out;
}

NormalizationStats fit_normalization(const std::vector<SceneSample>& samples) {
  double sum[4] = {0, 0, 0, 0};
  double sumsq[4] = {0, 0, 0, 0};
  std::size_t n = 0;
  auto accumulate = [&](const Trajectory& t) {
    for (const auto& s : t.states) {
      const double v[4] = {s.x, s.y, s.vx, s.vy};
      for (int c = 0; c < 4; ++c) {
        sum[c] += v[c];
        sumsq[c] += v[c] * v[c];
      }
      ++n;
    }
  };
  for (const auto& sample : samples) {
    accumulate(sample.ego_future);
    for (std::size_t i = 0; i < sample.neighbor_futures.size(); ++i) {
      if (i < sample.neighbor_valid.size() && sample.neighbor_valid[i]) {
        accumulate(sample.neighbor_futures[i]);
      }
    }
  }
  if (n == 0) throw std::invalid_argument("fit_normalization: no states");
  NormalizationStats stats;
  for (int c = 0; c < 4; ++c) {
    stats.mean[c] = sum[c] / static_cast<double>(n);
    const double var = std::max(0.0, sumsq[c] / static_cast<double>(n) -
                                         stats.mean[c] * stats.mean[c]);
    stats.std[c] = std::max(std::sqrt(var), 1e-3);
  }
  return stats;
}

}  // namespace flowplan
