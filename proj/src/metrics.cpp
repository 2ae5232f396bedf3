// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "flowplan/qp/kinematics.hpp"

namespace flowplan::metrics {

namespace {

void require_match(const Trajectory& a, const Trajectory& b, const char* what) {
  if (a.states.size() != b.states.size() || a.states.empty()) {
    throw std::invalid_argument(std::string("metrics: ") + what +
                                " needs equal, nonempty lengths");
  }
}

double wrap_angle(double a) { return std::atan2(std::sin(a), std::cos(a)); }

}  // namespace

double ade(const Trajectory& pred, const Trajectory& truth) {
  require_match(pred, truth, "ade");
  double acc = 0.0;
  for (std::size_t k = 0; k < pred.states.size(); ++k) {
    acc += std::hypot(pred.states[k].x - truth.states[k].x,
                      pred.states[k].y - truth.states[k].y);
  }
  return acc / static_cast<double>(pred.states.size());
}

double fde(const Trajectory& pred, const Trajectory& truth) {
  require_match(pred, truth, "fde");
  return std::hypot(pred.states.back().x - truth.states.back().x,
                    pred.states.back().y - truth.states.back().y);
}

double min_ade(const std::vector<Trajectory>& candidates, const Trajectory& truth) {
  if (candidates.empty()) throw std::invalid_argument("metrics: min_ade needs candidates");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best = std::min(best, ade(c, truth));
  return best;
}

double min_fde(const std::vector<Trajectory>& candidates, const Trajectory& truth) {
  if (candidates.empty()) throw std::invalid_argument("metrics: min_fde needs candidates");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best = std::min(best, fde(c, truth));
  return best;
}

double goal_error(const Trajectory& pred, const GoalPose& goal) {
  if (pred.states.empty()) throw std::invalid_argument("metrics: goal_error on empty plan");
  return std::hypot(pred.states.back().x - goal.x, pred.states.back().y - goal.y);
}

double angle_change(const Trajectory& pred, double speed_floor) {
  if (pred.states.size() < 3 || pred.dt <= 0.0) return 0.0;
  double total = 0.0;
  bool have_prev = false;
  double prev_heading = 0.0;
  for (std::size_t k = 0; k + 1 < pred.states.size(); ++k) {
    const double dx = pred.states[k + 1].x - pred.states[k].x;
    const double dy = pred.states[k + 1].y - pred.states[k].y;
    if (std::hypot(dx, dy) / pred.dt < speed_floor) {
      // no heading evidence at crawl speeds
      have_prev = false;
      continue;
    }
    const double heading = std::atan2(dy, dx);
    if (have_prev) total += std::abs(wrap_angle(heading - prev_heading));
    prev_heading = heading;
    have_prev = true;
  }
  return total;
}

double path_length(const Trajectory& pred) {
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pred.states.size(); ++k) {
    total += std::hypot(pred.states[k + 1].x - pred.states[k].x,
                        pred.states[k + 1].y - pred.states[k].y);
  }
  return total;
}

double mean_curvature(const Trajectory& pred, double speed_floor) {
  if (pred.states.size() < 3) return 0.0;
  const auto prof = qp::kinematics(pred, speed_floor);
  if (prof.omega.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < prof.omega.size(); ++k) {
    acc += std::abs(prof.omega[k]) / prof.speed[k];
  }
  return acc / static_cast<double>(prof.omega.size());
}

bool has_collision(const Trajectory& ego_future, const SceneSample& scene,
                   double collision_radius) {
  for (std::size_t n = 0; n < scene.neighbor_valid.size(); ++n) {
    if (!scene.neighbor_valid[n]) continue;
    const auto& nb = scene.neighbor_futures[n].states;
    const std::size_t steps = std::min(nb.size(), ego_future.states.size());
    for (std::size_t k = 0; k < steps; ++k) {
      const double d = std::hypot(ego_future.states[k].x - nb[k].x,
                                  ego_future.states[k].y - nb[k].y);
      if (d <= collision_radius) return true;
    }
  }
  return false;
}

double acc_violation(const Trajectory& pred, double alpha_limit, double speed_floor) {
  if (pred.states.size() < 3) return 0.0;
  const auto prof = qp::kinematics(pred, speed_floor);
  if (prof.alpha.empty()) return 0.0;
  double acc = 0.0;
  for (double a : prof.alpha) acc += std::max(0.0, std::abs(a) - alpha_limit);
  return acc / static_cast<double>(prof.alpha.size());
}

double omega_violation(const Trajectory& pred, double omega_limit, double speed_floor) {
  if (pred.states.size() < 3) return 0.0;
  const auto prof = qp::kinematics(pred, speed_floor);
  if (prof.omega.empty()) return 0.0;
  double acc = 0.0;
  for (double w : prof.omega) acc += std::max(0.0, std::abs(w) - omega_limit);
  return acc / static_cast<double>(prof.omega.size());
}

SplitSummary evaluate_split(const std::vector<SceneSample>& scenes,
                            const std::vector<std::vector<Trajectory>>& candidates,
                            const MetricConfig& cfg) {
  if (scenes.size() != candidates.size()) {
    throw std::invalid_argument("metrics: one candidate set per scene required");
  }
  if (scenes.empty()) throw std::invalid_argument("metrics: empty split");

  SplitSummary out;
  out.rows.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& scene = scenes[i];
    const auto& cands = candidates[i];
    if (cands.empty()) throw std::invalid_argument("metrics: empty candidate set");
    const Trajectory& primary = cands.front();

    SceneRow row;
    row.scene_id = scene.scene_id;
    row.min_ade = min_ade(cands, scene.ego_future);
    row.min_fde = min_fde(cands, scene.ego_future);
    row.goal_error = goal_error(primary, scene.goal);
    row.angle_change = angle_change(primary, cfg.speed_floor);
    row.path_length = path_length(primary);
    row.curvature = mean_curvature(primary, cfg.speed_floor);
    row.collision = has_collision(primary, scene, cfg.collision_radius);
    row.acc_violation = acc_violation(primary, cfg.alpha_limit, cfg.speed_floor);
    row.omega_violation = omega_violation(primary, cfg.omega_limit, cfg.speed_floor);
    out.rows.push_back(std::move(row));
  }

  const double n = static_cast<double>(out.rows.size());
  for (const auto& r : out.rows) {
    out.min_ade += r.min_ade / n;
    out.min_fde += r.min_fde / n;
    out.goal_error += r.goal_error / n;
    out.angle_change += r.angle_change / n;
    out.path_length += r.path_length / n;
    out.curvature += r.curvature / n;
    out.collision_rate += (r.collision ? 1.0 : 0.0) / n;
    out.acc_violation += r.acc_violation / n;
    out.omega_violation += r.omega_violation / n;
  }
  return out;
}

}  // namespace flowplan::metrics
