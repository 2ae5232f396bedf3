// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_METRICS_HPP
#define FLOWPLAN_METRICS_HPP

#include <string>
#include <vector>

#include "flowplan/core.hpp"

namespace flowplan::metrics {

struct MetricConfig {
  double speed_floor{0.5};       // [m/s] denominator floor
  double alpha_limit{3.0};       // [m/s^2]
  double omega_limit{0.6};       // [rad/s]
  double collision_radius{2.0};  // [m] closed threshold: d <= radius collides
};

/// Mean pointwise distance. Lengths must match.
double ade(const Trajectory& pred, const Trajectory& truth);

/// Final-point distance.
double fde(const Trajectory& pred, const Trajectory& truth);

/// Per-metric independent minima over candidate trajectories: the candidate
/// minimizing ADE need not be the one minimizing FDE.
double min_ade(const std::vector<Trajectory>& candidates, const Trajectory& truth);
double min_fde(const std::vector<Trajectory>& candidates, const Trajectory& truth);

/// Endpoint distance to the goal position.
double goal_error(const Trajectory& pred, const GoalPose& goal);

/// Total absolute heading change [rad] along the position sequence. Steps
/// whose segment speed falls below the floor carry no heading evidence and
/// are skipped.
double angle_change(const Trajectory& pred, double speed_floor = 0.5);

/// Sum of segment lengths [m].
double path_length(const Trajectory& pred);

/// Mean |omega_k| / speed_k [1/m] over the finite-difference profile, with
/// floored speeds.
double mean_curvature(const Trajectory& pred, double speed_floor = 0.5);

/// True when the ego comes within the collision radius (inclusive) of any
/// valid neighbor at the matching future timestep.
bool has_collision(const Trajectory& ego_future, const SceneSample& scene,
                   double collision_radius = 2.0);

/// Mean positive excess of |alpha| over the limit [m/s^2], averaged over all
/// finite-difference steps (zero when none violate).
double acc_violation(const Trajectory& pred, double alpha_limit = 3.0,
                     double speed_floor = 0.5);
double omega_violation(const Trajectory& pred, double omega_limit = 0.6,
                       double speed_floor = 0.5);

/// One evaluated scene. minADE/minFDE consider every candidate; the quality
/// metrics are computed on the primary plan, candidates.front().
struct SceneRow {
  std::string scene_id;
  double min_ade{0.0};
  double min_fde{0.0};
  double goal_error{0.0};
  double angle_change{0.0};
  double path_length{0.0};
  double curvature{0.0};
  bool collision{false};
  double acc_violation{0.0};
  double omega_violation{0.0};
};

struct SplitSummary {
  std::vector<SceneRow> rows;
  // aggregate means over scenes; collision_rate is the colliding fraction
  double min_ade{0.0};
  double min_fde{0.0};
  double goal_error{0.0};
  double angle_change{0.0};
  double path_length{0.0};
  double curvature{0.0};
  double collision_rate{0.0};
  double acc_violation{0.0};
  double omega_violation{0.0};
};

/// Evaluates one candidate set per scene. candidates[i] must be nonempty and
/// every trajectory must match scene i's future length.
SplitSummary evaluate_split(const std::vector<SceneSample>& scenes,
                            const std::vector<std::vector<Trajectory>>& candidates,
                            const MetricConfig& config = {});

}  // namespace flowplan::metrics

#endif  // FLOWPLAN_METRICS_HPP
