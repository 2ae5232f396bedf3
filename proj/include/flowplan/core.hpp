// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_CORE_HPP
#define FLOWPLAN_CORE_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace flowplan {

/// Single agent state sample. Positions in meters, velocities in m/s.
struct AgentState {
  double x{0.0};   // [m]
  double y{0.0};   // [m]
  double vx{0.0};  // [m/s]
  double vy{0.0};  // [m/s]
};

/// Time-indexed state sequence with a fixed step. states.front() is the oldest
/// sample; for histories states.back() is the current state.
struct Trajectory {
  std::vector<AgentState> states;
  double dt{0.1};  // [s]

  std::size_t size() const { return states.size(); }
};

/// Goal pose in the same frame as the trajectories it accompanies.
struct GoalPose {
  double x{0.0};        // [m]
  double y{0.0};        // [m]
  double heading{0.0};  // [rad]
};

/// Fixed-size polyline stack, row-major [num_polylines x points_per x attr_dim].
/// Attribute layout per point: x, y, heading, one-hot semantic tag (4), validity.
/// Invalid (padded) points carry validity 0 and zeros elsewhere.
struct PolylineMap {
  int num_polylines{0};
  int points_per{0};
  int attr_dim{8};
  std::vector<double> data;

  double at(int p, int i, int a) const {
    return data[static_cast<std::size_t>((p * points_per + i) * attr_dim + a)];
  }
  double& at(int p, int i, int a) {
    return data[static_cast<std::size_t>((p * points_per + i) * attr_dim + a)];
  }
};

/// Semantic tag index inside the polyline one-hot block (attributes 3..6).
enum class PolylineTag : int { kLaneCenter = 0, kRoadEdge = 1, kCrosswalk = 2, kOther = 3 };

/// Horizon and neighborhood configuration shared across the pipeline.
struct HorizonConfig {
  double dt{0.1};               // [s] step between samples
  int past_steps{10};           // K, history length including current state
  int future_steps{80};         // T, planning horizon
  int max_neighbors{5};         // N_o
  double neighbor_radius{10.0}; // [m] R_o, selection radius at current time
  double collision_radius{2.0}; // [m] center distance counted as collision
};

/// One planning problem instance. Neighbor slots are fixed at
/// HorizonConfig::max_neighbors; neighbor_valid flags which slots carry data
/// and applies to histories and futures alike.
struct SceneSample {
  std::string scene_id;
  Trajectory ego_history;                       // length K
  std::vector<Trajectory> neighbor_histories;   // N_o entries, length K each
  std::vector<Trajectory> neighbor_futures;     // N_o entries, length T each
  std::vector<std::uint8_t> neighbor_valid;     // N_o flags
  PolylineMap map;
  GoalPose goal;
  Trajectory ego_future;                        // length T, ground truth
};

/// Planar rigid transform p' = R(angle) * p + t.
struct RigidTransform2 {
  double cos_a{1.0};
  double sin_a{0.0};
  double tx{0.0};
  double ty{0.0};

  static RigidTransform2 from(double angle, double tx, double ty);
  RigidTransform2 inverse() const;
  void apply_point(double& x, double& y) const;
  void apply_vector(double& vx, double& vy) const;
};

/// Per-channel statistics over (x, y, vx, vy).
struct NormalizationStats {
  double mean[4]{0.0, 0.0, 0.0, 0.0};
  double std[4]{1.0, 1.0, 1.0, 1.0};
};

/// Result of canonicalization: the transformed sample plus the transform that
/// maps ego-frame coordinates back to the input frame.
struct EgoFramed {
  SceneSample sample;
  RigidTransform2 world_from_ego;
};

/// Validates structural invariants (lengths, mask sizes, finite values).
/// Throws std::invalid_argument naming the offending field.
void validate(const SceneSample& sample, const HorizonConfig& horizon);

/// Rigidly transforms every trajectory, map point, and the goal so the current
/// ego position sits at the origin with its heading along +x. The heading is
/// taken from the current ego velocity; below 0.1 m/s speed it falls back to +x
/// (identity rotation). Velocities are rotated, never translated.
EgoFramed to_ego_frame(const SceneSample& sample);

/// Applies a rigid transform to every coordinate-bearing field of a sample.
SceneSample apply_rigid(const SceneSample& sample, const RigidTransform2& tf);

/// Applies world_from_ego to a trajectory expressed in the ego frame.
Trajectory to_world_frame(const Trajectory& ego_traj, const RigidTransform2& world_from_ego);

/// Per-channel standardization u = (x - mean) / std. Rejects non-positive std.
AgentState normalize(const AgentState& s, const NormalizationStats& stats);
AgentState denormalize(const AgentState& s, const NormalizationStats& stats);
Trajectory normalize(const Trajectory& t, const NormalizationStats& stats);
Trajectory denormalize(const Trajectory& t, const NormalizationStats& stats);

/// Fits per-channel mean/std over ego and valid-neighbor future states of the
/// given samples. Stds are floored at 1e-3 to keep normalize invertible on
/// degenerate channels.
NormalizationStats fit_normalization(const std::vector<SceneSample>& samples);

}  // namespace flowplan

#endif  // FLOWPLAN_CORE_HPP
