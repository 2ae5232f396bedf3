// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_SCENEGEN_HPP
#define FLOWPLAN_SCENEGEN_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flowplan/core.hpp"
#include "flowplan/io/rng.hpp"

namespace flowplan::scenegen {

enum class ScenarioKind : int {
  kStraightCruise = 0,
  kLaneChangeLeft,
  kLaneChangeRight,
  kRightTurn,
  kLeftTurn,
  kStopAndGo,
  kTwoGoalFork,
};

inline constexpr int kNumScenarioKinds = 7;

const char* kind_name(ScenarioKind kind);
ScenarioKind kind_from_name(const std::string& name);  // throws on unknown name

/// One scenario instance. The seed fully determines geometry, neighbors, and
/// noise; for two-goal-fork scenes the goal branch is the seed's parity (even
/// selects the left branch).
struct ScenarioSpec {
  ScenarioKind kind{ScenarioKind::kStraightCruise};
  std::uint64_t seed{0};
  double noise_scale{0.1};  // [m] amplitude of smooth position jitter
  int num_neighbors{2};
};

/// Piecewise constant-curvature path (straights and circular arcs), extended
/// straight beyond both ends. Arclength-parameterized.
class PiecewisePath {
 public:
  void add_straight(double length);
  /// Positive radius; angle in radians; left=true bends counterclockwise.
  void add_arc(double radius, double angle, bool left);
  double length() const { return total_; }

  struct Point {
    double x, y, heading;
  };
  Point at(double s) const;

  /// Parallel curve shifted laterally (+left) by the given offset. Offsets
  /// must stay below the tightest arc radius.
  PiecewisePath offset(double lateral) const;

 private:
  struct Seg {
    double x0, y0, h0, len, curv;
  };
  std::vector<Seg> segs_;
  double total_{0.0};
  double cx_{0.0}, cy_{0.0}, ch_{0.0};
  void push(double len, double curv);
};

/// Piecewise-linear speed profile v(t) with analytic distance integral.
class SpeedProfile {
 public:
  void hold(double duration, double speed);
  void ramp(double duration, double v0, double v1);
  double duration() const { return total_; }
  double speed(double t) const;     // clamps outside [0, duration]
  double distance(double t) const;  // integral of speed from 0 to t

 private:
  struct Seg {
    double t0, dur, v0, v1, d0;
  };
  std::vector<Seg> segs_;
  double total_{0.0};
};

/// Smooth low-frequency jitter: a short sum of sinusoids whose amplitude sums
/// to `scale` and whose frequencies stay below 0.6 rad/s, keeping the induced
/// velocity and acceleration perturbations inside the feasibility envelope.
class SmoothNoise {
 public:
  SmoothNoise() = default;
  SmoothNoise(double scale, Rng& rng);
  double at(double t) const;

 private:
  static constexpr int kComponents = 3;
  double amp_[kComponents]{0, 0, 0};
  double freq_[kComponents]{0, 0, 0};
  double phase_[kComponents]{0, 0, 0};
};

/// Samples `count` states along the path under the speed profile, starting at
/// arclength start_s at profile time t0. Velocities are forward differences of
/// the (possibly jittered) positions, so v_k = (p_{k+1} - p_k) / dt holds for
/// every stored step; one extra point beyond the nominal horizon supplies the
/// final velocity.
Trajectory sample_motion(const PiecewisePath& path, const SpeedProfile& profile, double start_s,
                         double t0, int count, double dt, const SmoothNoise* noise_x = nullptr,
                         const SmoothNoise* noise_y = nullptr);

/// Generates one scene in a randomly posed world frame. Throws
/// std::invalid_argument when the spec cannot be honored (unknown kind,
/// num_neighbors that exceed the horizon budget or the placement slots).
SceneSample generate_scene(const ScenarioSpec& spec, const HorizonConfig& horizon);

std::vector<SceneSample> generate_dataset(const std::vector<ScenarioSpec>& specs,
                                          const HorizonConfig& horizon);

/// World-frame endpoints of both fork branches for a two-goal-fork spec: the
/// branch the ground truth follows first, then the alternate. The first equals
/// the scene goal. Throws std::invalid_argument for other kinds.
std::pair<GoalPose, GoalPose> fork_goals(const ScenarioSpec& spec, const HorizonConfig& horizon);

}  // namespace flowplan::scenegen

#endif  // FLOWPLAN_SCENEGEN_HPP
