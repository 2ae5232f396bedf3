// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_QP_KINEMATICS_HPP
#define FLOWPLAN_QP_KINEMATICS_HPP

#include <array>
#include <vector>

#include "flowplan/core.hpp"

namespace flowplan::qp {

/// Finite-difference kinematics of a planar position sequence.
/// For N input points: velocities exist for k = 0..N-2 (forward differences),
/// accelerations and the derived longitudinal acceleration alpha / angular
/// velocity omega for k = 0..N-3 (second differences). Speeds used in
/// denominators are floored at speed_floor.
struct KinematicProfile {
  std::vector<double> vx, vy;        // [m/s]
  std::vector<double> ax, ay;        // [m/s^2]
  std::vector<double> speed;         // [m/s] floored, aligned with vx
  std::vector<double> alpha;         // [m/s^2] signed longitudinal acceleration
  std::vector<double> omega;         // [rad/s] signed angular velocity
};

KinematicProfile kinematics(const std::vector<std::array<double, 2>>& positions, double dt,
                            double speed_floor = 0.5);

KinematicProfile kinematics(const Trajectory& traj, double speed_floor = 0.5);

}  // namespace flowplan::qp

#endif  // FLOWPLAN_QP_KINEMATICS_HPP
