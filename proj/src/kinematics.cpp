// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/qp/kinematics.hpp"

#include <cmath>
#include <stdexcept>

namespace flowplan::qp {

KinematicProfile kinematics(const std::vector<std::array<double, 2>>& p, double dt,
                            double speed_floor) {
  if (dt <= 0.0) throw std::invalid_argument("kinematics: dt must be positive");
  if (speed_floor <= 0.0) throw std::invalid_argument("kinematics: speed_floor must be positive");
  const std::size_t n = p.size();
  KinematicProfile k;
  if (n < 2) return k;

  k.vx.resize(n - 1);
  k.vy.resize(n - 1);
  k.speed.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    k.vx[i] = (p[i + 1][0] - p[i][0]) / dt;
    k.vy[i] = (p[i + 1][1] - p[i][1]) / dt;
    k.speed[i] = std::max(std::hypot(k.vx[i], k.vy[i]), speed_floor);
  }
  if (n < 3) return k;

  const double dt2 = dt * dt;
  k.ax.resize(n - 2);
  k.ay.resize(n - 2);
  k.alpha.resize(n - 2);
  k.omega.resize(n - 2);
  for (std::size_t i = 0; i + 2 < n; ++i) {
    k.ax[i] = (p[i + 2][0] - 2.0 * p[i + 1][0] + p[i][0]) / dt2;
    k.ay[i] = (p[i + 2][1] - 2.0 * p[i + 1][1] + p[i][1]) / dt2;
    const double s = k.speed[i];
    k.alpha[i] = (k.ax[i] * k.vx[i] + k.ay[i] * k.vy[i]) / s;
    k.omega[i] = (k.vx[i] * k.ay[i] - k.vy[i] * k.ax[i]) / (s * s);
  }
  return k;
}

KinematicProfile kinematics(const Trajectory& traj, double speed_floor) {
  std::vector<std::array<double, 2>> p;
  p.reserve(traj.states.size());
  for (const auto& s : traj.states) p.push_back({s.x, s.y});
  return kinematics(p, traj.dt, speed_floor);
}

}  // namespace flowplan::qp
