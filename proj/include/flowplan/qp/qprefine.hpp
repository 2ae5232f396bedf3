// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_QP_QPREFINE_HPP
#define FLOWPLAN_QP_QPREFINE_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <vector>

#include "flowplan/core.hpp"
#include "flowplan/qp/admm.hpp"

namespace flowplan::qp {

/// Objective weights and feasibility limits of the refinement QP.
struct RefineWeights {
  double w_track{1.0};     // position tracking toward the sampled plan
  double w_terminal{10.0}; // extra tracking weight on the final point
  double w_smooth{5.0};    // squared second differences of positions
  double w_acc{50.0};      // quadratic penalty on acceleration slack
  double w_omega{50.0};    // quadratic penalty on angular-velocity slack
  double w_goal{100.0};    // quadratic penalty on goal slack
  double alpha_limit{3.0}; // [m/s^2] longitudinal acceleration bound
  double omega_limit{0.6}; // [rad/s] angular velocity bound
  double speed_floor{0.5}; // [m/s] denominator floor
};

/// First-order model of the finite-difference alpha/omega maps around a
/// reference position sequence. Speed denominators are frozen at their
/// (floored) reference values, so each row is affine in the triple
/// (p_k, p_{k+1}, p_{k+2}); row k evaluates exactly to the reference
/// alpha/omega at the reference points. For N reference points there are
/// N-2 rows (k = 0..N-3), aligned with kinematics().
struct LinearizedDynamics {
  Eigen::MatrixXd alpha_coeff;  // (N-2) x 6: d alpha / d(xk,yk,xk1,yk1,xk2,yk2)
  Eigen::VectorXd alpha_const;  // value when the triple is all zero
  Eigen::MatrixXd omega_coeff;
  Eigen::VectorXd omega_const;
  Eigen::VectorXd speed;        // frozen floored speeds, length N-2
};

LinearizedDynamics linearize(const std::vector<std::array<double, 2>>& reference, double dt,
                             double speed_floor = 0.5);

/// Half-open row span inside the stacked constraint matrix.
struct RowSpan {
  int begin{0};
  int count{0};
};

/// Convex QP in the form  min 0.5 x'Px + q'x + c  s.t.  l <= Ax <= u.
/// Variables: positions x0,y0,...,xT,yT (the current pose is variable 0/1,
/// pinned by an equality row pair), then per-step slacks [s_acc, s_omega]
/// for k = 1..T-2, then the two goal slacks. Constraints: the two pins,
/// 4(T-2) linearized limit rows (each pair shares one slack), 4 goal rows,
/// and nonnegativity of every slack.
struct QpProblem {
  int horizon{0};  // T
  Eigen::SparseMatrix<double> P;
  Eigen::VectorXd q;
  double objective_constant{0.0};
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  RowSpan pin_rows, limit_rows, goal_rows, slack_rows;

  int num_vars() const { return static_cast<int>(q.size()); }
  int num_constraints() const { return static_cast<int>(lower.size()); }
  int num_positions() const { return 2 * (horizon + 1); }
};

/// Builds the refinement QP around a reference plan of T future positions.
QpProblem build_qp(const std::array<double, 2>& current,
                   const std::vector<std::array<double, 2>>& plan, const GoalPose& goal,
                   double dt, const RefineWeights& weights = {});

/// Full quadratic objective including the constant term.
double objective_value(const QpProblem& qp, const Eigen::VectorXd& x);

/// Worst positive excess of the exact (nonlinear, re-floored) finite
/// difference kinematics over the limits, evaluated on current + plan.
struct ViolationSummary {
  double alpha{0.0};  // [m/s^2] max(0, |alpha_k| - alpha_limit) maximum
  double omega{0.0};  // [rad/s]
  double goal_distance{0.0};  // [m] endpoint distance to goal
};

ViolationSummary measure_violations(const std::array<double, 2>& current,
                                    const std::vector<std::array<double, 2>>& plan,
                                    const GoalPose& goal, double dt,
                                    const RefineWeights& weights = {});

struct RefinementReport {
  Trajectory refined;        // T states, forward-difference velocities
  bool converged{false};
  int iterations{0};
  double objective{0.0};     // value at the solution, constant included
  double max_shift{0.0};     // [m] largest positional change from the plan
  ViolationSummary before;
  ViolationSummary after;
};

/// Refines a sampled plan toward the goal under the linearized limits. The
/// current state pins the junction; the returned trajectory replaces the
/// plan's positions and recomputes forward-difference velocities (the last
/// state reuses the final difference).
RefinementReport refine(const Trajectory& plan, const AgentState& current, const GoalPose& goal,
                        const RefineWeights& weights = {}, const AdmmSettings& settings = {});

}  // namespace flowplan::qp

#endif  // FLOWPLAN_QP_QPREFINE_HPP
