// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/qp/qprefine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flowplan/qp/kinematics.hpp"

namespace flowplan::qp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

LinearizedDynamics linearize(const std::vector<std::array<double, 2>>& ref, double dt,
                             double speed_floor) {
  if (ref.size() < 3) throw std::invalid_argument("linearize: need at least 3 points");
  if (dt <= 0.0 || speed_floor <= 0.0) {
    throw std::invalid_argument("linearize: dt and speed_floor must be positive");
  }
  const int rows = static_cast<int>(ref.size()) - 2;
  LinearizedDynamics lin;
  lin.alpha_coeff.setZero(rows, 6);
  lin.alpha_const.setZero(rows);
  lin.omega_coeff.setZero(rows, 6);
  lin.omega_const.setZero(rows);
  lin.speed.setZero(rows);

  const double inv_dt = 1.0 / dt;
  const double inv_dt2 = inv_dt * inv_dt;
  for (int k = 0; k < rows; ++k) {
    const auto& p0 = ref[static_cast<std::size_t>(k)];
    const auto& p1 = ref[static_cast<std::size_t>(k) + 1];
    const auto& p2 = ref[static_cast<std::size_t>(k) + 2];
    const double vx = (p1[0] - p0[0]) * inv_dt, vy = (p1[1] - p0[1]) * inv_dt;
    const double ax = (p2[0] - 2.0 * p1[0] + p0[0]) * inv_dt2;
    const double ay = (p2[1] - 2.0 * p1[1] + p0[1]) * inv_dt2;
    const double s = std::max(std::hypot(vx, vy), speed_floor);
    lin.speed[k] = s;

    // alpha = (ax vx + ay vy) / s with s frozen: the numerator is bilinear in
    // the triple; expanding to first order keeps a(ref).v(p) + v(ref).a(p)
    // minus the reference cross term.
    // d vx/d(x0,x1) = (-1, 1)/dt;  d ax/d(x0,x1,x2) = (1, -2, 1)/dt^2
    const double sa = 1.0 / s;
    lin.alpha_coeff(k, 0) = (ax * -inv_dt + vx * inv_dt2) * sa;           // x0
    lin.alpha_coeff(k, 1) = (ay * -inv_dt + vy * inv_dt2) * sa;           // y0
    lin.alpha_coeff(k, 2) = (ax * inv_dt + vx * -2.0 * inv_dt2) * sa;     // x1
    lin.alpha_coeff(k, 3) = (ay * inv_dt + vy * -2.0 * inv_dt2) * sa;     // y1
    lin.alpha_coeff(k, 4) = (vx * inv_dt2) * sa;                          // x2
    lin.alpha_coeff(k, 5) = (vy * inv_dt2) * sa;                          // y2
    const double alpha_ref = (ax * vx + ay * vy) * sa;
    lin.alpha_const[k] = alpha_ref - (lin.alpha_coeff(k, 0) * p0[0] +
                                      lin.alpha_coeff(k, 1) * p0[1] +
                                      lin.alpha_coeff(k, 2) * p1[0] +
                                      lin.alpha_coeff(k, 3) * p1[1] +
                                      lin.alpha_coeff(k, 4) * p2[0] +
                                      lin.alpha_coeff(k, 5) * p2[1]);

    // omega = (vx ay - vy ax) / s^2 with s frozen:
    // dC = ay dvx + vx day - ax dvy - vy dax for C = vx ay - vy ax
    const double sw = 1.0 / (s * s);
    lin.omega_coeff(k, 0) = (ay * -inv_dt - vy * inv_dt2) * sw;           // x0
    lin.omega_coeff(k, 1) = (-ax * -inv_dt + vx * inv_dt2) * sw;          // y0
    lin.omega_coeff(k, 2) = (ay * inv_dt - vy * -2.0 * inv_dt2) * sw;     // x1
    lin.omega_coeff(k, 3) = (-ax * inv_dt + vx * -2.0 * inv_dt2) * sw;    // y1
    lin.omega_coeff(k, 4) = (-vy * inv_dt2) * sw;                         // x2
    lin.omega_coeff(k, 5) = (vx * inv_dt2) * sw;                          // y2
    const double omega_ref = (vx * ay - vy * ax) * sw;
    lin.omega_const[k] = omega_ref - (lin.omega_coeff(k, 0) * p0[0] +
                                      lin.omega_coeff(k, 1) * p0[1] +
                                      lin.omega_coeff(k, 2) * p1[0] +
                                      lin.omega_coeff(k, 3) * p1[1] +
                                      lin.omega_coeff(k, 4) * p2[0] +
                                      lin.omega_coeff(k, 5) * p2[1]);
  }
  return lin;
}

QpProblem build_qp(const std::array<double, 2>& current,
                   const std::vector<std::array<double, 2>>& plan, const GoalPose& goal,
                   double dt, const RefineWeights& w) {
  const int T = static_cast<int>(plan.size());
  if (T < 4) throw std::invalid_argument("build_qp: plan needs at least 4 points");

  std::vector<std::array<double, 2>> ref;
  ref.reserve(static_cast<std::size_t>(T) + 1);
  ref.push_back(current);
  ref.insert(ref.end(), plan.begin(), plan.end());
  const LinearizedDynamics lin = linearize(ref, dt, w.speed_floor);

  const int num_pos = 2 * (T + 1);
  const int num_steps = T - 2;              // constrained triples k = 1..T-2
  const int num_slack = 2 * num_steps + 2;  // [s_acc, s_omega] per step + goal x/y
  const int n = num_pos + num_slack;
  const int m = 2 + 4 * num_steps + 4 + num_slack;

  QpProblem qp;
  qp.horizon = T;
  qp.q.setZero(n);
  qp.lower.setZero(m);
  qp.upper.setZero(m);

  const auto px = [](int k) { return 2 * k; };
  const auto py = [](int k) { return 2 * k + 1; };
  const auto slack_acc = [&](int k) { return num_pos + 2 * (k - 1); };      // k = 1..T-2
  const auto slack_omega = [&](int k) { return num_pos + 2 * (k - 1) + 1; };
  const int slack_goal_x = num_pos + 2 * num_steps;
  const int slack_goal_y = slack_goal_x + 1;

  // objective: tracking + terminal + smoothness + slack penalties
  std::vector<Eigen::Triplet<double>> pt;
  auto add_p = [&](int i, int j, double v) {
    pt.emplace_back(i, j, v);
    if (i != j) pt.emplace_back(j, i, v);
  };
  double constant = 0.0;
  for (int k = 1; k <= T; ++k) {
    const double wk = (k == T) ? w.w_track + w.w_terminal : w.w_track;
    add_p(px(k), px(k), 2.0 * wk);
    add_p(py(k), py(k), 2.0 * wk);
    qp.q[px(k)] += -2.0 * wk * ref[static_cast<std::size_t>(k)][0];
    qp.q[py(k)] += -2.0 * wk * ref[static_cast<std::size_t>(k)][1];
    constant += wk * (ref[static_cast<std::size_t>(k)][0] * ref[static_cast<std::size_t>(k)][0] +
                      ref[static_cast<std::size_t>(k)][1] * ref[static_cast<std::size_t>(k)][1]);
  }
  // smoothness over every triple, junction included
  const double ws2 = 2.0 * w.w_smooth;
  for (int k = 0; k + 2 <= T; ++k) {
    const int idx[3] = {k, k + 1, k + 2};
    const double coef[3] = {1.0, -2.0, 1.0};
    for (int a = 0; a < 3; ++a) {
      for (int b = a; b < 3; ++b) {
        add_p(px(idx[a]), px(idx[b]), ws2 * coef[a] * coef[b]);
        add_p(py(idx[a]), py(idx[b]), ws2 * coef[a] * coef[b]);
      }
    }
  }
  for (int k = 1; k <= num_steps; ++k) {
    add_p(slack_acc(k), slack_acc(k), 2.0 * w.w_acc);
    add_p(slack_omega(k), slack_omega(k), 2.0 * w.w_omega);
  }
  add_p(slack_goal_x, slack_goal_x, 2.0 * w.w_goal);
  add_p(slack_goal_y, slack_goal_y, 2.0 * w.w_goal);
  qp.P.resize(n, n);
  qp.P.setFromTriplets(pt.begin(), pt.end());
  qp.objective_constant = constant;

  // constraints
  std::vector<Eigen::Triplet<double>> at;
  int row = 0;
  qp.pin_rows = {row, 2};
  at.emplace_back(row, px(0), 1.0);
  qp.lower[row] = qp.upper[row] = current[0];
  ++row;
  at.emplace_back(row, py(0), 1.0);
  qp.lower[row] = qp.upper[row] = current[1];
  ++row;

  qp.limit_rows = {row, 4 * num_steps};
  for (int k = 1; k <= num_steps; ++k) {
    const int cols[6] = {px(k), py(k), px(k + 1), py(k + 1), px(k + 2), py(k + 2)};
    // +alpha and -alpha share the acceleration slack
    for (int sgn : {+1, -1}) {
      for (int c = 0; c < 6; ++c) at.emplace_back(row, cols[c], sgn * lin.alpha_coeff(k, c));
      at.emplace_back(row, slack_acc(k), -1.0);
      qp.lower[row] = -kInf;
      qp.upper[row] = w.alpha_limit - sgn * lin.alpha_const[k];
      ++row;
    }
    for (int sgn : {+1, -1}) {
      for (int c = 0; c < 6; ++c) at.emplace_back(row, cols[c], sgn * lin.omega_coeff(k, c));
      at.emplace_back(row, slack_omega(k), -1.0);
      qp.lower[row] = -kInf;
      qp.upper[row] = w.omega_limit - sgn * lin.omega_const[k];
      ++row;
    }
  }

  qp.goal_rows = {row, 4};
  for (int sgn : {+1, -1}) {
    at.emplace_back(row, px(T), sgn * 1.0);
    at.emplace_back(row, slack_goal_x, -1.0);
    qp.lower[row] = -kInf;
    qp.upper[row] = sgn * goal.x;
    ++row;
  }
  for (int sgn : {+1, -1}) {
    at.emplace_back(row, py(T), sgn * 1.0);
    at.emplace_back(row, slack_goal_y, -1.0);
    qp.lower[row] = -kInf;
    qp.upper[row] = sgn * goal.y;
    ++row;
  }

  qp.slack_rows = {row, num_slack};
  for (int s = 0; s < num_slack; ++s) {
    at.emplace_back(row, num_pos + s, 1.0);
    qp.lower[row] = 0.0;
    qp.upper[row] = kInf;
    ++row;
  }

  qp.A.resize(m, n);
  qp.A.setFromTriplets(at.begin(), at.end());
  return qp;
}

double objective_value(const QpProblem& qp, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(qp.P * x) + qp.q.dot(x) + qp.objective_constant;
}

ViolationSummary measure_violations(const std::array<double, 2>& current,
                                    const std::vector<std::array<double, 2>>& plan,
                                    const GoalPose& goal, double dt, const RefineWeights& w) {
  std::vector<std::array<double, 2>> pts;
  pts.reserve(plan.size() + 1);
  pts.push_back(current);
  pts.insert(pts.end(), plan.begin(), plan.end());
  const KinematicProfile prof = kinematics(pts, dt, w.speed_floor);
  ViolationSummary v;
  // the junction triple is fixed by history; only fully planned triples count
  for (std::size_t k = 1; k < prof.alpha.size(); ++k) {
    v.alpha = std::max(v.alpha, std::abs(prof.alpha[k]) - w.alpha_limit);
    v.omega = std::max(v.omega, std::abs(prof.omega[k]) - w.omega_limit);
  }
  v.alpha = std::max(0.0, v.alpha);
  v.omega = std::max(0.0, v.omega);
  v.goal_distance = std::hypot(plan.back()[0] - goal.x, plan.back()[1] - goal.y);
  return v;
}

RefinementReport refine(const Trajectory& plan, const AgentState& current, const GoalPose& goal,
                        const RefineWeights& w, const AdmmSettings& settings) {
  const int T = static_cast<int>(plan.states.size());
  if (T < 4) throw std::invalid_argument("refine: plan needs at least 4 states");
  if (plan.dt <= 0.0) throw std::invalid_argument("refine: plan.dt must be positive");

  std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    pts[static_cast<std::size_t>(k)] = {plan.states[static_cast<std::size_t>(k)].x,
                                        plan.states[static_cast<std::size_t>(k)].y};
  }
  const std::array<double, 2> cur{current.x, current.y};
  QpProblem qp = build_qp(cur, pts, goal, plan.dt, w);

  // warm start at the reference with slacks absorbing initial violations
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(qp.num_vars());
  x0[0] = cur[0];
  x0[1] = cur[1];
  for (int k = 0; k < T; ++k) {
    x0[2 * (k + 1)] = pts[static_cast<std::size_t>(k)][0];
    x0[2 * (k + 1) + 1] = pts[static_cast<std::size_t>(k)][1];
  }
  // warm-start slacks absorb the linearized violations at the reference
  {
    const LinearizedDynamics lin = [&] {
      std::vector<std::array<double, 2>> ref;
      ref.push_back(cur);
      ref.insert(ref.end(), pts.begin(), pts.end());
      return linearize(ref, plan.dt, w.speed_floor);
    }();
    const int num_pos = qp.num_positions();
    for (int k = 1; k <= T - 2; ++k) {
      const double a = lin.alpha_const[k] + lin.alpha_coeff.row(k).dot(
          (Eigen::VectorXd(6) << x0[2 * k], x0[2 * k + 1], x0[2 * k + 2], x0[2 * k + 3],
           x0[2 * k + 4], x0[2 * k + 5]).finished());
      const double o = lin.omega_const[k] + lin.omega_coeff.row(k).dot(
          (Eigen::VectorXd(6) << x0[2 * k], x0[2 * k + 1], x0[2 * k + 2], x0[2 * k + 3],
           x0[2 * k + 4], x0[2 * k + 5]).finished());
      x0[num_pos + 2 * (k - 1)] = std::max(0.0, std::abs(a) - w.alpha_limit);
      x0[num_pos + 2 * (k - 1) + 1] = std::max(0.0, std::abs(o) - w.omega_limit);
    }
    x0[num_pos + 2 * (T - 2)] = std::abs(pts.back()[0] - goal.x);
    x0[num_pos + 2 * (T - 2) + 1] = std::abs(pts.back()[1] - goal.y);
  }

  const AdmmResult sol = solve_qp(qp.P, qp.q, qp.A, qp.lower, qp.upper, settings, &x0);

  RefinementReport rep;
  rep.converged = sol.converged;
  rep.iterations = sol.iterations;

  std::vector<std::array<double, 2>> refined_pts(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    refined_pts[static_cast<std::size_t>(k)] = {sol.x[2 * (k + 1)], sol.x[2 * (k + 1) + 1]};
  }

  // slacks live in [0, inf); solver tolerance can leave them a hair negative,
  // clipping only loosens constraints that already hold
  Eigen::VectorXd xeval = sol.x;
  for (int s = qp.num_positions(); s < qp.num_vars(); ++s) xeval[s] = std::max(0.0, xeval[s]);
  rep.objective = objective_value(qp, xeval);

  rep.before = measure_violations(cur, pts, goal, plan.dt, w);
  rep.after = measure_violations(cur, refined_pts, goal, plan.dt, w);
  for (int k = 0; k < T; ++k) {
    rep.max_shift = std::max(
        rep.max_shift, std::hypot(refined_pts[static_cast<std::size_t>(k)][0] -
                                      pts[static_cast<std::size_t>(k)][0],
                                  refined_pts[static_cast<std::size_t>(k)][1] -
                                      pts[static_cast<std::size_t>(k)][1]));
  }

  rep.refined.dt = plan.dt;
  rep.refined.states.resize(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    auto& s = rep.refined.states[static_cast<std::size_t>(k)];
    s.x = refined_pts[static_cast<std::size_t>(k)][0];
    s.y = refined_pts[static_cast<std::size_t>(k)][1];
    const auto& nxt = refined_pts[static_cast<std::size_t>(std::min(k + 1, T - 1))];
    const auto& prv = refined_pts[static_cast<std::size_t>(std::max(k - 1, 0))];
    if (k + 1 < T) {
      s.vx = (nxt[0] - s.x) / plan.dt;
      s.vy = (nxt[1] - s.y) / plan.dt;
    } else {
      s.vx = (s.x - prv[0]) / plan.dt;
      s.vy = (s.y - prv[1]) / plan.dt;
    }
  }
  return rep;
}

}  // namespace flowplan::qp
