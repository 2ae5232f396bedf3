// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_TESTS_SUPPORT_QP_ORACLE_HPP
#define FLOWPLAN_TESTS_SUPPORT_QP_ORACLE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "flowplan/io/rng.hpp"

namespace qp_oracle {

/// Reference solver for  min 0.5 x'Px + q'x  s.t.  l <= Ax <= u  with dense
/// strictly convex P: accelerated projected gradient ascent on the split dual
///   max_{y+,y- >= 0}  -0.5 s'P^{-1}s - u'y+ + l'y-,   s = q + A'(y+ - y-).
/// Independent of the production solver; slow but dependable.
inline Eigen::VectorXd solve(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                             const Eigen::MatrixXd& A, const Eigen::VectorXd& l,
                             const Eigen::VectorXd& u, int max_iterations = 60000,
                             double tol = 1e-11) {
  const int m = static_cast<int>(A.rows());
  Eigen::LLT<Eigen::MatrixXd> chol(P);

  // gradient Lipschitz constant of the split dual: 2 lambda_max(A P^-1 A')
  Eigen::MatrixXd dual_hess = A * chol.solve(A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dual_hess);
  const double lip = 2.0 * std::max(eig.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / lip;

  // duals for rows with infinite bounds stay pinned at zero
  Eigen::ArrayXd up_mask(m), lo_mask(m);
  for (int i = 0; i < m; ++i) {
    up_mask[i] = std::isfinite(u[i]) ? 1.0 : 0.0;
    lo_mask[i] = std::isfinite(l[i]) ? 1.0 : 0.0;
  }
  const Eigen::VectorXd u0 = u.array().isFinite().select(u, 0.0);
  const Eigen::VectorXd l0 = l.array().isFinite().select(l, 0.0);

  Eigen::VectorXd yp = Eigen::VectorXd::Zero(m), ym = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd vp = yp, vm = ym;  // momentum points
  Eigen::VectorXd x_prev = Eigen::VectorXd::Constant(P.rows(), 1e30);
  double t_mom = 1.0;

  Eigen::VectorXd x;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::VectorXd s = q + A.transpose() * (vp - vm);
    x = -chol.solve(s);
    const Eigen::VectorXd ax = A * x;
    Eigen::VectorXd yp_new =
        ((vp + step * (ax - u0)).array() * up_mask).max(0.0).matrix();
    Eigen::VectorXd ym_new =
        ((vm + step * (l0 - ax)).array() * lo_mask).max(0.0).matrix();

    // gradient-based restart: drop momentum when it opposes the new step
    const Eigen::VectorXd dyp = yp_new - yp, dym = ym_new - ym;
    if ((vp - yp_new).dot(dyp) + (vm - ym_new).dot(dym) > 0.0) {
      vp = yp_new;
      vm = ym_new;
      t_mom = 1.0;
    } else {
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
      const double beta = (t_mom - 1.0) / t_new;
      vp = yp_new + beta * dyp;
      vm = ym_new + beta * dym;
      t_mom = t_new;
    }
    yp = yp_new;
    ym = ym_new;

    if (it % 250 == 249) {
      const Eigen::VectorXd xe = -chol.solve(q + A.transpose() * (yp - ym));
      if ((xe - x_prev).cwiseAbs().maxCoeff() < tol) {
        x = xe;
        break;
      }
      x_prev = xe;
    }
  }
  return -chol.solve(q + A.transpose() * (yp - ym));
}

struct RandomQp {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l, u;
};

/// Strictly convex QP with a guaranteed interior-ish feasible point; rows mix
/// equalities, two-sided, and one-sided constraints.
inline RandomQp random_qp(flowplan::Rng& rng, int n, int m) {
  const double inf = std::numeric_limits<double>::infinity();
  RandomQp qp;
  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
  }
  qp.P = B.transpose() * B / n + 0.5 * Eigen::MatrixXd::Identity(n, n);
  qp.q.resize(n);
  for (int i = 0; i < n; ++i) qp.q[i] = rng.normal();
  qp.A.resize(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) qp.A(i, j) = rng.normal() / std::sqrt(n);
  }
  Eigen::VectorXd anchor(n);
  for (int i = 0; i < n; ++i) anchor[i] = rng.normal();
  const Eigen::VectorXd c = qp.A * anchor;
  qp.l.resize(m);
  qp.u.resize(m);
  for (int i = 0; i < m; ++i) {
    const double kind = rng.uniform();
    if (kind < 0.2) {
      qp.l[i] = qp.u[i] = c[i];
    } else if (kind < 0.6) {
      qp.l[i] = c[i] - rng.uniform(0.1, 2.0);
      qp.u[i] = c[i] + rng.uniform(0.1, 2.0);
    } else if (kind < 0.8) {
      qp.l[i] = -inf;
      qp.u[i] = c[i] + rng.uniform(0.05, 1.0);
    } else {
      qp.l[i] = c[i] - rng.uniform(0.05, 1.0);
      qp.u[i] = inf;
    }
  }
  return qp;
}

}  // namespace qp_oracle

#endif  // FLOWPLAN_TESTS_SUPPORT_QP_ORACLE_HPP
