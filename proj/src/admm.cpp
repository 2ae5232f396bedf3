// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#include "flowplan/qp/admm.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace flowplan::qp {

namespace {

// Row equilibration of A: e_i = 1 / max(1e-6, ||A_i||_inf), so scaled rows
// have infinity norm at most one.
Eigen::VectorXd row_scales(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd norms = Eigen::VectorXd::Zero(A.rows());
  for (int k = 0; k < A.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
      norms[it.row()] = std::max(norms[it.row()], std::abs(it.value()));
    }
  }
  return norms.unaryExpr([](double n) { return 1.0 / std::max(n, 1e-6); });
}

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

double scaled_bound(double b, double e) {
  return std::isfinite(b) ? b * e : b;  // infinities survive scaling
}

}  // namespace

AdmmResult solve_qp(const Eigen::SparseMatrix<double>& P, const Eigen::VectorXd& q,
                    const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, const AdmmSettings& st,
                    const Eigen::VectorXd* x0) {
  const int n = static_cast<int>(P.rows());
  const int m = static_cast<int>(A.rows());
  if (P.cols() != n || A.cols() != n || q.size() != n || lower.size() != m ||
      upper.size() != m) {
    throw std::invalid_argument("solve_qp: inconsistent problem dimensions");
  }
  for (int i = 0; i < m; ++i) {
    if (lower[i] > upper[i]) throw std::invalid_argument("solve_qp: lower bound above upper");
  }

  // scale rows of A to unit infinity norm; bounds and duals scale with them
  const Eigen::VectorXd e = row_scales(A);
  Eigen::SparseMatrix<double> As = e.asDiagonal() * A;
  Eigen::VectorXd ls(m), us(m);
  std::vector<bool> is_eq(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    ls[i] = scaled_bound(lower[i], e[i]);
    us[i] = scaled_bound(upper[i], e[i]);
    is_eq[static_cast<std::size_t>(i)] = std::isfinite(lower[i]) && std::isfinite(upper[i]) &&
                                         upper[i] - lower[i] < 1e-12;
  }

  double rho_base = st.rho;
  Eigen::VectorXd rho(m);
  auto fill_rho = [&] {
    for (int i = 0; i < m; ++i) {
      rho[i] = rho_base * (is_eq[static_cast<std::size_t>(i)] ? st.rho_eq_scale : 1.0);
    }
  };
  fill_rho();

  // KKT = [P + sigma I, As'; As, -diag(1/rho)]; the pattern is factored once,
  // numeric refactorization reruns when rho adapts
  Eigen::SparseMatrix<double> kkt(n + m, n + m);
  auto assemble = [&] {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(P.nonZeros() + 2 * As.nonZeros() + n + m));
    for (int k = 0; k < P.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(P, k); it; ++it) {
        trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, st.sigma);
    for (int k = 0; k < As.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(As, k); it; ++it) {
        trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                           it.value());
        trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                           it.value());
      }
    }
    for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0 / rho[i]);
    kkt.setFromTriplets(trips.begin(), trips.end());
  };
  assemble();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.analyzePattern(kkt);
  ldlt.factorize(kkt);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("solve_qp: KKT factorization failed");
  }

  Eigen::VectorXd x = (x0 && x0->size() == n) ? *x0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = (As * x).cwiseMax(ls).cwiseMin(us);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  AdmmResult res;
  Eigen::VectorXd rhs(n + m), xz(n + m), ztilde(m), zcand(m);

  // residuals, tolerances, and the rho rescaling ratio, all in unscaled units
  auto check = [&](double& prim, double& dual, double& prim_tol, double& dual_tol,
                   double& ratio) {
    const Eigen::VectorXd ax = A * x;
    const Eigen::VectorXd zu = e.cwiseInverse().asDiagonal() * z;
    const Eigen::VectorXd yu = e.asDiagonal() * y;
    const Eigen::VectorXd px = P * x;
    const Eigen::VectorXd aty = A.transpose() * yu;
    prim = inf_norm(ax - zu);
    dual = inf_norm(px + q + aty);
    const double prim_scale = std::max({inf_norm(ax), inf_norm(zu), 1e-12});
    const double dual_scale = std::max({inf_norm(px), inf_norm(q), inf_norm(aty), 1e-12});
    prim_tol = st.eps_abs + st.eps_rel * prim_scale;
    dual_tol = st.eps_abs + st.eps_rel * dual_scale;
    ratio = std::sqrt((prim / prim_scale) / std::max(dual / dual_scale, 1e-16));
  };

  int it = 0;
  for (; it < st.max_iterations; ++it) {
    rhs.head(n) = st.sigma * x - q;
    rhs.tail(m) = z - y.cwiseQuotient(rho);
    xz = ldlt.solve(rhs);
    const auto xtilde = xz.head(n);
    ztilde = z + (xz.tail(m) - y).cwiseQuotient(rho);

    x = st.relax_alpha * xtilde + (1.0 - st.relax_alpha) * x;
    zcand = st.relax_alpha * ztilde + (1.0 - st.relax_alpha) * z;
    Eigen::VectorXd z_new = (zcand + y.cwiseQuotient(rho)).cwiseMax(ls).cwiseMin(us);
    y += rho.cwiseProduct(zcand - z_new);
    z = z_new;

    if ((it + 1) % st.check_every == 0) {
      double prim = 0.0, dual = 0.0, prim_tol = 0.0, dual_tol = 0.0, ratio = 1.0;
      check(prim, dual, prim_tol, dual_tol, ratio);
      if (prim <= prim_tol && dual <= dual_tol) {
        res.converged = true;
        res.primal_residual = prim;
        res.dual_residual = dual;
        ++it;
        break;
      }
      // residual imbalance: rescale rho and refactor; the sparsity pattern is
      // unchanged, only the lower-right diagonal moves
      if (ratio > 5.0 || ratio < 0.2) {
        rho_base = std::clamp(rho_base * ratio, 1e-6, 1e6);
        fill_rho();
        for (int i = 0; i < m; ++i) kkt.coeffRef(n + i, n + i) = -1.0 / rho[i];
        ldlt.factorize(kkt);
        if (ldlt.info() != Eigen::Success) {
          throw std::runtime_error("solve_qp: KKT refactorization failed");
        }
      }
    }
  }
  if (!res.converged) {
    double pt = 0.0, dt_ = 0.0, ratio = 1.0;
    check(res.primal_residual, res.dual_residual, pt, dt_, ratio);
  }

  res.x = x;
  res.z = e.cwiseInverse().asDiagonal() * z;
  res.y = e.asDiagonal() * y;
  res.iterations = it;
  return res;
}

}  // namespace flowplan::qp
