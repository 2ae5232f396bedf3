// Copyright 2026 the flowplan authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FLOWPLAN_QP_ADMM_HPP
#define FLOWPLAN_QP_ADMM_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace flowplan::qp {

/// Operator-splitting solver settings for  min 0.5 x'Px + q'x,
/// l <= Ax <= u. Rows with l == u are treated as equalities and get a
/// stiffer penalty (rho * rho_eq_scale).
struct AdmmSettings {
  double sigma{1e-6};        // x-regularization of the KKT system
  double rho{0.1};           // constraint penalty
  double rho_eq_scale{1e3};  // extra penalty factor on equality rows
  double relax_alpha{1.6};   // over-relaxation
  double eps_abs{1e-6};
  double eps_rel{1e-6};
  int max_iterations{4000};
  int check_every{25};
};

struct AdmmResult {
  Eigen::VectorXd x;  // primal solution
  Eigen::VectorXd z;  // constraint-space copy, inside [l, u]
  Eigen::VectorXd y;  // dual for l <= Ax <= u
  int iterations{0};
  bool converged{false};
  double primal_residual{0.0};  // ||Ax - z||_inf, unscaled
  double dual_residual{0.0};    // ||Px + q + A'y||_inf, unscaled
};

/// Solves the QP. P must hold the full symmetric matrix (both triangles).
/// x0 warm-starts the primal iterate when its size matches.
AdmmResult solve_qp(const Eigen::SparseMatrix<double>& P, const Eigen::VectorXd& q,
                    const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& lower,
                    const Eigen::VectorXd& upper, const AdmmSettings& settings = {},
                    const Eigen::VectorXd* x0 = nullptr);

}  // namespace flowplan::qp

#endif  // FLOWPLAN_QP_ADMM_HPP
