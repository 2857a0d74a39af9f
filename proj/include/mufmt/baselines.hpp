#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "mufmt/forward.hpp"

namespace mufmt {

// Linear map C -> vec(M_hat) for fixed optical coefficients. Rows are ordered
// source-major: row(s, d) = s * n_det + d.
class JacobianModel {
public:
    enum class Mode { dense, implicit };

    // Dense storage is used when rows * N stays within `max_dense_entries`.
    static JacobianModel build(const ForwardOperator& op, std::size_t max_dense_entries = std::size_t{1} << 24);
    // Always dense; intended for small problems and tests.
    static JacobianModel from_matrix(Eigen::MatrixXd J);

    Mode mode() const { return mode_; }
    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& C) const;
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& m) const;
    // J^T J, N x N.
    Eigen::MatrixXd gram() const;
    // Dense copy of J regardless of mode.
    Eigen::MatrixXd to_dense() const;

private:
    Mode mode_ = Mode::dense;
    Eigen::Index rows_ = 0, cols_ = 0;
    Eigen::MatrixXd dense_;
    Eigen::MatrixXd phi_x_;  // N x n_src (implicit mode)
    Eigen::MatrixXd adj_p_;  // N x n_det (implicit mode)
};

Eigen::VectorXd flatten_measurements(const Eigen::MatrixXd& M);

struct SolveResult {
    Eigen::VectorXd C;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;  // residual norm (L2-CG) or objective (FISTA) per iteration
};

// (J^T J + alpha I) C = J^T m by the conjugate residual method, whose
// residual norm is non-increasing. Returns the best iterate when the cap is hit.
SolveResult solve_l2cg(const JacobianModel& J, const Eigen::VectorXd& m, double alpha, int iters, double rel_tol = 1e-8);
SolveResult solve_l2cg_normal(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double alpha, int iters,
                              double rel_tol = 1e-8);

// max(v - threshold, 0) elementwise: soft threshold followed by the non-negativity clamp.
Eigen::VectorXd prox_nonneg_l1(const Eigen::VectorXd& v, double threshold);

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
double power_iteration(const Eigen::MatrixXd& A, int iters = 200, double rel_tol = 1e-10);

// min |J C - m|^2 + lambda |C|_1 subject to C >= 0, monotone FISTA with
// step 1 / (2 L), L the power-iteration estimate of |J^T J| (inflated by 2%).
SolveResult solve_l1fista(const JacobianModel& J, const Eigen::VectorXd& m, double lambda, int iters,
                          double rel_tol = 1e-10);
SolveResult solve_l1fista_normal(const Eigen::MatrixXd& gram, const Eigen::VectorXd& Jtm, double m_sq, double lambda,
                                 int iters, double rel_tol = 1e-10);

enum class BaselineMethod { l2cg, l1fista };

struct BaselineResult {
    Eigen::VectorXd C;          // nodal field in M_real units
    SolveResult solve;
    double regularization = 0;  // absolute alpha (L2) or lambda (L1)
    double measurement_scale = 1;
};

// Fits M_real at the operator's coefficients. Measurements are normalized by
// their Frobenius norm; alpha = rel * trace(J^T J) / N for L2 and
// lambda = rel * 2 max(J^T m) for L1.
BaselineResult run_baseline(const ForwardOperator& op, const Eigen::MatrixXd& M_real, BaselineMethod method, double rel,
                            int iters);

}  // namespace mufmt
