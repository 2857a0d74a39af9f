#include "mufmt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mufmt {

JacobianModel JacobianModel::build(const ForwardOperator& op, std::size_t max_dense_entries)
{
    JacobianModel j;
    const Eigen::MatrixXd& phi = op.excitation();
    const Eigen::MatrixXd& adj = op.detector_adjoint();
    const Eigen::Index ns = phi.cols(), nd = adj.cols(), n = phi.rows();
    j.rows_ = ns * nd;
    j.cols_ = n;
    if (static_cast<double>(j.rows_) * static_cast<double>(n) <= static_cast<double>(max_dense_entries)) {
        j.mode_ = Mode::dense;
        j.dense_.resize(j.rows_, n);
        for (Eigen::Index s = 0; s < ns; ++s)
            for (Eigen::Index d = 0; d < nd; ++d)
                j.dense_.row(s * nd + d) = (adj.col(d).array() * phi.col(s).array()).transpose();
    } else {
        j.mode_ = Mode::implicit;
        j.phi_x_ = phi;
        j.adj_p_ = adj;
    }
    return j;
}

JacobianModel JacobianModel::from_matrix(Eigen::MatrixXd J)
{
    JacobianModel j;
    j.mode_ = Mode::dense;
    j.rows_ = J.rows();
    j.cols_ = J.cols();
    j.dense_ = std::move(J);
    return j;
}

Eigen::VectorXd flatten_measurements(const Eigen::MatrixXd& M)
{
    Eigen::VectorXd out(M.size());
    for (Eigen::Index s = 0; s < M.rows(); ++s)
        for (Eigen::Index d = 0; d < M.cols(); ++d) out[s * M.cols() + d] = M(s, d);
    return out;
}

Eigen::VectorXd JacobianModel::apply(const Eigen::VectorXd& C) const
{
    if (C.size() != cols_) throw std::invalid_argument("JacobianModel::apply: wrong field length");
    if (mode_ == Mode::dense) return dense_ * C;
    // M = (Phi_x .* C)^T adj
    Eigen::MatrixXd M = (phi_x_.array().colwise() * C.array()).matrix().transpose() * adj_p_;
    return flatten_measurements(M);
}

Eigen::VectorXd JacobianModel::apply_transpose(const Eigen::VectorXd& m) const
{
    if (m.size() != rows_) throw std::invalid_argument("JacobianModel::apply_transpose: wrong data length");
    if (mode_ == Mode::dense) return dense_.transpose() * m;
    const Eigen::Index ns = phi_x_.cols(), nd = adj_p_.cols();
    Eigen::MatrixXd R(ns, nd);
    for (Eigen::Index s = 0; s < ns; ++s)
        for (Eigen::Index d = 0; d < nd; ++d) R(s, d) = m[s * nd + d];
    return ((adj_p_ * R.transpose()).array() * phi_x_.array()).rowwise().sum();
}

Eigen::MatrixXd JacobianModel::gram() const
{
    if (mode_ == Mode::dense) {
        Eigen::MatrixXd g(cols_, cols_);
        g.setZero();
        g.selfadjointView<Eigen::Lower>().rankUpdate(dense_.transpose());
        return g.selfadjointView<Eigen::Lower>();
    }
    // J^T J = (A A^T) .* (Phi Phi^T) for rows formed as Hadamard products.
    Eigen::MatrixXd ga(cols_, cols_), gp(cols_, cols_);
    ga.setZero();
    gp.setZero();
    ga.selfadjointView<Eigen::Lower>().rankUpdate(adj_p_);
    gp.selfadjointView<Eigen::Lower>().rankUpdate(phi_x_);
    Eigen::MatrixXd g = ga.triangularView<Eigen::Lower>();
    g.array() *= gp.array();
    return g.selfadjointView<Eigen::Lower>();
}

Eigen::MatrixXd JacobianModel::to_dense() const
{
    if (mode_ == Mode::dense) return dense_;
    Eigen::MatrixXd out(rows_, cols_);
    const Eigen::Index ns = phi_x_.cols(), nd = adj_p_.cols();
    for (Eigen::Index s = 0; s < ns; ++s)
        for (Eigen::Index d = 0; d < nd; ++d)
            out.row(s * nd + d) = (adj_p_.col(d).array() * phi_x_.col(s).array()).transpose();
    return out;
}

SolveResult solve_l2cg_normal(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double alpha, int iters,
                              double rel_tol)
{
    if (!(alpha > 0.0)) throw std::invalid_argument("solve_l2cg: alpha must be positive");
    if (gram.rows() != gram.cols() || gram.rows() != rhs.size()) throw std::invalid_argument("solve_l2cg: shape mismatch");
    auto A = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd { return gram * v + alpha * v; };

    SolveResult out;
    const Eigen::Index n = rhs.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n), r = rhs, p = r;
    Eigen::VectorXd Ar = A(r), Ap = Ar;
    double rAr = r.dot(Ar);
    const double bnorm = rhs.norm();
    out.C = x;
    double best = bnorm;
    out.history.push_back(bnorm);
    if (bnorm == 0.0) {
        out.converged = true;
        return out;
    }
    for (int k = 1; k <= iters; ++k) {
        double ApAp = Ap.squaredNorm();
        if (!(ApAp > 0.0)) break;
        double a = rAr / ApAp;
        x += a * p;
        r -= a * Ap;
        double rn = r.norm();
        out.history.push_back(rn);
        out.iterations = k;
        if (rn <= best) {
            best = rn;
            out.C = x;
        }
        if (rn <= rel_tol * bnorm) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd Ar_new = A(r);
        double rAr_new = r.dot(Ar_new);
        double beta = rAr_new / rAr;
        rAr = rAr_new;
        p = r + beta * p;
        Ap = Ar_new + beta * Ap;
    }
    return out;
}

SolveResult solve_l2cg(const JacobianModel& J, const Eigen::VectorXd& m, double alpha, int iters, double rel_tol)
{
    return solve_l2cg_normal(J.gram(), J.apply_transpose(m), alpha, iters, rel_tol);
}

Eigen::VectorXd prox_nonneg_l1(const Eigen::VectorXd& v, double threshold)
{
    return (v.array() - threshold).max(0.0);
}

double power_iteration(const Eigen::MatrixXd& A, int iters, double rel_tol)
{
    if (A.rows() != A.cols() || A.rows() == 0) throw std::invalid_argument("power_iteration: matrix must be square");
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    Eigen::VectorXd v(A.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    v.normalize();
    double lambda = 0.0;
    for (int k = 0; k < iters; ++k) {
        Eigen::VectorXd w = A * v;
        double nw = w.norm();
        if (!std::isfinite(nw)) throw std::runtime_error("power_iteration: non-finite iterate");
        if (nw == 0.0) return 0.0;
        double next = v.dot(w);
        v = w / nw;
        if (k > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) return next;
        lambda = next;
    }
    return lambda;
}

SolveResult solve_l1fista_normal(const Eigen::MatrixXd& gram, const Eigen::VectorXd& Jtm, double m_sq, double lambda,
                                 int iters, double rel_tol)
{
    if (!(lambda >= 0.0)) throw std::invalid_argument("solve_l1fista: lambda must be non-negative");
    if (gram.rows() != gram.cols() || gram.rows() != Jtm.size()) throw std::invalid_argument("solve_l1fista: shape mismatch");
    double lmax = power_iteration(gram);
    if (!(lmax > 0.0) || !std::isfinite(lmax)) throw std::runtime_error("solve_l1fista: could not estimate step size");
    const double L = 2.0 * lmax * 1.02;

    // |J x - m|^2 = x^T G x - 2 x^T J^T m + |m|^2
    auto objective = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& Gx) {
        return x.dot(Gx) - 2.0 * x.dot(Jtm) + m_sq + lambda * x.sum();
    };

    SolveResult out;
    const Eigen::Index n = Jtm.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n), x_prev = x, y = x;
    Eigen::VectorXd Gx = Eigen::VectorXd::Zero(n), Gx_prev = Gx, Gy = Gx;
    double fx = objective(x, Gx);
    out.history.push_back(fx);
    double t = 1.0;
    for (int k = 1; k <= iters; ++k) {
        Eigen::VectorXd z = prox_nonneg_l1(y - (2.0 / L) * (Gy - Jtm), lambda / L);
        Eigen::VectorXd Gz = gram * z;
        double fz = objective(z, Gz);
        x_prev = x;
        Gx_prev = Gx;
        bool accepted = fz <= fx;
        if (accepted) {
            x = z;
            Gx = Gz;
            fx = fz;
        }
        double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
        Gy = Gx + (t / t_next) * (Gz - Gx) + ((t - 1.0) / t_next) * (Gx - Gx_prev);
        t = t_next;
        out.history.push_back(fx);
        out.iterations = k;
        if (accepted && (x - x_prev).norm() <= rel_tol * std::max(x.norm(), 1e-300)) {
            out.converged = true;
            break;
        }
    }
    out.C = x;
    return out;
}

SolveResult solve_l1fista(const JacobianModel& J, const Eigen::VectorXd& m, double lambda, int iters, double rel_tol)
{
    return solve_l1fista_normal(J.gram(), J.apply_transpose(m), m.squaredNorm(), lambda, iters, rel_tol);
}

BaselineResult run_baseline(const ForwardOperator& op, const Eigen::MatrixXd& M_real, BaselineMethod method, double rel,
                            int iters)
{
    const double norm = M_real.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("measurements are identically zero");
    BaselineResult out;
    out.measurement_scale = 1.0 / norm;
    JacobianModel J = JacobianModel::build(op);
    Eigen::VectorXd m = flatten_measurements(M_real) * out.measurement_scale;
    Eigen::MatrixXd G = J.gram();
    Eigen::VectorXd Jtm = J.apply_transpose(m);
    if (method == BaselineMethod::l2cg) {
        out.regularization = rel * G.trace() / static_cast<double>(G.rows());
        out.solve = solve_l2cg_normal(G, Jtm, out.regularization, iters);
    } else {
        out.regularization = std::max(rel * 2.0 * Jtm.maxCoeff(), 0.0);
        out.solve = solve_l1fista_normal(G, Jtm, m.squaredNorm(), out.regularization, iters);
    }
    out.C = out.solve.C / out.measurement_scale;
    return out;
}

}  // namespace mufmt
