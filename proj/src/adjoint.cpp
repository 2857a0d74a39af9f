#include "mufmt/adjoint.hpp"

#include <stdexcept>

namespace mufmt {

LossResidual loss_and_residual(const Eigen::MatrixXd& M_hat, const Eigen::MatrixXd& M_real)
{
    if (M_hat.rows() != M_real.rows() || M_hat.cols() != M_real.cols())
        throw std::invalid_argument("loss_and_residual: shape mismatch");
    LossResidual out;
    out.R = 2.0 * (M_hat - M_real);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < M_hat.cols(); ++j)
        for (Eigen::Index i = 0; i < M_hat.rows(); ++i) {
            double d = M_hat(i, j) - M_real(i, j);
            sum += d * d;
        }
    out.loss = sum;
    return out;
}

namespace {

void mu_gradients(GradientBundle& g, const Factorization& fact, const PhotonFields& fields, const Eigen::VectorXd& C,
                  const Eigen::MatrixXd& lambda_m, const SystemMatrices& sys, const OpticalParams& p)
{
    Eigen::MatrixXd rhs = lambda_m.array().colwise() * C.array();
    Eigen::MatrixXd lambda_x = fact.solve(rhs);

    auto [aa, ad] = d_S_d_mu_coefficients(p, OpticalParam::mu_a);
    auto [sa, sd] = d_S_d_mu_coefficients(p, OpticalParam::mu_s_prime);

    // Both derivatives share Sa phi and Sd phi; evaluate them once.
    Eigen::MatrixXd sa_m = sys.Sa * fields.phi_m, sd_m = sys.Sd * fields.phi_m;
    Eigen::MatrixXd sa_x = sys.Sa * fields.phi_x, sd_x = sys.Sd * fields.phi_x;
    double em_a = (lambda_m.array() * sa_m.array()).sum();
    double em_d = (lambda_m.array() * sd_m.array()).sum();
    double ex_a = (lambda_x.array() * sa_x.array()).sum();
    double ex_d = (lambda_x.array() * sd_x.array()).sum();

    g.mu_a_paths = {-(aa * em_a + ad * em_d), -(aa * ex_a + ad * ex_d)};
    g.mu_s_paths = {-(sa * em_a + sd * em_d), -(sa * ex_a + sd * ex_d)};
    g.dL_dmu_a = g.mu_a_paths.total();
    g.dL_dmu_s = g.mu_s_paths.total();
}

void check_fields(const Factorization& fact, const PhotonFields& fields, const Eigen::VectorXd& C,
                  const Eigen::MatrixXd& R)
{
    if (fields.factorization_id != fact.id())
        throw std::logic_error("gradients: photon fields were computed with a different system matrix");
    if (C.size() != fact.size() || fields.phi_x.rows() != fact.size() || fields.phi_m.rows() != fact.size())
        throw std::invalid_argument("gradients: node count mismatch");
    if (R.rows() != fields.phi_x.cols()) throw std::invalid_argument("gradients: residual/source count mismatch");
}

}  // namespace

GradientBundle gradients(const Factorization& fact, const SourceDetectorLayout& layout, const PhotonFields& fields,
                         const Eigen::VectorXd& C, const Eigen::MatrixXd& R, const SystemMatrices& sys,
                         const OpticalParams& p)
{
    check_fields(fact, fields, C, R);
    if (R.cols() != layout.num_detectors()) throw std::invalid_argument("gradients: residual/detector count mismatch");
    GradientBundle g;
    // One adjoint emission solve per source: S lambda_m = P R_s.
    Eigen::MatrixXd lambda_m = fact.solve(Eigen::MatrixXd(layout.P * R.transpose()));
    g.dL_dC = (lambda_m.array() * fields.phi_x.array()).rowwise().sum();
    mu_gradients(g, fact, fields, C, lambda_m, sys, p);
    return g;
}

GradientBundle gradients(const ForwardOperator& op, const PhotonFields& fields, const Eigen::VectorXd& C,
                         const Eigen::MatrixXd& R, const SystemMatrices& sys, const OpticalParams& p, bool with_mu)
{
    check_fields(op.factorization(), fields, C, R);
    if (R.cols() != op.detector_adjoint().cols())
        throw std::invalid_argument("gradients: residual/detector count mismatch");
    GradientBundle g;
    Eigen::MatrixXd lambda_m = op.detector_adjoint() * R.transpose();
    g.dL_dC = (lambda_m.array() * fields.phi_x.array()).rowwise().sum();
    if (with_mu) mu_gradients(g, op.factorization(), fields, C, lambda_m, sys, p);
    return g;
}

}  // namespace mufmt
