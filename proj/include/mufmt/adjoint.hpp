#pragma once

#include <Eigen/Core>

#include "mufmt/fem.hpp"
#include "mufmt/forward.hpp"

namespace mufmt {

struct LossResidual {
    double loss = 0.0;
    Eigen::MatrixXd R;  // 2 (M_hat - M_real)
};

// Squared Frobenius misfit and its derivative with respect to M_hat.
LossResidual loss_and_residual(const Eigen::MatrixXd& M_hat, const Eigen::MatrixXd& M_real);

// dL/dmu split by pathway: the emission term perturbs Phi_m directly, the
// excitation term reaches it through Q_m = C .* Phi_x.
struct PathwayGradient {
    double emission = 0.0;
    double excitation = 0.0;
    double total() const { return emission + excitation; }
};

struct GradientBundle {
    Eigen::VectorXd dL_dC;
    double dL_dmu_a = 0.0;
    double dL_dmu_s = 0.0;
    PathwayGradient mu_a_paths;
    PathwayGradient mu_s_paths;
    double loss_value = 0.0;
};

// Adjoint-state gradients of sum(R .* M_hat) for residual R. `fields` must
// come from a forward solve against `fact`.
GradientBundle gradients(const Factorization& fact, const SourceDetectorLayout& layout, const PhotonFields& fields,
                         const Eigen::VectorXd& C, const Eigen::MatrixXd& R, const SystemMatrices& sys,
                         const OpticalParams& p);

// Same quantities using the cached adjoint fields of a ForwardOperator.
// Optical gradients are only computed when `with_mu` is set.
GradientBundle gradients(const ForwardOperator& op, const PhotonFields& fields, const Eigen::VectorXd& C,
                         const Eigen::MatrixXd& R, const SystemMatrices& sys, const OpticalParams& p,
                         bool with_mu = true);

}  // namespace mufmt
