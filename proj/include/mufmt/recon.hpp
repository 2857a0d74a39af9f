#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mufmt/fem.hpp"
#include "mufmt/forward.hpp"
#include "mufmt/inr.hpp"
#include "mufmt/metrics.hpp"

namespace mufmt {

enum class ReconMode { neufmt, mu_neufmt };

ReconMode parse_recon_mode(const std::string& s);
std::string to_string(ReconMode m);

struct ReconConfig {
    ReconMode mode = ReconMode::mu_neufmt;
    bool adapt_mu_a = true;
    bool adapt_mu_s = true;
    int iterations = 2000;  // K
    int period = 50;        // T
    double lr_theta = 1e-4;
    double lr_mu_a = 1e-5;
    double lr_mu_s = 1e-3;
    // lr_theta decays geometrically to lr_theta * lr_decay at i = K; 1 disables decay.
    double lr_decay = 0.1;
    double lambda_reg = 1e-6;
    OpticalParams initial;
    std::uint64_t seed = 0;
    double clamp_lo = 0.2;  // fractions of the initial value
    double clamp_hi = 5.0;
    // Maximum step halvings when a coefficient step raises the data misfit of
    // the current field; 0 takes every step as is.
    int mu_backtrack = 0;
    int bands = 6;
    Architecture arch;
    // Divide measurements by their Frobenius norm before fitting.
    bool normalize_measurements = true;

    void validate() const;
};

struct IterationRecord {
    int iter = 0;
    // fidelity + lambda |u|_1 with u the network output, at the parameters in effect for this iteration
    double loss = 0.0;
    double fidelity = 0.0;
    double mu_a = 0.0;
    double mu_s = 0.0;
    double lr_theta = 0.0;
    char updated = '-';     // 'a' or 's' when a coefficient changed after this iteration
};

struct ReconTrace {
    std::vector<IterationRecord> records;
    Eigen::VectorXd C;              // final nodal field, in measurement units
    OpticalParams final_params;
    NeuralField field;
    double measurement_scale = 1.0; // M used for fitting = scale * M_real
    double field_unit = 1.0;        // C = field_unit * network output, in M_real units
    int refactorizations = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Optional per-iteration observer; return false to stop early.
using ReconObserver = std::function<bool(const IterationRecord&)>;

// Objective of one iteration for network output u at the encoded nodes:
// |op(c0 u) - M|^2 + lambda |u|_1 and its gradient in parameter order.
struct FieldObjective {
    double loss = 0.0;
    double fidelity = 0.0;
    Eigen::VectorXd u;
    Eigen::MatrixXd R;  // 2 (M_hat - M)
    std::vector<double> grad;
};

FieldObjective field_objective(const NeuralField& nf, const Eigen::MatrixXd& encoded, const ForwardOperator& op,
                               const Eigen::MatrixXd& M, double c0, double lambda);

// Self-supervised reconstruction loop. The network output u is measured in
// units of the constant field that best fits the (normalized) data, so it
// starts at 1 everywhere.
ReconTrace reconstruct(const TetMesh& mesh, const SystemMatrices& sys, const SourceDetectorLayout& layout,
                       const Eigen::MatrixXd& M_real, const ReconConfig& cfg, const ReconObserver& observer = {});

// Network values on an arbitrary grid, in the same units as ReconTrace::C.
VolumeSamples sample_field_on_grid(const NeuralField& nf, const GridSpec& grid, double unit_scale = 1.0);

std::string format_trace_csv(const std::vector<IterationRecord>& records);

}  // namespace mufmt
