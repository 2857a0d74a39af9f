#include "mufmt/recon.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "mufmt/adjoint.hpp"
#include "mufmt/io.hpp"

namespace mufmt {

ReconMode parse_recon_mode(const std::string& s)
{
    if (s == "neufmt") return ReconMode::neufmt;
    if (s == "mu-neufmt" || s == "mu_neufmt") return ReconMode::mu_neufmt;
    throw std::invalid_argument("unknown reconstruction mode '" + s + "'");
}

std::string to_string(ReconMode m) { return m == ReconMode::neufmt ? "neufmt" : "mu-neufmt"; }

void ReconConfig::validate() const
{
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (period < 1) throw std::invalid_argument("period must be >= 1");
    if (!(lr_theta > 0.0) || !(lr_mu_a > 0.0) || !(lr_mu_s > 0.0))
        throw std::invalid_argument("learning rates must be positive");
    if (!(lr_decay > 0.0) || lr_decay > 1.0) throw std::invalid_argument("lr_decay must lie in (0, 1]");
    if (!(lambda_reg >= 0.0)) throw std::invalid_argument("lambda_reg must be non-negative");
    if (!(clamp_lo > 0.0) || !(clamp_lo < clamp_hi)) throw std::invalid_argument("clamp bounds need 0 < lo < hi");
    initial.validate();
    arch.validate();
    if (bands < 1) throw std::invalid_argument("bands must be >= 1");
    if (mu_backtrack < 0) throw std::invalid_argument("mu_backtrack must be >= 0");
}

namespace {

std::shared_ptr<const Factorization> factorize(const SystemMatrices& sys, const OpticalParams& p)
{
    return std::make_shared<const Factorization>(compose(sys, p));
}

}  // namespace

FieldObjective field_objective(const NeuralField& nf, const Eigen::MatrixXd& encoded, const ForwardOperator& op,
                               const Eigen::MatrixXd& M, double c0, double lambda)
{
    FieldObjective out;
    Tape tape;
    out.u = field_forward_encoded(nf, encoded, &tape);
    LossResidual lr = loss_and_residual(op.predict(c0 * out.u), M);
    out.fidelity = lr.loss;
    out.loss = lr.loss + lambda * out.u.cwiseAbs().sum();
    out.R = std::move(lr.R);
    if (!std::isfinite(out.loss)) return out;

    Eigen::VectorXd dL_du = c0 * op.pullback(out.R);
    if (lambda > 0.0)
        for (Eigen::Index n = 0; n < out.u.size(); ++n)
            dL_du[n] += lambda * (out.u[n] > 0.0 ? 1.0 : (out.u[n] < 0.0 ? -1.0 : 0.0));
    out.grad = field_backward(nf, tape, dL_du);
    return out;
}

ReconTrace reconstruct(const TetMesh& mesh, const SystemMatrices& sys, const SourceDetectorLayout& layout,
                       const Eigen::MatrixXd& M_real, const ReconConfig& cfg, const ReconObserver& observer)
{
    cfg.validate();
    if (static_cast<std::size_t>(sys.size()) != mesh.num_nodes() || layout.num_nodes() != sys.size())
        throw std::invalid_argument("reconstruct: mesh, system and layout disagree on node count");
    if (M_real.rows() != layout.num_sources() || M_real.cols() != layout.num_detectors())
        throw std::invalid_argument("reconstruct: measurement shape does not match layout");

    ReconTrace trace;
    double mnorm = M_real.norm();
    if (!(mnorm > 0.0) || !std::isfinite(mnorm)) throw std::invalid_argument("reconstruct: measurements are zero or non-finite");
    trace.measurement_scale = cfg.normalize_measurements ? 1.0 / mnorm : 1.0;
    const Eigen::MatrixXd M = trace.measurement_scale * M_real;

    OpticalParams params = cfg.initial;
    const double a_lo = cfg.clamp_lo * cfg.initial.mu_a, a_hi = cfg.clamp_hi * cfg.initial.mu_a;
    const double s_lo = cfg.clamp_lo * cfg.initial.mu_s_prime, s_hi = cfg.clamp_hi * cfg.initial.mu_s_prime;

    auto op = std::make_unique<ForwardOperator>(factorize(sys, params), layout);
    ++trace.refactorizations;

    EncodingConfig enc{cfg.bands, mesh.bounds()};
    const Eigen::MatrixXd E = encode_batch(enc, mesh.nodes());
    NeuralField nf = NeuralField::create(enc, cfg.arch, InitOptions{cfg.seed, true});

    // The network works in units of the constant c0 minimizing |c0 M(1) - M|^2,
    // so its initial output is 1 everywhere and lambda is scale free.
    double c0 = 1.0;
    {
        Eigen::MatrixXd m1 = op->predict(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(mesh.num_nodes())));
        double num = (m1.array() * M.array()).sum(), den = m1.squaredNorm();
        c0 = num > 0.0 && den > 0.0 ? num / den : M.norm() / std::max(std::sqrt(den), 1e-300);
    }
    nf.set_output_scale(1.0 / std::log(2.0));
    trace.field_unit = c0 / trace.measurement_scale;

    AdamState adam(nf.parameter_count());
    const int K = cfg.iterations, T = cfg.period;
    const bool adaptive = cfg.mode == ReconMode::mu_neufmt;

    for (int i = 1; i <= K; ++i) {
        IterationRecord rec;
        rec.iter = i;
        rec.mu_a = params.mu_a;
        rec.mu_s = params.mu_s_prime;
        rec.lr_theta = cfg.lr_theta * std::pow(cfg.lr_decay, static_cast<double>(i - 1) / K);

        FieldObjective obj = field_objective(nf, E, *op, M, c0, cfg.lambda_reg);
        rec.fidelity = obj.fidelity;
        rec.loss = obj.loss;
        if (!std::isfinite(rec.loss)) {
            trace.aborted = true;
            trace.abort_reason = "non-finite loss at iteration " + std::to_string(i);
            break;
        }

        // Scheduled coefficient: even floor(i/T) -> mu_a, odd -> mu_s'.
        OpticalParam which = OpticalParam::mu_a;
        bool update_mu = false;
        if (adaptive && i % T == 0) {
            which = (i / T) % 2 == 0 ? OpticalParam::mu_a : OpticalParam::mu_s_prime;
            update_mu = which == OpticalParam::mu_a ? cfg.adapt_mu_a : cfg.adapt_mu_s;
        }
        double dmu = 0.0;
        Eigen::VectorXd C;
        if (update_mu) {
            C = c0 * obj.u;
            GradientBundle g = gradients(*op, op->photon_fields(C), C, obj.R, sys, params, true);
            dmu = which == OpticalParam::mu_a ? g.dL_dmu_a : g.dL_dmu_s;
        }

        adam_step(nf.parameters(), obj.grad, adam, rec.lr_theta);

        if (update_mu && dmu != 0.0 && std::isfinite(dmu)) {
            const bool absorption = which == OpticalParam::mu_a;
            const double lo = absorption ? a_lo : s_lo, hi = absorption ? a_hi : s_hi;
            const double base = absorption ? params.mu_a : params.mu_s_prime;
            double step = (absorption ? cfg.lr_mu_a : cfg.lr_mu_s) * dmu;
            OpticalParams cand = params;
            double& mu = absorption ? cand.mu_a : cand.mu_s_prime;
            std::unique_ptr<ForwardOperator> next;
            bool factor_failed = false, abort = false;
            for (int halvings = 0;;) {
                mu = std::clamp(base - step, lo, hi);
                if (mu == base) break;
                try {
                    next = std::make_unique<ForwardOperator>(factorize(sys, cand), layout);
                    ++trace.refactorizations;
                } catch (const FactorizationError&) {
                    // One retry with half the step.
                    if (factor_failed) {
                        abort = true;
                        break;
                    }
                    factor_failed = true;
                    step *= 0.5;
                    continue;
                }
                if (cfg.mu_backtrack == 0 || (next->predict(C) - M).squaredNorm() <= obj.fidelity) break;
                next.reset();
                if (++halvings > cfg.mu_backtrack) break;
                step *= 0.5;
            }
            if (abort) {
                trace.records.push_back(rec);
                trace.aborted = true;
                trace.abort_reason = "factorization failed after coefficient update at iteration " + std::to_string(i);
                break;
            }
            if (next) {
                op = std::move(next);
                params = cand;
                rec.updated = absorption ? 'a' : 's';
            }
        }

        trace.records.push_back(rec);
        if (observer && !observer(rec)) break;
    }

    trace.final_params = params;
    trace.C = trace.field_unit * field_forward_encoded(nf, E);
    trace.field = std::move(nf);
    return trace;
}

VolumeSamples sample_field_on_grid(const NeuralField& nf, const GridSpec& grid, double unit_scale)
{
    VolumeSamples out{grid, std::vector<double>(grid.count(), 0.0)};
    auto pts = grid.points();
    constexpr std::size_t chunk = 4096;
    for (std::size_t start = 0; start < pts.size(); start += chunk) {
        std::size_t end = std::min(pts.size(), start + chunk);
        std::vector<Vec3> part(pts.begin() + static_cast<long>(start), pts.begin() + static_cast<long>(end));
        Eigen::VectorXd v = field_forward(nf, part);
        for (std::size_t k = 0; k < part.size(); ++k) out.values[start + k] = unit_scale * v[static_cast<Eigen::Index>(k)];
    }
    return out;
}

std::string format_trace_csv(const std::vector<IterationRecord>& records)
{
    std::string out = "iter,loss,mu_a,mu_s,lr_theta\n";
    for (const auto& r : records)
        out += std::to_string(r.iter) + "," + format_double(r.loss) + "," + format_double(r.mu_a) + "," +
               format_double(r.mu_s) + "," + format_double(r.lr_theta) + "\n";
    return out;
}

}  // namespace mufmt
