#include <doctest.h>

#include <cmath>
#include <random>

#include "mufmt/adjoint.hpp"
#include "mufmt/recon.hpp"

using namespace mufmt;

namespace {

struct Setup {
    TetMesh mesh = generate_slab_mesh(Vec3(12, 9, 6), 1.5);
    SystemMatrices sys = assemble(mesh);
    SourceDetectorLayout layout =
        build_layout(mesh, raster_grid(mesh.bounds(), 3, 2, 0.1), raster_grid(mesh.bounds(), 4, 3, 0.1), LayoutOptions{});
    Eigen::MatrixXd M;

    Setup()
    {
        Eigen::VectorXd truth = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_nodes()));
        for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
            if ((mesh.node(static_cast<Index>(i)) - Vec3(6, 4.5, 3)).norm() < 2.0) truth[static_cast<Eigen::Index>(i)] = 1.0;
        OpticalParams t;
        M = forward_model(Factorization(compose(sys, t)), layout, truth).measurements.M;
    }
};

ReconConfig small_config()
{
    ReconConfig c;
    c.iterations = 6;
    c.period = 2;
    c.arch.hidden_layers = 3;
    c.arch.hidden_width = 16;
    c.arch.head_width = 8;
    c.arch.skip_layer = 2;
    c.bands = 3;
    c.lr_theta = 1e-3;
    c.initial.mu_a = 0.12;
    c.initial.mu_s_prime = 1.2;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("non-adaptive mode keeps the coefficients")
{
    Setup s;
    ReconConfig cfg = small_config();
    cfg.mode = ReconMode::neufmt;
    ReconTrace t = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    REQUIRE(t.records.size() == 6);
    for (const auto& r : t.records) {
        CHECK(r.mu_a == 0.12);
        CHECK(r.mu_s == 1.2);
        CHECK(r.updated == '-');
    }
    CHECK(t.refactorizations == 1);
    CHECK(t.final_params.mu_a == 0.12);
}

TEST_CASE("alternation schedule")
{
    Setup s;
    ReconConfig cfg = small_config();
    cfg.iterations = 4;
    cfg.period = 2;
    cfg.lr_mu_a = 1e-2;
    cfg.lr_mu_s = 1e-2;
    ReconTrace t = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    REQUIRE(t.records.size() == 4);
    CHECK(t.records[0].updated == '-');
    CHECK(t.records[1].updated == 's');
    CHECK(t.records[2].updated == '-');
    CHECK(t.records[3].updated == 'a');
    CHECK(t.refactorizations == 3);
    // Recorded values are those in effect during the iteration.
    CHECK(t.records[2].mu_s != t.records[1].mu_s);
    CHECK(t.records[2].mu_a == 0.12);
    CHECK(t.final_params.mu_a != 0.12);

    // Longer run: every window of 2T holding two update slots has one of each.
    cfg.iterations = 24;
    cfg.period = 3;
    ReconTrace u = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    std::string slots;
    for (const auto& r : u.records)
        if (r.iter % 3 == 0) slots += r.updated;
    CHECK(slots == "sasasasa");
}

TEST_CASE("coefficients stay inside the clamp box")
{
    Setup s;
    ReconConfig cfg = small_config();
    cfg.iterations = 12;
    cfg.lr_mu_a = 1e6;
    cfg.lr_mu_s = 1e6;
    ReconTrace t = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    for (const auto& r : t.records) {
        CHECK(r.mu_a >= 0.2 * 0.12 - 1e-15);
        CHECK(r.mu_a <= 5.0 * 0.12 + 1e-15);
        CHECK(r.mu_s >= 0.2 * 1.2 - 1e-15);
        CHECK(r.mu_s <= 5.0 * 1.2 + 1e-15);
    }
    CHECK_FALSE(t.aborted);
}

TEST_CASE("backtracking keeps oversized coefficient steps inside the box")
{
    Setup s;
    ReconConfig cfg = small_config();
    cfg.iterations = 12;
    cfg.lr_mu_a = 1e6;
    cfg.lr_mu_s = 1e6;
    ReconTrace raw = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    cfg.mu_backtrack = 60;
    ReconTrace bt = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    // Without backtracking the first steps land on the clamp bounds.
    CHECK((raw.final_params.mu_a == 0.2 * 0.12 || raw.final_params.mu_a == 5.0 * 0.12));
    CHECK(bt.final_params.mu_a > 0.2 * 0.12);
    CHECK(bt.final_params.mu_a < 5.0 * 0.12);
    CHECK(bt.final_params.mu_s_prime > 0.2 * 1.2);
    CHECK(bt.final_params.mu_s_prime < 5.0 * 1.2);
    CHECK(bt.refactorizations > raw.refactorizations);

    // Each accepted step lowers the data misfit of the field it was computed from.
    cfg.iterations = 2;
    cfg.period = 1;
    cfg.mu_backtrack = 60;
    cfg.adapt_mu_a = false;
    cfg.lr_mu_s = 1e6;
    ReconTrace one = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg, [](const IterationRecord& r) { return r.iter < 1; });
    REQUIRE(one.records.size() == 1);
    CHECK(one.records[0].updated == 's');
    OpticalParams before = cfg.initial, after = one.final_params;
    NeuralField nf = NeuralField::create(EncodingConfig{cfg.bands, s.mesh.bounds()}, cfg.arch, InitOptions{cfg.seed, true});
    nf.set_output_scale(1.0 / std::log(2.0));
    Eigen::VectorXd u = field_forward(nf, s.mesh.nodes());
    Eigen::MatrixXd M = s.M / s.M.norm();
    Eigen::VectorXd C = one.field_unit * one.measurement_scale * u;
    auto misfit = [&](const OpticalParams& p) {
        return (forward_model(Factorization(compose(s.sys, p)), s.layout, C).measurements.M - M).squaredNorm();
    };
    CHECK(misfit(after) <= misfit(before));
    CHECK(after.mu_s_prime != before.mu_s_prime);

    cfg.mu_backtrack = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("runs are deterministic")
{
    Setup s;
    ReconConfig cfg = small_config();
    ReconTrace a = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    ReconTrace b = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    CHECK(format_trace_csv(a.records) == format_trace_csv(b.records));
    CHECK(a.C == b.C);
    CHECK(a.field.to_text() == b.field.to_text());
    cfg.seed = 6;
    ReconTrace c = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    CHECK(c.C != a.C);
}

TEST_CASE("observer can stop the loop")
{
    Setup s;
    ReconConfig cfg = small_config();
    ReconTrace t = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg, [](const IterationRecord& r) { return r.iter < 3; });
    CHECK(t.records.size() == 3);
}

TEST_CASE("network gradient matches finite differences end to end")
{
    Setup s;
    EncodingConfig enc{3, s.mesh.bounds()};
    Architecture arch = small_config().arch;
    arch.output_scale = 1.0 / std::log(2.0);
    NeuralField nf = NeuralField::create(enc, arch, InitOptions{4, false});
    Eigen::MatrixXd E = encode_batch(enc, s.mesh.nodes());
    OpticalParams p;
    ForwardOperator op(std::make_shared<const Factorization>(compose(s.sys, p)), s.layout);
    const double c0 = 0.7;
    FieldObjective obj = field_objective(nf, E, op, s.M, c0, 0.0);

    // Loss against an independent solve chain.
    Factorization fresh(compose(s.sys, p));
    Eigen::MatrixXd M_hat = forward_model(fresh, s.layout, c0 * obj.u).measurements.M;
    CHECK(obj.loss == doctest::Approx((M_hat - s.M).squaredNorm()).epsilon(1e-12));

    auto params = nf.parameters();
    std::mt19937_64 rng(2);
    int checked = 0;
    for (int k = 0; k < 500 && checked < 20; ++k) {
        std::size_t i = rng() % params.size();
        if (std::abs(obj.grad[i]) < 1e-8) continue;
        double orig = params[i], h = 1e-6 * std::max(1.0, std::abs(orig));
        params[i] = orig + h;
        double hi = field_objective(nf, E, op, s.M, c0, 0.0).loss;
        params[i] = orig - h;
        double lo = field_objective(nf, E, op, s.M, c0, 0.0).loss;
        params[i] = orig;
        CHECK(std::abs((hi - lo) / (2.0 * h) - obj.grad[i]) <= 1e-4 * std::abs(obj.grad[i]));
        ++checked;
    }
    CHECK(checked == 20);

    FieldObjective reg = field_objective(nf, E, op, s.M, c0, 0.25);
    CHECK(reg.loss - reg.fidelity == doctest::Approx(0.25 * obj.u.cwiseAbs().sum()).epsilon(1e-12));
}

TEST_CASE("loss trend on a small problem")
{
    Setup s;
    ReconConfig cfg = small_config();
    cfg.mode = ReconMode::neufmt;
    cfg.iterations = 200;
    cfg.lr_theta = 3e-3;
    ReconTrace t = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);
    CHECK(t.records.back().loss < 0.5 * t.records.front().loss);
    CHECK(t.C.minCoeff() >= 0.0);
}

TEST_CASE("grid sampling of the field")
{
    Setup s;
    ReconConfig cfg = small_config();
    ReconTrace t = reconstruct(s.mesh, s.sys, s.layout, s.M, cfg);

    // Mesh nodes of this slab form a regular 1.5 mm grid.
    GridSpec nodes = grid_over(s.mesh.bounds(), 1.5);
    REQUIRE(nodes.count() == s.mesh.num_nodes());
    VolumeSamples at_nodes = sample_field_on_grid(t.field, nodes, t.field_unit);
    for (std::size_t n = 0; n < s.mesh.num_nodes(); ++n) {
        Vec3 p = s.mesh.node(static_cast<Index>(n));
        auto idx = nodes.index(static_cast<int>(std::lround(p.x() / 1.5)), static_cast<int>(std::lround(p.y() / 1.5)),
                               static_cast<int>(std::lround(p.z() / 1.5)));
        CHECK(at_nodes.values[idx] == doctest::Approx(t.C[static_cast<Eigen::Index>(n)]).epsilon(1e-13));
    }

    GridSpec fine = grid_over(s.mesh.bounds(), 0.75);
    VolumeSamples f = sample_field_on_grid(t.field, fine, t.field_unit);
    for (int k = 0; k < nodes.dims[2]; ++k)
        for (int j = 0; j < nodes.dims[1]; ++j)
            for (int i = 0; i < nodes.dims[0]; ++i)
                CHECK(f.values[fine.index(2 * i, 2 * j, 2 * k)] ==
                      doctest::Approx(at_nodes.values[nodes.index(i, j, k)]).epsilon(1e-13));

    NeuralField flat = NeuralField::create(EncodingConfig{3, s.mesh.bounds()}, cfg.arch, InitOptions{1, true});
    VolumeSamples c = sample_field_on_grid(flat, fine, 2.0);
    for (double v : c.values) CHECK(v == c.values.front());
}

TEST_CASE("trace csv and config checks")
{
    std::vector<IterationRecord> recs(2);
    recs[0] = {1, 0.5, 0.5, 0.1, 1.0, 1e-4, '-'};
    recs[1] = {2, 0.25, 0.25, 0.1, 1.1, 9e-5, 's'};
    CHECK(format_trace_csv(recs) == "iter,loss,mu_a,mu_s,lr_theta\n1,0.5,0.1,1,1e-04\n2,0.25,0.1,1.1,9e-05\n");

    ReconConfig c;
    CHECK_NOTHROW(c.validate());
    c.period = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = ReconConfig{};
    c.clamp_lo = 6.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_recon_mode("mu-neufmt") == ReconMode::mu_neufmt);
    CHECK_THROWS_AS(parse_recon_mode("fmt"), std::invalid_argument);
}
