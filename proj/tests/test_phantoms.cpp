#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "mufmt/adjoint.hpp"
#include "mufmt/phantoms.hpp"

using namespace mufmt;

namespace {

std::size_t support(const Eigen::VectorXd& c)
{
    return static_cast<std::size_t>((c.array() > 0.0).count());
}

}  // namespace

TEST_CASE("preset names")
{
    for (const auto& n : preset_names()) CHECK(to_string(parse_preset(n)) == n);
    CHECK(preset_names().size() == 5);
    CHECK_THROWS_WITH_AS(parse_preset("case9"), doctest::Contains("case1"), std::invalid_argument);
}

TEST_CASE("case 1 sphere on the desk slab")
{
    ScenePreset p = make_preset(PresetId::case1_sphere);
    TetMesh mesh = generate_phantom_mesh(p.phantom);
    Eigen::VectorXd c = ground_truth_field(p, mesh);
    const Vec3 center(27.5, 27.5, 7.5);
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        double d = (mesh.node(static_cast<Index>(i)) - center).norm();
        CHECK(c[static_cast<Eigen::Index>(i)] == (d <= 1.5 ? 1.0 : 0.0));
    }
    // Node count times the cell volume against the analytic ball.
    double cell = 2.5 * 2.5 * 2.5;
    double ball = 4.0 / 3.0 * std::numbers::pi * 1.5 * 1.5 * 1.5;
    CHECK(std::abs(static_cast<double>(support(c)) * cell - ball) <= cell);
    CHECK(p.truth.mu_a == 0.1);
    CHECK(p.truth.mu_s_prime == 1.0);
}

TEST_CASE("all presets are interior and non-negative")
{
    for (const auto& name : preset_names()) {
        ScenePreset p = make_preset(parse_preset(name));
        TetMesh mesh = generate_phantom_mesh(p.phantom);
        Eigen::VectorXd c = ground_truth_field(p, mesh);
        CHECK(c.minCoeff() >= 0.0);
        CHECK(support(c) > 0);
        const auto& bnd = mesh.node_is_boundary();
        for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
            if (c[static_cast<Eigen::Index>(i)] > 0.0) CHECK_FALSE(bnd[i]);
    }
}

TEST_CASE("peanut and inner sphere levels")
{
    ScenePreset p3 = make_preset(PresetId::case3_peanut);
    ScenePreset p4 = make_preset(PresetId::case4_peanut_plus_sphere);
    TetMesh mesh = generate_phantom_mesh(p4.phantom);
    Eigen::VectorXd c3 = ground_truth_field(p3, mesh), c4 = ground_truth_field(p4, mesh);
    CHECK(c3.maxCoeff() == 1.0);
    CHECK(c4.maxCoeff() == 2.0);
    // Case 4 only raises levels inside the peanut.
    for (Eigen::Index i = 0; i < c4.size(); ++i) {
        if (c4[i] == 2.0) CHECK(c3[i] == 1.0);
        else CHECK(c4[i] == c3[i]);
    }
    // The peanut is wider along x than along y.
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (Eigen::Index i = 0; i < c3.size(); ++i)
        if (c3[i] > 0.0) {
            Vec3 q = mesh.node(static_cast<Index>(i));
            xmin = std::min(xmin, q.x());
            xmax = std::max(xmax, q.x());
            ymin = std::min(ymin, q.y());
            ymax = std::max(ymax, q.y());
        }
    CHECK(xmax - xmin > ymax - ymin);
}

TEST_CASE("zero radius target gives an empty field")
{
    ScenePreset p = make_preset(PresetId::case1_sphere);
    p.targets[0].radius = 0.0;
    p.targets[0].path[0] += Vec3(1.1, 0.3, 0.2);  // off-node center
    TetMesh mesh = generate_phantom_mesh(p.phantom);
    CHECK(ground_truth_field(p, mesh).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("targets touching the boundary are rejected")
{
    ScenePreset p = make_preset(PresetId::case1_sphere);
    p.targets[0].path[0] = Vec3(27.5, 27.5, 1.0);
    TetMesh mesh = generate_phantom_mesh(p.phantom);
    CHECK_THROWS_AS(ground_truth_field(p, mesh), SceneError);
    p.targets[0].path[0] = Vec3(70, 27.5, 7.5);
    CHECK_THROWS_AS(ground_truth_field(p, mesh), SceneError);
}

TEST_CASE("simulated scenes")
{
    ScenePreset p = make_preset(PresetId::case1_sphere, 3.0);
    SceneBundle clean = simulate_scene(p, 0.0, 1);
    // Noise-free data are reproduced exactly at the truth.
    Factorization f(compose(assemble(clean.mesh, p.truth.zeta, p.mass), p.truth));
    Eigen::MatrixXd M_hat = forward_model(f, clean.layout, clean.C_true).measurements.M;
    CHECK(loss_and_residual(M_hat, clean.M_real.M).loss <= 1e-24 * clean.M_real.M.squaredNorm());

    SceneBundle a = simulate_scene(p, 0.05, 1), b = simulate_scene(p, 0.05, 2), a2 = simulate_scene(p, 0.05, 1);
    CHECK(a.M_real.M != b.M_real.M);
    CHECK(a.C_true == b.C_true);
    CHECK(a.M_real.M == a2.M_real.M);
    CHECK(a.M_real.M.rows() == 64);
    CHECK(a.M_real.M.cols() == 256);
}

TEST_CASE("scene bundle round trip")
{
    ScenePreset p = make_preset(PresetId::case2_cap_sphere);
    SceneBundle s = simulate_scene(p, 0.05, 3);
    auto dir = std::filesystem::temp_directory_path() / "mufmt_test_scene";
    std::filesystem::remove_all(dir);
    save_scene(s, dir);
    for (const char* f : {"mesh.txt", "measurements.txt", "ground_truth.txt", "layout.cfg", "manifest.cfg"})
        CHECK(std::filesystem::exists(dir / f));
    LoadedScene l = load_scene(dir);
    CHECK(l.mesh.nodes() == s.mesh.nodes());
    CHECK(l.M_real.M == s.M_real.M);
    CHECK(l.C_true == s.C_true);
    CHECK(l.truth.mu_s_prime == 1.0);
    CHECK(l.mass == MassScheme::lumped);
    CHECK(l.manifest.get_string("preset", "") == "case2");
    CHECK(l.manifest.get_integer("seed", 0) == 3);
    Eigen::MatrixXd P1 = build_layout(l.mesh, l.layout).P, P0 = s.layout.P;
    CHECK(P1 == P0);

    p.mass = MassScheme::consistent;
    save_scene(simulate_scene(p, 0.0, 3), dir);
    CHECK(load_scene(dir).mass == MassScheme::consistent);

    std::filesystem::remove(dir / "ground_truth.txt");
    CHECK_THROWS_WITH_AS(load_scene(dir), doctest::Contains("ground_truth.txt"), SceneError);
    std::filesystem::remove_all(dir);
}
