#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "mufmt/io.hpp"
#include "mufmt/metrics.hpp"
#include "mufmt/phantoms.hpp"

using namespace mufmt;

namespace {

VolumeSamples ramp_volume()
{
    VolumeSamples v;
    v.grid.origin = Vec3(1, 2, 3);
    v.grid.spacing = Vec3(0.5, 1.0, 2.0);
    v.grid.dims = {5, 4, 3};
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 5; ++i) v.values.push_back(1.0 + i + 10.0 * j + 100.0 * k);
    return v;
}

}  // namespace

TEST_CASE("dice arithmetic")
{
    std::vector<double> a{1, 1, 1, 1, 0, 0, 0, 0}, b{0, 0, 1, 1, 1, 1, 0, 0}, c{0, 0, 0, 0, 0, 0, 1, 1};
    CHECK(dice(a, a).dice == 1.0);
    CHECK(dice(a, c).dice == 0.0);
    DiceResult r = dice(a, b);
    CHECK(r.dice == 0.5);
    CHECK(r.count_a == 4);
    CHECK(r.count_b == 4);
    CHECK(r.count_both == 2);
    CHECK(r.threshold_a == 0.5);

    std::vector<double> zero(8, 0.0);
    CHECK(dice(zero, zero).dice == 1.0);
    CHECK(dice(zero, a).dice == 0.0);
    CHECK(dice(a, zero).dice == 0.0);
    CHECK_THROWS_AS(dice(a, std::vector<double>(7, 0.0)), std::invalid_argument);
}

TEST_CASE("dice symmetry and scale invariance")
{
    std::vector<double> a{0.1, 0.9, 0.4, 0.8, 0.0, 0.55, 0.3}, b{0.6, 0.2, 0.7, 0.9, 0.1, 0.5, 0.05};
    CHECK(dice(a, b).dice == dice(b, a).dice);
    std::vector<double> a3 = a;
    for (double& x : a3) x *= 3.7;
    CHECK(dice(a3, b).dice == dice(a, b).dice);

    ThresholdPolicy fixed{ThresholdPolicy::Kind::fixed, 0.45};
    DiceResult f = dice(a, b, fixed);
    CHECK(f.threshold_a == 0.45);
    CHECK(f.count_a == 3);
    CHECK(f.policy == fixed.describe());

    // Otsu splits a clean bimodal set between the modes.
    std::vector<double> bi{0.1, 0.12, 0.09, 0.11, 0.9, 0.95, 0.92};
    double t = binarization_threshold(bi, ThresholdPolicy{ThresholdPolicy::Kind::otsu, 0.0});
    CHECK(t > 0.12);
    CHECK(t <= 0.9);
}

TEST_CASE("volume dice requires matching grids")
{
    VolumeSamples a = ramp_volume(), b = ramp_volume();
    CHECK(dice(a, b).dice == 1.0);
    b.grid.spacing.x() = 0.6;
    CHECK_THROWS_AS(dice(a, b), std::invalid_argument);
}

TEST_CASE("line profiles")
{
    VolumeSamples c = ramp_volume();
    std::fill(c.values.begin(), c.values.end(), 4.2);
    for (double v : line_profile(c, Vec3(1, 2, 3), Vec3(3, 5, 7), 13)) CHECK(v == doctest::Approx(4.2));

    VolumeSamples r = ramp_volume();
    auto fwd = line_profile(r, Vec3(1.2, 2.5, 3.3), Vec3(2.9, 4.5, 6.1), 9);
    auto bwd = line_profile(r, Vec3(2.9, 4.5, 6.1), Vec3(1.2, 2.5, 3.3), 9);
    std::reverse(bwd.begin(), bwd.end());
    for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(fwd[i] == doctest::Approx(bwd[i]).epsilon(1e-14));
    // The ramp is trilinear, so interpolation is exact.
    CHECK(trilinear(r, Vec3(1.75, 3.5, 4.0)) == doctest::Approx(1.0 + 1.5 + 15.0 + 50.0).epsilon(1e-14));
    CHECK_THROWS_AS(line_profile(r, Vec3(0, 2, 3), Vec3(2, 2, 3), 5), std::out_of_range);

    // Scaling the field scales the profile.
    VolumeSamples s = r;
    for (double& v : s.values) v *= 2.5;
    auto scaled = line_profile(s, Vec3(1.2, 2.5, 3.3), Vec3(2.9, 4.5, 6.1), 9);
    for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(scaled[i] == doctest::Approx(2.5 * fwd[i]).epsilon(1e-14));
}

TEST_CASE("half maximum width")
{
    // Triangle of half-width 2 sampled at 0.1: FWHM 2.
    std::vector<double> tri;
    for (int i = -40; i <= 40; ++i) tri.push_back(std::max(0.0, 1.0 - std::abs(i * 0.1) / 2.0));
    CHECK(full_width_half_max(tri, 0.1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(full_width_half_max(std::vector<double>(5, 0.0), 1.0) == 0.0);
}

TEST_CASE("case 1 truth profile has a width near the sphere diameter")
{
    ScenePreset p = make_preset(PresetId::case1_sphere);
    TetMesh mesh = generate_phantom_mesh(p.phantom);
    Eigen::VectorXd gt = ground_truth_field(p, mesh);
    GridSpec grid = grid_over(mesh.bounds(), 1.0);
    VolumeSamples v = sample_nodal_on_grid(mesh, gt, grid);
    auto prof = line_profile(v, Vec3(17.5, 27.5, 7.5), Vec3(37.5, 27.5, 7.5), 201);
    double w = full_width_half_max(prof, 0.1);
    CHECK(std::abs(w - 3.0) <= grid.spacing.x());
}

TEST_CASE("grid sampling and point location")
{
    TetMesh mesh = generate_slab_mesh(Vec3(10, 8, 6), 2.0);
    Eigen::VectorXd lin(static_cast<Eigen::Index>(mesh.num_nodes()));
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        Vec3 q = mesh.node(static_cast<Index>(i));
        lin[static_cast<Eigen::Index>(i)] = 1.0 + 2.0 * q.x() - q.y() + 0.5 * q.z();
    }
    GridSpec g = grid_over(mesh.bounds(), 0.7);
    CHECK(g.point(g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1).isApprox(Vec3(10, 8, 6)));
    VolumeSamples v = sample_nodal_on_grid(mesh, lin, g);
    auto pts = g.points();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec3& q = pts[i];
        CHECK(v.values[i] == doctest::Approx(1.0 + 2.0 * q.x() - q.y() + 0.5 * q.z()).epsilon(1e-12));
    }
    PointLocator loc(mesh);
    CHECK_FALSE(loc.locate(Vec3(11, 1, 1)).has_value());
    auto hit = loc.locate(Vec3(3.3, 2.2, 1.1));
    REQUIRE(hit.has_value());
    CHECK(hit->bary.sum() == doctest::Approx(1.0));
    CHECK(hit->bary.minCoeff() >= -1e-9);

    TetMesh cap = generate_cap_mesh(Vec3(20, 20, 4), 4.0, 2.0);
    GridSpec cg = grid_over(cap.bounds(), 1.0);
    auto mask = inside_mask(cap, cg);
    CHECK(mask[cg.index(0, 0, cg.dims[2] - 1)] == 0);
    CHECK(mask[cg.index(10, 10, cg.dims[2] - 1)] == 1);
}

TEST_CASE("coefficient error series")
{
    std::vector<double> a(20, 0.1), s(20, 1.0);
    MuErrorSeries e = mu_error(a, s, 0.1, 1.0);
    CHECK(e.final_mu_a_pct == 0.0);
    CHECK(e.final_mu_s_pct == 0.0);
    std::vector<double> s15(20, 1.5);
    MuErrorSeries f = mu_error(a, s15, 0.1, 1.0);
    CHECK(f.final_mu_s_pct == doctest::Approx(50.0));
    CHECK(f.mu_s_pct.size() == 20);
    // Final window is the last 10% of iterations.
    std::vector<double> tail(20, 2.0);
    tail[18] = tail[19] = 1.1;
    CHECK(mu_error(a, tail, 0.1, 1.0).final_mu_s_pct == doctest::Approx(10.0));
}

TEST_CASE("vtk volumes and metrics csv")
{
    VolumeSamples r = ramp_volume();
    r.values[3] = 1.0 / 3.0;
    VolumeSamples back = parse_vtk_volume(format_vtk_volume(r, "C"));
    CHECK(back.grid.same_as(r.grid));
    CHECK(back.values == r.values);
    auto path = std::filesystem::temp_directory_path() / "mufmt_test_vol.vtk";
    save_vtk_volume(r, "C", path);
    CHECK(load_vtk_volume(path).values == r.values);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(parse_vtk_volume("# vtk DataFile Version 3.0\nx\nASCII\nDATASET POLYDATA\n"), FormatError);

    std::vector<MetricsRow> rows{{"case1", "mu-neufmt", 0.75, 1.25, 0.5}};
    CHECK(format_metrics_csv(rows) == "case,method,dice,final_mu_a_err_pct,final_mu_s_err_pct\ncase1,mu-neufmt,0.75,1.25,0.5\n");
}
