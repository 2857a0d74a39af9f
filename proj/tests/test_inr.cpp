#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "mufmt/inr.hpp"

using namespace mufmt;

namespace {

EncodingConfig unit_box(int bands)
{
    EncodingConfig e;
    e.bands = bands;
    e.box = BoundingBox{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    return e;
}

Architecture small_arch()
{
    Architecture a;
    a.hidden_layers = 5;
    a.hidden_width = 16;
    a.head_width = 8;
    a.skip_layer = 3;
    a.output_scale = 1.7;
    return a;
}

std::vector<Vec3> random_coords(int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec3> c;
    for (int i = 0; i < n; ++i) c.emplace_back(u(rng), u(rng), u(rng));
    return c;
}

}  // namespace

TEST_CASE("positional encoding")
{
    Eigen::VectorXd g0 = encode_scalar(0.0, 2);
    CHECK(g0.isApprox(Eigen::Vector4d(0, 1, 0, 1)));
    Eigen::VectorXd g5 = encode_scalar(0.5, 2);
    CHECK((g5 - Eigen::Vector4d(1, 0, 0, -1)).cwiseAbs().maxCoeff() < 1e-15);
    for (int L : {1, 4, 10}) CHECK(encode(unit_box(L), Vec3(0.1, 0.2, 0.3)).size() == 6 * L);

    EncodingConfig e;
    e.bands = 2;
    e.box = BoundingBox{Vec3(0, 0, 0), Vec3(10, 20, 4)};
    Eigen::VectorXd v = encode(e, Vec3(5, 15, 0));  // normalized (0, 0.5, -1)
    CHECK((v.segment(0, 4) - Eigen::Vector4d(0, 1, 0, 1)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((v.segment(4, 4) - Eigen::Vector4d(1, 0, 0, -1)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(std::abs(v[8]) < 1e-15);
    CHECK(v[9] == doctest::Approx(-1.0));

    EncodingConfig bad = unit_box(0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("layer shapes follow the skip wiring")
{
    NeuralField nf = NeuralField::create(unit_box(6), Architecture{});
    const auto& L = nf.layers();
    REQUIRE(L.size() == 10);
    CHECK(L[0].in == 36);
    CHECK(L[0].out == 512);
    CHECK(L[3].in == 512 + 36);
    CHECK(L[4].in == 512);
    CHECK(L[8].in == 512);
    CHECK(L[8].out == 128);
    CHECK(L[9].in == 128);
    CHECK(L[9].out == 1);
}

TEST_CASE("zero output layer gives a constant field")
{
    NeuralField nf = NeuralField::create(unit_box(3), small_arch(), InitOptions{7, true});
    Eigen::VectorXd v = field_forward(nf, random_coords(50, 1));
    for (double x : v) CHECK(x == doctest::Approx(std::numbers::ln2 * 1.7).epsilon(1e-15));

    auto c = random_coords(3, 2);
    std::vector<Vec3> dup{c[0], c[1], c[0], c[2], c[1]};
    NeuralField live = NeuralField::create(unit_box(3), small_arch(), InitOptions{7, false});
    Eigen::VectorXd d = field_forward(live, dup);
    // Equal up to kernel blocking of the batched products.
    CHECK(d[0] == doctest::Approx(d[2]).epsilon(1e-14));
    CHECK(d[1] == doctest::Approx(d[4]).epsilon(1e-14));
    CHECK(d.minCoeff() >= 0.0);
}

TEST_CASE("skip connection is live")
{
    NeuralField nf = NeuralField::create(unit_box(3), small_arch(), InitOptions{3, false});
    auto coords = random_coords(20, 5);
    Eigen::VectorXd before = field_forward(nf, coords);
    // The skip layer's columns past hidden_width read the encoding directly.
    auto W = nf.weight(2);
    REQUIRE(W.cols() == 16 + 18);
    W.col(16 + 1).array() += 0.5;  // cos component of x, never zero
    Eigen::VectorXd after = field_forward(nf, coords);
    CHECK((after - before).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("backward pass matches finite differences")
{
    NeuralField nf = NeuralField::create(unit_box(3), small_arch(), InitOptions{11, false});
    auto coords = random_coords(12, 9);
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(12, -1.0, 2.0);
    Tape tape;
    Eigen::VectorXd v = field_forward(nf, coords, &tape);
    std::vector<double> g = field_backward(nf, tape, w);
    REQUIRE(g.size() == nf.parameter_count());

    auto objective = [&](NeuralField& f) { return field_forward(f, coords).dot(w); };
    std::mt19937_64 rng(13);
    auto params = nf.parameters();
    int checked = 0;
    for (int k = 0; k < 400 && checked < 20; ++k) {
        std::size_t i = rng() % params.size();
        if (std::abs(g[i]) < 1e-6) continue;
        double orig = params[i], h = 1e-6 * std::max(1.0, std::abs(orig));
        params[i] = orig + h;
        double hi = objective(nf);
        params[i] = orig - h;
        double lo = objective(nf);
        params[i] = orig;
        double fd = (hi - lo) / (2.0 * h);
        CHECK(std::abs(fd - g[i]) <= 1e-4 * std::abs(g[i]));
        ++checked;
    }
    CHECK(checked == 20);

    // Random unit direction.
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> u(params.size());
    double nu = 0.0;
    for (double& x : u) {
        x = n(rng);
        nu += x * x;
    }
    nu = std::sqrt(nu);
    double dir = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dir += g[i] * u[i] / nu;
    std::vector<double> orig(params.begin(), params.end());
    const double h = 1e-6;
    for (std::size_t i = 0; i < u.size(); ++i) params[i] = orig[i] + h * u[i] / nu;
    double hi = objective(nf);
    for (std::size_t i = 0; i < u.size(); ++i) params[i] = orig[i] - h * u[i] / nu;
    double lo = objective(nf);
    CHECK(std::abs((hi - lo) / (2.0 * h) - dir) <= 1e-4 * std::abs(dir));
}

TEST_CASE("backward pass edge cases")
{
    NeuralField nf = NeuralField::create(unit_box(2), small_arch(), InitOptions{1, false});
    auto coords = random_coords(10, 3);
    Tape tape;
    field_forward(nf, coords, &tape);
    for (double x : field_backward(nf, tape, Eigen::VectorXd::Zero(10))) CHECK(x == 0.0);
    CHECK_THROWS_AS(field_backward(nf, tape, Eigen::VectorXd::Zero(9)), std::invalid_argument);

    // Batch splitting adds up.
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(10, 0.5, 1.5);
    std::vector<double> full = field_backward(nf, tape, w);
    std::vector<Vec3> a(coords.begin(), coords.begin() + 4), b(coords.begin() + 4, coords.end());
    Tape ta, tb;
    field_forward(nf, a, &ta);
    field_forward(nf, b, &tb);
    std::vector<double> ga = field_backward(nf, ta, w.head(4)), gb = field_backward(nf, tb, w.tail(6));
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        err = std::max(err, std::abs(full[i] - ga[i] - gb[i]));
        scale = std::max(scale, std::abs(full[i]));
    }
    CHECK(err <= 1e-12 * scale);
}

TEST_CASE("adam")
{
    std::vector<double> p{1.0, -2.0}, g{1.0, 0.0};
    AdamState st(2);
    adam_step(p, g, st, 0.01);
    CHECK(p[0] == doctest::Approx(1.0 - 0.01 / (1.0 + 1e-8)).epsilon(1e-14));
    CHECK(p[1] == -2.0);
    CHECK(st.step == 1);

    // Scalar reference over 100 steps with varying gradients.
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(5), ref(5);
    for (std::size_t i = 0; i < 5; ++i) x[i] = ref[i] = n(rng);
    std::vector<double> m(5, 0.0), v(5, 0.0);
    AdamState s(5);
    for (int t = 1; t <= 100; ++t) {
        std::vector<double> grad(5);
        for (double& q : grad) q = n(rng);
        adam_step(x, grad, s, 1e-3);
        for (std::size_t i = 0; i < 5; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * grad[i];
            v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
            double mh = m[i] / (1.0 - std::pow(0.9, t)), vh = v[i] / (1.0 - std::pow(0.999, t));
            ref[i] -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(x[i] - ref[i]) <= 1e-12 * std::abs(ref[i]));
}

TEST_CASE("checkpoint restores identical outputs")
{
    EncodingConfig e;
    e.bands = 4;
    e.box = BoundingBox{Vec3(0, 0, 0), Vec3(55, 55, 15)};
    NeuralField nf = NeuralField::create(e, small_arch(), InitOptions{99, false});
    std::vector<Vec3> coords{{1, 2, 3}, {50, 10, 14}, {27.5, 27.5, 7.5}};
    auto path = std::filesystem::temp_directory_path() / "mufmt_test_net.txt";
    nf.save(path);
    NeuralField back = NeuralField::load(path);
    std::filesystem::remove(path);
    CHECK(back.parameter_count() == nf.parameter_count());
    Eigen::VectorXd a = field_forward(nf, coords), b = field_forward(back, coords);
    CHECK(a == b);
    CHECK(back.to_text() == nf.to_text());
}
