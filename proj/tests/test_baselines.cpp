#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include "mufmt/baselines.hpp"

using namespace mufmt;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

struct Small {
    TetMesh mesh = generate_slab_mesh(Vec3(12, 10, 6), 1.5);
    SystemMatrices sys = assemble(mesh);
    SourceDetectorLayout layout =
        build_layout(mesh, raster_grid(mesh.bounds(), 3, 2, 0.1), raster_grid(mesh.bounds(), 4, 3, 0.1), LayoutOptions{});
    std::shared_ptr<const Factorization> fact = std::make_shared<const Factorization>(compose(sys, OpticalParams{}));
    ForwardOperator op{fact, layout};
};

double objective(const Eigen::MatrixXd& J, const Eigen::VectorXd& m, double lambda, const Eigen::VectorXd& x)
{
    return (J * x - m).squaredNorm() + lambda * x.sum();
}

}  // namespace

TEST_CASE("jacobian reproduces the forward model")
{
    Small s;
    JacobianModel J = JacobianModel::build(s.op);
    CHECK(J.mode() == JacobianModel::Mode::dense);
    CHECK(J.rows() == 6 * 12);
    auto n = static_cast<Eigen::Index>(s.mesh.num_nodes());
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Eigen::VectorXd C = gaussian(n, 1, seed).cwiseAbs();
        Eigen::VectorXd ref = flatten_measurements(forward_model(*s.fact, s.layout, C).measurements.M);
        CHECK((J.apply(C) - ref).norm() <= 1e-10 * ref.norm());
    }
    CHECK(J.apply(Eigen::VectorXd::Zero(n)).cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXd D = J.to_dense();
    CHECK(J.apply(Eigen::VectorXd::Unit(n, 17)) == D.col(17));

    // Row ordering: source major.
    Eigen::MatrixXd M = forward_model(*s.fact, s.layout, Eigen::VectorXd::Ones(n)).measurements.M;
    Eigen::VectorXd flat = flatten_measurements(M);
    CHECK(flat[1 * 12 + 5] == M(1, 5));

    JacobianModel imp = JacobianModel::build(s.op, 10);
    CHECK(imp.mode() == JacobianModel::Mode::implicit);
    Eigen::VectorXd C = gaussian(n, 1, 9);
    CHECK((imp.apply(C) - J.apply(C)).norm() <= 1e-12 * J.apply(C).norm());
    Eigen::VectorXd m = gaussian(J.rows(), 1, 10);
    CHECK((imp.apply_transpose(m) - D.transpose() * m).norm() <= 1e-12 * (D.transpose() * m).norm());
    Eigen::MatrixXd G = D.transpose() * D;
    CHECK((imp.gram() - G).norm() <= 1e-12 * G.norm());
    CHECK((J.gram() - G).norm() <= 1e-12 * G.norm());
}

TEST_CASE("jacobian stays consistent after a coefficient change")
{
    Small s;
    OpticalParams q;
    q.mu_s_prime = 0.7;
    auto f2 = std::make_shared<const Factorization>(compose(s.sys, q));
    JacobianModel J = JacobianModel::build(ForwardOperator(f2, s.layout));
    Eigen::VectorXd C = gaussian(static_cast<Eigen::Index>(s.mesh.num_nodes()), 1, 3).cwiseAbs();
    Eigen::VectorXd ref = flatten_measurements(forward_model(*f2, s.layout, C).measurements.M);
    CHECK((J.apply(C) - ref).norm() <= 1e-10 * ref.norm());
}

TEST_CASE("tikhonov conjugate residual solver")
{
    Eigen::MatrixXd A = gaussian(10, 5, 2);
    Eigen::VectorXd m = gaussian(10, 1, 3);
    JacobianModel J = JacobianModel::from_matrix(A);
    const double alpha = 0.3;
    SolveResult r = solve_l2cg(J, m, alpha, 100, 1e-14);
    Eigen::MatrixXd N = A.transpose() * A + alpha * Eigen::MatrixXd::Identity(5, 5);
    Eigen::VectorXd direct = N.ldlt().solve(A.transpose() * m);
    CHECK((r.C - direct).norm() <= 1e-8 * direct.norm());
    CHECK(r.converged);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1] * (1.0 + 1e-12));

    JacobianModel I = JacobianModel::from_matrix(Eigen::MatrixXd::Identity(6, 6));
    Eigen::VectorXd v = gaussian(6, 1, 4);
    CHECK((solve_l2cg(I, v, 1e-12, 50).C - v).norm() < 1e-9 * v.norm());
    CHECK(solve_l2cg(I, v, 1e12, 50).C.norm() < 1e-10 * v.norm());
    CHECK_THROWS_AS(solve_l2cg(I, v, 0.0, 10), std::invalid_argument);
}

TEST_CASE("tikhonov solver on the forward jacobian")
{
    Small s;
    JacobianModel J = JacobianModel::build(s.op);
    auto n = static_cast<Eigen::Index>(s.mesh.num_nodes());
    Eigen::VectorXd m = J.apply(gaussian(n, 1, 6).cwiseAbs());
    double alpha = 1e-3 * J.gram().trace() / static_cast<double>(n);
    SolveResult r = solve_l2cg(J, m, alpha, 2000);
    Eigen::VectorXd res = J.apply_transpose(J.apply(r.C) - m) + alpha * r.C;
    CHECK(res.norm() < 1e-6 * J.apply_transpose(m).norm());
}

TEST_CASE("non-negative soft threshold")
{
    Eigen::Vector3d v(3.0, -3.0, 0.5);
    Eigen::VectorXd p = prox_nonneg_l1(v, 1.0);
    CHECK(p[0] == 2.0);
    CHECK(p[1] == 0.0);
    CHECK(p[2] == 0.0);
}

TEST_CASE("power iteration")
{
    Eigen::MatrixXd Q = gaussian(8, 8, 7).householderQr().householderQ();
    Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(8, 0.5, 4.0);
    Eigen::MatrixXd A = Q * d.asDiagonal() * Q.transpose();
    CHECK(power_iteration(A, 2000, 1e-14) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("l1 fista")
{
    // 1D closed form: (x - 2)^2 + 2|x| has x* = 1.
    JacobianModel one = JacobianModel::from_matrix(Eigen::MatrixXd::Constant(1, 1, 1.0));
    SolveResult r = solve_l1fista(one, Eigen::VectorXd::Constant(1, 2.0), 2.0, 500, 0.0);
    CHECK(std::abs(r.C[0] - 1.0) < 1e-6);

    // Orthonormal J, lambda 0: clamp of J^T m.
    Eigen::MatrixXd Q = gaussian(6, 6, 11).householderQr().householderQ();
    Eigen::VectorXd m = gaussian(6, 1, 12);
    SolveResult o = solve_l1fista(JacobianModel::from_matrix(Q), m, 0.0, 2000, 0.0);
    Eigen::VectorXd expect = (Q.transpose() * m).cwiseMax(0.0);
    CHECK((o.C - expect).norm() < 1e-8);

    Eigen::MatrixXd A = gaussian(30, 12, 13);
    Eigen::VectorXd b = gaussian(30, 1, 14);
    SolveResult f = solve_l1fista(JacobianModel::from_matrix(A), b, 0.5, 300);
    CHECK(f.C.minCoeff() >= 0.0);
    REQUIRE(!f.history.empty());
    CHECK(f.history.back() <= f.history.front());
    for (std::size_t i = 1; i < f.history.size(); ++i) CHECK(f.history[i] <= f.history[i - 1]);
    CHECK(f.history.back() == doctest::Approx(objective(A, b, 0.5, f.C)).epsilon(1e-10));
    CHECK_THROWS_AS(solve_l1fista(JacobianModel::from_matrix(A), b, -1.0, 10), std::invalid_argument);
}
