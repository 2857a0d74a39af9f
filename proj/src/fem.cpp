#include "mufmt/fem.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "mufmt/io.hpp"

namespace mufmt {

void OpticalParams::validate() const
{
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(mu_a)) throw std::invalid_argument("mu_a must be positive, got " + format_double(mu_a));
    if (!positive(mu_s_prime))
        throw std::invalid_argument("mu_s' must be positive, got " + format_double(mu_s_prime));
    if (!positive(zeta)) throw std::invalid_argument("zeta must be positive, got " + format_double(zeta));
    if (!positive(c)) throw std::invalid_argument("c must be positive, got " + format_double(c));
}

Eigen::Matrix4d local_mass(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    double vol = std::abs(tet_signed_volume(a, b, c, d));
    Eigen::Matrix4d m = Eigen::Matrix4d::Constant(vol / 20.0);
    m.diagonal().setConstant(vol / 10.0);
    return m;
}

Eigen::Matrix4d local_stiffness(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    Eigen::Matrix3d jac;
    jac.col(0) = b - a;
    jac.col(1) = c - a;
    jac.col(2) = d - a;
    double vol = std::abs(jac.determinant()) / 6.0;
    // Rows of inv(J) are the gradients of the barycentric coordinates 1..3.
    Eigen::Matrix3d inv = jac.inverse();
    Eigen::Matrix<double, 4, 3> grads;
    grads.row(1) = inv.row(0);
    grads.row(2) = inv.row(1);
    grads.row(3) = inv.row(2);
    grads.row(0) = -(grads.row(1) + grads.row(2) + grads.row(3));
    Eigen::Matrix4d k = vol * grads * grads.transpose();
    return 0.5 * (k + k.transpose());
}

Eigen::Matrix3d local_boundary(const Vec3& a, const Vec3& b, const Vec3& c, double zeta)
{
    double area = 0.5 * (b - a).cross(c - a).norm();
    double scale = 1.0 / (2.0 * zeta);
    Eigen::Matrix3d m = Eigen::Matrix3d::Constant(scale * area / 12.0);
    m.diagonal().setConstant(scale * area / 6.0);
    return m;
}

MassScheme parse_mass_scheme(const std::string& s)
{
    if (s == "consistent") return MassScheme::consistent;
    if (s == "lumped") return MassScheme::lumped;
    throw std::invalid_argument("unknown mass scheme '" + s + "' (valid: consistent, lumped)");
}

std::string to_string(MassScheme m) { return m == MassScheme::lumped ? "lumped" : "consistent"; }

namespace {

void lump_rows(SparseSym& m)
{
    for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
        double sum = 0.0;
        for (SparseSym::InnerIterator it(m, r); it; ++it) sum += it.value();
        for (SparseSym::InnerIterator it(m, r); it; ++it) it.valueRef() = it.col() == r ? sum : 0.0;
    }
}

}  // namespace

SystemMatrices assemble(const TetMesh& mesh, double zeta, MassScheme mass)
{
    if (!(zeta > 0.0)) throw AssemblyError("zeta must be positive");
    const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
    using Trip = Eigen::Triplet<double, int>;
    std::vector<Trip> ta, td, tb;
    ta.reserve(mesh.num_elements() * 16);
    td.reserve(mesh.num_elements() * 16);
    tb.reserve(mesh.num_elements() * 16 + mesh.num_boundary_faces() * 9);

    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const Tet& t = mesh.elements()[e];
        const Vec3 &p0 = mesh.node(t[0]), &p1 = mesh.node(t[1]), &p2 = mesh.node(t[2]), &p3 = mesh.node(t[3]);
        double vol = tet_signed_volume(p0, p1, p2, p3);
        if (!(vol > 0.0))
            throw AssemblyError("element " + std::to_string(e) + " has non-positive volume " + format_double(vol));
        Eigen::Matrix4d me = local_mass(p0, p1, p2, p3);
        Eigen::Matrix4d ke = local_stiffness(p0, p1, p2, p3);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                ta.emplace_back(t[i], t[j], me(i, j));
                td.emplace_back(t[i], t[j], ke(i, j));
                tb.emplace_back(t[i], t[j], 0.0);  // shared pattern
            }
    }
    for (std::size_t f = 0; f < mesh.num_boundary_faces(); ++f) {
        const Tri& t = mesh.boundary_faces()[f];
        Eigen::Matrix3d be = local_boundary(mesh.node(t[0]), mesh.node(t[1]), mesh.node(t[2]), zeta);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) tb.emplace_back(t[i], t[j], be(i, j));
    }

    SystemMatrices sys;
    sys.zeta = zeta;
    sys.mass = mass;
    sys.Sa.resize(n, n);
    sys.Sd.resize(n, n);
    sys.Sb.resize(n, n);
    sys.Sa.setFromTriplets(ta.begin(), ta.end());
    sys.Sd.setFromTriplets(td.begin(), td.end());
    sys.Sb.setFromTriplets(tb.begin(), tb.end());
    sys.Sa.makeCompressed();
    sys.Sd.makeCompressed();
    sys.Sb.makeCompressed();
    if (mass == MassScheme::lumped) {
        lump_rows(sys.Sa);
        lump_rows(sys.Sb);
    }

    // Every boundary edge is an element edge, so the three patterns agree.
    if (sys.Sa.nonZeros() != sys.Sb.nonZeros() || sys.Sa.nonZeros() != sys.Sd.nonZeros())
        throw AssemblyError("component matrices do not share a sparsity pattern");
    return sys;
}

namespace {

void check_same_pattern(const SystemMatrices& sys)
{
    if (sys.Sa.nonZeros() != sys.Sd.nonZeros() || sys.Sa.nonZeros() != sys.Sb.nonZeros() ||
        sys.Sa.rows() != sys.Sd.rows() || sys.Sa.rows() != sys.Sb.rows())
        throw AssemblyError("component matrices do not share a sparsity pattern");
}

SparseSym combine(const SystemMatrices& sys, double wa, double wd, double wb)
{
    check_same_pattern(sys);
    SparseSym out = sys.Sa;
    const double* a = sys.Sa.valuePtr();
    const double* d = sys.Sd.valuePtr();
    const double* b = sys.Sb.valuePtr();
    double* o = out.valuePtr();
    const auto nnz = sys.Sa.nonZeros();
    for (Eigen::Index k = 0; k < nnz; ++k) o[k] = wa * a[k] + wd * d[k] + wb * b[k];
    return out;
}

}  // namespace

SparseSym compose(const SystemMatrices& sys, const OpticalParams& p)
{
    p.validate();
    return combine(sys, p.c * p.mu_a, p.c * p.diffusion(), p.c);
}

std::pair<double, double> d_S_d_mu_coefficients(const OpticalParams& p, OpticalParam which)
{
    p.validate();
    double sum = p.mu_a + p.mu_s_prime;
    double dk = -1.0 / (3.0 * sum * sum);
    if (which == OpticalParam::mu_a) return {p.c, p.c * dk};
    return {0.0, p.c * dk};
}

SparseSym d_S_d_mu(const SystemMatrices& sys, const OpticalParams& p, OpticalParam which)
{
    auto [wa, wd] = d_S_d_mu_coefficients(p, which);
    return combine(sys, wa, wd, 0.0);
}

bool is_structurally_symmetric(const SparseSym& m, double tol)
{
    if (m.rows() != m.cols()) return false;
    SparseSym t = m.transpose();
    if (t.nonZeros() != m.nonZeros()) return false;
    for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
        SparseSym::InnerIterator a(m, r), b(t, r);
        for (; a && b; ++a, ++b) {
            if (a.col() != b.col()) return false;
            if (std::abs(a.value() - b.value()) > tol) return false;
        }
        if (a || b) return false;
    }
    return true;
}

void write_matrix_market(const SparseSym& m, const std::filesystem::path& path)
{
    std::string out = "%%MatrixMarket matrix coordinate real symmetric\n";
    Eigen::Index count = 0;
    std::string body;
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SparseSym::InnerIterator it(m, r); it; ++it)
            if (it.col() <= r) {
                body += std::to_string(r + 1) + " " + std::to_string(it.col() + 1) + " " + format_double(it.value()) + "\n";
                ++count;
            }
    out += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " + std::to_string(count) + "\n" + body;
    write_text_file(path, out);
}

}  // namespace mufmt
