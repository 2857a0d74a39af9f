#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "mufmt/mesh.hpp"

namespace mufmt {

// Row-compressed storage with sorted columns. Matrices produced by this
// module are exactly symmetric.
using SparseSym = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OpticalParams {
    double mu_a = 0.1;        // 1/mm
    double mu_s_prime = 1.0;  // 1/mm
    double zeta = 1.0;        // refractive-index mismatch factor
    double c = 1.0;           // global light-speed scale

    // 1 / (3 (mu_a + mu_s'))
    double diffusion() const { return 1.0 / (3.0 * (mu_a + mu_s_prime)); }
    // Throws std::invalid_argument if any coefficient is not strictly positive.
    void validate() const;
};

enum class OpticalParam { mu_a, mu_s_prime };

// Consistent: exact element integrals everywhere. Lumped: the Sa and Sb rows
// are summed onto the diagonal, which keeps S an M-matrix on meshes whose
// stiffness has no positive off-diagonals, so photon densities stay positive.
enum class MassScheme { consistent, lumped };

MassScheme parse_mass_scheme(const std::string& s);
std::string to_string(MassScheme m);

// Absorption (mass), diffusion (stiffness) and Robin boundary matrices on a
// shared sparsity pattern. The boundary factor 1/(2 zeta) is folded into Sb.
struct SystemMatrices {
    SparseSym Sa;
    SparseSym Sd;
    SparseSym Sb;
    double zeta = 1.0;
    MassScheme mass = MassScheme::consistent;

    Eigen::Index size() const { return Sa.rows(); }
};

// Exact P1 element integrals.
Eigen::Matrix4d local_mass(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);
Eigen::Matrix4d local_stiffness(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);
Eigen::Matrix3d local_boundary(const Vec3& a, const Vec3& b, const Vec3& c, double zeta);

// Lumped matrices keep the full shared pattern with zero off-diagonal values.
SystemMatrices assemble(const TetMesh& mesh, double zeta = 1.0, MassScheme mass = MassScheme::consistent);

// S = c (mu_a Sa + kappa Sd + Sb). Uses p.c and p.mu_*; sys.zeta is authoritative for Sb.
SparseSym compose(const SystemMatrices& sys, const OpticalParams& p);

// dS/dmu_a = c (Sa - Sd / (3 (mu_a + mu_s')^2)),  dS/dmu_s' = -c Sd / (3 (mu_a + mu_s')^2)
SparseSym d_S_d_mu(const SystemMatrices& sys, const OpticalParams& p, OpticalParam which);

// Scalar coefficients of (Sa, Sd) in dS/dmu; Sb never contributes.
std::pair<double, double> d_S_d_mu_coefficients(const OpticalParams& p, OpticalParam which);

bool is_structurally_symmetric(const SparseSym& m, double tol = 0.0);

void write_matrix_market(const SparseSym& m, const std::filesystem::path& path);

}  // namespace mufmt
