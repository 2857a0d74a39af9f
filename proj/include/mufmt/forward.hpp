#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "mufmt/fem.hpp"
#include "mufmt/mesh.hpp"

namespace mufmt {

using Vec2 = Eigen::Vector2d;
using SparseCol = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

class LayoutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Side { top, bottom };
enum class SourceModel { buried, surface };

Side parse_side(const std::string& s);
std::string to_string(Side s);
SourceModel parse_source_model(const std::string& s);
std::string to_string(SourceModel m);

struct LayoutOptions {
    Side source_side = Side::top;
    Side detector_side = Side::bottom;
    SourceModel source_model = SourceModel::buried;
    double mu_s_prime = 1.0;      // sets the burial depth 1/mu_s'
    double detector_sigma = 1.0;  // mm
};

// Qx: N x n_src point loads; P: N x n_det normalized boundary footprints.
struct SourceDetectorLayout {
    SparseCol Qx;
    SparseCol P;
    std::vector<Vec2> source_positions;
    std::vector<Vec2> detector_positions;
    std::vector<Index> source_nodes;

    Eigen::Index num_nodes() const { return Qx.rows(); }
    Eigen::Index num_sources() const { return Qx.cols(); }
    Eigen::Index num_detectors() const { return P.cols(); }
};

// Regular nx x ny grid over the mesh footprint, inset from each edge by
// `inset` times the footprint extent.
std::vector<Vec2> raster_grid(const BoundingBox& box, int nx, int ny, double inset);

// Height of the `side` surface above (x, y), found by intersecting a vertical
// ray with the boundary triangulation.
std::optional<double> surface_height(const TetMesh& mesh, const Vec2& xy, Side side);

SourceDetectorLayout build_layout(const TetMesh& mesh, const std::vector<Vec2>& source_positions,
                                  const std::vector<Vec2>& detector_positions, const LayoutOptions& opts);

// Sparse Cholesky of an SPD system matrix. Concurrent solves are safe.
class Factorization {
public:
    explicit Factorization(SparseSym S);

    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

    const SparseSym& matrix() const { return matrix_; }
    Eigen::Index size() const { return matrix_.rows(); }
    // Unique per constructed factorization; used to detect stale photon fields.
    std::uint64_t id() const { return id_; }

private:
    SparseSym matrix_;
    Eigen::SimplicialLLT<SparseCol, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
    std::uint64_t id_;
};

struct PhotonFields {
    Eigen::MatrixXd phi_x;  // N x n_src
    Eigen::MatrixXd phi_m;  // N x n_src
    std::uint64_t factorization_id = 0;
};

struct MeasurementStack {
    enum class Provenance { simulated, loaded };
    Eigen::MatrixXd M;  // n_src x n_det
    Provenance provenance = Provenance::simulated;
};

struct ForwardResult {
    PhotonFields fields;
    MeasurementStack measurements;
};

// Excitation solve, fluorophore coupling, emission solve and detector projection.
ForwardResult forward_model(const Factorization& fact, const SourceDetectorLayout& layout, const Eigen::VectorXd& C);

// Multiplicative relative Gaussian noise, M (1 + level g), deterministic under seed.
MeasurementStack add_noise(const MeasurementStack& M, double level, std::uint64_t seed);

std::string format_measurements(const MeasurementStack& M);
MeasurementStack parse_measurements(const std::string& text);
void save_measurements(const MeasurementStack& M, const std::filesystem::path& path);
MeasurementStack load_measurements(const std::filesystem::path& path);

// Forward operator bound to one factorization. Caches the excitation fields
// S^-1 Qx and the detector adjoint fields S^-1 P, so that predictions and
// fluorophore gradients reduce to dense products.
class ForwardOperator {
public:
    ForwardOperator(std::shared_ptr<const Factorization> fact, const SourceDetectorLayout& layout);

    const Factorization& factorization() const { return *fact_; }
    std::shared_ptr<const Factorization> factorization_ptr() const { return fact_; }
    const Eigen::MatrixXd& excitation() const { return phi_x_; }       // N x n_src
    const Eigen::MatrixXd& detector_adjoint() const { return adj_p_; }  // N x n_det

    // n_src x n_det predicted measurements for nodal fluorophore C.
    Eigen::MatrixXd predict(const Eigen::VectorXd& C) const;
    // Gradient of sum(R .* M(C)) with respect to C.
    Eigen::VectorXd pullback(const Eigen::MatrixXd& R) const;
    // Emission fields S^-1 (C .* Phi_x) packaged with the cached excitation.
    PhotonFields photon_fields(const Eigen::VectorXd& C) const;

private:
    std::shared_ptr<const Factorization> fact_;
    Eigen::MatrixXd phi_x_;
    Eigen::MatrixXd adj_p_;
};

}  // namespace mufmt
