#include "mufmt/forward.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "mufmt/io.hpp"

namespace mufmt {

Side parse_side(const std::string& s)
{
    if (s == "top") return Side::top;
    if (s == "bottom") return Side::bottom;
    throw LayoutError("unknown side '" + s + "' (expected top or bottom)");
}

std::string to_string(Side s) { return s == Side::top ? "top" : "bottom"; }

SourceModel parse_source_model(const std::string& s)
{
    if (s == "buried") return SourceModel::buried;
    if (s == "surface") return SourceModel::surface;
    throw LayoutError("unknown source model '" + s + "' (expected buried or surface)");
}

std::string to_string(SourceModel m) { return m == SourceModel::buried ? "buried" : "surface"; }

std::vector<Vec2> raster_grid(const BoundingBox& box, int nx, int ny, double inset)
{
    if (nx < 1 || ny < 1) throw LayoutError("raster grid needs at least one position per axis");
    if (inset < 0.0 || inset >= 0.5) throw LayoutError("raster inset must lie in [0, 0.5)");
    Vec3 ext = box.extent();
    double x0 = box.lo.x() + inset * ext.x(), x1 = box.hi.x() - inset * ext.x();
    double y0 = box.lo.y() + inset * ext.y(), y1 = box.hi.y() - inset * ext.y();
    std::vector<Vec2> out;
    out.reserve(static_cast<std::size_t>(nx * ny));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            double x = nx == 1 ? 0.5 * (x0 + x1) : x0 + (x1 - x0) * i / (nx - 1);
            double y = ny == 1 ? 0.5 * (y0 + y1) : y0 + (y1 - y0) * j / (ny - 1);
            out.emplace_back(x, y);
        }
    return out;
}

std::optional<double> surface_height(const TetMesh& mesh, const Vec2& xy, Side side)
{
    constexpr double eps = 1e-12;
    std::optional<double> best;
    for (std::size_t f = 0; f < mesh.num_boundary_faces(); ++f) {
        const Tri& t = mesh.boundary_faces()[f];
        const Vec3 &a = mesh.node(t[0]), &b = mesh.node(t[1]), &c = mesh.node(t[2]);
        // Projected barycentric coordinates in the xy plane.
        double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
        if (std::abs(det) < 1e-14) continue;  // vertical face
        double l1 = ((xy.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (xy.y() - a.y())) / det;
        double l2 = ((b.x() - a.x()) * (xy.y() - a.y()) - (xy.x() - a.x()) * (b.y() - a.y())) / det;
        double l0 = 1.0 - l1 - l2;
        if (l0 < -eps || l1 < -eps || l2 < -eps) continue;
        double z = l0 * a.z() + l1 * b.z() + l2 * c.z();
        if (!best || (side == Side::top ? z > *best : z < *best)) best = z;
    }
    return best;
}

namespace {

Vec3 inward(Side side) { return side == Side::top ? Vec3(0, 0, -1) : Vec3(0, 0, 1); }

Index nearest_node(const TetMesh& mesh, const Vec3& p, const std::vector<char>* mask = nullptr)
{
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
        if (mask && !(*mask)[i]) continue;
        double d = (mesh.nodes()[i] - p).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<Index>(i);
        }
    }
    return best;
}

std::vector<char> surface_nodes(const TetMesh& mesh, Side side)
{
    auto normals = mesh.boundary_node_normals();
    Vec3 outward = -inward(side);
    std::vector<char> mask(mesh.num_nodes(), 0);
    for (std::size_t i = 0; i < mesh.num_nodes(); ++i)
        if (mesh.node_is_boundary()[i] && normals[i].dot(outward) > 0.5) mask[i] = 1;
    return mask;
}

Vec3 surface_point(const TetMesh& mesh, const Vec2& xy, Side side, const char* what, std::size_t index)
{
    auto z = surface_height(mesh, xy, side);
    if (!z)
        throw LayoutError(std::string(what) + " " + std::to_string(index) + " at (" + format_double(xy.x()) + ", " +
                          format_double(xy.y()) + ") lies outside the mesh footprint");
    return {xy.x(), xy.y(), *z};
}

}  // namespace

SourceDetectorLayout build_layout(const TetMesh& mesh, const std::vector<Vec2>& source_positions,
                                  const std::vector<Vec2>& detector_positions, const LayoutOptions& opts)
{
    if (source_positions.empty()) throw LayoutError("no source positions");
    if (detector_positions.empty()) throw LayoutError("no detector positions");
    if (!(opts.mu_s_prime > 0.0)) throw LayoutError("mu_s' must be positive for the source depth");
    if (!(opts.detector_sigma >= 0.0)) throw LayoutError("detector sigma must be non-negative");

    const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
    SourceDetectorLayout layout;
    layout.source_positions = source_positions;
    layout.detector_positions = detector_positions;

    auto src_mask = surface_nodes(mesh, opts.source_side);
    using Trip = Eigen::Triplet<double, int>;
    std::vector<Trip> q;
    for (std::size_t s = 0; s < source_positions.size(); ++s) {
        Vec3 p = surface_point(mesh, source_positions[s], opts.source_side, "source", s);
        Index node = -1;
        if (opts.source_model == SourceModel::buried)
            node = nearest_node(mesh, p + inward(opts.source_side) / opts.mu_s_prime);
        else
            node = nearest_node(mesh, p, &src_mask);
        if (node < 0) throw LayoutError("no node available for source " + std::to_string(s));
        layout.source_nodes.push_back(node);
        q.emplace_back(node, static_cast<int>(s), 1.0);
    }
    layout.Qx.resize(n, static_cast<Eigen::Index>(source_positions.size()));
    layout.Qx.setFromTriplets(q.begin(), q.end());

    auto det_mask = surface_nodes(mesh, opts.detector_side);
    std::vector<Trip> pt;
    const double sigma = opts.detector_sigma;
    for (std::size_t d = 0; d < detector_positions.size(); ++d) {
        Vec3 p = surface_point(mesh, detector_positions[d], opts.detector_side, "detector", d);
        std::vector<std::pair<Index, double>> w;
        if (sigma == 0.0) {
            Index node = nearest_node(mesh, p, &det_mask);
            if (node >= 0) w.emplace_back(node, 1.0);
        } else {
            const double cutoff2 = 9.0 * sigma * sigma;
            for (std::size_t i = 0; i < mesh.num_nodes(); ++i) {
                if (!det_mask[i]) continue;
                double r2 = (mesh.nodes()[i] - p).squaredNorm();
                if (r2 > cutoff2) continue;
                double v = std::exp(-r2 / (2.0 * sigma * sigma));
                if (v > 0.0) w.emplace_back(static_cast<Index>(i), v);
            }
        }
        if (w.empty())
            throw LayoutError("detector " + std::to_string(d) + ": empty footprint (no surface node within 3 sigma)");
        double total = 0.0;
        for (const auto& [i, v] : w) total += v;
        for (const auto& [i, v] : w) pt.emplace_back(i, static_cast<int>(d), v / total);
    }
    layout.P.resize(n, static_cast<Eigen::Index>(detector_positions.size()));
    layout.P.setFromTriplets(pt.begin(), pt.end());
    return layout;
}

namespace {
std::atomic<std::uint64_t> next_factorization_id{1};
}

Factorization::Factorization(SparseSym S) : matrix_(std::move(S)), id_(next_factorization_id++)
{
    if (matrix_.rows() != matrix_.cols()) throw FactorizationError("system matrix is not square");
    SparseCol col = matrix_;
    llt_.compute(col);
    if (llt_.info() != Eigen::Success)
        throw FactorizationError("Cholesky factorization failed: system matrix is not positive definite");
}

Eigen::MatrixXd Factorization::solve(const Eigen::MatrixXd& rhs) const
{
    if (rhs.rows() != size()) throw std::invalid_argument("solve: right-hand side has wrong row count");
    Eigen::MatrixXd x = llt_.solve(rhs);
    return x;
}

Eigen::VectorXd Factorization::solve(const Eigen::VectorXd& rhs) const
{
    if (rhs.size() != size()) throw std::invalid_argument("solve: right-hand side has wrong length");
    Eigen::VectorXd x = llt_.solve(rhs);
    return x;
}

ForwardResult forward_model(const Factorization& fact, const SourceDetectorLayout& layout, const Eigen::VectorXd& C)
{
    if (C.size() != fact.size() || layout.num_nodes() != fact.size())
        throw std::invalid_argument("forward_model: dimension mismatch between C, layout and system matrix");
    ForwardResult out;
    out.fields.factorization_id = fact.id();
    out.fields.phi_x = fact.solve(Eigen::MatrixXd(layout.Qx));
    Eigen::MatrixXd qm = out.fields.phi_x.array().colwise() * C.array();
    out.fields.phi_m = fact.solve(qm);
    out.measurements.M = out.fields.phi_m.transpose() * layout.P;
    out.measurements.provenance = MeasurementStack::Provenance::simulated;
    return out;
}

MeasurementStack add_noise(const MeasurementStack& M, double level, std::uint64_t seed)
{
    if (!(level >= 0.0)) throw std::invalid_argument("noise level must be non-negative");
    MeasurementStack out = M;
    if (level == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index s = 0; s < out.M.rows(); ++s)
        for (Eigen::Index d = 0; d < out.M.cols(); ++d) out.M(s, d) *= 1.0 + level * gauss(rng);
    return out;
}

std::string format_measurements(const MeasurementStack& M)
{
    std::string out = "measurements v1 " + std::to_string(M.M.rows()) + " " + std::to_string(M.M.cols()) + "\n";
    for (Eigen::Index s = 0; s < M.M.rows(); ++s) {
        for (Eigen::Index d = 0; d < M.M.cols(); ++d) {
            if (d) out += ' ';
            out += format_double(M.M(s, d));
        }
        out += '\n';
    }
    return out;
}

MeasurementStack parse_measurements(const std::string& text)
{
    auto tok = split_whitespace(text);
    if (tok.size() < 4 || tok[0] != "measurements" || tok[1] != "v1")
        throw FormatError("measurement file: expected header 'measurements v1 n_src n_det'");
    auto ns = parse_integer(tok[2]);
    auto nd = parse_integer(tok[3]);
    if (ns <= 0 || nd <= 0) throw FormatError("measurement file: dimensions must be positive");
    if (tok.size() - 4 != static_cast<std::size_t>(ns * nd))
        throw FormatError("measurement file: expected " + std::to_string(ns * nd) + " values, found " +
                          std::to_string(tok.size() - 4));
    MeasurementStack m;
    m.provenance = MeasurementStack::Provenance::loaded;
    m.M.resize(ns, nd);
    std::size_t k = 4;
    for (Eigen::Index s = 0; s < ns; ++s)
        for (Eigen::Index d = 0; d < nd; ++d) {
            double v = parse_double(tok[k++]);
            if (!std::isfinite(v)) throw FormatError("measurement file: non-finite value");
            m.M(s, d) = v;
        }
    return m;
}

void save_measurements(const MeasurementStack& M, const std::filesystem::path& path)
{
    write_text_file(path, format_measurements(M));
}

MeasurementStack load_measurements(const std::filesystem::path& path)
{
    return parse_measurements(read_text_file(path));
}

ForwardOperator::ForwardOperator(std::shared_ptr<const Factorization> fact, const SourceDetectorLayout& layout)
    : fact_(std::move(fact))
{
    if (layout.num_nodes() != fact_->size()) throw std::invalid_argument("ForwardOperator: layout/matrix size mismatch");
    phi_x_ = fact_->solve(Eigen::MatrixXd(layout.Qx));
    adj_p_ = fact_->solve(Eigen::MatrixXd(layout.P));
}

Eigen::MatrixXd ForwardOperator::predict(const Eigen::VectorXd& C) const
{
    if (C.size() != phi_x_.rows()) throw std::invalid_argument("predict: C has wrong length");
    Eigen::MatrixXd weighted = phi_x_.array().colwise() * C.array();
    return weighted.transpose() * adj_p_;
}

Eigen::VectorXd ForwardOperator::pullback(const Eigen::MatrixXd& R) const
{
    if (R.rows() != phi_x_.cols() || R.cols() != adj_p_.cols())
        throw std::invalid_argument("pullback: residual shape mismatch");
    Eigen::MatrixXd lambda_m = adj_p_ * R.transpose();  // N x n_src
    return (lambda_m.array() * phi_x_.array()).rowwise().sum();
}

PhotonFields ForwardOperator::photon_fields(const Eigen::VectorXd& C) const
{
    if (C.size() != phi_x_.rows()) throw std::invalid_argument("photon_fields: C has wrong length");
    PhotonFields f;
    f.factorization_id = fact_->id();
    f.phi_x = phi_x_;
    Eigen::MatrixXd qm = phi_x_.array().colwise() * C.array();
    f.phi_m = fact_->solve(qm);
    return f;
}

}  // namespace mufmt
