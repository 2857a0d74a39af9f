#include "mufmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

#include "mufmt/io.hpp"

namespace mufmt {

std::vector<Vec3> GridSpec::points() const
{
    std::vector<Vec3> out;
    out.reserve(count());
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i) out.push_back(point(i, j, k));
    return out;
}

bool GridSpec::same_as(const GridSpec& o, double tol) const
{
    return dims == o.dims && (origin - o.origin).cwiseAbs().maxCoeff() <= tol &&
           (spacing - o.spacing).cwiseAbs().maxCoeff() <= tol;
}

GridSpec grid_over(const BoundingBox& box, double spacing)
{
    if (!(spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");
    GridSpec g;
    g.origin = box.lo;
    Vec3 ext = box.extent();
    for (int a = 0; a < 3; ++a) {
        int cells = std::max(1, static_cast<int>(std::ceil(ext[a] / spacing - 1e-9)));
        g.dims[static_cast<std::size_t>(a)] = cells + 1;
        g.spacing[a] = ext[a] > 0.0 ? ext[a] / cells : spacing;
    }
    return g;
}

PointLocator::PointLocator(const TetMesh& mesh) : mesh_(&mesh), box_(mesh.bounds())
{
    const double n_cells = std::max<double>(1.0, static_cast<double>(mesh.num_elements()) / 4.0);
    Vec3 ext = box_.extent().cwiseMax(1e-12);
    double h = std::cbrt(ext.prod() / n_cells);
    for (int a = 0; a < 3; ++a) cells_[static_cast<std::size_t>(a)] = std::max(1, static_cast<int>(std::ceil(ext[a] / h)));
    cell_size_ = Vec3(ext.x() / cells_[0], ext.y() / cells_[1], ext.z() / cells_[2]);
    buckets_.assign(static_cast<std::size_t>(cells_[0] * cells_[1] * cells_[2]), {});

    auto clamp_cell = [&](double v, int a) {
        int c = static_cast<int>(std::floor((v - box_.lo[a]) / cell_size_[a]));
        return std::clamp(c, 0, cells_[static_cast<std::size_t>(a)] - 1);
    };
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        Vec3 lo = mesh.node(mesh.elements()[e][0]), hi = lo;
        for (Index v : mesh.elements()[e]) {
            lo = lo.cwiseMin(mesh.node(v));
            hi = hi.cwiseMax(mesh.node(v));
        }
        for (int k = clamp_cell(lo.z(), 2); k <= clamp_cell(hi.z(), 2); ++k)
            for (int j = clamp_cell(lo.y(), 1); j <= clamp_cell(hi.y(), 1); ++j)
                for (int i = clamp_cell(lo.x(), 0); i <= clamp_cell(hi.x(), 0); ++i)
                    buckets_[static_cast<std::size_t>(i + cells_[0] * (j + cells_[1] * k))].push_back(e);
    }
}

std::optional<PointLocator::Hit> PointLocator::locate(const Vec3& p, double tol) const
{
    if (!box_.contains(p, tol)) return std::nullopt;
    int idx[3];
    for (int a = 0; a < 3; ++a)
        idx[a] = std::clamp(static_cast<int>(std::floor((p[a] - box_.lo[a]) / cell_size_[a])), 0,
                            cells_[static_cast<std::size_t>(a)] - 1);
    const auto& bucket = buckets_[static_cast<std::size_t>(idx[0] + cells_[0] * (idx[1] + cells_[1] * idx[2]))];
    std::optional<Hit> best;
    double best_violation = tol;
    for (std::size_t e : bucket) {
        const Tet& t = mesh_->elements()[e];
        Eigen::Matrix3d jac;
        const Vec3& a = mesh_->node(t[0]);
        jac.col(0) = mesh_->node(t[1]) - a;
        jac.col(1) = mesh_->node(t[2]) - a;
        jac.col(2) = mesh_->node(t[3]) - a;
        Vec3 l = jac.partialPivLu().solve(p - a);
        Eigen::Vector4d bary(1.0 - l.sum(), l.x(), l.y(), l.z());
        double violation = std::max(0.0, -bary.minCoeff());
        if (violation <= best_violation) {
            if (violation == 0.0) return Hit{e, bary};
            best_violation = violation;
            best = Hit{e, bary};
        }
    }
    return best;
}

std::optional<double> PointLocator::interpolate(const Eigen::VectorXd& nodal, const Vec3& p) const
{
    auto hit = locate(p);
    if (!hit) return std::nullopt;
    const Tet& t = mesh_->elements()[hit->element];
    double v = 0.0;
    for (int k = 0; k < 4; ++k) v += hit->bary[k] * nodal[t[static_cast<std::size_t>(k)]];
    return v;
}

VolumeSamples sample_nodal_on_grid(const TetMesh& mesh, const Eigen::VectorXd& nodal, const GridSpec& grid)
{
    if (static_cast<std::size_t>(nodal.size()) != mesh.num_nodes())
        throw std::invalid_argument("sample_nodal_on_grid: nodal field has wrong length");
    PointLocator loc(mesh);
    VolumeSamples out{grid, std::vector<double>(grid.count(), 0.0)};
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i)
                out.values[grid.index(i, j, k)] = loc.interpolate(nodal, grid.point(i, j, k)).value_or(0.0);
    return out;
}

std::vector<char> inside_mask(const TetMesh& mesh, const GridSpec& grid)
{
    PointLocator loc(mesh);
    std::vector<char> mask(grid.count(), 0);
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) mask[grid.index(i, j, k)] = loc.locate(grid.point(i, j, k)) ? 1 : 0;
    return mask;
}

std::string ThresholdPolicy::describe() const
{
    switch (kind) {
    case Kind::fraction_of_max: return "fraction_of_max:" + format_double(value);
    case Kind::fixed: return "fixed:" + format_double(value);
    case Kind::otsu: return "otsu";
    }
    return "unknown";
}

namespace {

double otsu_threshold(const std::vector<double>& values)
{
    constexpr int bins = 256;
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) return hi;
    std::vector<double> hist(bins, 0.0);
    for (double v : values) {
        int b = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
        hist[static_cast<std::size_t>(b)] += 1.0;
    }
    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int b = 0; b < bins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = 0;
    for (int b = 0; b < bins; ++b) {
        w0 += hist[static_cast<std::size_t>(b)];
        if (w0 == 0.0) continue;
        double w1 = total - w0;
        if (w1 == 0.0) break;
        sum0 += b * hist[static_cast<std::size_t>(b)];
        double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = b;
        }
    }
    return lo + (hi - lo) * (best_bin + 1) / bins;
}

}  // namespace

double binarization_threshold(const std::vector<double>& values, const ThresholdPolicy& policy)
{
    if (values.empty()) return 0.0;
    switch (policy.kind) {
    case ThresholdPolicy::Kind::fraction_of_max:
        return policy.value * *std::max_element(values.begin(), values.end());
    case ThresholdPolicy::Kind::fixed: return policy.value;
    case ThresholdPolicy::Kind::otsu: return otsu_threshold(values);
    }
    return 0.0;
}

DiceResult dice(const std::vector<double>& a, const std::vector<double>& b, const ThresholdPolicy& policy)
{
    if (a.size() != b.size()) throw std::invalid_argument("dice: fields sampled on different grids");
    DiceResult r;
    r.policy = policy.describe();
    r.threshold_a = binarization_threshold(a, policy);
    r.threshold_b = binarization_threshold(b, policy);
    for (std::size_t i = 0; i < a.size(); ++i) {
        bool in_a = a[i] > 0.0 && a[i] >= r.threshold_a;
        bool in_b = b[i] > 0.0 && b[i] >= r.threshold_b;
        r.count_a += in_a;
        r.count_b += in_b;
        r.count_both += in_a && in_b;
    }
    if (r.count_a == 0 && r.count_b == 0)
        r.dice = 1.0;
    else
        r.dice = 2.0 * static_cast<double>(r.count_both) / static_cast<double>(r.count_a + r.count_b);
    return r;
}

DiceResult dice(const VolumeSamples& a, const VolumeSamples& b, const ThresholdPolicy& policy)
{
    if (!a.grid.same_as(b.grid)) throw std::invalid_argument("dice: fields sampled on different grids");
    return dice(a.values, b.values, policy);
}

double trilinear(const VolumeSamples& v, const Vec3& p)
{
    const auto& g = v.grid;
    double f[3];
    int i0[3];
    for (int a = 0; a < 3; ++a) {
        double u = (p[a] - g.origin[a]) / g.spacing[a];
        int n = g.dims[static_cast<std::size_t>(a)];
        if (u < -1e-9 || u > (n - 1) + 1e-9) throw std::out_of_range("point outside sampling grid");
        u = std::clamp(u, 0.0, static_cast<double>(n - 1));
        int i = std::min(static_cast<int>(std::floor(u)), std::max(n - 2, 0));
        i0[a] = i;
        f[a] = n == 1 ? 0.0 : u - i;
    }
    double out = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                int i = std::min(i0[0] + dx, g.dims[0] - 1);
                int j = std::min(i0[1] + dy, g.dims[1] - 1);
                int k = std::min(i0[2] + dz, g.dims[2] - 1);
                double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
                if (w != 0.0) out += w * v.values[g.index(i, j, k)];
            }
    return out;
}

std::vector<double> line_profile(const VolumeSamples& volume, const Vec3& start, const Vec3& end, int n)
{
    if (n < 2) throw std::invalid_argument("line_profile needs at least two samples");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    try {
        for (int i = 0; i < n; ++i) {
            double t = static_cast<double>(i) / (n - 1);
            out.push_back(trilinear(volume, start + t * (end - start)));
        }
    } catch (const std::out_of_range&) {
        throw std::out_of_range("line_profile: segment leaves the sampling grid");
    }
    return out;
}

double full_width_half_max(const std::vector<double>& profile, double step)
{
    if (profile.size() < 2) return 0.0;
    auto peak_it = std::max_element(profile.begin(), profile.end());
    double half = 0.5 * *peak_it;
    if (!(half > 0.0)) return 0.0;
    auto peak = static_cast<std::size_t>(peak_it - profile.begin());
    double left = 0.0, right = static_cast<double>(profile.size() - 1);
    for (std::size_t i = peak; i > 0; --i)
        if (profile[i - 1] < half) {
            left = (i - 1) + (half - profile[i - 1]) / (profile[i] - profile[i - 1]);
            break;
        }
    for (std::size_t i = peak; i + 1 < profile.size(); ++i)
        if (profile[i + 1] < half) {
            right = i + (profile[i] - half) / (profile[i] - profile[i + 1]);
            break;
        }
    return (right - left) * step;
}

MuErrorSeries mu_error(const std::vector<double>& mu_a, const std::vector<double>& mu_s, double true_mu_a,
                       double true_mu_s)
{
    if (mu_a.empty() || mu_a.size() != mu_s.size()) throw std::invalid_argument("mu_error: empty or ragged trace");
    MuErrorSeries out;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        out.mu_a_pct.push_back(std::abs(mu_a[i] - true_mu_a) / true_mu_a * 100.0);
        out.mu_s_pct.push_back(std::abs(mu_s[i] - true_mu_s) / true_mu_s * 100.0);
    }
    std::size_t window = std::max<std::size_t>(1, mu_a.size() / 10);
    std::size_t first = mu_a.size() - window;
    out.final_mu_a_pct = std::accumulate(out.mu_a_pct.begin() + static_cast<long>(first), out.mu_a_pct.end(), 0.0) / window;
    out.final_mu_s_pct = std::accumulate(out.mu_s_pct.begin() + static_cast<long>(first), out.mu_s_pct.end(), 0.0) / window;
    return out;
}

std::string format_vtk_volume(const VolumeSamples& volume, const std::string& name)
{
    const auto& g = volume.grid;
    std::string out = "# vtk DataFile Version 3.0\n" + name + "\nASCII\nDATASET STRUCTURED_POINTS\n";
    out += "DIMENSIONS " + std::to_string(g.dims[0]) + " " + std::to_string(g.dims[1]) + " " + std::to_string(g.dims[2]) + "\n";
    out += "ORIGIN " + format_double(g.origin.x()) + " " + format_double(g.origin.y()) + " " + format_double(g.origin.z()) + "\n";
    out += "SPACING " + format_double(g.spacing.x()) + " " + format_double(g.spacing.y()) + " " +
           format_double(g.spacing.z()) + "\n";
    out += "POINT_DATA " + std::to_string(g.count()) + "\n";
    out += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
    for (double v : volume.values) {
        out += format_double(v);
        out += '\n';
    }
    return out;
}

VolumeSamples parse_vtk_volume(const std::string& text)
{
    // Skip the two free-form header lines.
    std::size_t pos = 0;
    for (int i = 0; i < 2; ++i) {
        pos = text.find('\n', pos);
        if (pos == std::string::npos) throw FormatError("vtk: truncated header");
        ++pos;
    }
    auto tok = split_whitespace(std::string_view(text).substr(pos));
    std::size_t k = 0;
    auto next = [&]() {
        if (k >= tok.size()) throw FormatError("vtk: truncated file");
        return tok[k++];
    };
    auto expect = [&](std::string_view w) {
        if (next() != w) throw FormatError("vtk: expected '" + std::string(w) + "'");
    };
    expect("ASCII");
    expect("DATASET");
    expect("STRUCTURED_POINTS");
    VolumeSamples v;
    expect("DIMENSIONS");
    for (auto& d : v.grid.dims) d = static_cast<int>(parse_integer(next()));
    expect("ORIGIN");
    for (int a = 0; a < 3; ++a) v.grid.origin[a] = parse_double(next());
    expect("SPACING");
    for (int a = 0; a < 3; ++a) v.grid.spacing[a] = parse_double(next());
    expect("POINT_DATA");
    auto n = static_cast<std::size_t>(parse_integer(next()));
    if (n != v.grid.count()) throw FormatError("vtk: POINT_DATA does not match DIMENSIONS");
    expect("SCALARS");
    next();
    next();
    // Optional component count.
    if (k < tok.size() && tok[k] != "LOOKUP_TABLE") next();
    expect("LOOKUP_TABLE");
    next();
    if (tok.size() - k != n) throw FormatError("vtk: wrong number of scalar values");
    v.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) v.values.push_back(parse_double(next()));
    return v;
}

void save_vtk_volume(const VolumeSamples& volume, const std::string& name, const std::filesystem::path& path)
{
    write_text_file(path, format_vtk_volume(volume, name));
}

VolumeSamples load_vtk_volume(const std::filesystem::path& path) { return parse_vtk_volume(read_text_file(path)); }

void save_vtk_mesh(const TetMesh& mesh, const std::vector<std::pair<std::string, Eigen::VectorXd>>& fields,
                   const std::filesystem::path& path)
{
    std::string out = "# vtk DataFile Version 3.0\ntetmesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out += "POINTS " + std::to_string(mesh.num_nodes()) + " double\n";
    for (const auto& p : mesh.nodes()) out += format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + "\n";
    out += "CELLS " + std::to_string(mesh.num_elements()) + " " + std::to_string(5 * mesh.num_elements()) + "\n";
    for (const auto& t : mesh.elements())
        out += "4 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + " " +
               std::to_string(t[3]) + "\n";
    out += "CELL_TYPES " + std::to_string(mesh.num_elements()) + "\n";
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) out += "10\n";
    if (!fields.empty()) {
        out += "POINT_DATA " + std::to_string(mesh.num_nodes()) + "\n";
        for (const auto& [name, values] : fields) {
            if (static_cast<std::size_t>(values.size()) != mesh.num_nodes())
                throw std::invalid_argument("save_vtk_mesh: field '" + name + "' has wrong length");
            out += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
            for (Eigen::Index i = 0; i < values.size(); ++i) out += format_double(values[i]) + "\n";
        }
    }
    write_text_file(path, out);
}

std::string format_metrics_csv(const std::vector<MetricsRow>& rows)
{
    std::string out = "case,method,dice,final_mu_a_err_pct,final_mu_s_err_pct\n";
    for (const auto& r : rows)
        out += r.scene + "," + r.method + "," + format_double(r.dice) + "," + format_double(r.final_mu_a_err_pct) + "," +
               format_double(r.final_mu_s_err_pct) + "\n";
    return out;
}

}  // namespace mufmt
