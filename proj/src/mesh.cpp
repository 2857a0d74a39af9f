#include "mufmt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string_view>
#include <utility>

#include <Eigen/Geometry>

#include "mufmt/io.hpp"

namespace mufmt {

namespace {

using FaceKey = std::array<Index, 3>;

FaceKey sorted_key(Tri f)
{
    std::sort(f.begin(), f.end());
    return f;
}

// Outward-oriented faces of a positively oriented tetrahedron.
std::array<Tri, 4> outward_faces(const Tet& t)
{
    return {Tri{t[1], t[2], t[3]}, Tri{t[0], t[3], t[2]}, Tri{t[0], t[1], t[3]}, Tri{t[0], t[2], t[1]}};
}

// True if `a` and `b` list the same vertices in the same cyclic order.
bool same_orientation(const Tri& a, const Tri& b)
{
    for (int shift = 0; shift < 3; ++shift)
        if (a[0] == b[shift] && a[1] == b[(shift + 1) % 3] && a[2] == b[(shift + 2) % 3]) return true;
    return false;
}

struct FaceRecord {
    FaceKey key;
    Tri oriented;
    std::size_t element;
};

// Faces referenced by exactly one element, in element order.
std::vector<FaceRecord> exposed_faces(const std::vector<Tet>& elements)
{
    std::vector<FaceRecord> all;
    all.reserve(elements.size() * 4);
    for (std::size_t e = 0; e < elements.size(); ++e)
        for (const Tri& f : outward_faces(elements[e])) all.push_back({sorted_key(f), f, e});

    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return all[a].key < all[b].key; });

    std::vector<char> exposed(all.size(), 0);
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && all[order[j]].key == all[order[i]].key) ++j;
        if (j - i == 1) exposed[order[i]] = 1;
        i = j;
    }
    std::vector<FaceRecord> out;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (exposed[i]) out.push_back(all[i]);
    return out;
}

struct Violation {
    enum class Where { element, boundary, global } where;
    std::size_t item = 0;
    std::string message;
};

std::optional<Violation> check_elements(const std::vector<Vec3>& nodes, const std::vector<Tet>& elements)
{
    const auto n = static_cast<Index>(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (!nodes[i].allFinite())
            return Violation{Violation::Where::global, i, "node " + std::to_string(i) + " has non-finite coordinates"};
    for (std::size_t e = 0; e < elements.size(); ++e) {
        for (Index v : elements[e])
            if (v < 0 || v >= n)
                return Violation{Violation::Where::element, e,
                                 "element " + std::to_string(e) + ": index out of range (" + std::to_string(v) +
                                     " not in [0, " + std::to_string(n) + "))"};
        const auto& t = elements[e];
        double vol = tet_signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
        if (!(vol > 0.0))
            return Violation{Violation::Where::element, e,
                             "element " + std::to_string(e) + ": non-positive signed volume " + format_double(vol)};
    }
    return std::nullopt;
}

std::optional<Violation> check_boundary(const std::vector<Vec3>& nodes, const std::vector<Tet>& elements,
                                        const std::vector<Tri>& boundary)
{
    const auto n = static_cast<Index>(nodes.size());
    for (std::size_t f = 0; f < boundary.size(); ++f)
        for (Index v : boundary[f])
            if (v < 0 || v >= n)
                return Violation{Violation::Where::boundary, f,
                                 "boundary face " + std::to_string(f) + ": index out of range (" + std::to_string(v) +
                                     " not in [0, " + std::to_string(n) + "))"};

    std::map<FaceKey, const FaceRecord*> exposed;
    auto faces = exposed_faces(elements);
    for (const auto& r : faces) exposed.emplace(r.key, &r);

    std::map<FaceKey, std::size_t> seen;
    for (std::size_t f = 0; f < boundary.size(); ++f) {
        const Tri& tri = boundary[f];
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
            return Violation{Violation::Where::boundary, f, "boundary face " + std::to_string(f) + ": repeated vertex"};
        auto key = sorted_key(tri);
        auto it = exposed.find(key);
        if (it == exposed.end())
            return Violation{Violation::Where::boundary, f,
                             "boundary face " + std::to_string(f) + ": not an exposed face of exactly one element"};
        if (!seen.emplace(key, f).second)
            return Violation{Violation::Where::boundary, f, "boundary face " + std::to_string(f) + ": duplicate face"};
        if (!same_orientation(tri, it->second->oriented))
            return Violation{Violation::Where::boundary, f,
                             "boundary face " + std::to_string(f) + ": not outward oriented"};
    }
    if (seen.size() != exposed.size())
        return Violation{Violation::Where::global, 0,
                         "non-manifold boundary: " + std::to_string(exposed.size() - seen.size()) +
                             " exposed element face(s) missing from the boundary list"};

    // Each directed edge of a closed oriented surface appears exactly once,
    // and its reverse exactly once.
    std::map<std::pair<Index, Index>, std::size_t> directed;
    for (std::size_t f = 0; f < boundary.size(); ++f) {
        const Tri& t = boundary[f];
        for (int k = 0; k < 3; ++k) {
            auto e = std::make_pair(t[k], t[(k + 1) % 3]);
            if (!directed.emplace(e, f).second)
                return Violation{Violation::Where::boundary, f,
                                 "non-manifold boundary: edge (" + std::to_string(e.first) + "," +
                                     std::to_string(e.second) + ") shared by more than two faces"};
        }
    }
    for (const auto& [e, f] : directed)
        if (!directed.count({e.second, e.first}))
            return Violation{Violation::Where::boundary, f,
                             "non-manifold boundary: edge (" + std::to_string(e.first) + "," +
                                 std::to_string(e.second) + ") has only one incident face"};
    return std::nullopt;
}

}  // namespace

bool BoundingBox::contains(const Vec3& p, double tol) const
{
    return (p.array() >= lo.array() - tol).all() && (p.array() <= hi.array() + tol).all();
}

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d)
{
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

TetMesh TetMesh::from_elements(std::vector<Vec3> nodes, std::vector<Tet> elements)
{
    for (std::size_t e = 0; e < elements.size(); ++e) {
        auto& t = elements[e];
        for (Index v : t)
            if (v < 0 || static_cast<std::size_t>(v) >= nodes.size())
                throw MeshError("element " + std::to_string(e) + ": index out of range");
        double vol = tet_signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
        if (vol < 0.0) std::swap(t[2], t[3]);
    }
    if (elements.empty()) throw MeshError("no elements");
    if (auto v = check_elements(nodes, elements)) throw MeshError(v->message);

    TetMesh mesh;
    mesh.nodes_ = std::move(nodes);
    mesh.elements_ = std::move(elements);
    for (const auto& r : exposed_faces(mesh.elements_)) mesh.boundary_.push_back(r.oriented);
    mesh.rebuild_flags();
    return mesh;
}

TetMesh TetMesh::from_parts(std::vector<Vec3> nodes, std::vector<Tet> elements, std::vector<Tri> boundary_faces)
{
    TetMesh mesh;
    mesh.nodes_ = std::move(nodes);
    mesh.elements_ = std::move(elements);
    mesh.boundary_ = std::move(boundary_faces);
    mesh.validate();
    mesh.rebuild_flags();
    return mesh;
}

void TetMesh::rebuild_flags()
{
    is_boundary_.assign(nodes_.size(), 0);
    for (const auto& f : boundary_)
        for (Index v : f) is_boundary_[static_cast<std::size_t>(v)] = 1;
}

void TetMesh::validate() const
{
    if (elements_.empty()) throw MeshError("no elements");
    if (auto v = check_elements(nodes_, elements_)) throw MeshError(v->message);
    if (auto v = check_boundary(nodes_, elements_, boundary_)) throw MeshError(v->message);
}

double TetMesh::signed_volume(std::size_t e) const
{
    const auto& t = elements_[e];
    return tet_signed_volume(node(t[0]), node(t[1]), node(t[2]), node(t[3]));
}

double TetMesh::total_volume() const
{
    double sum = 0.0;
    for (std::size_t e = 0; e < elements_.size(); ++e) sum += signed_volume(e);
    return sum;
}

BoundingBox TetMesh::bounds() const
{
    BoundingBox box;
    if (nodes_.empty()) return box;
    box.lo = box.hi = nodes_.front();
    for (const auto& p : nodes_) {
        box.lo = box.lo.cwiseMin(p);
        box.hi = box.hi.cwiseMax(p);
    }
    return box;
}

Vec3 TetMesh::face_normal(std::size_t f) const
{
    const auto& t = boundary_[f];
    Vec3 n = (node(t[1]) - node(t[0])).cross(node(t[2]) - node(t[0]));
    return n.normalized();
}

double TetMesh::face_area(std::size_t f) const
{
    const auto& t = boundary_[f];
    return 0.5 * (node(t[1]) - node(t[0])).cross(node(t[2]) - node(t[0])).norm();
}

std::vector<Vec3> TetMesh::boundary_node_normals() const
{
    std::vector<Vec3> normals(nodes_.size(), Vec3::Zero());
    for (std::size_t f = 0; f < boundary_.size(); ++f) {
        const auto& t = boundary_[f];
        Vec3 n = (node(t[1]) - node(t[0])).cross(node(t[2]) - node(t[0]));  // 2 * area * unit normal
        for (Index v : t) normals[static_cast<std::size_t>(v)] += n;
    }
    for (auto& n : normals)
        if (n.squaredNorm() > 0.0) n.normalize();
    return normals;
}

namespace {

struct GridSize {
    int nx, ny, nz;
};

GridSize grid_size(const Vec3& extent, double edge)
{
    auto count = [&](double len) { return static_cast<int>(std::ceil(len / edge - 1e-9)) + 1; };
    return {count(extent.x()), count(extent.y()), count(extent.z())};
}

std::vector<Tet> kuhn_elements(const GridSize& g)
{
    auto id = [&](int i, int j, int k) { return static_cast<Index>(i + g.nx * (j + g.ny * k)); };
    static constexpr std::array<std::array<int, 3>, 6> perms{
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    std::vector<Tet> elements;
    elements.reserve(static_cast<std::size_t>(6 * (g.nx - 1) * (g.ny - 1) * (g.nz - 1)));
    for (int k = 0; k + 1 < g.nz; ++k)
        for (int j = 0; j + 1 < g.ny; ++j)
            for (int i = 0; i + 1 < g.nx; ++i)
                for (const auto& p : perms) {
                    std::array<int, 3> c{i, j, k};
                    Tet t{};
                    t[0] = id(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        c[p[s]] += 1;
                        t[s + 1] = id(c[0], c[1], c[2]);
                    }
                    elements.push_back(t);
                }
    return elements;
}

void check_extent(const Vec3& extent, double edge_length)
{
    if (!(edge_length > 0.0)) throw MeshError("edge length must be positive");
    for (int a = 0; a < 3; ++a)
        if (!(extent[a] > 0.0)) throw MeshError("extent components must be positive");
    if (extent.minCoeff() < edge_length)
        throw MeshError("degenerate extent: dimension " + format_double(extent.minCoeff()) +
                        " mm is smaller than the edge length " + format_double(edge_length) + " mm");
}

}  // namespace

TetMesh generate_slab_mesh(const Vec3& extent, double edge_length)
{
    check_extent(extent, edge_length);
    auto g = grid_size(extent, edge_length);
    std::vector<Vec3> nodes;
    nodes.reserve(static_cast<std::size_t>(g.nx * g.ny * g.nz));
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i)
                nodes.emplace_back(extent.x() * i / (g.nx - 1), extent.y() * j / (g.ny - 1),
                                   extent.z() * k / (g.nz - 1));
    return TetMesh::from_elements(std::move(nodes), kuhn_elements(g));
}

CapProfile CapProfile::for_base(const Vec3& base, double cap_height)
{
    CapProfile p;
    p.cx = 0.5 * base.x();
    p.cy = 0.5 * base.y();
    p.footprint_radius = 0.5 * std::min(base.x(), base.y());
    p.height = cap_height;
    if (cap_height < 0.0) throw MeshError("cap height must be non-negative");
    if (cap_height > p.footprint_radius)
        throw MeshError("cap height " + format_double(cap_height) + " mm exceeds the footprint radius " +
                        format_double(p.footprint_radius) + " mm; the cap is not a graph over the base");
    if (cap_height > 0.0)
        p.sphere_radius = (p.footprint_radius * p.footprint_radius + cap_height * cap_height) / (2.0 * cap_height);
    return p;
}

double CapProfile::operator()(double x, double y) const
{
    if (height <= 0.0) return 0.0;
    double rho2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
    if (rho2 >= footprint_radius * footprint_radius) return 0.0;
    return std::sqrt(sphere_radius * sphere_radius - rho2) - (sphere_radius - height);
}

double CapProfile::volume() const
{
    constexpr double pi = 3.14159265358979323846;
    return pi * height * (3.0 * footprint_radius * footprint_radius + height * height) / 6.0;
}

TetMesh generate_cap_mesh(const Vec3& base, double cap_height, double edge_length)
{
    check_extent(base, edge_length);
    if (!(cap_height >= 0.0)) throw MeshError("cap height must be non-negative");
    auto cap = CapProfile::for_base(base, cap_height);

    // Layer count follows the tallest column so that stretched layers stay
    // close to the target edge length.
    auto g = grid_size(Vec3(base.x(), base.y(), base.z() + cap_height), edge_length);

    std::vector<Vec3> nodes;
    nodes.reserve(static_cast<std::size_t>(g.nx * g.ny * g.nz));
    for (int k = 0; k < g.nz; ++k)
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                double x = base.x() * i / (g.nx - 1);
                double y = base.y() * j / (g.ny - 1);
                double top = base.z() + cap(x, y);
                nodes.emplace_back(x, y, top * k / (g.nz - 1));
            }
    return TetMesh::from_elements(std::move(nodes), kuhn_elements(g));
}

TetMesh generate_phantom_mesh(const PhantomSpec& spec)
{
    if (!(spec.dimensions.minCoeff() > 0.0)) throw MeshError("phantom dimensions must be positive");
    TetMesh mesh = spec.shape == PhantomSpec::Shape::slab
                       ? generate_slab_mesh(spec.dimensions, spec.edge_length)
                       : generate_cap_mesh(spec.dimensions, spec.cap_height, spec.edge_length);
    Vec3 height(spec.dimensions.x(), spec.dimensions.y(),
                spec.dimensions.z() + (spec.shape == PhantomSpec::Shape::slab ? 0.0 : spec.cap_height));
    auto g = grid_size(height, spec.edge_length);
    if (std::min({g.nx, g.ny, g.nz}) < 5)
        throw MeshError("mesh resolution too coarse: fewer than 5 nodes along the thinnest axis");
    return mesh;
}

// ---------------------------------------------------------------- text I/O

namespace {

struct LineReader {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line_no = 0;

    std::optional<std::string_view> next()
    {
        while (pos < text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) end = text.size();
            std::string_view line = text.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            if (!trim(line).empty()) return line;
        }
        return std::nullopt;
    }
};

[[noreturn]] void fail_at(std::size_t line, const std::string& msg)
{
    throw MeshError("mesh line " + std::to_string(line) + ": " + msg);
}

std::size_t read_section(LineReader& r, std::string_view name)
{
    auto line = r.next();
    if (!line) fail_at(r.line_no + 1, "expected '" + std::string(name) + " <count>', got end of file");
    auto tok = split_whitespace(*line);
    if (tok.size() != 2 || tok[0] != name) fail_at(r.line_no, "malformed header, expected '" + std::string(name) + " <count>'");
    long long n = 0;
    try {
        n = parse_integer(tok[1]);
    } catch (const FormatError&) {
        fail_at(r.line_no, "malformed header, count is not an integer");
    }
    if (n < 0) fail_at(r.line_no, "malformed header, negative count");
    return static_cast<std::size_t>(n);
}

template <std::size_t K>
std::array<Index, K> read_indices(LineReader& r, std::size_t n_nodes, const char* what)
{
    auto line = r.next();
    if (!line) fail_at(r.line_no + 1, std::string("unexpected end of file in ") + what + " section");
    auto tok = split_whitespace(*line);
    if (tok.size() != K) fail_at(r.line_no, std::string("expected ") + std::to_string(K) + " indices");
    std::array<Index, K> out{};
    for (std::size_t i = 0; i < K; ++i) {
        long long v = 0;
        try {
            v = parse_integer(tok[i]);
        } catch (const FormatError&) {
            fail_at(r.line_no, "not an index: '" + std::string(tok[i]) + "'");
        }
        if (v < 0 || static_cast<std::size_t>(v) >= n_nodes)
            fail_at(r.line_no, "index out of range (" + std::to_string(v) + " with " + std::to_string(n_nodes) + " nodes)");
        out[i] = static_cast<Index>(v);
    }
    return out;
}

}  // namespace

TetMesh parse_mesh(const std::string& text)
{
    LineReader r{text};
    auto magic = r.next();
    if (!magic || trim(*magic) != "tetmesh v1") fail_at(r.line_no == 0 ? 1 : r.line_no, "malformed header, expected 'tetmesh v1'");

    std::size_t n_nodes = read_section(r, "nodes");
    std::vector<Vec3> nodes;
    nodes.reserve(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        auto line = r.next();
        if (!line) fail_at(r.line_no + 1, "unexpected end of file in nodes section");
        auto tok = split_whitespace(*line);
        if (tok.size() != 3) fail_at(r.line_no, "expected 3 coordinates");
        Vec3 p;
        try {
            for (int a = 0; a < 3; ++a) p[a] = parse_double(tok[static_cast<std::size_t>(a)]);
        } catch (const FormatError& e) {
            fail_at(r.line_no, e.what());
        }
        nodes.push_back(p);
    }

    std::size_t n_elem = read_section(r, "elements");
    if (n_elem == 0) fail_at(r.line_no, "no elements");
    std::vector<Tet> elements;
    std::vector<std::size_t> elem_lines;
    elements.reserve(n_elem);
    for (std::size_t e = 0; e < n_elem; ++e) {
        elements.push_back(read_indices<4>(r, n_nodes, "elements"));
        elem_lines.push_back(r.line_no);
    }

    std::size_t n_bnd = read_section(r, "boundary");
    std::vector<Tri> boundary;
    std::vector<std::size_t> bnd_lines;
    boundary.reserve(n_bnd);
    for (std::size_t f = 0; f < n_bnd; ++f) {
        boundary.push_back(read_indices<3>(r, n_nodes, "boundary"));
        bnd_lines.push_back(r.line_no);
    }
    std::size_t boundary_header_line = bnd_lines.empty() ? r.line_no : bnd_lines.front() - 1;
    if (auto extra = r.next()) fail_at(r.line_no, "trailing content after boundary section");

    if (auto v = check_elements(nodes, elements)) {
        if (v->where == Violation::Where::element) fail_at(elem_lines[v->item], v->message);
        throw MeshError(v->message);
    }
    if (auto v = check_boundary(nodes, elements, boundary)) {
        if (v->where == Violation::Where::boundary) fail_at(bnd_lines[v->item], v->message);
        fail_at(boundary_header_line, v->message);
    }
    return TetMesh::from_parts(std::move(nodes), std::move(elements), std::move(boundary));
}

std::string format_mesh(const TetMesh& mesh)
{
    std::string out = "tetmesh v1\nnodes " + std::to_string(mesh.num_nodes()) + "\n";
    for (const auto& p : mesh.nodes()) out += format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + "\n";
    out += "elements " + std::to_string(mesh.num_elements()) + "\n";
    for (const auto& t : mesh.elements())
        out += std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + " " + std::to_string(t[3]) + "\n";
    out += "boundary " + std::to_string(mesh.num_boundary_faces()) + "\n";
    for (const auto& f : mesh.boundary_faces())
        out += std::to_string(f[0]) + " " + std::to_string(f[1]) + " " + std::to_string(f[2]) + "\n";
    return out;
}

TetMesh load_mesh(const std::filesystem::path& path)
{
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const FormatError& e) {
        throw MeshError(e.what());
    }
    try {
        return parse_mesh(text);
    } catch (const MeshError& e) {
        throw MeshError(path.string() + ": " + e.what());
    }
}

void save_mesh(const TetMesh& mesh, const std::filesystem::path& path)
{
    write_text_file(path, format_mesh(mesh));
}

}  // namespace mufmt
