#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mufmt {

using Index = std::int32_t;
using Vec3 = Eigen::Vector3d;
using Tet = std::array<Index, 4>;
using Tri = std::array<Index, 3>;

class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BoundingBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return 0.5 * (lo + hi); }
    bool contains(const Vec3& p, double tol = 0.0) const;
};

// Tetrahedral volume mesh with an outward-oriented boundary triangulation.
// Coordinates are in mm. Instances are immutable once constructed.
class TetMesh {
public:
    // Builds the boundary from the element connectivity. Elements with
    // negative signed volume are reoriented; zero-volume elements throw.
    static TetMesh from_elements(std::vector<Vec3> nodes, std::vector<Tet> elements);

    // Takes all three lists verbatim and validates every invariant.
    static TetMesh from_parts(std::vector<Vec3> nodes, std::vector<Tet> elements,
                              std::vector<Tri> boundary_faces);

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_elements() const { return elements_.size(); }
    std::size_t num_boundary_faces() const { return boundary_.size(); }

    const std::vector<Vec3>& nodes() const { return nodes_; }
    const std::vector<Tet>& elements() const { return elements_; }
    const std::vector<Tri>& boundary_faces() const { return boundary_; }
    const std::vector<char>& node_is_boundary() const { return is_boundary_; }
    const Vec3& node(Index i) const { return nodes_[static_cast<std::size_t>(i)]; }

    double signed_volume(std::size_t element) const;
    double total_volume() const;
    BoundingBox bounds() const;

    // Unit outward normal of a boundary face (right-hand rule on its node order).
    Vec3 face_normal(std::size_t face) const;
    double face_area(std::size_t face) const;
    // Area-weighted average of incident boundary face normals; zero for interior nodes.
    std::vector<Vec3> boundary_node_normals() const;

    // Throws MeshError naming the first violated invariant.
    void validate() const;

private:
    TetMesh() = default;
    void rebuild_flags();

    std::vector<Vec3> nodes_;
    std::vector<Tet> elements_;
    std::vector<Tri> boundary_;
    std::vector<char> is_boundary_;
};

double tet_signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

struct PhantomSpec {
    enum class Shape { slab, slab_with_cap };
    Shape shape = Shape::slab;
    Vec3 dimensions{55.0, 55.0, 15.0};  // base extent
    double cap_height = 0.0;
    double edge_length = 2.5;
};

// Structured hexahedral grid over [0,ex]x[0,ey]x[0,ez], each hex split into
// six tetrahedra sharing the (0,0,0)-(1,1,1) diagonal.
TetMesh generate_slab_mesh(const Vec3& extent, double edge_length);

// Spherical cap profile used by generate_cap_mesh: height above the base top
// at horizontal position (x, y). The cap footprint is the disc inscribed in
// the base rectangle.
struct CapProfile {
    double cx = 0, cy = 0;
    double footprint_radius = 0;
    double height = 0;
    double sphere_radius = 0;

    static CapProfile for_base(const Vec3& base, double cap_height);
    double operator()(double x, double y) const;
    double volume() const;
};

// Slab base with a spherical cap bulge on top; each node column is stretched
// vertically so that the top surface follows base_z + cap(x, y).
TetMesh generate_cap_mesh(const Vec3& base, double cap_height, double edge_length);

TetMesh generate_phantom_mesh(const PhantomSpec& spec);

TetMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TetMesh& mesh, const std::filesystem::path& path);

// Text serialization used by load_mesh/save_mesh, exposed for tests.
TetMesh parse_mesh(const std::string& text);
std::string format_mesh(const TetMesh& mesh);

}  // namespace mufmt
