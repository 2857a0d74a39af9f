#include "mufmt/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mufmt {

namespace {

const std::vector<std::pair<PresetId, std::string>>& preset_table()
{
    static const std::vector<std::pair<PresetId, std::string>> table{
        {PresetId::s_shape, "s_shape"},
        {PresetId::case1_sphere, "case1"},
        {PresetId::case2_cap_sphere, "case2"},
        {PresetId::case3_peanut, "case3"},
        {PresetId::case4_peanut_plus_sphere, "case4"},
    };
    return table;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b)
{
    Vec3 ab = b - a;
    double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).norm();
}

Target sphere(const Vec3& c, double r, double level) { return Target{Target::Kind::sphere, {c}, r, level}; }

// Two semicircle-plus arcs forming an "S" in the xy plane at height z.
std::vector<Vec3> s_curve(const Vec3& center, double arc_radius, int per_arc)
{
    const double pi = std::numbers::pi;
    std::vector<Vec3> pts;
    const double cx = center.x(), cy = center.y(), z = center.z(), r = arc_radius;
    for (int k = 0; k <= per_arc; ++k) {
        double th = 1.5 * pi * k / per_arc;  // upper arc, counter-clockwise from (cx+r, cy+r) to (cx, cy)
        pts.emplace_back(cx + r * std::cos(th), cy + r + r * std::sin(th), z);
    }
    for (int k = 1; k <= per_arc; ++k) {
        double th = 0.5 * pi - 1.5 * pi * k / per_arc;  // lower arc, clockwise from (cx, cy) to (cx-r, cy-r)
        pts.emplace_back(cx + r * std::cos(th), cy - r + r * std::sin(th), z);
    }
    return pts;
}

}  // namespace

PresetId parse_preset(const std::string& s)
{
    for (const auto& [id, name] : preset_table())
        if (s == name || s == to_string(id)) return id;
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown preset '" + s + "' (valid: " + valid + ")");
}

std::string to_string(PresetId id)
{
    for (const auto& [pid, name] : preset_table())
        if (pid == id) return name;
    return "unknown";
}

std::vector<std::string> preset_names()
{
    std::vector<std::string> out;
    for (const auto& [id, name] : preset_table()) out.push_back(name);
    return out;
}

double Target::distance(const Vec3& p) const
{
    if (path.empty()) return std::numeric_limits<double>::infinity();
    if (kind == Kind::sphere || path.size() == 1) return (p - path.front()).norm();
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < path.size(); ++i) d = std::min(d, segment_distance(p, path[i], path[i + 1]));
    return d;
}

KeyValueConfig LayoutSpec::to_config() const
{
    KeyValueConfig c;
    c.set("src_nx", static_cast<long long>(src_nx));
    c.set("src_ny", static_cast<long long>(src_ny));
    c.set("det_nx", static_cast<long long>(det_nx));
    c.set("det_ny", static_cast<long long>(det_ny));
    c.set("inset", inset);
    c.set("source_side", to_string(options.source_side));
    c.set("detector_side", to_string(options.detector_side));
    c.set("source_model", to_string(options.source_model));
    c.set("source_depth_mu_s", options.mu_s_prime);
    c.set("detector_sigma", options.detector_sigma);
    return c;
}

LayoutSpec LayoutSpec::from_config(const KeyValueConfig& c)
{
    c.require_known({"src_nx", "src_ny", "det_nx", "det_ny", "inset", "source_side", "detector_side", "source_model",
                     "source_depth_mu_s", "detector_sigma"});
    LayoutSpec s;
    s.src_nx = static_cast<int>(c.get_integer("src_nx", s.src_nx));
    s.src_ny = static_cast<int>(c.get_integer("src_ny", s.src_ny));
    s.det_nx = static_cast<int>(c.get_integer("det_nx", s.det_nx));
    s.det_ny = static_cast<int>(c.get_integer("det_ny", s.det_ny));
    s.inset = c.get_double("inset", s.inset);
    s.options.source_side = parse_side(c.get_string("source_side", to_string(s.options.source_side)));
    s.options.detector_side = parse_side(c.get_string("detector_side", to_string(s.options.detector_side)));
    s.options.source_model = parse_source_model(c.get_string("source_model", to_string(s.options.source_model)));
    s.options.mu_s_prime = c.get_double("source_depth_mu_s", s.options.mu_s_prime);
    s.options.detector_sigma = c.get_double("detector_sigma", s.options.detector_sigma);
    if (s.src_nx < 1 || s.src_ny < 1 || s.det_nx < 1 || s.det_ny < 1) throw FormatError("layout: raster sizes must be >= 1");
    if (!(s.inset >= 0.0 && s.inset < 0.5)) throw FormatError("layout: inset must lie in [0, 0.5)");
    return s;
}

SourceDetectorLayout build_layout(const TetMesh& mesh, const LayoutSpec& spec)
{
    BoundingBox box = mesh.bounds();
    return build_layout(mesh, raster_grid(box, spec.src_nx, spec.src_ny, spec.inset),
                        raster_grid(box, spec.det_nx, spec.det_ny, spec.inset), spec.options);
}

ScenePreset make_preset(PresetId id, double edge_length)
{
    ScenePreset p;
    p.id = id;
    p.truth.mu_a = 0.1;
    p.truth.mu_s_prime = 1.0;
    p.phantom.edge_length = edge_length;
    p.phantom.dimensions = Vec3(55.0, 55.0, 15.0);
    p.layout.options.mu_s_prime = p.truth.mu_s_prime;
    const Vec3 mid(27.5, 27.5, 7.5);
    switch (id) {
    case PresetId::s_shape:
        p.targets.push_back(Target{Target::Kind::tube, s_curve(mid, 5.0, 48), 2.0, 1.0});
        break;
    case PresetId::case1_sphere:
        p.targets.push_back(sphere(mid, 1.5, 1.0));
        break;
    case PresetId::case2_cap_sphere:
        p.phantom.shape = PhantomSpec::Shape::slab_with_cap;
        p.phantom.dimensions = Vec3(50.0, 50.0, 4.0);
        p.phantom.cap_height = 5.0;
        p.targets.push_back(sphere(Vec3(25.0, 25.0, 4.5), 1.0, 1.0));
        break;
    case PresetId::case3_peanut:
        p.targets.push_back(sphere(mid - Vec3(2.0, 0, 0), 3.0, 1.0));
        p.targets.push_back(sphere(mid + Vec3(2.0, 0, 0), 3.0, 1.0));
        break;
    case PresetId::case4_peanut_plus_sphere:
        p.targets.push_back(sphere(mid - Vec3(2.0, 0, 0), 3.0, 1.0));
        p.targets.push_back(sphere(mid + Vec3(2.0, 0, 0), 3.0, 1.0));
        p.targets.push_back(sphere(mid + Vec3(2.0, 0, 0), 1.5, 2.0));
        break;
    }
    return p;
}

Eigen::VectorXd ground_truth_field(const ScenePreset& preset, const TetMesh& mesh)
{
    const auto n = static_cast<Eigen::Index>(mesh.num_nodes());
    Eigen::VectorXd C = Eigen::VectorXd::Zero(n);
    const BoundingBox box = mesh.bounds();
    const auto& boundary = mesh.node_is_boundary();
    for (std::size_t t = 0; t < preset.targets.size(); ++t) {
        const Target& target = preset.targets[t];
        if (!(target.radius > 0.0)) continue;
        if (target.path.empty()) throw SceneError("target " + std::to_string(t) + " has no geometry");
        for (const Vec3& c : target.path)
            for (int a = 0; a < 3; ++a)
                if (c[a] - target.radius <= box.lo[a] || c[a] + target.radius >= box.hi[a])
                    throw SceneError("target " + std::to_string(t) + " exits the mesh volume");
        bool any = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (target.distance(mesh.node(static_cast<Index>(i))) > target.radius) continue;
            if (boundary[static_cast<std::size_t>(i)])
                throw SceneError("target " + std::to_string(t) + " touches boundary node " + std::to_string(i));
            C[i] = target.level;
            any = true;
        }
        if (!any) {
            // Finer than the mesh: keep the nearest interior node.
            Eigen::Index best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n; ++i) {
                if (boundary[static_cast<std::size_t>(i)]) continue;
                double d = target.distance(mesh.node(static_cast<Index>(i)));
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            if (best < 0) throw SceneError("mesh has no interior node for target " + std::to_string(t));
            C[best] = target.level;
        }
    }
    return C;
}

SceneBundle simulate_scene(const ScenePreset& preset, double noise, std::uint64_t seed)
{
    if (!(noise >= 0.0)) throw std::invalid_argument("noise level must be non-negative");
    TetMesh mesh = generate_phantom_mesh(preset.phantom);
    Eigen::VectorXd C = ground_truth_field(preset, mesh);
    SystemMatrices sys = assemble(mesh, preset.truth.zeta, preset.mass);
    Factorization fact(compose(sys, preset.truth));
    SourceDetectorLayout layout = build_layout(mesh, preset.layout);
    ForwardResult fr = forward_model(fact, layout, C);
    MeasurementStack M = noise > 0.0 ? add_noise(fr.measurements, noise, seed) : fr.measurements;
    return SceneBundle{preset, std::move(mesh), std::move(layout), std::move(C), std::move(M), noise, seed};
}

void save_scene(const SceneBundle& scene, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    save_mesh(scene.mesh, dir / "mesh.txt");
    save_measurements(scene.M_real, dir / "measurements.txt");
    save_field(std::vector<double>(scene.C_true.data(), scene.C_true.data() + scene.C_true.size()), dir / "ground_truth.txt");
    scene.preset.layout.to_config().save(dir / "layout.cfg");

    const ScenePreset& p = scene.preset;
    KeyValueConfig m;
    m.set("preset", to_string(p.id));
    m.set("edge_length", p.phantom.edge_length);
    m.set("shape", p.phantom.shape == PhantomSpec::Shape::slab ? "slab" : "slab_with_cap");
    m.set("dim_x", p.phantom.dimensions.x());
    m.set("dim_y", p.phantom.dimensions.y());
    m.set("dim_z", p.phantom.dimensions.z());
    m.set("cap_height", p.phantom.cap_height);
    m.set("noise", scene.noise);
    m.set("seed", std::to_string(scene.seed));
    m.set("true_mu_a", p.truth.mu_a);
    m.set("true_mu_s", p.truth.mu_s_prime);
    m.set("zeta", p.truth.zeta);
    m.set("c", p.truth.c);
    m.set("mass", to_string(p.mass));
    m.set("nodes", static_cast<long long>(scene.mesh.num_nodes()));
    m.set("targets", static_cast<long long>(p.targets.size()));
    for (std::size_t t = 0; t < p.targets.size(); ++t) {
        // Artifact constants: the target geometry is not specified numerically beyond diameters.
        const Target& tg = p.targets[t];
        std::string key = "target" + std::to_string(t) + "_";
        m.set(key + "kind", tg.kind == Target::Kind::sphere ? "sphere" : "tube");
        m.set(key + "radius", tg.radius);
        m.set(key + "level", tg.level);
        if (tg.kind == Target::Kind::sphere) {
            const Vec3& c = tg.path.front();
            m.set(key + "center", format_double(c.x()) + " " + format_double(c.y()) + " " + format_double(c.z()));
        } else {
            m.set(key + "path_points", static_cast<long long>(tg.path.size()));
        }
    }
    m.save(dir / "manifest.cfg");
}

LoadedScene load_scene(const std::filesystem::path& dir)
{
    for (const char* name : {"mesh.txt", "measurements.txt", "ground_truth.txt", "layout.cfg", "manifest.cfg"})
        if (!std::filesystem::exists(dir / name)) throw SceneError("scene file missing: " + (dir / name).string());
    TetMesh mesh = load_mesh(dir / "mesh.txt");
    MeasurementStack M = load_measurements(dir / "measurements.txt");
    auto gt = load_field(dir / "ground_truth.txt");
    if (gt.size() != mesh.num_nodes())
        throw SceneError("ground truth has " + std::to_string(gt.size()) + " values but the mesh has " +
                         std::to_string(mesh.num_nodes()) + " nodes");
    LayoutSpec layout = LayoutSpec::from_config(KeyValueConfig::load(dir / "layout.cfg"));
    KeyValueConfig manifest = KeyValueConfig::load(dir / "manifest.cfg");
    OpticalParams truth;
    truth.mu_a = manifest.get_double("true_mu_a", truth.mu_a);
    truth.mu_s_prime = manifest.get_double("true_mu_s", truth.mu_s_prime);
    truth.zeta = manifest.get_double("zeta", truth.zeta);
    truth.c = manifest.get_double("c", truth.c);
    MassScheme mass = MassScheme::lumped;
    try {
        mass = parse_mass_scheme(manifest.get_string("mass", "lumped"));
    } catch (const std::invalid_argument& e) {
        throw SceneError(e.what());
    }
    Eigen::VectorXd C = Eigen::Map<const Eigen::VectorXd>(gt.data(), static_cast<Eigen::Index>(gt.size()));
    return LoadedScene{std::move(mesh), std::move(M), std::move(C), layout, std::move(manifest), truth, mass};
}

}  // namespace mufmt
