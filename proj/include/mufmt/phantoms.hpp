#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mufmt/fem.hpp"
#include "mufmt/forward.hpp"
#include "mufmt/io.hpp"
#include "mufmt/mesh.hpp"

namespace mufmt {

class SceneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PresetId { s_shape, case1_sphere, case2_cap_sphere, case3_peanut, case4_peanut_plus_sphere };

PresetId parse_preset(const std::string& s);
std::string to_string(PresetId id);
std::vector<std::string> preset_names();

// Ball or tube around a polyline; nodes within `radius` of the core get `level`.
struct Target {
    enum class Kind { sphere, tube };
    Kind kind = Kind::sphere;
    std::vector<Vec3> path;  // one point for a sphere
    double radius = 0.0;
    double level = 1.0;

    double distance(const Vec3& p) const;
};

// Source and detector rasters. Sources sit on source_side, detectors on detector_side.
struct LayoutSpec {
    int src_nx = 8, src_ny = 8;
    int det_nx = 16, det_ny = 16;
    double inset = 0.1;
    LayoutOptions options;

    KeyValueConfig to_config() const;
    static LayoutSpec from_config(const KeyValueConfig& cfg);
};

SourceDetectorLayout build_layout(const TetMesh& mesh, const LayoutSpec& spec);

struct ScenePreset {
    PresetId id = PresetId::case1_sphere;
    PhantomSpec phantom;
    std::vector<Target> targets;  // later targets override earlier ones where they overlap
    OpticalParams truth;
    LayoutSpec layout;
    MassScheme mass = MassScheme::lumped;
};

ScenePreset make_preset(PresetId id, double edge_length = 2.5);

// Nodal indicator (or multi-level) field. Throws SceneError when a target
// touches a boundary node; a target that captures no node at all is
// represented by its nearest interior node.
Eigen::VectorXd ground_truth_field(const ScenePreset& preset, const TetMesh& mesh);

struct SceneBundle {
    ScenePreset preset;
    TetMesh mesh;
    SourceDetectorLayout layout;
    Eigen::VectorXd C_true;
    MeasurementStack M_real;
    double noise = 0.0;
    std::uint64_t seed = 0;
};

SceneBundle simulate_scene(const ScenePreset& preset, double noise, std::uint64_t seed);

// Directory layout: mesh.txt, measurements.txt, ground_truth.txt, layout.cfg, manifest.cfg.
void save_scene(const SceneBundle& scene, const std::filesystem::path& dir);

struct LoadedScene {
    TetMesh mesh;
    MeasurementStack M_real;
    Eigen::VectorXd C_true;
    LayoutSpec layout;
    KeyValueConfig manifest;
    OpticalParams truth;
    MassScheme mass = MassScheme::lumped;
};

LoadedScene load_scene(const std::filesystem::path& dir);

}  // namespace mufmt
