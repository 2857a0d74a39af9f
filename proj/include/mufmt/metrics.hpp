#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mufmt/mesh.hpp"

namespace mufmt {

// Regular sampling grid, x fastest.
struct GridSpec {
    Vec3 origin = Vec3::Zero();
    Vec3 spacing = Vec3::Ones();
    std::array<int, 3> dims{1, 1, 1};

    std::size_t count() const
    {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const
    {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
    }
    Vec3 point(int i, int j, int k) const
    {
        return origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
    }
    std::vector<Vec3> points() const;
    bool same_as(const GridSpec& other, double tol = 1e-9) const;
};

// Grid covering `box` with (approximately) the requested spacing; the last
// sample of each axis lands on box.hi.
GridSpec grid_over(const BoundingBox& box, double spacing);

struct VolumeSamples {
    GridSpec grid;
    std::vector<double> values;
};

// Locates points in a tetrahedral mesh through a uniform bucket grid.
class PointLocator {
public:
    explicit PointLocator(const TetMesh& mesh);

    struct Hit {
        std::size_t element;
        Eigen::Vector4d bary;
    };
    std::optional<Hit> locate(const Vec3& p, double tol = 1e-9) const;
    // P1 interpolation of nodal values; nullopt outside the mesh.
    std::optional<double> interpolate(const Eigen::VectorXd& nodal, const Vec3& p) const;

private:
    const TetMesh* mesh_;
    BoundingBox box_;
    std::array<int, 3> cells_{};
    Vec3 cell_size_;
    std::vector<std::vector<std::size_t>> buckets_;
};

// Nodal field on a grid by P1 interpolation; points outside the mesh get 0.
VolumeSamples sample_nodal_on_grid(const TetMesh& mesh, const Eigen::VectorXd& nodal, const GridSpec& grid);
// 1 for grid points inside the mesh, 0 outside.
std::vector<char> inside_mask(const TetMesh& mesh, const GridSpec& grid);

struct ThresholdPolicy {
    enum class Kind { fraction_of_max, fixed, otsu };
    Kind kind = Kind::fraction_of_max;
    double value = 0.5;  // fraction for fraction_of_max, absolute level for fixed

    std::string describe() const;
};

struct DiceResult {
    double dice = 0.0;
    double threshold_a = 0.0;
    double threshold_b = 0.0;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    std::size_t count_both = 0;
    std::string policy;
};

double binarization_threshold(const std::vector<double>& values, const ThresholdPolicy& policy);

// Each field is binarized with its own threshold (values >= threshold and > 0).
// Both sets empty gives 1, exactly one empty gives 0.
DiceResult dice(const std::vector<double>& a, const std::vector<double>& b, const ThresholdPolicy& policy = {});
DiceResult dice(const VolumeSamples& a, const VolumeSamples& b, const ThresholdPolicy& policy = {});

// Trilinear interpolation along the segment [start, end] at n evenly spaced points.
std::vector<double> line_profile(const VolumeSamples& volume, const Vec3& start, const Vec3& end, int n);
double trilinear(const VolumeSamples& volume, const Vec3& p);

// Full width at half maximum of a 1D profile sampled at uniform spacing `step`.
double full_width_half_max(const std::vector<double>& profile, double step);

struct MuErrorSeries {
    std::vector<double> mu_a_pct;
    std::vector<double> mu_s_pct;
    double final_mu_a_pct = 0.0;  // mean over the last 10% of iterations
    double final_mu_s_pct = 0.0;
};

// Percent error series from per-iteration (mu_a, mu_s') values.
MuErrorSeries mu_error(const std::vector<double>& mu_a, const std::vector<double>& mu_s, double true_mu_a,
                       double true_mu_s);

// Legacy VTK structured points, ASCII, float64.
std::string format_vtk_volume(const VolumeSamples& volume, const std::string& name);
VolumeSamples parse_vtk_volume(const std::string& text);
void save_vtk_volume(const VolumeSamples& volume, const std::string& name, const std::filesystem::path& path);
VolumeSamples load_vtk_volume(const std::filesystem::path& path);

// Legacy VTK unstructured grid with one point-data array per named field.
void save_vtk_mesh(const TetMesh& mesh, const std::vector<std::pair<std::string, Eigen::VectorXd>>& fields,
                   const std::filesystem::path& path);

struct MetricsRow {
    std::string scene;
    std::string method;
    double dice = 0.0;
    double final_mu_a_err_pct = 0.0;
    double final_mu_s_err_pct = 0.0;
};

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace mufmt
