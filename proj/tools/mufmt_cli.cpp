#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mufmt/adjoint.hpp"
#include "mufmt/baselines.hpp"
#include "mufmt/fem.hpp"
#include "mufmt/forward.hpp"
#include "mufmt/io.hpp"
#include "mufmt/metrics.hpp"
#include "mufmt/phantoms.hpp"
#include "mufmt/recon.hpp"

namespace fs = std::filesystem;
using namespace mufmt;

namespace {

enum ExitCode { ok = 0, usage = 2, data = 3, numerical = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const std::vector<std::string> kMethods{"mu-neufmt", "neufmt", "l2cg", "l1fista"};

const std::vector<std::string> kCommonKeys{"method", "scene", "init_mu_a", "init_mu_s", "grid_spacing", "seed"};
const std::vector<std::string> kInrKeys{"iterations", "period", "lr_theta", "lr_decay", "lambda", "bands",
                                        "hidden_layers", "hidden_width", "head_width", "skip_layer", "normalize"};
const std::vector<std::string> kAdaptKeys{"lr_mu_a", "lr_mu_s", "adapt_mu_a", "adapt_mu_s",
                                          "clamp_lo", "clamp_hi", "mu_backtrack"};
const std::vector<std::string> kL2Keys{"alpha_rel", "solver_iters"};
const std::vector<std::string> kL1Keys{"l1_rel", "solver_iters"};

std::vector<std::string> keys_for(const std::string& method)
{
    std::vector<std::string> k = kCommonKeys;
    auto add = [&](const std::vector<std::string>& more) { k.insert(k.end(), more.begin(), more.end()); };
    if (method == "mu-neufmt" || method == "neufmt") add(kInrKeys);
    if (method == "mu-neufmt") add(kAdaptKeys);
    if (method == "l2cg") add(kL2Keys);
    if (method == "l1fista") add(kL1Keys);
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    return k;
}

std::vector<std::string> all_keys()
{
    std::set<std::string> s;
    for (const auto& m : kMethods)
        for (const auto& k : keys_for(m)) s.insert(k);
    return {s.begin(), s.end()};
}

KeyValueConfig parse_overrides(const std::vector<std::string>& sets)
{
    KeyValueConfig c;
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        c.set(std::string(trim(std::string_view(kv).substr(0, eq))), std::string(trim(std::string_view(kv).substr(eq + 1))));
    }
    return c;
}

template <class F>
auto as_usage(F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    } catch (const FormatError& e) {
        throw UsageError(e.what());
    }
}

template <class F>
auto as_data(F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const FactorizationError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

// ---------------------------------------------------------------- phantom

int cmd_phantom(const std::string& preset_name, double edge, double noise, std::uint64_t seed, const std::string& mass,
                const fs::path& out)
{
    PresetId id = as_usage([&] { return parse_preset(preset_name); });
    MassScheme scheme = as_usage([&] { return parse_mass_scheme(mass); });
    if (!(edge > 0.0)) throw UsageError("--edge must be positive");
    if (!(noise >= 0.0)) throw UsageError("--noise must be non-negative");
    ScenePreset preset = make_preset(id, edge);
    preset.mass = scheme;
    SceneBundle scene = simulate_scene(preset, noise, seed);
    save_scene(scene, out);
    std::cout << "scene " << to_string(id) << ": " << scene.mesh.num_nodes() << " nodes, " << scene.layout.num_sources()
              << " sources, " << scene.layout.num_detectors() << " detectors -> " << out.string() << "\n";
    return ok;
}

// ---------------------------------------------------------------- reconstruct

struct RunSettings {
    std::string method;
    fs::path scene;
    double grid_spacing = 1.0;
    ReconConfig recon;
    double alpha_rel = 1e-3;
    double l1_rel = 0.05;
    int solver_iters = 500;
};

RunSettings settings_from(const KeyValueConfig& c)
{
    RunSettings s;
    s.method = c.get_string("method", "mu-neufmt");
    if (std::find(kMethods.begin(), kMethods.end(), s.method) == kMethods.end())
        throw UsageError("unknown method '" + s.method + "' (valid: mu-neufmt, neufmt, l2cg, l1fista)");
    s.scene = c.get_string("scene", "");
    s.grid_spacing = c.get_double("grid_spacing", s.grid_spacing);
    ReconConfig& r = s.recon;
    r.mode = s.method == "neufmt" ? ReconMode::neufmt : ReconMode::mu_neufmt;
    r.iterations = static_cast<int>(c.get_integer("iterations", r.iterations));
    r.period = static_cast<int>(c.get_integer("period", r.period));
    r.lr_theta = c.get_double("lr_theta", r.lr_theta);
    r.lr_mu_a = c.get_double("lr_mu_a", r.lr_mu_a);
    r.lr_mu_s = c.get_double("lr_mu_s", r.lr_mu_s);
    r.lr_decay = c.get_double("lr_decay", r.lr_decay);
    r.lambda_reg = c.get_double("lambda", r.lambda_reg);
    r.initial.mu_a = c.get_double("init_mu_a", r.initial.mu_a);
    r.initial.mu_s_prime = c.get_double("init_mu_s", r.initial.mu_s_prime);
    r.adapt_mu_a = c.get_bool("adapt_mu_a", r.adapt_mu_a);
    r.adapt_mu_s = c.get_bool("adapt_mu_s", r.adapt_mu_s);
    r.seed = static_cast<std::uint64_t>(c.get_integer("seed", 0));
    r.clamp_lo = c.get_double("clamp_lo", r.clamp_lo);
    r.clamp_hi = c.get_double("clamp_hi", r.clamp_hi);
    r.mu_backtrack = static_cast<int>(c.get_integer("mu_backtrack", r.mu_backtrack));
    r.bands = static_cast<int>(c.get_integer("bands", r.bands));
    r.arch.hidden_layers = static_cast<int>(c.get_integer("hidden_layers", r.arch.hidden_layers));
    r.arch.hidden_width = static_cast<int>(c.get_integer("hidden_width", r.arch.hidden_width));
    r.arch.head_width = static_cast<int>(c.get_integer("head_width", r.arch.head_width));
    r.arch.skip_layer = static_cast<int>(c.get_integer("skip_layer", r.arch.skip_layer));
    r.normalize_measurements = c.get_bool("normalize", r.normalize_measurements);
    s.alpha_rel = c.get_double("alpha_rel", s.alpha_rel);
    s.l1_rel = c.get_double("l1_rel", s.l1_rel);
    s.solver_iters = static_cast<int>(c.get_integer("solver_iters", s.solver_iters));
    if (!(s.grid_spacing > 0.0)) throw UsageError("grid_spacing must be positive");
    if (!(s.alpha_rel > 0.0)) throw UsageError("alpha_rel must be positive");
    if (!(s.l1_rel >= 0.0)) throw UsageError("l1_rel must be non-negative");
    if (s.solver_iters < 1) throw UsageError("solver_iters must be >= 1");
    return s;
}

KeyValueConfig effective_config(const RunSettings& s)
{
    KeyValueConfig all;
    const ReconConfig& r = s.recon;
    all.set("method", s.method);
    all.set("scene", s.scene.string());
    all.set("grid_spacing", s.grid_spacing);
    all.set("init_mu_a", r.initial.mu_a);
    all.set("init_mu_s", r.initial.mu_s_prime);
    all.set("seed", std::to_string(r.seed));
    all.set("iterations", static_cast<long long>(r.iterations));
    all.set("period", static_cast<long long>(r.period));
    all.set("lr_theta", r.lr_theta);
    all.set("lr_mu_a", r.lr_mu_a);
    all.set("lr_mu_s", r.lr_mu_s);
    all.set("lr_decay", r.lr_decay);
    all.set("lambda", r.lambda_reg);
    all.set("adapt_mu_a", r.adapt_mu_a);
    all.set("adapt_mu_s", r.adapt_mu_s);
    all.set("clamp_lo", r.clamp_lo);
    all.set("clamp_hi", r.clamp_hi);
    all.set("mu_backtrack", static_cast<long long>(r.mu_backtrack));
    all.set("bands", static_cast<long long>(r.bands));
    all.set("hidden_layers", static_cast<long long>(r.arch.hidden_layers));
    all.set("hidden_width", static_cast<long long>(r.arch.hidden_width));
    all.set("head_width", static_cast<long long>(r.arch.head_width));
    all.set("skip_layer", static_cast<long long>(r.arch.skip_layer));
    all.set("normalize", r.normalize_measurements);
    all.set("alpha_rel", s.alpha_rel);
    all.set("l1_rel", s.l1_rel);
    all.set("solver_iters", static_cast<long long>(s.solver_iters));
    KeyValueConfig out;
    for (const auto& k : keys_for(s.method)) out.set(k, *all.get(k));
    return out;
}

std::vector<IterationRecord> solver_trace(const SolveResult& r, const OpticalParams& p)
{
    std::vector<IterationRecord> out;
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        IterationRecord rec;
        rec.iter = static_cast<int>(i);
        rec.loss = r.history[i];
        rec.fidelity = r.history[i];
        rec.mu_a = p.mu_a;
        rec.mu_s = p.mu_s_prime;
        out.push_back(rec);
    }
    return out;
}

int cmd_reconstruct(const KeyValueConfig& file_cfg, const KeyValueConfig& overrides, const std::string& method_flag,
                    const std::string& scene_flag, const fs::path& out)
{
    KeyValueConfig cfg = file_cfg;
    cfg.merge(overrides);
    if (!method_flag.empty()) cfg.set("method", method_flag);
    if (!scene_flag.empty()) cfg.set("scene", scene_flag);
    as_usage([&] { cfg.require_known(all_keys()); });
    RunSettings s = as_usage([&] { return settings_from(cfg); });
    if (s.scene.empty()) throw UsageError("no scene given (use --scene or a 'scene' config key)");

    // Keys that do not apply to the chosen method are ignored with a warning.
    auto applicable = keys_for(s.method);
    std::vector<std::string> ignored = cfg.unknown_keys(applicable);
    if (!ignored.empty()) {
        std::cerr << "warning: keys ignored by method " << s.method << ":";
        for (const auto& k : ignored) std::cerr << " " << k;
        std::cerr << "\n";
    }
    if (s.method == "mu-neufmt" || s.method == "neufmt") as_usage([&] { s.recon.validate(); });
    as_usage([&] { s.recon.initial.validate(); });

    LoadedScene scene = as_data([&] { return load_scene(s.scene); });
    s.recon.initial.zeta = scene.truth.zeta;
    s.recon.initial.c = scene.truth.c;

    SystemMatrices sys = as_data([&] { return assemble(scene.mesh, scene.truth.zeta, scene.mass); });
    SourceDetectorLayout layout = as_data([&] { return build_layout(scene.mesh, scene.layout); });
    if (scene.M_real.M.rows() != layout.num_sources() || scene.M_real.M.cols() != layout.num_detectors())
        throw DataError("measurements do not match the scene layout");

    fs::create_directories(out);
    effective_config(s).save(out / "manifest.cfg");

    GridSpec grid = grid_over(scene.mesh.bounds(), s.grid_spacing);
    std::vector<char> mask = inside_mask(scene.mesh, grid);
    Eigen::VectorXd C;
    VolumeSamples volume;
    std::vector<IterationRecord> records;
    KeyValueConfig result;
    int code = ok;

    if (s.method == "mu-neufmt" || s.method == "neufmt") {
        ReconTrace trace = reconstruct(scene.mesh, sys, layout, scene.M_real.M, s.recon);
        records = trace.records;
        C = trace.C;
        volume = sample_field_on_grid(trace.field, grid, trace.field_unit);
        trace.field.save(out / "network.txt");
        result.set("measurement_scale", trace.measurement_scale);
        result.set("field_unit", trace.field_unit);
        result.set("refactorizations", static_cast<long long>(trace.refactorizations));
        result.set("final_mu_a", trace.final_params.mu_a);
        result.set("final_mu_s", trace.final_params.mu_s_prime);
        result.set("aborted", trace.aborted);
        if (trace.aborted) {
            result.set("abort_reason", trace.abort_reason);
            std::cerr << "error: reconstruction aborted: " << trace.abort_reason << "\n";
            code = numerical;
        }
    } else {
        auto fact = std::make_shared<const Factorization>(compose(sys, s.recon.initial));
        ForwardOperator op(fact, layout);
        bool l2 = s.method == "l2cg";
        BaselineResult b = run_baseline(op, scene.M_real.M, l2 ? BaselineMethod::l2cg : BaselineMethod::l1fista,
                                        l2 ? s.alpha_rel : s.l1_rel, s.solver_iters);
        const SolveResult& r = b.solve;
        const double mscale = b.measurement_scale;
        result.set(l2 ? "alpha" : "lambda", b.regularization);
        C = b.C;
        records = solver_trace(r, s.recon.initial);
        volume = sample_nodal_on_grid(scene.mesh, C, grid);
        result.set("measurement_scale", mscale);
        result.set("solver_iterations", static_cast<long long>(r.iterations));
        result.set("converged", r.converged);
        result.set("final_mu_a", s.recon.initial.mu_a);
        result.set("final_mu_s", s.recon.initial.mu_s_prime);
    }
    for (std::size_t i = 0; i < volume.values.size(); ++i)
        if (!mask[i]) volume.values[i] = 0.0;

    write_text_file(out / "trace.csv", format_trace_csv(records));
    save_field(std::vector<double>(C.data(), C.data() + C.size()), out / "field.txt");
    save_vtk_volume(volume, "fluorophore", out / "volume.vtk");
    result.save(out / "result.cfg");
    std::cout << s.method << ": " << records.size() << " trace rows -> " << out.string() << "\n";
    return code;
}

// ---------------------------------------------------------------- metrics

struct MetricSource {
    std::string method;
    fs::path scene;
    VolumeSamples volume;
    std::vector<double> mu_a, mu_s;
};

MetricSource load_metric_source(const fs::path& dir, const std::string& scene_flag)
{
    if (!fs::exists(dir / "manifest.cfg")) throw DataError("missing file: " + (dir / "manifest.cfg").string());
    KeyValueConfig man = as_data([&] { return KeyValueConfig::load(dir / "manifest.cfg"); });
    MetricSource src;
    if (man.contains("preset")) {
        // A scene directory stands for its own ground truth.
        src.method = "ground_truth";
        src.scene = scene_flag.empty() ? dir : fs::path(scene_flag);
        return src;
    }
    src.method = man.get_string("method", "unknown");
    src.scene = scene_flag.empty() ? fs::path(man.get_string("scene", "")) : fs::path(scene_flag);
    for (const char* f : {"volume.vtk", "trace.csv"})
        if (!fs::exists(dir / f)) throw DataError("missing file: " + (dir / f).string());
    src.volume = as_data([&] { return load_vtk_volume(dir / "volume.vtk"); });
    auto text = read_text_file(dir / "trace.csv");
    std::size_t pos = text.find('\n');
    while (pos != std::string::npos && pos + 1 < text.size()) {
        std::size_t end = text.find('\n', pos + 1);
        std::string line = text.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
        pos = end;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t a = 0, b;
        while ((b = line.find(',', a)) != std::string::npos) {
            cols.push_back(line.substr(a, b - a));
            a = b + 1;
        }
        cols.push_back(line.substr(a));
        if (cols.size() != 5) throw DataError("malformed trace row in " + (dir / "trace.csv").string());
        src.mu_a.push_back(as_data([&] { return parse_double(cols[2]); }));
        src.mu_s.push_back(as_data([&] { return parse_double(cols[3]); }));
    }
    return src;
}

int cmd_metrics(const std::vector<std::string>& recon_dirs, const std::string& scene_flag, double spacing,
                const std::string& threshold, const fs::path& out)
{
    ThresholdPolicy policy;
    if (threshold == "otsu")
        policy.kind = ThresholdPolicy::Kind::otsu;
    else if (threshold.rfind("fixed:", 0) == 0) {
        policy.kind = ThresholdPolicy::Kind::fixed;
        policy.value = as_usage([&] { return parse_double(threshold.substr(6)); });
    } else if (threshold.rfind("half", 0) == 0 || threshold.empty()) {
        policy.kind = ThresholdPolicy::Kind::fraction_of_max;
        policy.value = 0.5;
    } else
        throw UsageError("unknown threshold policy '" + threshold + "' (valid: half, otsu, fixed:<value>)");

    std::vector<MetricsRow> rows;
    for (const auto& d : recon_dirs) {
        MetricSource src = load_metric_source(d, scene_flag);
        if (src.scene.empty()) throw DataError("no scene recorded for " + d + " (use --scene)");
        LoadedScene scene = as_data([&] { return load_scene(src.scene); });
        GridSpec grid = src.method == "ground_truth" ? grid_over(scene.mesh.bounds(), spacing) : src.volume.grid;
        GridSpec expected = grid_over(scene.mesh.bounds(), grid.spacing.x());
        if (!grid.same_as(expected, 1e-6)) throw DataError("grid mismatch between " + d + " and scene " + src.scene.string());
        VolumeSamples gt = sample_nodal_on_grid(scene.mesh, scene.C_true, grid);
        if (src.method == "ground_truth") src.volume = gt;
        MetricsRow row;
        row.scene = scene.manifest.get_string("preset", src.scene.filename().string());
        row.method = src.method;
        row.dice = dice(src.volume, gt, policy).dice;
        if (!src.mu_a.empty()) {
            MuErrorSeries e = mu_error(src.mu_a, src.mu_s, scene.truth.mu_a, scene.truth.mu_s_prime);
            row.final_mu_a_err_pct = e.final_mu_a_pct;
            row.final_mu_s_err_pct = e.final_mu_s_pct;
        }
        rows.push_back(row);
    }
    std::string csv = format_metrics_csv(rows);
    if (out.empty())
        std::cout << csv;
    else
        write_text_file(out, csv);
    return ok;
}

// ---------------------------------------------------------------- export

int cmd_export(const fs::path& recon_dir, const std::string& scene_flag, const fs::path& out, int profile_samples)
{
    if (profile_samples < 2) throw UsageError("--samples must be >= 2");
    if (!fs::exists(recon_dir / "manifest.cfg")) throw DataError("missing file: " + (recon_dir / "manifest.cfg").string());
    KeyValueConfig man = as_data([&] { return KeyValueConfig::load(recon_dir / "manifest.cfg"); });
    fs::path scene_dir = scene_flag.empty() ? fs::path(man.get_string("scene", "")) : fs::path(scene_flag);
    LoadedScene scene = as_data([&] { return load_scene(scene_dir); });
    for (const char* f : {"field.txt", "volume.vtk"})
        if (!fs::exists(recon_dir / f)) throw DataError("missing file: " + (recon_dir / f).string());
    auto nodal = as_data([&] { return load_field(recon_dir / "field.txt"); });
    if (nodal.size() != scene.mesh.num_nodes()) throw DataError("field length does not match the scene mesh");
    VolumeSamples rec = as_data([&] { return load_vtk_volume(recon_dir / "volume.vtk"); });
    VolumeSamples gt = sample_nodal_on_grid(scene.mesh, scene.C_true, rec.grid);

    fs::create_directories(out);
    Eigen::VectorXd C = Eigen::Map<const Eigen::VectorXd>(nodal.data(), static_cast<Eigen::Index>(nodal.size()));
    save_vtk_mesh(scene.mesh, {{"ground_truth", scene.C_true}, {"reconstruction", C}}, out / "mesh_fields.vtk");
    save_vtk_volume(gt, "ground_truth", out / "ground_truth_volume.vtk");
    save_vtk_volume(rec, "reconstruction", out / "reconstruction_volume.vtk");

    // Profile along x through the peak of the ground truth.
    auto peak = static_cast<std::size_t>(std::max_element(gt.values.begin(), gt.values.end()) - gt.values.begin());
    const auto& g = gt.grid;
    int k = static_cast<int>(peak / (static_cast<std::size_t>(g.dims[0]) * static_cast<std::size_t>(g.dims[1])));
    int j = static_cast<int>((peak / static_cast<std::size_t>(g.dims[0])) % static_cast<std::size_t>(g.dims[1]));
    Vec3 a = g.point(0, j, k), b = g.point(g.dims[0] - 1, j, k);
    auto pg = line_profile(gt, a, b, profile_samples);
    auto pr = line_profile(rec, a, b, profile_samples);
    std::string csv = "x,ground_truth,reconstruction\n";
    for (int i = 0; i < profile_samples; ++i) {
        double x = a.x() + (b.x() - a.x()) * i / (profile_samples - 1);
        csv += format_double(x) + "," + format_double(pg[static_cast<std::size_t>(i)]) + "," +
               format_double(pr[static_cast<std::size_t>(i)]) + "\n";
    }
    write_text_file(out / "profile_x.csv", csv);
    if (fs::exists(recon_dir / "trace.csv")) fs::copy_file(recon_dir / "trace.csv", out / "trace.csv", fs::copy_options::overwrite_existing);
    std::cout << "exported to " << out.string() << "\n";
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Fluorescence tomography reconstruction with optical-property adaptation"};
    app.require_subcommand(1);

    auto* ph = app.add_subcommand("phantom", "simulate a scene bundle");
    std::string preset;
    double edge = 2.5, noise = 0.05;
    std::uint64_t seed = 0;
    std::string ph_out, ph_mass = "lumped";
    ph->add_option("--preset", preset, "s_shape, case1, case2, case3 or case4")->required();
    ph->add_option("--edge", edge, "mesh edge length in mm");
    ph->add_option("--noise", noise, "relative Gaussian noise level");
    ph->add_option("--seed", seed, "noise seed");
    ph->add_option("--mass", ph_mass, "lumped or consistent mass and boundary matrices");
    ph->add_option("--out", ph_out, "output directory")->required();

    auto* rc = app.add_subcommand("reconstruct", "reconstruct a fluorophore field");
    std::string rc_scene, rc_method, rc_config, rc_out;
    std::vector<std::string> rc_sets;
    rc->add_option("--scene", rc_scene, "scene bundle directory");
    rc->add_option("--method", rc_method, "mu-neufmt, neufmt, l2cg or l1fista");
    rc->add_option("--config", rc_config, "key = value configuration file");
    rc->add_option("--set", rc_sets, "override a configuration key (key=value)");
    rc->add_option("--out", rc_out, "output directory")->required();

    auto* mt = app.add_subcommand("metrics", "Dice and coefficient errors against ground truth");
    std::vector<std::string> mt_recon;
    std::string mt_scene, mt_out, mt_threshold = "half";
    double mt_spacing = 1.0;
    mt->add_option("--recon", mt_recon, "reconstruction (or scene) directory; repeatable")->required();
    mt->add_option("--scene", mt_scene, "scene directory (defaults to the one recorded in each run)");
    mt->add_option("--spacing", mt_spacing, "grid spacing for scene-only rows");
    mt->add_option("--threshold", mt_threshold, "half, otsu or fixed:<value>");
    mt->add_option("--out", mt_out, "CSV report path (stdout if omitted)");

    auto* ex = app.add_subcommand("export", "write VTK files and a line profile for plotting");
    std::string ex_recon, ex_scene, ex_out;
    int ex_samples = 221;
    ex->add_option("--recon", ex_recon, "reconstruction directory")->required();
    ex->add_option("--scene", ex_scene, "scene directory (defaults to the one recorded in the run)");
    ex->add_option("--samples", ex_samples, "profile sample count");
    ex->add_option("--out", ex_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*ph) return cmd_phantom(preset, edge, noise, seed, ph_mass, ph_out);
        if (*rc) {
            KeyValueConfig file_cfg;
            if (!rc_config.empty()) {
                if (!fs::exists(rc_config)) throw UsageError("config file not found: " + rc_config);
                file_cfg = as_usage([&] { return KeyValueConfig::load(rc_config); });
            }
            return cmd_reconstruct(file_cfg, parse_overrides(rc_sets), rc_method, rc_scene, rc_out);
        }
        if (*mt) return cmd_metrics(mt_recon, mt_scene, mt_spacing, mt_threshold, mt_out);
        if (*ex) return cmd_export(ex_recon, ex_scene, ex_out, ex_samples);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    } catch (const SceneError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    } catch (const MeshError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return numerical;
    } catch (const FactorizationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return data;
    }
    return usage;
}
