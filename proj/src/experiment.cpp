#include "subderm/experiment.hpp"

#include "subderm/errors.hpp"
#include "subderm/ply_io.hpp"
#include "subderm/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace subderm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// names

const char* to_string(Strategy s) noexcept { return s == Strategy::BO ? "BO" : "RS"; }

const char* to_string(PalpationMode m) noexcept { return m == PalpationMode::CF ? "CF" : "Discrete"; }

const char* to_string(TumorShape s) noexcept
{
    switch (s) {
    case TumorShape::Hemisphere: return "hemisphere";
    case TumorShape::Ellipsoid: return "ellipsoid";
    case TumorShape::Crescent: return "crescent";
    }
    return "?";
}

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

TumorShape parse_shape(const std::string& text)
{
    const std::string s = lower(trim(text));
    if (s == "hemisphere")
        return TumorShape::Hemisphere;
    if (s == "ellipsoid")
        return TumorShape::Ellipsoid;
    if (s == "crescent")
        return TumorShape::Crescent;
    fail(ErrorCode::ConfigInvalid, "unknown tumor shape '" + text + "'");
}

// ---------------------------------------------------------------------------
// flat settings

namespace {

double parse_double(const std::string& key, const std::string& text)
{
    const std::string s = trim(text);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v))
        fail(ErrorCode::ConfigInvalid, key + ": '" + text + "' is not a finite number");
    return v;
}

long long parse_int(const std::string& key, const std::string& text)
{
    const std::string s = trim(text);
    long long v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        fail(ErrorCode::ConfigInvalid, key + ": '" + text + "' is not an integer");
    return v;
}

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct Field {
    std::string key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class Ref>
Field real(const char* key, Ref ref)
{
    return {key,
            [ref, key](ExperimentConfig& c, const std::string& v) { ref(c) = parse_double(key, v); },
            [ref](const ExperimentConfig& c) {
                return format_double(ref(const_cast<ExperimentConfig&>(c)));
            }};
}

template <class Ref>
Field integer(const char* key, Ref ref)
{
    return {key,
            [ref, key](ExperimentConfig& c, const std::string& v) {
                using T = std::remove_reference_t<decltype(ref(c))>;
                const long long n = parse_int(key, v);
                if (n < 0 && std::is_unsigned_v<T>)
                    fail(ErrorCode::ConfigInvalid, std::string(key) + " must be >= 0");
                ref(c) = static_cast<T>(n);
            },
            [ref](const ExperimentConfig& c) {
                return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
            }};
}

Field vec_all(const char* key, Vec3 ControllerGains::*member)
{
    return {key,
            [member, key](ExperimentConfig& c, const std::string& v) {
                (c.gains.*member) = Vec3::Constant(parse_double(key, v));
            },
            [member](const ExperimentConfig& c) { return format_double((c.gains.*member).x()); }};
}

SurfaceKind parse_surface(const std::string& text)
{
    const std::string s = lower(trim(text));
    if (s == "flat")
        return SurfaceKind::Flat;
    if (s == "cylbump")
        return SurfaceKind::CylBump;
    if (s == "gaussbump")
        return SurfaceKind::GaussBump;
    fail(ErrorCode::ConfigInvalid, "unknown surface kind '" + text + "'");
}

const char* surface_name(SurfaceKind k)
{
    switch (k) {
    case SurfaceKind::Flat: return "flat";
    case SurfaceKind::CylBump: return "cylbump";
    case SurfaceKind::GaussBump: return "gaussbump";
    }
    return "?";
}

const std::vector<Field>& fields()
{
    using C = ExperimentConfig;
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"label", [](C& c, const std::string& v) { c.label = v; },
                     [](const C& c) { return c.label; }});
        f.push_back({"output_dir", [](C& c, const std::string& v) { c.output_dir = v; },
                     [](const C& c) { return c.output_dir; }});
        f.push_back(integer("seed", [](C& c) -> std::uint64_t& { return c.seed; }));
        f.push_back(integer("trials", [](C& c) -> int& { return c.trials; }));
        f.push_back({"strategy",
                     [](C& c, const std::string& v) {
                         const std::string s = lower(trim(v));
                         if (s == "bo")
                             c.policy.strategy = Strategy::BO;
                         else if (s == "rs")
                             c.policy.strategy = Strategy::RS;
                         else
                             fail(ErrorCode::ConfigInvalid, "strategy must be bo or rs, got '" + v + "'");
                     },
                     [](const C& c) { return lower(to_string(c.policy.strategy)); }});
        f.push_back({"mode",
                     [](C& c, const std::string& v) {
                         const std::string s = lower(trim(v));
                         if (s == "cf")
                             c.policy.mode = PalpationMode::CF;
                         else if (s == "discrete")
                             c.policy.mode = PalpationMode::Discrete;
                         else
                             fail(ErrorCode::ConfigInvalid, "mode must be cf or discrete, got '" + v + "'");
                     },
                     [](const C& c) { return lower(to_string(c.policy.mode)); }});
        f.push_back(integer("budget", [](C& c) -> int& { return c.policy.budget; }));
        f.push_back(integer("n_init", [](C& c) -> int& { return c.policy.n_init; }));
        f.push_back(real("xi", [](C& c) -> double& { return c.policy.xi; }));
        f.push_back(real("gp.length_scale", [](C& c) -> double& { return c.policy.gp.length_scale; }));
        f.push_back(real("gp.signal_var", [](C& c) -> double& { return c.policy.gp.signal_var; }));
        f.push_back(real("gp.noise_var", [](C& c) -> double& { return c.policy.gp.noise_var; }));

        f.push_back(real("phantom.skin_thickness", [](C& c) -> double& { return c.phantom.skin_thickness; }));
        f.push_back(real("phantom.fat_thickness", [](C& c) -> double& { return c.phantom.fat_thickness; }));
        f.push_back(real("phantom.k_skin", [](C& c) -> double& { return c.phantom.k_skin; }));
        f.push_back(real("phantom.k_fat", [](C& c) -> double& { return c.phantom.k_fat; }));
        f.push_back(real("phantom.k_muscle", [](C& c) -> double& { return c.phantom.k_muscle; }));
        f.push_back(real("phantom.k_tumor", [](C& c) -> double& { return c.phantom.k_tumor; }));
        f.push_back(real("phantom.contact_damping", [](C& c) -> double& { return c.phantom.contact_damping; }));
        f.push_back(real("phantom.muscle_plane_z", [](C& c) -> double& { return c.phantom.muscle_plane_z; }));
        f.push_back({"phantom.surface",
                     [](C& c, const std::string& v) { c.phantom.surface.kind = parse_surface(v); },
                     [](const C& c) { return std::string(surface_name(c.phantom.surface.kind)); }});
        f.push_back(real("phantom.surface_amplitude", [](C& c) -> double& { return c.phantom.surface.amplitude; }));
        f.push_back(real("phantom.surface_width", [](C& c) -> double& { return c.phantom.surface.width; }));

        f.push_back({"shape", [](C& c, const std::string& v) { c.tumor.shape = parse_shape(v); },
                     [](const C& c) { return std::string(to_string(c.tumor.shape)); }});
        f.push_back(real("tumor.radius", [](C& c) -> double& { return c.tumor.radius; }));
        f.push_back(real("tumor.center_x", [](C& c) -> double& { return c.tumor.center_xy.x(); }));
        f.push_back(real("tumor.center_y", [](C& c) -> double& { return c.tumor.center_xy.y(); }));
        f.push_back(real("tumor.ellipsoid_semi_x", [](C& c) -> double& { return c.tumor.ellipsoid.semi_x; }));
        f.push_back(real("tumor.ellipsoid_semi_y", [](C& c) -> double& { return c.tumor.ellipsoid.semi_y; }));
        f.push_back(real("tumor.ellipsoid_height", [](C& c) -> double& { return c.tumor.ellipsoid.height; }));
        f.push_back(real("tumor.crescent_inner_radius", [](C& c) -> double& { return c.tumor.crescent.inner_radius; }));
        f.push_back(real("tumor.crescent_inner_offset", [](C& c) -> double& { return c.tumor.crescent.inner_offset; }));
        f.push_back(real("tumor.crescent_height", [](C& c) -> double& { return c.tumor.crescent.height; }));
        f.push_back(real("tumor.crescent_fillet", [](C& c) -> double& { return c.tumor.crescent.fillet; }));

        f.push_back(real("scene.min_x", [](C& c) -> double& { return c.scene_region.min.x(); }));
        f.push_back(real("scene.min_y", [](C& c) -> double& { return c.scene_region.min.y(); }));
        f.push_back(real("scene.max_x", [](C& c) -> double& { return c.scene_region.max.x(); }));
        f.push_back(real("scene.max_y", [](C& c) -> double& { return c.scene_region.max.y(); }));
        f.push_back(real("cloud.density", [](C& c) -> double& { return c.cloud_density; }));
        f.push_back(real("cloud.noise", [](C& c) -> double& { return c.cloud_noise; }));
        f.push_back(real("registration.voxel", [](C& c) -> double& { return c.registration.voxel; }));
        f.push_back(integer("registration.outlier_k", [](C& c) -> int& { return c.registration.outlier_k; }));
        f.push_back(real("registration.outlier_sigma", [](C& c) -> double& { return c.registration.outlier_sigma; }));
        f.push_back(real("grid.dx", [](C& c) -> double& { return c.registration.dx; }));
        f.push_back(real("grid.dy", [](C& c) -> double& { return c.registration.dy; }));
        f.push_back(real("roi.min_x", [](C& c) -> double& { return c.roi.min_xy.x(); }));
        f.push_back(real("roi.min_y", [](C& c) -> double& { return c.roi.min_xy.y(); }));
        f.push_back(real("roi.max_x", [](C& c) -> double& { return c.roi.max_xy.x(); }));
        f.push_back(real("roi.max_y", [](C& c) -> double& { return c.roi.max_xy.y(); }));

        f.push_back(vec_all("gains.kp", &ControllerGains::kp));
        f.push_back(vec_all("gains.kd", &ControllerGains::kd));
        f.push_back(real("gains.kp_x", [](C& c) -> double& { return c.gains.kp.x(); }));
        f.push_back(real("gains.kp_y", [](C& c) -> double& { return c.gains.kp.y(); }));
        f.push_back(real("gains.kp_z", [](C& c) -> double& { return c.gains.kp.z(); }));
        f.push_back(real("gains.kd_x", [](C& c) -> double& { return c.gains.kd.x(); }));
        f.push_back(real("gains.kd_y", [](C& c) -> double& { return c.gains.kd.y(); }));
        f.push_back(real("gains.kd_z", [](C& c) -> double& { return c.gains.kd.z(); }));
        f.push_back(real("gains.e_thres", [](C& c) -> double& { return c.gains.e_thres; }));
        f.push_back(real("gains.period", [](C& c) -> double& { return c.gains.period; }));

        f.push_back(real("probe.f_thres", [](C& c) -> double& { return c.probe.f_thres; }));
        f.push_back(real("probe.d_thres", [](C& c) -> double& { return c.probe.d_thres; }));
        f.push_back(real("probe.indent_speed", [](C& c) -> double& { return c.probe.indent_speed; }));
        f.push_back(real("probe.amplitude", [](C& c) -> double& { return c.probe.amplitude; }));
        f.push_back(real("probe.osc_rate", [](C& c) -> double& { return c.probe.osc_rate; }));
        f.push_back(integer("probe.stroke_waypoints", [](C& c) -> int& { return c.probe.stroke_waypoints; }));
        f.push_back(real("probe.cf_timeout", [](C& c) -> double& { return c.probe.cf_timeout; }));
        f.push_back(real("probe.mass", [](C& c) -> double& { return c.probe.probe_mass; }));
        f.push_back(real("probe.press_depth", [](C& c) -> double& { return c.probe.press_depth; }));
        f.push_back(real("probe.tip_radius", [](C& c) -> double& { return c.probe.tip_radius; }));
        f.push_back(real("probe.approach_height", [](C& c) -> double& { return c.probe.approach_height; }));
        f.push_back(real("probe.lost_contact_time", [](C& c) -> double& { return c.probe.lost_contact_time; }));
        f.push_back(real("probe.speed_limit", [](C& c) -> double& { return c.probe.speed_limit; }));
        f.push_back(integer("probe.reversals", [](C& c) -> int& { return c.probe.reversals; }));
        f.push_back(real("probe.transit_depth", [](C& c) -> double& { return c.probe.transit_depth; }));

        f.push_back(real("cal.tip_weight", [](C& c) -> double& { return c.cal.tip_weight_n; }));
        f.push_back(real("cal.z_offset_x", [](C& c) -> double& { return c.cal.z_offset.x(); }));
        f.push_back(real("cal.z_offset_y", [](C& c) -> double& { return c.cal.z_offset.y(); }));
        f.push_back(real("cal.z_offset_z", [](C& c) -> double& { return c.cal.z_offset.z(); }));
        f.push_back(real("sensor.tip_weight_error", [](C& c) -> double& { return c.sensor_error.tip_weight_n; }));
        f.push_back(real("sensor.z_offset_error_z", [](C& c) -> double& { return c.sensor_error.z_offset.z(); }));
        f.push_back(real("sensor.force_noise", [](C& c) -> double& { return c.force_noise; }));
        f.push_back(real("sensor.angle_noise", [](C& c) -> double& { return c.angle_noise; }));
        f.push_back({"sensor.resultant",
                     [](C& c, const std::string& v) {
                         const std::string s = lower(trim(v));
                         if (s == "norm")
                             c.resultant = ResultantMode::Norm;
                         else if (s == "axis_rms")
                             c.resultant = ResultantMode::AxisRms;
                         else
                             fail(ErrorCode::ConfigInvalid, "sensor.resultant must be norm or axis_rms");
                     },
                     [](const C& c) {
                         return std::string(c.resultant == ResultantMode::Norm ? "norm" : "axis_rms");
                     }});

        f.push_back(real("eval.r", [](C& c) -> double& { return c.r_eval; }));
        f.push_back(integer("eval.gt_samples", [](C& c) -> std::size_t& { return c.gt_samples; }));
        return f;
    }();
    return table;
}

const Field& field(const std::string& key)
{
    static const std::map<std::string, const Field*> index = [] {
        std::map<std::string, const Field*> m;
        for (const auto& f : fields())
            m[f.key] = &f;
        return m;
    }();
    const auto it = index.find(key == "tumor.shape" ? "shape" : key);
    if (it == index.end())
        fail(ErrorCode::ConfigInvalid, "unknown setting '" + key + "'");
    return *it->second;
}

}  // namespace

ExperimentConfig default_config()
{
    ExperimentConfig cfg;
    cfg.sensor_error.tip_weight_n = 0.0;
    cfg.sensor_error.z_offset = Vec3::Zero();
    return cfg;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value)
{
    field(trim(key)).set(cfg, value);
}

std::string get_setting(const ExperimentConfig& cfg, const std::string& key)
{
    return field(trim(key)).get(cfg);
}

std::vector<std::string> setting_keys()
{
    std::vector<std::string> out;
    for (const auto& f : fields())
        out.push_back(f.key);
    return out;
}

namespace {

void apply_json(ExperimentConfig& cfg, const nlohmann::json& node, const std::string& prefix)
{
    for (const auto& [key, value] : node.items()) {
        const std::string full = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object())
            apply_json(cfg, value, full);
        else if (value.is_string())
            apply_setting(cfg, full, value.get<std::string>());
        else if (value.is_number_integer() || value.is_number_unsigned())
            apply_setting(cfg, full, value.dump());
        else if (value.is_number_float())
            apply_setting(cfg, full, format_double(value.get<double>()));
        else if (value.is_boolean())
            apply_setting(cfg, full, value.get<bool>() ? "1" : "0");
        else
            fail(ErrorCode::ConfigInvalid, "setting '" + full + "' must be a scalar");
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object())
        fail(ErrorCode::ConfigInvalid, "config must be a JSON object");
    ExperimentConfig cfg = default_config();
    apply_json(cfg, doc, "");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        fail(ErrorCode::IoError, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void ExperimentConfig::validate() const
{
    auto check = [](bool ok, const char* what) {
        if (!ok)
            fail(ErrorCode::ConfigInvalid, what);
    };
    check(trials >= 1, "trials must be >= 1");
    check(policy.budget >= 1, "budget must be >= 1");
    check(policy.n_init >= 0, "n_init must be >= 0");
    check(std::isfinite(policy.xi) && policy.xi >= 0.0, "xi must be >= 0");
    check(policy.gp.length_scale > 0.0 && policy.gp.signal_var > 0.0 && policy.gp.noise_var >= 0.0,
          "GP hyperparameters out of range");
    check(scene_region.width() > 0.0 && scene_region.height() > 0.0, "scene region is empty");
    check(cloud_density > 0.0 && cloud_noise >= 0.0, "cloud density/noise out of range");
    check(registration.voxel > 0.0 && registration.dx > 0.0 && registration.dy > 0.0,
          "registration sizes must be positive");
    check(force_noise >= 0.0 && angle_noise >= 0.0, "sensor noise must be >= 0");
    check(cal.tip_weight_n >= 0.0, "tip weight must be >= 0");
    check(r_eval > 0.0, "eval.r must be positive");
    check(gt_samples >= 1, "eval.gt_samples must be >= 1");
    try {
        roi.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigInvalid, e.what());
    }
    phantom.validate();
    Phantom(phantom, tumor);
    gains.validate();
    probe.validate(phantom);
}

std::string ExperimentConfig::condition_label() const
{
    if (!label.empty())
        return label;
    return lower(to_string(policy.strategy)) + "_" + lower(to_string(policy.mode)) + "_" +
           to_string(tumor.shape);
}

Phantom phantom_for(const ExperimentConfig& cfg) { return Phantom(cfg.phantom, cfg.tumor); }

// ---------------------------------------------------------------------------
// runs

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

SensorModel sensor_for(const ExperimentConfig& cfg)
{
    SensorModel s;
    s.truth.tip_weight_n = cfg.cal.tip_weight_n + cfg.sensor_error.tip_weight_n;
    s.truth.z_offset = cfg.cal.z_offset + cfg.sensor_error.z_offset;
    s.force_noise = cfg.force_noise;
    s.angle_noise = cfg.angle_noise;
    s.resultant = cfg.resultant;
    return s;
}

PointCloud ground_truth_for(const ExperimentConfig& cfg, const Phantom& phantom)
{
    return ground_truth_cloud(phantom, cfg.gt_samples, derive_seed(cfg.seed, 100));
}

TrialResult run_trial(const ExperimentConfig& cfg, const Phantom& phantom, const PointCloud& gt,
                      int index)
{
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult tr;
    tr.index = index;
    tr.seed = cfg.seed + static_cast<std::uint64_t>(index);
    try {
        const PointCloud raw = synth_depth_cloud(phantom, cfg.scene_region, cfg.cloud_density,
                                                 cfg.cloud_noise, derive_seed(tr.seed, 10));
        const SurfaceGrid grid = register_scene(raw, cfg.roi, cfg.registration);
        tr.policy = run_policy(phantom, grid, cfg.policy, cfg.probe, cfg.gains, cfg.cal,
                               sensor_for(cfg), derive_seed(tr.seed, 20));

        tr.n_probes = tr.policy.probes.size();
        for (const auto& p : tr.policy.probes)
            tr.n_tumor_probes += p.classified_tumor ? 1 : 0;
        tr.n_trajectories = tr.policy.trajectories.size();
        const Vec2 centre = cfg.tumor.center_xy;
        for (const auto& traj : tr.policy.trajectories) {
            tr.n_waypoints += traj.waypoints.size();
            ++tr.outcomes[static_cast<std::size_t>(traj.outcome)];
            tr.force_bound_violations += traj.force_bound_violations;
            tr.max_follow_duration = std::max(tr.max_follow_duration, traj.waypoints.back().t);
            if (traj.outcome == Outcome::BoundaryReached) {
                const std::size_t n = traj.waypoints.size();
                tr.min_boundary_waypoints =
                    tr.min_boundary_waypoints == 0 ? n : std::min(tr.min_boundary_waypoints, n);
                const Vec3 c = traj.waypoints.back().pose + cfg.probe.tip_radius * traj.axis;
                tr.boundary_radius_sum += (c.head<2>() - centre).norm();
            }
        }

        tr.recon = extract_contact_points(tr.policy.trajectories, tr.policy.probes, cfg.probe,
                                          cfg.probe.tip_radius, cfg.policy.mode);
        tr.report = fscore(tr.recon.points, gt, cfg.r_eval);
        tr.fscore = round6(tr.report->fscore);
    } catch (const Error& e) {
        tr.failure = "trial " + std::to_string(index) + ": " + e.what();
        tr.failure_code = e.code();
        tr.report.reset();
        tr.fscore = 0.0;
    }
    tr.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return tr;
}

std::string fmt6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string trial_status(const TrialResult& tr)
{
    return tr.report ? std::string("ok") : std::string(to_string(tr.failure_code));
}

const char* kMetricsHeader =
    "trial,seed,status,precision,recall,fscore,n_recon,n_gt,n_probes,n_tumor_probes,"
    "n_trajectories,n_waypoints,n_boundary,n_timeout,n_lost_contact,from_probes,from_contour,"
    "force_bound_violations";

std::string metrics_row(const TrialResult& tr)
{
    std::ostringstream os;
    os << tr.index << ',' << tr.seed << ',' << trial_status(tr) << ','
       << fmt6(tr.report ? tr.report->precision : 0.0) << ','
       << fmt6(tr.report ? tr.report->recall : 0.0) << ',' << fmt6(tr.fscore) << ','
       << (tr.report ? tr.report->n_recon : 0) << ',' << (tr.report ? tr.report->n_gt : 0) << ','
       << tr.n_probes << ',' << tr.n_tumor_probes << ',' << tr.n_trajectories << ','
       << tr.n_waypoints << ',' << tr.outcomes[0] << ',' << tr.outcomes[1] << ','
       << tr.outcomes[2] << ',' << tr.recon.from_probes << ',' << tr.recon.from_contour << ','
       << tr.force_bound_violations;
    return os.str();
}

std::string condition_name(const ExperimentConfig& cfg)
{
    return std::string(to_string(cfg.policy.strategy)) + "+" + to_string(cfg.policy.mode);
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out)
        fail(ErrorCode::IoError, "cannot write '" + path.string() + "'");
}

nlohmann::ordered_json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

void write_outputs(const TrialReport& rep)
{
    const ExperimentConfig& cfg = rep.config;
    const fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        fail(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());

    std::string metrics = std::string(kMetricsHeader) + "\n";
    std::string timing = "trial,wall_time_s\n";
    for (const auto& tr : rep.trials) {
        metrics += metrics_row(tr) + "\n";
        timing += std::to_string(tr.index) + "," + fmt6(tr.wall_time) + "\n";
    }
    write_text(dir / "metrics.csv", metrics);
    write_text(dir / "timing.csv", timing);

    std::size_t failed = 0;
    for (const auto& tr : rep.trials)
        failed += tr.report ? 0 : 1;
    write_text(dir / "summary.csv",
               "condition,shape,mean_F,max_F,#P,trials,failed\n" + condition_name(cfg) + "," +
                   to_string(cfg.tumor.shape) + "," + fmt6(rep.mean_f) + "," + fmt6(rep.max_f) +
                   "," + std::to_string(cfg.policy.budget) + "," +
                   std::to_string(rep.trials.size()) + "," + std::to_string(failed) + "\n");

    std::ofstream log(dir / "trajectories.jsonl", std::ios::binary);
    if (!log)
        fail(ErrorCode::IoError, "cannot write trajectories.jsonl");
    nlohmann::ordered_json header;
    header["type"] = "header";
    for (const auto& key : setting_keys()) {
        if (key != "output_dir")
            header["config"][key] = get_setting(cfg, key);
    }
    log << header.dump() << '\n';
    for (const auto& tr : rep.trials) {
        for (std::size_t i = 0; i < tr.policy.probes.size(); ++i) {
            const ProbeResult& p = tr.policy.probes[i];
            nlohmann::ordered_json rec;
            rec["trial"] = tr.index;
            rec["palpation_index"] = i;
            rec["phase"] = "probe";
            rec["cell"] = {p.cell.u, p.cell.v};
            rec["p"] = vec_json(p.contact_point);
            rec["f_z"] = p.f_z;
            rec["d_z"] = p.d_z;
            rec["k"] = p.k;
            rec["tumor"] = p.classified_tumor;
            const double ei = i < tr.policy.acquisition.size() ? tr.policy.acquisition[i] : NAN;
            rec["ei"] = std::isfinite(ei) ? nlohmann::ordered_json(ei) : nlohmann::ordered_json();
            log << rec.dump() << '\n';
        }
        for (const auto& traj : tr.policy.trajectories) {
            for (const auto& wp : traj.waypoints) {
                nlohmann::ordered_json rec;
                rec["trial"] = tr.index;
                rec["palpation_index"] = traj.palpation_index;
                rec["t"] = wp.t;
                rec["p"] = vec_json(wp.pose);
                rec["f"] = vec_json(wp.f);
                rec["d_z"] = wp.d_z;
                rec["phase"] = "contour";
                rec["outcome"] = to_string(traj.outcome);
                log << rec.dump() << '\n';
            }
        }
    }
    if (!log)
        fail(ErrorCode::IoError, "write to trajectories.jsonl failed");

    export_ply(rep.ground_truth, (dir / "gt.ply").string());
    for (const auto& tr : rep.trials) {
        if (!tr.report)
            continue;
        export_ply(tr.recon.points, (dir / ("recon_" + std::to_string(tr.index) + ".ply")).string());
        try {
            export_mesh_ply(reconstruct_mesh(tr.recon),
                            (dir / ("recon_mesh_" + std::to_string(tr.index) + ".ply")).string());
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateCloud)
                throw;
        }
    }
}

}  // namespace

TrialReport run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    TrialReport rep;
    rep.label = cfg.condition_label();
    rep.config = cfg;
    const Phantom phantom = phantom_for(cfg);
    rep.ground_truth = ground_truth_for(cfg, phantom);

    double sum = 0.0;
    for (int i = 0; i < cfg.trials; ++i) {
        rep.trials.push_back(run_trial(cfg, phantom, rep.ground_truth, i));
        const TrialResult& tr = rep.trials.back();
        sum += tr.fscore;
        rep.max_f = i == 0 ? tr.fscore : std::max(rep.max_f, tr.fscore);
        rep.total_waypoints += tr.n_waypoints;
    }
    rep.mean_f = sum / static_cast<double>(cfg.trials);
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!cfg.output_dir.empty())
        write_outputs(rep);
    return rep;
}

MatrixReport run_matrix(std::span<const ExperimentConfig> cfgs, const std::string& out_dir)
{
    if (cfgs.empty())
        fail(ErrorCode::InvalidArgument, "matrix needs at least one configuration");

    MatrixReport rep;
    std::map<std::string, int> seen;
    std::vector<std::string> shape_order;
    std::map<std::string, std::pair<PointCloud, PointCloud>> combined;  // shape -> (recon, gt)
    std::map<std::string, std::size_t> combined_palpations;

    std::string metrics = std::string("condition,shape,") + kMetricsHeader + "\n";
    for (const auto& base : cfgs) {
        ExperimentConfig cfg = base;
        std::string label = cfg.condition_label();
        if (const int n = seen[label]++; n > 0)
            label += "_" + std::to_string(n);
        cfg.label = label;
        cfg.output_dir = out_dir.empty() ? std::string() : (fs::path(out_dir) / label).string();

        const std::string shape = to_string(cfg.tumor.shape);
        MatrixRow row;
        row.condition = condition_name(cfg);
        row.shape = shape;
        row.palpations = static_cast<std::size_t>(cfg.policy.budget);
        try {
            TrialReport tr = run_experiment(cfg);
            row.mean_f = tr.mean_f;
            row.max_f = tr.max_f;
            if (!combined.contains(shape)) {
                shape_order.push_back(shape);
                combined[shape].second = tr.ground_truth;
            }
            for (const auto& t : tr.trials) {
                metrics += row.condition + "," + shape + "," + metrics_row(t) + "\n";
                auto& pts = combined[shape].first.points;
                pts.insert(pts.end(), t.recon.points.points.begin(), t.recon.points.points.end());
                combined_palpations[shape] += t.n_probes;
            }
            rep.conditions.push_back(std::move(tr));
        } catch (const Error& e) {
            row.failed = true;
            metrics += row.condition + "," + shape + ",-1,0," + to_string(e.code()) +
                       std::string(",0,0,0,0,0,0,0,0,0,0,0,0,0,0,0") + "\n";
        }
        rep.rows.push_back(row);
    }

    for (const auto& shape : shape_order) {
        const auto& [recon, gt] = combined[shape];
        MatrixRow row;
        row.condition = "combined";
        row.shape = shape;
        row.combined = true;
        row.palpations = combined_palpations[shape];
        if (recon.empty() || gt.empty()) {
            row.failed = true;
        } else {
            const double r = cfgs.front().r_eval;
            const double f = round6(fscore(recon, gt, r).fscore);
            row.mean_f = row.max_f = f;
        }
        rep.rows.push_back(row);
    }

    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec)
            fail(ErrorCode::IoError, "cannot create '" + out_dir + "': " + ec.message());
        std::string summary = "condition,shape,mean_F,max_F,#P,status\n";
        for (const auto& row : rep.rows)
            summary += row.condition + "," + row.shape + "," + fmt6(row.mean_f) + "," +
                       fmt6(row.max_f) + "," + std::to_string(row.palpations) + "," +
                       (row.failed ? "failed" : "ok") + "\n";
        write_text(fs::path(out_dir) / "summary.csv", summary);
        write_text(fs::path(out_dir) / "metrics.csv", metrics);
    }
    return rep;
}

std::vector<ExperimentConfig> table_conditions(const ExperimentConfig& base,
                                               std::span<const TumorShape> shapes)
{
    std::vector<ExperimentConfig> out;
    for (const TumorShape shape : shapes) {
        for (const Strategy s : {Strategy::RS, Strategy::BO}) {
            for (const PalpationMode m : {PalpationMode::CF, PalpationMode::Discrete}) {
                ExperimentConfig cfg = base;
                cfg.tumor.shape = shape;
                cfg.policy.strategy = s;
                cfg.policy.mode = m;
                cfg.policy.budget = shape == TumorShape::Crescent ? 80 : 50;
                cfg.label.clear();
                out.push_back(cfg);
            }
        }
    }
    return out;
}

}  // namespace subderm
