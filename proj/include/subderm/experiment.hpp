#pragma once

#include "subderm/errors.hpp"
#include "subderm/force_calibration.hpp"
#include "subderm/palpation_policy.hpp"
#include "subderm/phantom.hpp"
#include "subderm/reconstruction_eval.hpp"
#include "subderm/scene_registration.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace subderm {

struct ExperimentConfig {
    std::string label;
    PhantomConfig phantom;
    TumorGeometry tumor;

    Box2 scene_region{Vec2(-0.05, -0.05), Vec2(0.05, 0.05)};
    double cloud_density = 1.0e6;  // points per m^2
    double cloud_noise = 0.0005;
    RegistrationParams registration;
    RoiBox roi{Vec2(-0.015, -0.015), Vec2(0.015, 0.015)};

    PolicyConfig policy;
    int trials = 10;
    std::uint64_t seed = 1;

    ControllerGains gains;
    ProbeParams probe;
    CalibrationParams cal;
    CalibrationParams sensor_error;  // added to `cal` to form the sensor's true bias
    double force_noise = 0.02;
    double angle_noise = 0.0;
    ResultantMode resultant = ResultantMode::Norm;

    double r_eval = 0.003;
    std::size_t gt_samples = 2000;
    std::string output_dir;

    void validate() const;
    std::string condition_label() const;
};

ExperimentConfig default_config();

/// Flat dotted keys, e.g. "phantom.k_skin", "strategy", "roi.min_x".
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_setting(const ExperimentConfig& cfg, const std::string& key);
std::vector<std::string> setting_keys();

/// JSON object of flat keys to scalar values, applied over the defaults.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

struct TrialResult {
    int index = 0;
    std::uint64_t seed = 0;
    std::optional<FScoreReport> report;  // nullopt on failure
    std::string failure;
    ErrorCode failure_code = ErrorCode::InvalidArgument;  // meaningful only when report is empty
    double fscore = 0.0;                 // 0 for failed trials, rounded to 1e-6
    std::size_t n_probes = 0;
    std::size_t n_tumor_probes = 0;
    std::size_t n_trajectories = 0;
    std::size_t n_waypoints = 0;
    std::array<std::size_t, 3> outcomes{};  // indexed by Outcome
    std::size_t min_boundary_waypoints = 0; // over BoundaryReached follows, 0 if none
    double boundary_radius_sum = 0.0;       // XY distance of BoundaryReached endpoints to tumor centre
    std::size_t force_bound_violations = 0;
    double max_follow_duration = 0.0;
    double wall_time = 0.0;
    ReconCloud recon;
    PolicyResult policy;
};

struct TrialReport {
    std::string label;
    ExperimentConfig config;
    std::vector<TrialResult> trials;
    double mean_f = 0.0;
    double max_f = 0.0;
    std::size_t total_waypoints = 0;
    double wall_time = 0.0;
    PointCloud ground_truth;
};

/// Runs every trial (seed_i = seed + i) and, when output_dir is set, writes
/// metrics.csv, summary.csv, timing.csv, trajectories.jsonl, gt.ply and recon_<i>.ply.
TrialReport run_experiment(const ExperimentConfig& cfg);

struct MatrixRow {
    std::string condition;
    std::string shape;
    double mean_f = 0.0;
    double max_f = 0.0;
    std::size_t palpations = 0;
    bool failed = false;
    bool combined = false;
};

struct MatrixReport {
    std::vector<TrialReport> conditions;
    std::vector<MatrixRow> rows;
};

/// Runs all configs (each into out_dir/<label> when out_dir is set) and adds
/// one "combined" row per shape scoring the union of all its reconstructions.
MatrixReport run_matrix(std::span<const ExperimentConfig> cfgs, const std::string& out_dir);

/// The four strategy x mode conditions for each shape, with per-shape budgets
/// (hemisphere/ellipsoid 50, crescent 80).
std::vector<ExperimentConfig> table_conditions(const ExperimentConfig& base,
                                               std::span<const TumorShape> shapes);

/// The phantom, GT cloud and registration shared by all trials of a config.
Phantom phantom_for(const ExperimentConfig& cfg);

const char* to_string(Strategy s) noexcept;
const char* to_string(PalpationMode m) noexcept;
const char* to_string(TumorShape s) noexcept;
TumorShape parse_shape(const std::string& text);

}  // namespace subderm
