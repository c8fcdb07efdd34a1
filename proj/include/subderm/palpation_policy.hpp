#pragma once

#include "subderm/force_calibration.hpp"
#include "subderm/phantom.hpp"
#include "subderm/random.hpp"
#include "subderm/scene_registration.hpp"
#include "subderm/stiffness_search.hpp"
#include "subderm/types.hpp"

#include <cstdint>
#include <vector>

namespace subderm {

struct ControllerGains {
    Vec3 kp = Vec3::Constant(2000.0);  // N/m
    Vec3 kd = Vec3::Constant(40.0);    // N*s/m
    double e_thres = 0.005;            // per-axis pose-error clamp, m
    double period = 0.001;             // s

    void validate() const;
};

struct ProbeParams {
    double f_thres = 5.0;
    double d_thres = 0.017;
    double indent_speed = 0.01;
    double amplitude = 0.001;       // min-jerk stroke half-length
    double osc_rate = 80.0;         // waypoint rate, Hz
    int stroke_waypoints = 12;      // waypoints per min-jerk stroke
    double cf_timeout = 5.0;
    double probe_mass = 0.5;
    double press_depth = 0.0192;    // contour-following target depth below the registered surface
    double tip_radius = 0.0025;
    double approach_height = 0.005;
    double lost_contact_time = 0.1;
    double speed_limit = 2.0;       // plant |v| above this is a blowup
    int reversals = 1;              // boundary hits that send the probe back to sweep the other way
    double transit_depth = 0.003;   // press depth while travelling back to the start point

    void validate(const PhantomConfig& phantom) const;
};

/// Load-cell sensor stand-in. `truth` may differ from the calibration used
/// for compensation to inject residual miscalibration.
struct SensorModel {
    CalibrationParams truth;
    double force_noise = 0.02;  // N, per axis
    double angle_noise = 0.0;   // rad, per Euler angle
    ResultantMode resultant = ResultantMode::Norm;
};

struct PlantParams {
    double mass = 0.5;
    double tip_radius = 0.0025;
    double speed_limit = 2.0;
    Vec3 gravity_residual = Vec3::Zero();  // uncompensated body force, N
};

struct PlantState {
    Vec3 p = Vec3::Zero();  // tip-sphere centre
    Vec3 v = Vec3::Zero();
    EulerZYX orientation;
    bool in_contact = false;

    /// Indentation direction: the load-cell -z axis expressed inertially.
    Vec3 tool_axis() const;
    /// Lowest point of the tip along the tool axis, where contact is evaluated.
    Vec3 contact_point(double tip_radius) const { return p + tip_radius * tool_axis(); }
};

struct ProbeResult {
    Cell cell;
    double f_z = 0.0;
    double d_z = 0.0;
    double k = 0.0;
    bool classified_tumor = false;
    bool contact = false;
    double p_zi = 0.0;
    double p_zf = 0.0;
    Vec3 tip = Vec3::Zero();            // tip centre at the stop
    Vec3 contact_point = Vec3::Zero();  // tip + radius * axis
    Vec3 axis = Vec3(0.0, 0.0, -1.0);
};

enum class Outcome { BoundaryReached, Timeout, LostContact };

const char* to_string(Outcome outcome) noexcept;

struct Waypoint {
    double t = 0.0;
    Vec3 pose = Vec3::Zero();  // tip centre
    Vec3 f = Vec3::Zero();     // compensated load-cell force, local frame
    double d_z = 0.0;          // penetration below the registered surface
};

struct PalpationTrajectory {
    std::vector<Waypoint> waypoints;
    Outcome outcome = Outcome::Timeout;
    Cell start_cell;
    int palpation_index = 0;
    Vec2 direction = Vec2::UnitX();  // initial heading
    int reversals = 0;
    Vec3 axis = Vec3(0.0, 0.0, -1.0);
    std::size_t force_bound_violations = 0;
    double max_command_force = 0.0;
};

/// Normalised min-jerk offset 2A(10t^3 - 15t^4 + 6t^5) - A; throws OutOfRange off [0, 1].
double min_jerk_offset(double t, double amplitude);

/// XY advanced by delta, Z lowered by depth_bias (>= 0).
Vec3 desired_pose(const Vec3& p_now, const Vec2& delta_xy, double depth_bias = 0.0);

/// f = Kd (v_d - v) + Kp clamp(p_d - p, +-E_thres), per axis.
Vec3 impedance_force(const Vec3& p_d, const Vec3& p, const Vec3& v_d, const Vec3& v,
                     const ControllerGains& gains);

/// Kp |E_thres| + 2 Kd |E_thres| / T using the stiffest axis.
double admissible_force(const ControllerGains& gains);

ContactResponse plant_contact(const PlantState& state, const Phantom& phantom,
                              const PlantParams& params);

/// Semi-implicit Euler on m a = f_cmd + f_contact + gravity residual.
PlantState step_plant(const PlantState& state, const Vec3& f_cmd, const Phantom& phantom,
                      double dt, const PlantParams& params);

/// Discrete probing and contour following against one phantom/grid pair.
class PalpationRig {
public:
    PalpationRig(const Phantom& phantom, const SurfaceGrid& grid, const ProbeParams& params,
                 const ControllerGains& gains, const CalibrationParams& cal,
                 const SensorModel& sensor);

    ProbeResult probe_cell(PlantState& plant, Cell cell, Rng& noise) const;

    /// Heading drawn uniformly from direction_rng.
    PalpationTrajectory contour_follow(PlantState& plant, const ProbeResult& start,
                                       Rng& direction_rng, Rng& noise) const;
    PalpationTrajectory contour_follow(PlantState& plant, const ProbeResult& start,
                                       const Vec2& heading, Rng& noise) const;

    /// Compensated local-frame reading for a given true inertial contact force.
    ForceReading sense(const PlantState& plant, const Vec3& contact_inertial, Rng& noise) const;

    PlantParams plant_params() const;

private:
    const Phantom& phantom_;
    const SurfaceGrid& grid_;
    ProbeParams params_;
    ControllerGains gains_;
    CalibrationParams cal_;
    SensorModel sensor_;
};

enum class Strategy { BO, RS };
enum class PalpationMode { CF, Discrete };

struct PolicyConfig {
    Strategy strategy = Strategy::BO;
    PalpationMode mode = PalpationMode::CF;
    int budget = 50;
    GpHyper gp;
    double xi = 4.0;
    int n_init = 3;
};

struct PolicyResult {
    std::vector<ProbeResult> probes;
    std::vector<PalpationTrajectory> trajectories;
    std::vector<double> acquisition;  // EI of each chosen cell, NaN for random picks
};

PolicyResult run_policy(const Phantom& phantom, const SurfaceGrid& grid,
                        const PolicyConfig& policy, const ProbeParams& params,
                        const ControllerGains& gains, const CalibrationParams& cal,
                        const SensorModel& sensor, std::uint64_t seed);

}  // namespace subderm
