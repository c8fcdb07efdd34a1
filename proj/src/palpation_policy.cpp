#include "subderm/palpation_policy.hpp"

#include "subderm/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace subderm {

namespace {

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void ControllerGains::validate() const
{
    if (!(kp.array() > 0.0).all() || !kp.allFinite())
        fail(ErrorCode::ConfigInvalid, "K_p must be positive on every axis");
    if (!(kd.array() > 0.0).all() || !kd.allFinite())
        fail(ErrorCode::ConfigInvalid, "K_d must be positive on every axis");
    if (!positive(e_thres) || !positive(period))
        fail(ErrorCode::ConfigInvalid, "E_thres and T must be positive");
}

void ProbeParams::validate(const PhantomConfig& phantom) const
{
    if (!positive(f_thres))
        fail(ErrorCode::ConfigInvalid, "f_thres must be positive");
    if (!positive(d_thres) || d_thres >= phantom.stack_depth() + 0.005)
        fail(ErrorCode::ConfigInvalid, "d_thres must be positive and shallower than the soft stack");
    if (!positive(indent_speed) || !positive(amplitude) || !positive(osc_rate) ||
        !positive(probe_mass) || !positive(lost_contact_time) || !positive(speed_limit))
        fail(ErrorCode::ConfigInvalid, "probe rates, amplitude and mass must be positive");
    if (stroke_waypoints < 2 || reversals < 0)
        fail(ErrorCode::ConfigInvalid, "stroke_waypoints must be >= 2 and reversals >= 0");
    if (!std::isfinite(cf_timeout) || cf_timeout < 0.0 || !std::isfinite(press_depth) ||
        press_depth < 0.0 || !std::isfinite(tip_radius) || tip_radius < 0.0 ||
        !std::isfinite(approach_height) || approach_height < 0.0 ||
        !std::isfinite(transit_depth) || transit_depth < 0.0)
        fail(ErrorCode::ConfigInvalid, "timeout, press depth, tip radius and approach must be >= 0");
}

Vec3 PlantState::tool_axis() const { return -rotation_zyx(orientation).col(2); }

const char* to_string(Outcome outcome) noexcept
{
    switch (outcome) {
    case Outcome::BoundaryReached: return "boundary";
    case Outcome::Timeout: return "timeout";
    case Outcome::LostContact: return "lost_contact";
    }
    return "?";
}

double min_jerk_offset(double t, double amplitude)
{
    if (!(t >= 0.0 && t <= 1.0))
        fail(ErrorCode::OutOfRange, "normalised time must lie in [0, 1]");
    const double t3 = t * t * t;
    return 2.0 * amplitude * (10.0 * t3 - 15.0 * t3 * t + 6.0 * t3 * t * t) - amplitude;
}

Vec3 desired_pose(const Vec3& p_now, const Vec2& delta_xy, double depth_bias)
{
    if (!(depth_bias >= 0.0))
        fail(ErrorCode::InvalidArgument, "depth bias must be >= 0");
    return {p_now.x() + delta_xy.x(), p_now.y() + delta_xy.y(), p_now.z() - depth_bias};
}

Vec3 impedance_force(const Vec3& p_d, const Vec3& p, const Vec3& v_d, const Vec3& v,
                     const ControllerGains& gains)
{
    const Vec3 err = (p_d - p).cwiseMax(-gains.e_thres).cwiseMin(gains.e_thres);
    return gains.kd.cwiseProduct(v_d - v) + gains.kp.cwiseProduct(err);
}

double admissible_force(const ControllerGains& gains)
{
    const double e = std::abs(gains.e_thres);
    return gains.kp.maxCoeff() * e + 2.0 * gains.kd.maxCoeff() * e / gains.period;
}

ContactResponse plant_contact(const PlantState& state, const Phantom& phantom,
                              const PlantParams& params)
{
    const Vec3 c = state.contact_point(params.tip_radius);
    return phantom.contact_force(c.head<2>(), c.z(), state.v.z());
}

PlantState step_plant(const PlantState& state, const Vec3& f_cmd, const Phantom& phantom,
                      double dt, const PlantParams& params)
{
    if (!(dt > 0.0) || !(params.mass > 0.0))
        fail(ErrorCode::InvalidArgument, "dt and mass must be positive");
    const ContactResponse contact = plant_contact(state, phantom, params);
    const Vec3 accel = (f_cmd + contact.force + params.gravity_residual) / params.mass;

    PlantState next = state;
    next.v = state.v + dt * accel;
    next.p = state.p + dt * next.v;
    next.in_contact = contact.penetration > 0.0;
    if (!next.v.allFinite() || !next.p.allFinite() || next.v.norm() > params.speed_limit)
        fail(ErrorCode::NumericalBlowup,
             "probe speed " + std::to_string(next.v.norm()) + " m/s exceeds the safety bound");
    return next;
}

// ---------------------------------------------------------------------------

PalpationRig::PalpationRig(const Phantom& phantom, const SurfaceGrid& grid,
                           const ProbeParams& params, const ControllerGains& gains,
                           const CalibrationParams& cal, const SensorModel& sensor)
    : phantom_(phantom), grid_(grid), params_(params), gains_(gains), cal_(cal), sensor_(sensor)
{
    params_.validate(phantom_.config());
    gains_.validate();
}

PlantParams PalpationRig::plant_params() const
{
    return {params_.probe_mass, params_.tip_radius, params_.speed_limit, Vec3::Zero()};
}

ForceReading PalpationRig::sense(const PlantState& plant, const Vec3& contact_inertial,
                                 Rng& noise) const
{
    // Fixed draw count per reading keeps the noise stream aligned across runs.
    EulerZYX measured = plant.orientation;
    measured.psi += sensor_.angle_noise * noise.normal();
    measured.theta += sensor_.angle_noise * noise.normal();
    measured.phi += sensor_.angle_noise * noise.normal();

    ForceReading raw = simulate_load_cell(contact_inertial, plant.orientation, sensor_.truth);
    raw.f += sensor_.force_noise * Vec3(noise.normal(), noise.normal(), noise.normal());
    return compensate_tip_weight(remove_z_offset(raw, cal_), measured, cal_);
}

ProbeResult PalpationRig::probe_cell(PlantState& plant, Cell cell, Rng& noise) const
{
    const SurfacePoint sp = cell_to_surface(grid_, cell);
    const Vec3 axis = -sp.normal;
    const double r = params_.tip_radius;

    PlantState state;
    state.orientation = euler_from_axis(sp.normal);
    state.p = sp.point + params_.approach_height * sp.normal - r * axis;
    const Vec3 vel = params_.indent_speed * axis;
    const double step = params_.indent_speed * gains_.period;
    const double travel_limit = params_.approach_height + params_.d_thres + 0.01;
    const auto max_ticks = static_cast<long>(std::ceil(travel_limit / step));

    ProbeResult res;
    res.cell = cell;
    res.axis = axis;
    bool contacted = false;
    for (long tick = 0; tick <= max_ticks; ++tick) {
        const Vec3 c = state.p + r * axis;
        const ContactResponse resp = phantom_.contact_force(c.head<2>(), c.z(), vel.z());
        if (resp.penetration > 0.0) {
            if (!contacted) {
                contacted = true;
                res.p_zi = c.z();
            }
            const ForceReading f = sense(state, resp.force, noise);
            res.f_z = f.f.z();
            res.d_z = std::abs(c.z() - res.p_zi);
            if (res.f_z >= params_.f_thres || res.d_z >= params_.d_thres) {
                res.contact = true;
                res.p_zf = c.z();
                res.tip = state.p;
                res.contact_point = c;
                break;
            }
        }
        state.p += step * axis;
    }
    if (!res.contact)
        fail(ErrorCode::NoContact, "probe travel exhausted without a decisive contact");

    res.k = res.d_z > 0.0 ? res.f_z / res.d_z : 0.0;
    res.classified_tumor = res.f_z > params_.f_thres && res.d_z < params_.d_thres;

    state.v = Vec3::Zero();
    state.in_contact = true;
    plant = state;
    return res;
}

PalpationTrajectory PalpationRig::contour_follow(PlantState& plant, const ProbeResult& start,
                                                 Rng& direction_rng, Rng& noise) const
{
    const double heading = 2.0 * std::numbers::pi * direction_rng.uniform();
    return contour_follow(plant, start, Vec2(std::cos(heading), std::sin(heading)), noise);
}

PalpationTrajectory PalpationRig::contour_follow(PlantState& plant, const ProbeResult& start,
                                                 const Vec2& heading, Rng& noise) const
{
    if (!(heading.allFinite() && heading.norm() > 0.0))
        fail(ErrorCode::InvalidArgument, "stroke heading must be a non-zero XY vector");
    if (!start.classified_tumor)
        fail(ErrorCode::InvalidArgument, "contour following starts from a tumor-classified probe");

    const double r = params_.tip_radius;
    const Vec3 axis = start.axis;
    const PlantParams pp = plant_params();
    const double f_adm = admissible_force(gains_);
    const double dt = gains_.period;
    const int w = params_.stroke_waypoints;

    PalpationTrajectory traj;
    traj.start_cell = start.cell;
    traj.axis = axis;
    Vec2 dir = heading.normalized();
    traj.direction = dir;

    plant.orientation = euler_from_axis(-axis);
    const Vec3 start_xy(start.contact_point.x(), start.contact_point.y(), 0.0);
    Vec3 anchor = start_xy;
    long stroke_base = 0;  // waypoint index where the current sweep began
    long transit_begin = 0;
    Vec3 transit_from = start_xy;

    auto depth_below_grid = [&](const Vec3& c) {
        const double h = grid_.height_at(c.x(), c.y());
        return std::isfinite(h) ? h - c.z() : 0.0;
    };

    Vec3 p_d = plant.p;
    long tick = 0;
    double last_contact = 0.0;
    bool lost = false;
    for (long k = 0;; ++k) {
        if (k > 0) {
            Vec3 xy;
            double depth = params_.press_depth;
            if (k < stroke_base) {
                // Shallow transit back to the start point; clears a tumor rim
                // the probe would otherwise have to climb at full depth.
                const double s = static_cast<double>(k - transit_begin) /
                                 static_cast<double>(stroke_base - transit_begin);
                const double u = min_jerk_offset(s, 0.5) + 0.5;
                xy = transit_from + u * (anchor - transit_from);
                depth = params_.transit_depth;
            } else {
                // Stroke m sweeps the anchor from 2mA to 2(m+1)A along dir.
                const long m = (k - stroke_base) / w;
                const int j = static_cast<int>((k - stroke_base) % w);
                const double s = static_cast<double>(j) / (w - 1);
                const double along = (2.0 * m + 1.0) * params_.amplitude +
                                     min_jerk_offset(s, params_.amplitude);
                xy = desired_pose(anchor, along * dir);
            }
            const double h = grid_.height_at(xy.x(), xy.y());
            if (std::isfinite(h))
                p_d = Vec3(xy.x(), xy.y(), h - depth) - r * axis;
            else
                p_d.head<2>() = xy.head<2>() - r * axis.head<2>();

            const long target = std::lround(static_cast<double>(k) / params_.osc_rate / dt);
            while (tick < target) {
                const Vec3 f_cmd = impedance_force(p_d, plant.p, Vec3::Zero(), plant.v, gains_);
                const double mag = f_cmd.norm();
                traj.max_command_force = std::max(traj.max_command_force, mag);
                if (mag > f_adm)
                    ++traj.force_bound_violations;
                plant = step_plant(plant, f_cmd, phantom_, dt, pp);
                ++tick;
                if (plant.in_contact)
                    last_contact = tick * dt;
                else if (tick * dt - last_contact > params_.lost_contact_time) {
                    lost = true;
                    break;
                }
            }
        }

        const ContactResponse resp = plant_contact(plant, phantom_, pp);
        Waypoint wp;
        wp.t = tick * dt;
        wp.pose = plant.p;
        wp.f = sense(plant, resp.force, noise).f;
        wp.d_z = depth_below_grid(plant.contact_point(r));
        traj.waypoints.push_back(wp);

        if (lost) {
            traj.outcome = Outcome::LostContact;
            break;
        }
        // The boundary test runs once per completed stroke. An early hit
        // sends the probe back to the start to cover the other half-chord.
        if (k > stroke_base && (k - stroke_base) % w == w - 1 && wp.d_z > params_.d_thres &&
            wp.f.z() < params_.f_thres) {
            if (traj.reversals >= params_.reversals) {
                traj.outcome = Outcome::BoundaryReached;
                break;
            }
            ++traj.reversals;
            transit_from = (p_d + r * axis);
            transit_from.z() = 0.0;
            const double dist = (start_xy - transit_from).norm();
            const long n_transit = std::max<long>(
                w, static_cast<long>(std::ceil(dist / (2.0 * params_.amplitude) * w)));
            transit_begin = k;
            stroke_base = k + n_transit;
            anchor = start_xy;
            dir = -traj.direction;
        }
        if (wp.t >= params_.cf_timeout) {
            traj.outcome = Outcome::Timeout;
            break;
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------

PolicyResult run_policy(const Phantom& phantom, const SurfaceGrid& grid,
                        const PolicyConfig& policy, const ProbeParams& params,
                        const ControllerGains& gains, const CalibrationParams& cal,
                        const SensorModel& sensor, std::uint64_t seed)
{
    if (policy.budget < 1)
        fail(ErrorCode::InvalidArgument, "budget must be >= 1");
    if (grid.valid_count() < static_cast<std::size_t>(policy.budget))
        fail(ErrorCode::Exhausted, "grid has fewer valid cells (" +
                                       std::to_string(grid.valid_count()) + ") than the budget (" +
                                       std::to_string(policy.budget) + ")");

    const PalpationRig rig(phantom, grid, params, gains, cal, sensor);
    Rng select(derive_seed(seed, 1));

    PolicyResult out;
    CellSet visited;
    std::vector<StiffnessSample> samples;
    for (int i = 0; i < policy.budget; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        Cell cell;
        double ei = std::numeric_limits<double>::quiet_NaN();
        if (policy.strategy == Strategy::RS || i < policy.n_init || samples.size() < 2) {
            cell = next_cell_random(grid, visited, select);
        } else {
            const GPModel gp = gp_fit(samples, policy.gp);
            const Acquisition acq{policy.xi, gp.best_observed()};
            cell = next_cell_bo(gp, grid, visited, acq, select);
            ei = expected_improvement(gp, cell, acq);
        }
        visited.insert(cell);
        out.acquisition.push_back(ei);

        PlantState plant;
        Rng probe_noise(derive_seed(seed, 2, idx));
        const ProbeResult probe = rig.probe_cell(plant, cell, probe_noise);
        samples.push_back({cell, probe.k});
        out.probes.push_back(probe);

        if (policy.mode == PalpationMode::CF && probe.classified_tumor) {
            Rng dir_rng(derive_seed(seed, 3, idx));
            Rng cf_noise(derive_seed(seed, 4, idx));
            PalpationTrajectory traj = rig.contour_follow(plant, probe, dir_rng, cf_noise);
            traj.palpation_index = i;
            out.trajectories.push_back(std::move(traj));
        }
    }
    return out;
}

}  // namespace subderm
