#include "support.hpp"

#include "subderm/experiment.hpp"
#include "subderm/palpation_policy.hpp"

#include <cmath>
#include <random>
#include <set>

using namespace subderm;

namespace {

SensorModel ideal_sensor(const CalibrationParams& cal)
{
    SensorModel s;
    s.truth = cal;
    s.force_noise = 0.0;
    return s;
}

/// Flat 1 mm lattice at the skin height, cell (15, 15) over the origin.
SurfaceGrid skin_grid(const Phantom& ph, double lift = 0.0)
{
    return testing::flat_grid(31, 31, 0.001, ph.z_skin(0, 0) + lift, Vec2(-0.015, -0.015));
}

SurfaceGrid registered_grid(const ExperimentConfig& cfg, const Phantom& ph)
{
    const PointCloud raw =
        synth_depth_cloud(ph, cfg.scene_region, cfg.cloud_density, cfg.cloud_noise, 17);
    return register_scene(raw, cfg.roi, cfg.registration);
}

}  // namespace

TEST_SUITE("palpation") {

TEST_CASE("min-jerk offset")
{
    const double a = 0.0013;
    CHECK(min_jerk_offset(0.0, a) == -a);
    CHECK(min_jerk_offset(0.5, a) == 0.0);
    CHECK(min_jerk_offset(1.0, a) == a);
    double prev = -a;
    for (int i = 0; i <= 1000; ++i) {
        const double t = i / 1000.0;
        CHECK(std::abs(min_jerk_offset(t, a) + min_jerk_offset(1.0 - t, a)) <= 1e-12);
        CHECK(min_jerk_offset(t, a) >= prev);
        prev = min_jerk_offset(t, a);
    }
    CHECK(testing::error_code_of([] { min_jerk_offset(1.01, 1.0); }) == ErrorCode::OutOfRange);
    CHECK(testing::error_code_of([] { min_jerk_offset(-0.1, 1.0); }) == ErrorCode::OutOfRange);
}

TEST_CASE("desired pose")
{
    const Vec3 p(0.01, -0.02, 0.1);
    CHECK(desired_pose(p, Vec2::Zero()) == p);
    CHECK(desired_pose(p, Vec2(0.001, 0)).x() - p.x() == doctest::Approx(0.001));
    CHECK(desired_pose(p, Vec2(0.3, -0.2), 0.003).z() <= p.z());
    CHECK(testing::error_code_of([&] { desired_pose(p, Vec2::Zero(), -1.0); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("impedance law and admissible force")
{
    ControllerGains g;
    g.kp = Vec3::Constant(1000);
    g.kd = Vec3::Constant(20);
    g.e_thres = 0.005;
    const Vec3 zero = Vec3::Zero();
    CHECK(impedance_force(zero, zero, zero, zero, g) == zero);
    CHECK((impedance_force(Vec3(0.001, 0, 0), zero, zero, zero, g) - Vec3(1, 0, 0)).norm() <
          1e-12);
    CHECK((impedance_force(Vec3(1, 0, 0), zero, zero, zero, g) - Vec3(5, 0, 0)).norm() < 1e-12);
    CHECK((impedance_force(zero, zero, zero, Vec3(0, 0.5, 0), g) - Vec3(0, -10, 0)).norm() <
          1e-12);

    CHECK(admissible_force(g) == doctest::Approx(205.0).epsilon(1e-12));
    ControllerGains nd = g;
    nd.kd = Vec3::Zero();
    CHECK(admissible_force(nd) == doctest::Approx(5.0).epsilon(1e-12));
    ControllerGains twice = g;
    twice.e_thres *= 2;
    CHECK(admissible_force(twice) == doctest::Approx(2 * admissible_force(g)).epsilon(1e-12));
}

TEST_CASE("free plant dynamics")
{
    const Phantom ph(testing::flat_config(), std::nullopt);
    PlantParams pp;
    pp.mass = 0.1;
    PlantState s;
    s.p = Vec3(0, 0, 1.0);
    const PlantState same = step_plant(s, Vec3::Zero(), ph, 0.001, pp);
    CHECK(same.p == s.p);
    CHECK(same.v == s.v);

    for (int i = 0; i < 100; ++i)
        s = step_plant(s, Vec3(0, 0, -1), ph, 0.001, pp);
    CHECK(s.v.z() == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK_FALSE(s.in_contact);

    PlantState fast;
    fast.p = Vec3(0, 0, 1.0);
    CHECK(testing::error_code_of([&] {
              for (int i = 0; i < 10000; ++i)
                  fast = step_plant(fast, Vec3(0, 0, -100), ph, 0.001, pp);
          }) == ErrorCode::NumericalBlowup);
}

TEST_CASE("plant settles on the soft stack at the static balance")
{
    const Phantom ph(testing::flat_config(), std::nullopt);
    const PlantParams pp;
    PlantState s;
    s.p = Vec3(0.03, 0.03, ph.z_skin(0.03, 0.03) + pp.tip_radius);
    const double f = 3.0;
    for (int i = 0; i < 30000; ++i)
        s = step_plant(s, Vec3(0, 0, -f), ph, 0.001, pp);
    const double d = ph.z_skin(0.03, 0.03) - s.contact_point(pp.tip_radius).z();
    CHECK(ph.config().soft_stiffness() * d == doctest::Approx(f).epsilon(0.01));
}

TEST_CASE("probe over the apex inverts the force law")
{
    const Phantom ph(testing::soft400_config(), testing::hemisphere());
    const SurfaceGrid grid = skin_grid(ph);
    ProbeParams params;
    const CalibrationParams cal;
    const PalpationRig rig(ph, grid, params, ControllerGains{}, cal, ideal_sensor(cal));

    PlantState plant;
    Rng noise(1);
    const ProbeResult r = rig.probe_cell(plant, {15, 15}, noise);
    // 400 * 0.009 + 20000 * (d - 0.009) + damping * speed = 5 N
    const double damping = ph.config().contact_damping * params.indent_speed;
    const double d_star = 0.009 + (params.f_thres - 400 * 0.009 - damping) / 20000.0;
    const double step = params.indent_speed * ControllerGains{}.period;
    CHECK(std::abs(r.d_z - d_star) <= step);
    CHECK(r.f_z >= params.f_thres);
    CHECK(r.classified_tumor);
    CHECK(r.k == doctest::Approx(r.f_z / r.d_z));
    CHECK(std::abs(r.p_zi - r.p_zf) == doctest::Approx(r.d_z));
    CHECK(r.contact_point.head<2>().norm() < 1e-12);
}

TEST_CASE("probe away from the tumor stops at the depth threshold")
{
    const Phantom ph(testing::flat_config(), testing::hemisphere());
    const SurfaceGrid grid = skin_grid(ph);
    const ProbeParams params;
    const CalibrationParams cal;
    const PalpationRig rig(ph, grid, params, ControllerGains{}, cal, ideal_sensor(cal));
    PlantState plant;
    Rng noise(1);
    const ProbeResult r = rig.probe_cell(plant, {0, 0}, noise);
    CHECK(r.d_z >= params.d_thres);
    CHECK(r.f_z < params.f_thres);
    CHECK_FALSE(r.classified_tumor);
    // Damping at the indentation speed adds c * v on top of the soft-stack spring.
    const double k_expected =
        ph.config().soft_stiffness() + ph.config().contact_damping * params.indent_speed / r.d_z;
    CHECK(r.k == doctest::Approx(k_expected).epsilon(0.01));

    const SurfaceGrid high = skin_grid(ph, 0.05);
    const PalpationRig lost(ph, high, params, ControllerGains{}, cal, ideal_sensor(cal));
    CHECK(testing::error_code_of([&] { lost.probe_cell(plant, {0, 0}, noise); }) ==
          ErrorCode::NoContact);
    CHECK(testing::error_code_of([&] { lost.probe_cell(plant, {40, 0}, noise); }) ==
          ErrorCode::InvalidCell);
}

TEST_CASE("classification agrees with the footprint on random cells")
{
    // Noise-free depth data keeps the probe axes near vertical, so the
    // footprint under each cell is the right truth.
    ExperimentConfig cfg = default_config();
    cfg.cloud_noise = 0.0;
    const Phantom ph = phantom_for(cfg);
    const SurfaceGrid grid = registered_grid(cfg, ph);
    const CalibrationParams cal = cfg.cal;
    const PalpationRig rig(ph, grid, cfg.probe, cfg.gains, cal, ideal_sensor(cal));

    std::vector<Cell> cells = grid.valid_cells();
    std::mt19937_64 gen(4);
    std::shuffle(cells.begin(), cells.end(), gen);
    cells.resize(100);
    int agree = 0, positives = 0;
    Rng noise(2);
    for (const Cell c : cells) {
        PlantState plant;
        const ProbeResult r = rig.probe_cell(plant, c, noise);
        const Vec2 xy = grid.cell_xy(c);
        const double d_stop = ph.z_skin(xy.x(), xy.y()) - ph.z_stop(xy.x(), xy.y());
        const bool truth = ph.on_tumor(xy.x(), xy.y()) && d_stop <= cfg.probe.d_thres - 0.001;
        agree += truth == r.classified_tumor;
        positives += truth;
    }
    CHECK(agree >= 95);
    CHECK(positives > 10);
}

TEST_CASE("contour follow from the apex finds the footprint edge")
{
    const Phantom ph(testing::flat_config(), testing::hemisphere());
    const SurfaceGrid grid = skin_grid(ph);
    const ProbeParams params;
    const ControllerGains gains;
    const CalibrationParams cal;
    const PalpationRig rig(ph, grid, params, gains, cal, ideal_sensor(cal));

    PlantState plant;
    Rng noise(3);
    const ProbeResult start = rig.probe_cell(plant, {15, 15}, noise);
    REQUIRE(start.classified_tumor);
    const PalpationTrajectory traj = rig.contour_follow(plant, start, Vec2(1, 0), noise);

    CHECK(traj.outcome == Outcome::BoundaryReached);
    CHECK(traj.waypoints.size() >= 10);
    const Vec3 end = traj.waypoints.back().pose + params.tip_radius * traj.axis;
    CHECK(std::abs(end.head<2>().norm() - 0.01) <= 0.003);
    CHECK(traj.force_bound_violations == 0);
    CHECK(traj.max_command_force <= admissible_force(gains));
    CHECK(traj.waypoints.back().t <= params.cf_timeout);

    for (std::size_t k = 0; k < traj.waypoints.size(); ++k) {
        if (k > 0)
            CHECK(traj.waypoints[k].t > traj.waypoints[k - 1].t);
        CHECK(std::abs(traj.waypoints[k].t - k / params.osc_rate) <= 0.5 * gains.period + 1e-12);
    }

    // The sweep visits both sides of the apex.
    double min_x = 1, max_x = -1;
    for (const auto& w : traj.waypoints) {
        min_x = std::min(min_x, w.pose.x());
        max_x = std::max(max_x, w.pose.x());
    }
    CHECK(min_x < -0.007);
    CHECK(max_x > 0.007);
}

TEST_CASE("contour follow outcomes: timeout and lost contact")
{
    const Phantom ph(testing::flat_config(), testing::hemisphere());
    const SurfaceGrid grid = skin_grid(ph);
    const CalibrationParams cal;
    ProbeParams params;
    params.cf_timeout = 0.0;
    const PalpationRig rig(ph, grid, params, ControllerGains{}, cal, ideal_sensor(cal));
    PlantState plant;
    Rng noise(4);
    const ProbeResult start = rig.probe_cell(plant, {15, 15}, noise);
    const PalpationTrajectory t0 = rig.contour_follow(plant, start, Vec2(0, 1), noise);
    CHECK(t0.outcome == Outcome::Timeout);
    CHECK(t0.waypoints.size() == 1);

    // A registered surface far above the real one pulls the probe off the skin.
    const SurfaceGrid high = skin_grid(ph, 0.03);
    const PalpationRig floating(ph, high, ProbeParams{}, ControllerGains{}, cal,
                                ideal_sensor(cal));
    PlantState p2;
    const ProbeResult s2 = rig.probe_cell(p2, {15, 15}, noise);
    const PalpationTrajectory lost = floating.contour_follow(p2, s2, Vec2(0, 1), noise);
    CHECK(lost.outcome == Outcome::LostContact);

    ProbeResult not_tumor = s2;
    not_tumor.classified_tumor = false;
    CHECK(testing::error_code_of([&] { rig.contour_follow(p2, not_tumor, Vec2(1, 0), noise); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("policy loop: budget, modes, determinism")
{
    const ExperimentConfig cfg = default_config();
    const Phantom ph = phantom_for(cfg);
    const SurfaceGrid grid = registered_grid(cfg, ph);
    SensorModel sensor;
    sensor.truth = cfg.cal;

    PolicyConfig pc = cfg.policy;
    pc.budget = 50;
    const PolicyResult a = run_policy(ph, grid, pc, cfg.probe, cfg.gains, cfg.cal, sensor, 9);
    CHECK(a.probes.size() == 50);
    std::size_t tumor = 0;
    std::set<Cell> cells;
    for (const auto& p : a.probes) {
        tumor += p.classified_tumor;
        cells.insert(p.cell);
    }
    CHECK(cells.size() == 50);
    CHECK(a.trajectories.size() == tumor);
    for (const auto& t : a.trajectories) {
        CHECK(a.probes[t.palpation_index].classified_tumor);
        CHECK(t.force_bound_violations == 0);
    }
    for (std::size_t i = 0; i < a.acquisition.size(); ++i)
        CHECK(std::isnan(a.acquisition[i]) == (i < static_cast<std::size_t>(pc.n_init)));

    const PolicyResult b = run_policy(ph, grid, pc, cfg.probe, cfg.gains, cfg.cal, sensor, 9);
    REQUIRE(b.trajectories.size() == a.trajectories.size());
    for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
        const auto& wa = a.trajectories[i].waypoints;
        const auto& wb = b.trajectories[i].waypoints;
        REQUIRE(wa.size() == wb.size());
        for (std::size_t k = 0; k < wa.size(); ++k) {
            CHECK(wa[k].pose == wb[k].pose);
            CHECK(wa[k].f == wb[k].f);
        }
    }

    pc.mode = PalpationMode::Discrete;
    pc.budget = 80;
    const PolicyResult d = run_policy(ph, grid, pc, cfg.probe, cfg.gains, cfg.cal, sensor, 9);
    CHECK(d.probes.size() == 80);
    CHECK(d.trajectories.empty());

    const SurfaceGrid tiny = testing::flat_grid(4, 4, 0.002, ph.z_skin(0, 0));
    CHECK(testing::error_code_of([&] {
              run_policy(ph, tiny, pc, cfg.probe, cfg.gains, cfg.cal, sensor, 1);
          }) == ErrorCode::Exhausted);
    pc.budget = 0;
    CHECK(testing::error_code_of([&] {
              run_policy(ph, grid, pc, cfg.probe, cfg.gains, cfg.cal, sensor, 1);
          }) == ErrorCode::InvalidArgument);
}

}
