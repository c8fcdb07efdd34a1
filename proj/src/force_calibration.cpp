#include "subderm/force_calibration.hpp"

#include "subderm/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace subderm {

Mat3 rotation_zyx(const EulerZYX& e)
{
    return (Eigen::AngleAxisd(e.psi, Vec3::UnitZ()) * Eigen::AngleAxisd(e.theta, Vec3::UnitY()) *
            Eigen::AngleAxisd(e.phi, Vec3::UnitX()))
        .toRotationMatrix();
}

EulerZYX euler_from_axis(const Vec3& axis)
{
    const double len = axis.norm();
    if (!(len > 0.0) || !std::isfinite(len))
        fail(ErrorCode::InvalidArgument, "axis must be a finite non-zero vector");
    const Vec3 n = axis / len;
    // Ry(theta) Rx(phi) e_z = (cos(phi) sin(theta), -sin(phi), cos(phi) cos(theta))
    EulerZYX e;
    e.phi = -std::asin(std::clamp(n.y(), -1.0, 1.0));
    e.theta = std::atan2(n.x(), n.z());
    return e;
}

ForceReading remove_z_offset(const ForceReading& raw, const CalibrationParams& cal)
{
    if (raw.frame != Frame::LoadCellLocal)
        fail(ErrorCode::FrameMismatch, "z-offset removal expects a load-cell-local reading");
    return {raw.f - cal.z_offset, Frame::LoadCellLocal};
}

ForceReading compensate_tip_weight(const ForceReading& f_local, const EulerZYX& e,
                                   const CalibrationParams& cal)
{
    if (f_local.frame != Frame::LoadCellLocal)
        fail(ErrorCode::FrameMismatch, "tip-weight compensation expects a load-cell-local reading");
    const Mat3 r = rotation_zyx(e);
    const Vec3 inertial = r * f_local.f - Vec3(0.0, 0.0, cal.tip_weight_n);
    return {r.transpose() * inertial, Frame::LoadCellLocal};
}

double resultant_force(const ForceReading& f, ResultantMode mode)
{
    const double n = f.f.norm();
    return mode == ResultantMode::AxisRms ? n / std::sqrt(3.0) : n;
}

ForceReading simulate_load_cell(const Vec3& contact_inertial, const EulerZYX& e,
                                const CalibrationParams& truth)
{
    const Mat3 r = rotation_zyx(e);
    const Vec3 local = r.transpose() * (contact_inertial + Vec3(0.0, 0.0, truth.tip_weight_n));
    return {local + truth.z_offset, Frame::LoadCellLocal};
}

}  // namespace subderm
