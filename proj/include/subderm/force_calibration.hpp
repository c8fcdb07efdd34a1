#pragma once

#include "subderm/types.hpp"

namespace subderm {

/// Yaw, pitch, roll in radians.
struct EulerZYX {
    double psi = 0.0;
    double theta = 0.0;
    double phi = 0.0;
};

enum class Frame { LoadCellLocal, Inertial };

struct ForceReading {
    Vec3 f = Vec3::Zero();
    Frame frame = Frame::LoadCellLocal;
};

struct CalibrationParams {
    double tip_weight_n = 0.3;             // M_L, already in Newtons
    Vec3 z_offset = Vec3(0.0, 0.0, 0.4);   // static load-cell bias
};

enum class ResultantMode { Norm, AxisRms };

/// R = Rz(psi) * Ry(theta) * Rx(phi).
Mat3 rotation_zyx(const EulerZYX& e);

/// Euler angles (psi = 0) whose rotation carries the local +z axis onto `axis`.
EulerZYX euler_from_axis(const Vec3& axis);

ForceReading remove_z_offset(const ForceReading& raw, const CalibrationParams& cal);

/// Local -> inertial, subtract the tip weight along inertial z, back to local.
ForceReading compensate_tip_weight(const ForceReading& f_local, const EulerZYX& e,
                                   const CalibrationParams& cal);

/// Euclidean norm by default; AxisRms gives |f| / sqrt(3).
double resultant_force(const ForceReading& f, ResultantMode mode = ResultantMode::Norm);

/// Load-cell reading produced by a true inertial contact force (inverse of the
/// two compensation steps). Used by the simulator's sensor model.
ForceReading simulate_load_cell(const Vec3& contact_inertial, const EulerZYX& e,
                                const CalibrationParams& truth);

}  // namespace subderm
