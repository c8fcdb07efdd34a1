#pragma once

#include "subderm/types.hpp"

#include <cstdint>
#include <optional>

namespace subderm {

enum class SurfaceKind { Flat, CylBump, GaussBump };

/// Skin-surface shape above the muscle plane. For CylBump `width` is the
/// cylinder radius (axis along y); for GaussBump it is the bump sigma.
struct SurfaceProfile {
    SurfaceKind kind = SurfaceKind::CylBump;
    double amplitude = 0.004;
    double width = 0.2;

    double offset(double x, double y) const;
};

struct PhantomConfig {
    double skin_thickness = 0.004;
    double fat_thickness = 0.015;
    double k_skin = 1000.0;
    double k_fat = 200.0;
    double k_muscle = 2000.0;
    double k_tumor = 20000.0;
    SurfaceProfile surface;
    double contact_damping = 5.0;
    double muscle_plane_z = 0.08;

    /// Throws ConfigInvalid unless k_fat < k_skin < k_muscle < k_tumor and thicknesses are positive.
    void validate() const;

    double stack_depth() const { return skin_thickness + fat_thickness; }
    /// Skin and fat springs in series.
    double soft_stiffness() const { return 1.0 / (1.0 / k_skin + 1.0 / k_fat); }
};

enum class TumorShape { Hemisphere, Ellipsoid, Crescent };

struct EllipsoidParams {
    double semi_x = 0.012;
    double semi_y = 0.008;
    double height = 0.008;
};

/// Flat-topped crescent: the disk of `radius` minus an inner disk shifted
/// along +x, with a quarter-round fillet on the top edge.
struct CrescentParams {
    double inner_radius = 0.008;
    double inner_offset = 0.005;
    double height = 0.006;
    double fillet = 0.002;
};

struct TumorGeometry {
    TumorShape shape = TumorShape::Hemisphere;
    double radius = 0.01;
    Vec2 center_xy = Vec2::Zero();
    EllipsoidParams ellipsoid;
    CrescentParams crescent;

    /// Height above the muscle surface; zero outside the footprint.
    double height_at(double x, double y) const;
    double max_height() const;
    Box2 footprint_bounds() const;

    void validate() const;
};

enum class ContactRegime { NoContact, SoftStack, HardStopTumor, HardStopMuscle };

struct ContactResponse {
    double normal_force = 0.0;
    double penetration = 0.0;
    ContactRegime regime = ContactRegime::NoContact;
    /// Reaction force on the probe, inertial frame, along the skin normal.
    Vec3 force = Vec3::Zero();
};

/// Analytic phantom. Immutable once built.
class Phantom {
public:
    Phantom(const PhantomConfig& cfg, std::optional<TumorGeometry> tumor);

    const PhantomConfig& config() const { return cfg_; }
    const std::optional<TumorGeometry>& tumor() const { return tumor_; }

    double z_skin(double x, double y) const;
    double z_muscle(double x, double y) const;
    double z_stop(double x, double y) const;
    double tumor_height(double x, double y) const;
    bool on_tumor(double x, double y) const { return tumor_height(x, y) > 0.0; }

    Vec3 skin_normal(double x, double y) const;

    ContactResponse contact_force(const Vec2& q, double probe_z, double probe_vz) const;

private:
    PhantomConfig cfg_;
    std::optional<TumorGeometry> tumor_;
};

Phantom build_phantom(const PhantomConfig& cfg, const TumorGeometry& tumor);

/// Depth-camera stand-in: jittered lattice over `region` with isotropic Gaussian noise.
PointCloud synth_depth_cloud(const Phantom& phantom, const Box2& region, double density,
                             double noise_sigma, std::uint64_t seed);

/// Uniform-in-XY samples of the exposed tumor top surface.
PointCloud ground_truth_cloud(const Phantom& phantom, std::size_t samples_n, std::uint64_t seed);

}  // namespace subderm
