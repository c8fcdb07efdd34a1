#pragma once

#include "subderm/errors.hpp"
#include "subderm/phantom.hpp"
#include "subderm/scene_registration.hpp"

#include <doctest.h>

#include <filesystem>
#include <string>

namespace testing {

inline subderm::PhantomConfig flat_config()
{
    subderm::PhantomConfig cfg;
    cfg.surface.kind = subderm::SurfaceKind::Flat;
    cfg.surface.amplitude = 0.0;
    return cfg;
}

/// Skin 2000 / fat 500 in series gives a soft stack of exactly 400 N/m.
inline subderm::PhantomConfig soft400_config()
{
    subderm::PhantomConfig cfg = flat_config();
    cfg.k_fat = 500.0;
    cfg.k_skin = 2000.0;
    cfg.k_muscle = 5000.0;
    cfg.k_tumor = 20000.0;
    return cfg;
}

inline subderm::TumorGeometry hemisphere(double radius = 0.01)
{
    subderm::TumorGeometry t;
    t.shape = subderm::TumorShape::Hemisphere;
    t.radius = radius;
    return t;
}

/// All-valid flat lattice at height z.
inline subderm::SurfaceGrid flat_grid(int nx, int ny, double spacing, double z,
                                      subderm::Vec2 origin = subderm::Vec2::Zero())
{
    subderm::SurfaceGrid g;
    g.origin_xy = origin;
    g.dx = g.dy = spacing;
    g.nx = nx;
    g.ny = ny;
    const auto n = static_cast<std::size_t>(nx) * ny;
    g.height.assign(n, z);
    g.normal.assign(n, subderm::Vec3::UnitZ());
    g.valid.assign(n, 1);
    return g;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

template <class F>
subderm::ErrorCode error_code_of(F&& f)
{
    try {
        f();
    } catch (const subderm::Error& e) {
        return e.code();
    }
    FAIL("expected a subderm::Error");
    return subderm::ErrorCode::InvalidArgument;
}

}  // namespace testing
