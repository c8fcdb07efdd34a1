#include "subderm/phantom.hpp"

#include "subderm/errors.hpp"
#include "subderm/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace subderm {

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

constexpr double kNormalStep = 1e-6;

}  // namespace

double SurfaceProfile::offset(double x, double y) const
{
    switch (kind) {
    case SurfaceKind::Flat:
        return 0.0;
    case SurfaceKind::CylBump: {
        if (std::abs(x) >= width)
            return 0.0;
        return std::max(0.0, std::sqrt(width * width - x * x) - (width - amplitude));
    }
    case SurfaceKind::GaussBump:
        return amplitude * std::exp(-(x * x + y * y) / (2.0 * width * width));
    }
    return 0.0;
}

void PhantomConfig::validate() const
{
    if (!finite_positive(skin_thickness) || !finite_positive(fat_thickness))
        fail(ErrorCode::ConfigInvalid, "layer thicknesses must be positive");
    if (!finite_positive(k_fat) || !finite_positive(k_skin) || !finite_positive(k_muscle) ||
        !finite_positive(k_tumor))
        fail(ErrorCode::ConfigInvalid, "stiffnesses must be positive");
    if (!(k_fat < k_skin && k_skin < k_muscle && k_muscle < k_tumor)) {
        std::ostringstream os;
        os << "stiffness ordering k_fat < k_skin < k_muscle < k_tumor violated (" << k_fat << ", "
           << k_skin << ", " << k_muscle << ", " << k_tumor << ")";
        fail(ErrorCode::ConfigInvalid, os.str());
    }
    if (!std::isfinite(contact_damping) || contact_damping < 0.0)
        fail(ErrorCode::ConfigInvalid, "contact_damping must be >= 0");
    if (!std::isfinite(muscle_plane_z))
        fail(ErrorCode::ConfigInvalid, "muscle_plane_z must be finite");
    if (surface.kind != SurfaceKind::Flat &&
        (!finite_positive(surface.width) || !std::isfinite(surface.amplitude) ||
         surface.amplitude < 0.0 || surface.amplitude > surface.width))
        fail(ErrorCode::ConfigInvalid, "surface profile needs 0 <= amplitude <= width");
}

double TumorGeometry::height_at(double x, double y) const
{
    const double dx = x - center_xy.x();
    const double dy = y - center_xy.y();
    switch (shape) {
    case TumorShape::Hemisphere: {
        const double r2 = dx * dx + dy * dy;
        return r2 < radius * radius ? std::sqrt(radius * radius - r2) : 0.0;
    }
    case TumorShape::Ellipsoid: {
        const double s = (dx * dx) / (ellipsoid.semi_x * ellipsoid.semi_x) +
                         (dy * dy) / (ellipsoid.semi_y * ellipsoid.semi_y);
        return s < 1.0 ? ellipsoid.height * std::sqrt(1.0 - s) : 0.0;
    }
    case TumorShape::Crescent: {
        const double outer = radius - std::hypot(dx, dy);
        const double inner = std::hypot(dx - crescent.inner_offset, dy) - crescent.inner_radius;
        const double e = std::min(outer, inner);
        if (e <= 0.0)
            return 0.0;
        const double w = crescent.fillet;
        if (e >= w)
            return crescent.height;
        const double t = w - e;
        return crescent.height - w + std::sqrt(w * w - t * t);
    }
    }
    return 0.0;
}

double TumorGeometry::max_height() const
{
    switch (shape) {
    case TumorShape::Hemisphere: return radius;
    case TumorShape::Ellipsoid: return ellipsoid.height;
    case TumorShape::Crescent: return crescent.height;
    }
    return 0.0;
}

Box2 TumorGeometry::footprint_bounds() const
{
    Vec2 half = Vec2::Constant(radius);
    if (shape == TumorShape::Ellipsoid)
        half = Vec2(ellipsoid.semi_x, ellipsoid.semi_y);
    return {center_xy - half, center_xy + half};
}

void TumorGeometry::validate() const
{
    if (!center_xy.allFinite())
        fail(ErrorCode::ConfigInvalid, "tumor centre must be finite");
    switch (shape) {
    case TumorShape::Hemisphere:
        if (!finite_positive(radius))
            fail(ErrorCode::ConfigInvalid, "tumor radius must be positive");
        break;
    case TumorShape::Ellipsoid:
        if (!finite_positive(ellipsoid.semi_x) || !finite_positive(ellipsoid.semi_y) ||
            !finite_positive(ellipsoid.height))
            fail(ErrorCode::ConfigInvalid, "ellipsoid semi-axes must be positive");
        break;
    case TumorShape::Crescent:
        if (!finite_positive(radius) || !finite_positive(crescent.inner_radius) ||
            !finite_positive(crescent.height))
            fail(ErrorCode::ConfigInvalid, "crescent radii and height must be positive");
        if (!std::isfinite(crescent.fillet) || crescent.fillet < 0.0 ||
            crescent.fillet > crescent.height)
            fail(ErrorCode::ConfigInvalid, "crescent fillet must lie in [0, height]");
        if (std::abs(crescent.inner_offset) + radius <= crescent.inner_radius)
            fail(ErrorCode::ConfigInvalid, "crescent inner disk swallows the footprint");
        break;
    }
}

Phantom::Phantom(const PhantomConfig& cfg, std::optional<TumorGeometry> tumor)
    : cfg_(cfg), tumor_(std::move(tumor))
{
    cfg_.validate();
    if (tumor_) {
        tumor_->validate();
        if (tumor_->max_height() > cfg_.stack_depth())
            fail(ErrorCode::ConfigInvalid, "tumor taller than the skin+fat stack");
    }
}

double Phantom::z_skin(double x, double y) const
{
    return cfg_.muscle_plane_z + cfg_.stack_depth() + cfg_.surface.offset(x, y);
}

double Phantom::z_muscle(double x, double y) const
{
    return z_skin(x, y) - cfg_.stack_depth();
}

double Phantom::tumor_height(double x, double y) const
{
    return tumor_ ? tumor_->height_at(x, y) : 0.0;
}

double Phantom::z_stop(double x, double y) const
{
    return z_muscle(x, y) + tumor_height(x, y);
}

Vec3 Phantom::skin_normal(double x, double y) const
{
    const double h = kNormalStep;
    const double gx = (z_skin(x + h, y) - z_skin(x - h, y)) / (2.0 * h);
    const double gy = (z_skin(x, y + h) - z_skin(x, y - h)) / (2.0 * h);
    return Vec3(-gx, -gy, 1.0).normalized();
}

ContactResponse Phantom::contact_force(const Vec2& q, double probe_z, double probe_vz) const
{
    ContactResponse out;
    const double skin = z_skin(q.x(), q.y());
    const double d = std::max(0.0, skin - probe_z);
    if (!(d > 0.0))
        return out;

    const double h = tumor_height(q.x(), q.y());
    const double d_stop = cfg_.stack_depth() - h;
    const double k_hard = h > 0.0 ? cfg_.k_tumor : cfg_.k_muscle;

    const double f_soft = cfg_.soft_stiffness() * std::min(d, d_stop);
    const double f_hard = d > d_stop ? k_hard * (d - d_stop) : 0.0;
    const double f_damp = cfg_.contact_damping * std::max(0.0, -probe_vz);

    out.penetration = d;
    out.normal_force = f_soft + f_hard + f_damp;
    if (d > d_stop)
        out.regime = h > 0.0 ? ContactRegime::HardStopTumor : ContactRegime::HardStopMuscle;
    else
        out.regime = ContactRegime::SoftStack;

    // The buried stop is felt through the tissue stack, so the whole
    // reaction acts along the skin normal.
    out.force = out.normal_force * skin_normal(q.x(), q.y());
    return out;
}

Phantom build_phantom(const PhantomConfig& cfg, const TumorGeometry& tumor)
{
    return Phantom(cfg, tumor);
}

PointCloud synth_depth_cloud(const Phantom& phantom, const Box2& region, double density,
                             double noise_sigma, std::uint64_t seed)
{
    if (!finite_positive(density))
        fail(ErrorCode::InvalidArgument, "density must be positive");
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0)
        fail(ErrorCode::InvalidArgument, "noise_sigma must be >= 0");

    const double spacing = 1.0 / std::sqrt(density);
    const double w = region.width();
    const double h = region.height();
    const long nx = w > 0.0 ? static_cast<long>(std::floor(w / spacing + 1e-9)) : 0;
    const long ny = h > 0.0 ? static_cast<long>(std::floor(h / spacing + 1e-9)) : 0;
    if (nx <= 0 || ny <= 0)
        fail(ErrorCode::EmptyRegion, "region holds no lattice cell at this density");

    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(nx * ny));
    for (long j = 0; j < ny; ++j) {
        for (long i = 0; i < nx; ++i) {
            const double x = region.min.x() + (static_cast<double>(i) + rng.uniform()) * spacing;
            const double y = region.min.y() + (static_cast<double>(j) + rng.uniform()) * spacing;
            const double z = phantom.z_skin(x, y);
            const double ex = rng.normal();
            const double ey = rng.normal();
            const double ez = rng.normal();
            cloud.points.emplace_back(x + noise_sigma * ex, y + noise_sigma * ey,
                                      z + noise_sigma * ez);
        }
    }
    return cloud;
}

PointCloud ground_truth_cloud(const Phantom& phantom, std::size_t samples_n, std::uint64_t seed)
{
    if (!phantom.tumor())
        fail(ErrorCode::NoTumor, "phantom has no tumor");
    if (samples_n == 0)
        fail(ErrorCode::InvalidArgument, "sample count must be positive");

    const Box2 box = phantom.tumor()->footprint_bounds();
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(samples_n);
    const std::size_t max_draws = samples_n * 1000;
    for (std::size_t draws = 0; cloud.points.size() < samples_n; ++draws) {
        if (draws >= max_draws)
            fail(ErrorCode::NoTumor, "tumor footprint too small to sample");
        const double x = rng.uniform(box.min.x(), box.max.x());
        const double y = rng.uniform(box.min.y(), box.max.y());
        if (phantom.tumor_height(x, y) > 0.0)
            cloud.points.emplace_back(x, y, phantom.z_stop(x, y));
    }
    return cloud;
}

}  // namespace subderm
