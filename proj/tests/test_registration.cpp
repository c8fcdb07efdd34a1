#include "support.hpp"

#include <algorithm>

#include "subderm/scene_registration.hpp"

#include <cmath>
#include <random>
#include <set>
#include <tuple>

using namespace subderm;

namespace {

SurfaceMesh lattice_mesh(int n, double extent, double (*f)(double, double))
{
    PointCloud c;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double x = extent * i / (n - 1), y = extent * j / (n - 1);
            c.points.emplace_back(x, y, f(x, y));
        }
    return mesh_from_cloud(c);
}

double plane(double x, double y) { return 0.02 + 0.3 * x - 0.1 * y; }
double flat01(double, double) { return 0.1; }
double paraboloid(double x, double y) { return x * x + y * y; }

}  // namespace

TEST_SUITE("registration") {

TEST_CASE("preprocess keeps planar data planar and bounds the voxel count")
{
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    PointCloud raw;
    for (int i = 0; i < 10000; ++i)
        raw.points.emplace_back(u(gen), u(gen), 0.05);

    const double voxel = 0.002;
    std::set<std::tuple<long long, long long, long long>> occupied;
    for (const Vec3& p : raw.points)
        occupied.emplace(std::floor(p.x() / voxel), std::floor(p.y() / voxel),
                         std::floor(p.z() / voxel));

    const PointCloud out = preprocess_cloud(raw, voxel, 8, 2.0);
    CHECK(out.size() <= occupied.size());
    CHECK(out.size() <= 2601);
    CHECK(out.size() > occupied.size() / 2);
    for (const Vec3& p : out.points)
        CHECK(p.z() == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("preprocess removes an isolated outlier")
{
    PointCloud raw;
    for (int j = 0; j < 30; ++j)
        for (int i = 0; i < 30; ++i)
            raw.points.emplace_back(0.001 * i, 0.001 * j, 0.0);
    raw.points.emplace_back(0.015, 0.015, 0.1);
    const PointCloud out = preprocess_cloud(raw, 0.0005, 8, 2.0);
    for (const Vec3& p : out.points)
        CHECK(p.z() < 0.05);
    CHECK(out.size() == 900);

    CHECK(testing::error_code_of([] { preprocess_cloud(PointCloud{}, 0.001, 8, 2.0); }) ==
          ErrorCode::EmptyCloud);
}

TEST_CASE("meshing planar patches")
{
    PointCloud sq;
    sq.points = {{0, 0, 0.1}, {1, 0, 0.1}, {1, 1, 0.1}, {0, 1, 0.1}};
    const SurfaceMesh m = mesh_from_cloud(sq);
    CHECK(m.triangles.size() == 2);
    for (const Vec3& n : m.vertex_normals)
        CHECK((n - Vec3::UnitZ()).norm() < 1e-12);

    PointCloud tilted;
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 50; ++i) {
        const double x = u(gen), y = u(gen);
        tilted.points.emplace_back(x, y, x);
    }
    const Vec3 expect = Vec3(-1, 0, 1).normalized();
    for (const Vec3& n : mesh_from_cloud(tilted).vertex_normals)
        CHECK((n - expect).norm() < 1e-9);

    PointCloud line;
    line.points = {{0, 0, 0}, {1, 1, 0}, {2, 2, 0}};
    CHECK(testing::error_code_of([&] { mesh_from_cloud(line); }) == ErrorCode::DegenerateCloud);
}

TEST_CASE("crop: no-op, outside, half plane, sub-complex")
{
    const SurfaceMesh m = lattice_mesh(41, 1.0, flat01);
    const RoiBox all{Vec2(-0.1, -0.1), Vec2(1.1, 1.1)};
    CHECK(crop_roi(m, all).triangles.size() == m.triangles.size());

    const RoiBox away{Vec2(5, 5), Vec2(6, 6)};
    CHECK(testing::error_code_of([&] { crop_roi(m, away); }) == ErrorCode::EmptyRoi);

    const RoiBox half{Vec2(-0.1, -0.1), Vec2(0.5, 1.1)};
    const SurfaceMesh h = crop_roi(m, half);
    const double target = m.vertices.size() / 2.0;
    CHECK(std::abs(static_cast<double>(h.vertices.size()) - target) <= 0.05 * target);

    std::set<std::set<std::tuple<double, double>>> original;
    for (const auto& t : m.triangles) {
        std::set<std::tuple<double, double>> key;
        for (int v : t)
            key.emplace(m.vertices[v].x(), m.vertices[v].y());
        original.insert(key);
    }
    for (const auto& t : h.triangles) {
        std::set<std::tuple<double, double>> key;
        for (int v : t) {
            CHECK(half.contains(h.vertices[v].head<2>()));
            key.emplace(h.vertices[v].x(), h.vertices[v].y());
        }
        CHECK(original.count(key) == 1);
    }
}

TEST_CASE("grid reproduces planes exactly")
{
    const SurfaceMesh m = lattice_mesh(9, 0.08, plane);
    const SurfaceGrid g = interpolate_grid(m, 0.0037, 0.0041);
    const Vec3 n = Vec3(-0.3, 0.1, 1.0).normalized();
    std::size_t checked = 0;
    for (const Cell c : g.valid_cells()) {
        const SurfacePoint sp = cell_to_surface(g, c);
        CHECK(std::abs(sp.point.z() - plane(sp.point.x(), sp.point.y())) <= 1e-9);
        CHECK((sp.normal - n).norm() <= 1e-6);
        CHECK(sp.normal.z() > 0);
        ++checked;
    }
    CHECK(checked == g.valid_count());
    CHECK(checked > 100);
}

TEST_CASE("grid is interpolatory at mesh vertices and accurate on a paraboloid")
{
    const SurfaceMesh coarse = lattice_mesh(11, 0.1, paraboloid);
    const SurfaceGrid g = interpolate_grid(coarse, 0.01, 0.01);
    REQUIRE(g.nx == 11);
    REQUIRE(g.ny == 11);
    for (const Cell c : g.valid_cells()) {
        const Vec2 xy = g.cell_xy(c);
        CHECK(std::abs(g.height[g.index(c)] - paraboloid(xy.x(), xy.y())) <= 1e-9);
    }

    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> jitter(-0.0004, 0.0004);
    PointCloud dense;
    for (int j = 0; j < 61; ++j)
        for (int i = 0; i < 61; ++i) {
            const double x = -0.05 + 0.1 * i / 60 + (i % 60 ? jitter(gen) : 0.0);
            const double y = -0.05 + 0.1 * j / 60 + (j % 60 ? jitter(gen) : 0.0);
            dense.points.emplace_back(x, y, paraboloid(x, y));
        }
    const SurfaceGrid pg = interpolate_grid(mesh_from_cloud(dense), 0.0023, 0.0023);
    std::size_t interior = 0;
    for (const Cell c : pg.valid_cells()) {
        const Vec2 xy = pg.cell_xy(c);
        if (std::abs(xy.x()) > 0.045 || std::abs(xy.y()) > 0.045)
            continue;
        CHECK(std::abs(pg.height[pg.index(c)] - paraboloid(xy.x(), xy.y())) <= 1e-4);
        ++interior;
    }
    CHECK(interior > 1000);
}

TEST_CASE("Clough-Tocher interpolant reproduces quadratics on a fine mesh")
{
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(0, 1);
    PointCloud c;
    auto q = [](double x, double y) { return 0.3 + x - 2 * y + 0.5 * x * x - x * y + 0.25 * y * y; };
    for (int i = 0; i < 400; ++i) {
        const double x = u(gen), y = u(gen);
        c.points.emplace_back(x, y, q(x, y));
    }
    const CloughTocherInterpolant ct(mesh_from_cloud(c));
    int hint = 0;
    double worst = 0;
    for (int i = 0; i < 500; ++i) {
        const double x = 0.2 + 0.6 * u(gen), y = 0.2 + 0.6 * u(gen);
        const auto z = ct(x, y, &hint);
        REQUIRE(z.has_value());
        worst = std::max(worst, std::abs(*z - q(x, y)));
    }
    CHECK(worst < 1e-9);
    CHECK_FALSE(ct(5.0, 5.0).has_value());
}

TEST_CASE("coarse resolution and cell lookup")
{
    const SurfaceMesh m = lattice_mesh(5, 0.01, flat01);
    CHECK(testing::error_code_of([&] { interpolate_grid(m, 0.5, 0.5); }) ==
          ErrorCode::ResolutionTooCoarse);

    PointCloud tri;
    tri.points = {{0, 0, 0.1}, {1, 0, 0.1}, {0, 1, 0.1}};
    const SurfaceGrid g = interpolate_grid(mesh_from_cloud(tri), 0.1, 0.1);
    const SurfacePoint origin = cell_to_surface(g, {0, 0});
    CHECK(origin.point.head<2>() == g.origin_xy);
    CHECK((origin.normal - Vec3::UnitZ()).norm() < 1e-12);
    CHECK_FALSE(g.is_valid({g.nx - 1, g.ny - 1}));
    CHECK(testing::error_code_of([&] { cell_to_surface(g, {g.nx - 1, g.ny - 1}); }) ==
          ErrorCode::InvalidCell);
    CHECK(testing::error_code_of([&] { cell_to_surface(g, {-1, 0}); }) == ErrorCode::InvalidCell);

    for (int v = 0; v < g.ny; ++v)
        for (int u = 0; u < g.nx; ++u)
            CHECK(g.cell_xy({u, v}) == g.origin_xy + Vec2(u * g.dx, v * g.dy));
}

TEST_CASE("registered scene spans the ROI and tracks the skin")
{
    const Phantom ph(PhantomConfig{}, testing::hemisphere());
    const Box2 region{Vec2(-0.05, -0.05), Vec2(0.05, 0.05)};
    const RoiBox roi{Vec2(-0.015, -0.015), Vec2(0.015, 0.015)};

    SUBCASE("noise-free cloud")
    {
        const PointCloud raw = synth_depth_cloud(ph, region, 1e6, 0.0, 3);
        const SurfaceGrid g = register_scene(raw, roi, RegistrationParams{});
        CHECK(g.origin_xy == roi.min_xy);
        CHECK(g.nx == 16);
        CHECK(g.ny == 16);
        CHECK(g.valid_count() == 256);
        for (const Cell c : g.valid_cells()) {
            const SurfacePoint sp = cell_to_surface(g, c);
            CHECK(std::abs(sp.point.z() - ph.z_skin(sp.point.x(), sp.point.y())) < 1e-5);
            CHECK(sp.normal.z() > 0.995);
            CHECK(sp.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    // Unsmoothed central differences pass the 0.5 mm depth noise straight
    // into the normals, so only the distribution is bounded here.
    SUBCASE("noisy cloud")
    {
        const PointCloud raw = synth_depth_cloud(ph, region, 1e6, 0.0005, 3);
        const SurfaceGrid g = register_scene(raw, roi, RegistrationParams{});
        CHECK(g.valid_count() == 256);
        std::vector<double> dz, nz;
        for (const Cell c : g.valid_cells()) {
            const SurfacePoint sp = cell_to_surface(g, c);
            dz.push_back(std::abs(sp.point.z() - ph.z_skin(sp.point.x(), sp.point.y())));
            nz.push_back(sp.normal.z());
            CHECK(sp.normal.z() > 0.0);
            CHECK(sp.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
        }
        std::sort(dz.begin(), dz.end());
        std::sort(nz.begin(), nz.end());
        CHECK(dz[dz.size() / 2] < 0.0003);
        CHECK(dz[dz.size() * 95 / 100] < 0.001);
        CHECK(nz[nz.size() / 2] > 0.98);
        CHECK(nz[nz.size() * 5 / 100] > 0.9);
    }
}

}
