#pragma once

#include "subderm/geometry/delaunay.hpp"
#include "subderm/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace subderm {

struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<Vec3> vertex_normals;

    bool empty() const { return triangles.empty(); }
    Box2 xy_bounds() const;
};

struct RoiBox {
    Vec2 min_xy = Vec2::Zero();
    Vec2 max_xy = Vec2::Zero();

    void validate() const;
    bool contains(const Vec2& p) const
    {
        return p.x() >= min_xy.x() && p.x() <= max_xy.x() && p.y() >= min_xy.y() &&
               p.y() <= max_xy.y();
    }
    RoiBox padded(double margin) const
    {
        return {min_xy - Vec2::Constant(margin), max_xy + Vec2::Constant(margin)};
    }
};

/// Uniform lattice of surface samples; node (u, v) sits at origin + (u*dx, v*dy).
struct SurfaceGrid {
    Vec2 origin_xy = Vec2::Zero();
    double dx = 0.0;
    double dy = 0.0;
    int nx = 0;
    int ny = 0;
    std::vector<double> height;       // row-major in v, length nx*ny
    std::vector<Vec3> normal;
    std::vector<std::uint8_t> valid;

    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.v) * nx + c.u; }
    bool in_range(Cell c) const { return c.u >= 0 && c.v >= 0 && c.u < nx && c.v < ny; }
    bool is_valid(Cell c) const { return in_range(c) && valid[index(c)] != 0; }
    Vec2 cell_xy(Cell c) const { return origin_xy + Vec2(c.u * dx, c.v * dy); }
    std::size_t valid_count() const;
    std::vector<Cell> valid_cells() const;

    /// Bilinear height at an arbitrary XY, clamped to the lattice and
    /// averaging only valid corners. NaN when no corner is valid.
    double height_at(double x, double y) const;
};

struct SurfacePoint {
    Vec3 point;
    Vec3 normal;
};

/// Voxel-centroid downsampling followed by statistical outlier removal.
PointCloud preprocess_cloud(const PointCloud& raw, double voxel, int outlier_k,
                            double outlier_sigma);

SurfaceMesh mesh_from_cloud(const PointCloud& cloud);

/// Area-weighted vertex normals, flipped to point up (+z).
void compute_vertex_normals(SurfaceMesh& mesh);

/// Keeps triangles whose three vertices fall inside the ROI, reindexing vertices.
SurfaceMesh crop_roi(const SurfaceMesh& mesh, const RoiBox& roi);

/// Clough-Tocher interpolation of the mesh heights onto a uniform lattice.
/// The lattice spans `span` when given, otherwise the mesh XY bounds.
SurfaceGrid interpolate_grid(const SurfaceMesh& mesh, double dx, double dy,
                             const std::optional<RoiBox>& span = std::nullopt);

SurfacePoint cell_to_surface(const SurfaceGrid& grid, Cell cell);

struct RegistrationParams {
    double voxel = 0.002;
    int outlier_k = 8;
    double outlier_sigma = 2.0;
    double dx = 0.002;
    double dy = 0.002;
};

/// Full pipeline: filter, mesh, crop (padded so the lattice covers the ROI), grid.
SurfaceGrid register_scene(const PointCloud& raw, const RoiBox& roi,
                           const RegistrationParams& params);

/// C1 cubic interpolant over a height-field mesh (Clough-Tocher split of
/// each triangle, vertex gradients from local quadratic least squares).
class CloughTocherInterpolant {
public:
    explicit CloughTocherInterpolant(const SurfaceMesh& mesh);

    /// Height at (x, y), or nullopt outside the triangulated region. `hint`
    /// seeds the point-location walk and is updated to the containing triangle.
    std::optional<double> operator()(double x, double y, int* hint = nullptr) const;

    const Vec2& gradient(int vertex) const { return gradients_[vertex]; }

private:
    int locate(const Vec2& p, int start, std::array<double, 3>& bary) const;
    double evaluate(int tri, const std::array<double, 3>& bary) const;
    bool barycentric(int tri, const Vec2& p, std::array<double, 3>& bary) const;

    std::vector<Vec2> xy_;
    std::vector<double> z_;
    std::vector<Triangle> tris_;
    std::vector<std::array<int, 3>> neighbors_;
    std::vector<Vec2> gradients_;
};

}  // namespace subderm
