#include "subderm/scene_registration.hpp"

#include "subderm/errors.hpp"
#include "subderm/geometry/kdtree.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

namespace subderm {

Box2 SurfaceMesh::xy_bounds() const
{
    Box2 b{Vec2::Constant(std::numeric_limits<double>::infinity()),
           Vec2::Constant(-std::numeric_limits<double>::infinity())};
    for (const auto& t : triangles) {
        for (const int i : t) {
            b.min = b.min.cwiseMin(vertices[i].head<2>());
            b.max = b.max.cwiseMax(vertices[i].head<2>());
        }
    }
    return b;
}

void RoiBox::validate() const
{
    if (!min_xy.allFinite() || !max_xy.allFinite() || !(min_xy.x() < max_xy.x()) ||
        !(min_xy.y() < max_xy.y()))
        fail(ErrorCode::InvalidArgument, "ROI needs min < max componentwise");
}

std::size_t SurfaceGrid::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::vector<Cell> SurfaceGrid::valid_cells() const
{
    std::vector<Cell> out;
    for (int v = 0; v < ny; ++v) {
        for (int u = 0; u < nx; ++u) {
            if (valid[index({u, v})])
                out.push_back({u, v});
        }
    }
    return out;
}

double SurfaceGrid::height_at(double x, double y) const
{
    const double fx = std::clamp((x - origin_xy.x()) / dx, 0.0, static_cast<double>(nx - 1));
    const double fy = std::clamp((y - origin_xy.y()) / dy, 0.0, static_cast<double>(ny - 1));
    const int u0 = std::min(static_cast<int>(std::floor(fx)), nx - 1);
    const int v0 = std::min(static_cast<int>(std::floor(fy)), ny - 1);
    const int u1 = std::min(u0 + 1, nx - 1);
    const int v1 = std::min(v0 + 1, ny - 1);
    const double tx = fx - u0;
    const double ty = fy - v0;

    const std::array<std::tuple<int, int, double>, 4> corners{{
        {u0, v0, (1 - tx) * (1 - ty)},
        {u1, v0, tx * (1 - ty)},
        {u0, v1, (1 - tx) * ty},
        {u1, v1, tx * ty},
    }};
    double acc = 0.0, wsum = 0.0;
    for (const auto& [u, v, w] : corners) {
        if (valid[index({u, v})]) {
            acc += w * height[index({u, v})];
            wsum += w;
        }
    }
    if (wsum > 0.0)
        return acc / wsum;
    for (const auto& [u, v, w] : corners) {
        if (valid[index({u, v})])
            return height[index({u, v})];
    }
    return std::numeric_limits<double>::quiet_NaN();
}

PointCloud preprocess_cloud(const PointCloud& raw, double voxel, int outlier_k,
                            double outlier_sigma)
{
    if (raw.empty())
        fail(ErrorCode::EmptyCloud, "raw cloud is empty");
    if (!(voxel > 0.0))
        fail(ErrorCode::InvalidArgument, "voxel size must be positive");

    using Key = std::array<long long, 3>;
    std::vector<std::pair<Key, std::size_t>> keyed;
    keyed.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const Vec3& p = raw.points[i];
        if (!p.allFinite())
            continue;
        keyed.push_back({Key{static_cast<long long>(std::floor(p.x() / voxel)),
                             static_cast<long long>(std::floor(p.y() / voxel)),
                             static_cast<long long>(std::floor(p.z() / voxel))},
                         i});
    }
    std::sort(keyed.begin(), keyed.end());

    PointCloud down;
    for (std::size_t i = 0; i < keyed.size();) {
        std::size_t j = i;
        Vec3 sum = Vec3::Zero();
        while (j < keyed.size() && keyed[j].first == keyed[i].first)
            sum += raw.points[keyed[j++].second];
        down.points.push_back(sum / static_cast<double>(j - i));
        i = j;
    }

    if (outlier_k > 0 && down.size() > static_cast<std::size_t>(outlier_k)) {
        const KdTree tree(down.points);
        std::vector<double> mean_d(down.size());
        for (std::size_t i = 0; i < down.size(); ++i) {
            const auto nn = tree.knn(down.points[i], static_cast<std::size_t>(outlier_k) + 1);
            double s = 0.0;
            for (std::size_t k = 1; k < nn.size(); ++k)
                s += std::sqrt(nn[k].second);
            mean_d[i] = s / static_cast<double>(nn.size() - 1);
        }
        const double mu =
            std::accumulate(mean_d.begin(), mean_d.end(), 0.0) / static_cast<double>(mean_d.size());
        double var = 0.0;
        for (const double d : mean_d)
            var += (d - mu) * (d - mu);
        const double sd = std::sqrt(var / static_cast<double>(mean_d.size()));
        const double cut = mu + outlier_sigma * sd;

        PointCloud kept;
        for (std::size_t i = 0; i < down.size(); ++i) {
            if (mean_d[i] <= cut)
                kept.points.push_back(down.points[i]);
        }
        down = std::move(kept);
    }

    if (down.empty())
        fail(ErrorCode::EmptyAfterFilter, "no points survived filtering");
    return down;
}

void compute_vertex_normals(SurfaceMesh& mesh)
{
    std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
    for (const auto& t : mesh.triangles) {
        const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                           .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
        for (const int i : t)
            acc[i] += n;  // |n| = 2 * area
    }
    mesh.vertex_normals.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        Vec3 n = acc[i];
        if (n.z() < 0.0)
            n = -n;
        const double len = n.norm();
        mesh.vertex_normals[i] = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
    }
}

SurfaceMesh mesh_from_cloud(const PointCloud& cloud)
{
    std::vector<Vec2> xy;
    xy.reserve(cloud.size());
    for (const auto& p : cloud.points)
        xy.emplace_back(p.x(), p.y());
    const Triangulation tri = delaunay_2d(xy);

    Vec2 lo = xy.front(), hi = xy.front();
    for (const auto& p : xy) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = (hi - lo).maxCoeff();
    const double min_area2 = 1e-14 * extent * extent;

    SurfaceMesh mesh;
    std::vector<int> remap(cloud.size(), -1);
    for (const auto& t : tri.triangles) {
        if (std::abs(orient2d(xy[t[0]], xy[t[1]], xy[t[2]])) <= min_area2)
            continue;
        Triangle out{};
        for (int k = 0; k < 3; ++k) {
            if (remap[t[k]] < 0) {
                remap[t[k]] = static_cast<int>(mesh.vertices.size());
                mesh.vertices.push_back(cloud.points[t[k]]);
            }
            out[k] = remap[t[k]];
        }
        mesh.triangles.push_back(out);
    }
    if (mesh.triangles.empty())
        fail(ErrorCode::DegenerateCloud, "no non-degenerate triangles");
    compute_vertex_normals(mesh);
    return mesh;
}

SurfaceMesh crop_roi(const SurfaceMesh& mesh, const RoiBox& roi)
{
    roi.validate();
    SurfaceMesh out;
    std::vector<int> remap(mesh.vertices.size(), -1);
    for (const auto& t : mesh.triangles) {
        const bool inside = std::all_of(t.begin(), t.end(), [&](int i) {
            return roi.contains(mesh.vertices[i].head<2>());
        });
        if (!inside)
            continue;
        Triangle nt{};
        for (int k = 0; k < 3; ++k) {
            if (remap[t[k]] < 0) {
                remap[t[k]] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(mesh.vertices[t[k]]);
                if (!mesh.vertex_normals.empty())
                    out.vertex_normals.push_back(mesh.vertex_normals[t[k]]);
            }
            nt[k] = remap[t[k]];
        }
        out.triangles.push_back(nt);
    }
    if (out.triangles.empty())
        fail(ErrorCode::EmptyRoi, "no triangle lies fully inside the ROI");
    if (out.vertex_normals.size() != out.vertices.size())
        compute_vertex_normals(out);
    return out;
}

// ---------------------------------------------------------------------------
// Clough-Tocher

CloughTocherInterpolant::CloughTocherInterpolant(const SurfaceMesh& mesh)
{
    if (mesh.triangles.empty())
        fail(ErrorCode::InvalidArgument, "mesh has no triangles");

    xy_.reserve(mesh.vertices.size());
    z_.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) {
        xy_.emplace_back(v.x(), v.y());
        z_.push_back(v.z());
    }
    tris_ = mesh.triangles;
    for (auto& t : tris_) {
        if (orient2d(xy_[t[0]], xy_[t[1]], xy_[t[2]]) < 0.0)
            std::swap(t[1], t[2]);
    }
    neighbors_ = triangle_neighbors(tris_);

    std::vector<std::set<int>> ring(xy_.size());
    for (const auto& t : tris_) {
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                if (a != b)
                    ring[t[a]].insert(t[b]);
            }
        }
    }

    // Vertex gradients: least-squares quadratic through the two-ring, with the
    // vertex value pinned. Falls back to a plane when the ring is too small.
    gradients_.assign(xy_.size(), Vec2::Zero());
    for (std::size_t i = 0; i < xy_.size(); ++i) {
        std::set<int> nbhd;
        for (const int j : ring[i]) {
            nbhd.insert(j);
            nbhd.insert(ring[j].begin(), ring[j].end());
        }
        nbhd.erase(static_cast<int>(i));
        if (nbhd.size() < 2)
            continue;

        double scale = 0.0;
        for (const int j : nbhd)
            scale += (xy_[j] - xy_[i]).norm();
        scale /= static_cast<double>(nbhd.size());
        if (!(scale > 0.0))
            continue;

        const bool quadratic = nbhd.size() >= 6;
        const int cols = quadratic ? 5 : 2;
        Eigen::MatrixXd a(static_cast<Eigen::Index>(nbhd.size()), cols);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(nbhd.size()));
        Eigen::Index row = 0;
        for (const int j : nbhd) {
            const Vec2 d = (xy_[j] - xy_[i]) / scale;
            const double w = 1.0 / std::max(d.squaredNorm(), 1e-12);
            const double sw = std::sqrt(w);
            a(row, 0) = sw * d.x();
            a(row, 1) = sw * d.y();
            if (quadratic) {
                a(row, 2) = sw * 0.5 * d.x() * d.x();
                a(row, 3) = sw * d.x() * d.y();
                a(row, 4) = sw * 0.5 * d.y() * d.y();
            }
            rhs(row) = sw * (z_[j] - z_[i]);
            ++row;
        }
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
        Eigen::VectorXd sol;
        if (qr.rank() == cols) {
            sol = qr.solve(rhs);
        } else {
            const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> lin(a.leftCols(2));
            if (lin.rank() < 2)
                continue;
            sol = lin.solve(rhs);
        }
        gradients_[i] = Vec2(sol(0), sol(1)) / scale;
    }
}

bool CloughTocherInterpolant::barycentric(int tri, const Vec2& p, std::array<double, 3>& bary) const
{
    const Vec2& a = xy_[tris_[tri][0]];
    const Vec2& b = xy_[tris_[tri][1]];
    const Vec2& c = xy_[tris_[tri][2]];
    const double area = orient2d(a, b, c);
    if (area == 0.0)
        return false;
    bary[0] = orient2d(p, b, c) / area;
    bary[1] = orient2d(a, p, c) / area;
    bary[2] = 1.0 - bary[0] - bary[1];
    return true;
}

int CloughTocherInterpolant::locate(const Vec2& p, int start, std::array<double, 3>& bary) const
{
    constexpr double eps = 1e-12;
    const int ntri = static_cast<int>(tris_.size());
    int t = (start >= 0 && start < ntri) ? start : 0;
    for (int step = 0; step < ntri + 4; ++step) {
        if (!barycentric(t, p, bary))
            break;
        int worst = 0;
        for (int k = 1; k < 3; ++k) {
            if (bary[k] < bary[worst])
                worst = k;
        }
        if (bary[worst] >= -eps)
            return t;
        const int next = neighbors_[t][worst];
        if (next < 0)
            break;
        t = next;
    }
    for (int i = 0; i < ntri; ++i) {
        if (barycentric(i, p, bary) && bary[0] >= -eps && bary[1] >= -eps && bary[2] >= -eps)
            return i;
    }
    return -1;
}

double CloughTocherInterpolant::evaluate(int tri, const std::array<double, 3>& b) const
{
    const auto& t = tris_[tri];
    const Vec2& p1 = xy_[t[0]];
    const Vec2& p2 = xy_[t[1]];
    const Vec2& p3 = xy_[t[2]];
    const Vec2 e12 = p2 - p1;
    const Vec2 e23 = p3 - p2;
    const Vec2 e31 = p1 - p3;
    const double f1 = z_[t[0]], f2 = z_[t[1]], f3 = z_[t[2]];
    const Vec2& g1 = gradients_[t[0]];
    const Vec2& g2 = gradients_[t[1]];
    const Vec2& g3 = gradients_[t[2]];

    const double df12 = g1.dot(e12);
    const double df21 = -g2.dot(e12);
    const double df23 = g2.dot(e23);
    const double df32 = -g3.dot(e23);
    const double df31 = g3.dot(e31);
    const double df13 = -g1.dot(e31);

    const double c3000 = f1;
    const double c2100 = (df12 + 3 * c3000) / 3;
    const double c2010 = (df13 + 3 * c3000) / 3;
    const double c0300 = f2;
    const double c1200 = (df21 + 3 * c0300) / 3;
    const double c0210 = (df23 + 3 * c0300) / 3;
    const double c0030 = f3;
    const double c1020 = (df31 + 3 * c0030) / 3;
    const double c0120 = (df32 + 3 * c0030) / 3;

    const double c2001 = (c2100 + c2010 + c3000) / 3;
    const double c0201 = (c1200 + c0300 + c0210) / 3;
    const double c0021 = (c1020 + c0120 + c0030) / 3;

    // Cross-boundary derivative kept linear along each edge; the direction
    // comes from the neighbouring triangle's centroid (or the local one on the hull).
    std::array<double, 3> g{};
    for (int k = 0; k < 3; ++k) {
        const int other = neighbors_[tri][k];
        if (other < 0) {
            g[k] = -0.5;
            continue;
        }
        const auto& o = tris_[other];
        const Vec2 centroid = (xy_[o[0]] + xy_[o[1]] + xy_[o[2]]) / 3.0;
        std::array<double, 3> c{};
        barycentric(tri, centroid, c);
        if (k == 0)
            g[k] = (2 * c[2] + c[1] - 1) / (2 - 3 * c[2] - 3 * c[1]);
        else if (k == 1)
            g[k] = (2 * c[0] + c[2] - 1) / (2 - 3 * c[0] - 3 * c[2]);
        else
            g[k] = (2 * c[1] + c[0] - 1) / (2 - 3 * c[1] - 3 * c[0]);
    }

    const double c0111 = (g[0] * (-c0300 + 3 * c0210 - 3 * c0120 + c0030) +
                          (-c0300 + 2 * c0210 - c0120 + c0021 + c0201)) / 2;
    const double c1011 = (g[1] * (-c0030 + 3 * c1020 - 3 * c2010 + c3000) +
                          (-c0030 + 2 * c1020 - c2010 + c2001 + c0021)) / 2;
    const double c1101 = (g[2] * (-c3000 + 3 * c2100 - 3 * c1200 + c0300) +
                          (-c3000 + 2 * c2100 - c1200 + c2001 + c0201)) / 2;

    const double c1002 = (c1101 + c1011 + c2001) / 3;
    const double c0102 = (c1101 + c0111 + c0201) / 3;
    const double c0012 = (c1011 + c0111 + c0021) / 3;
    const double c0003 = (c1002 + c0102 + c0012) / 3;

    // Sub-triangle coordinates: the smallest barycentric weight moves to the centroid.
    const double mn = std::min({b[0], b[1], b[2]});
    const double b1 = b[0] - mn;
    const double b2 = b[1] - mn;
    const double b3 = b[2] - mn;
    const double b4 = 3 * mn;

    return b1 * b1 * b1 * c3000 + 3 * b1 * b1 * b2 * c2100 + 3 * b1 * b1 * b3 * c2010 +
           3 * b1 * b1 * b4 * c2001 + 3 * b1 * b2 * b2 * c1200 + 6 * b1 * b2 * b4 * c1101 +
           3 * b1 * b3 * b3 * c1020 + 6 * b1 * b3 * b4 * c1011 + 3 * b1 * b4 * b4 * c1002 +
           b2 * b2 * b2 * c0300 + 3 * b2 * b2 * b3 * c0210 + 3 * b2 * b2 * b4 * c0201 +
           3 * b2 * b3 * b3 * c0120 + 6 * b2 * b3 * b4 * c0111 + 3 * b2 * b4 * b4 * c0102 +
           b3 * b3 * b3 * c0030 + 3 * b3 * b3 * b4 * c0021 + 3 * b3 * b4 * b4 * c0012 +
           b4 * b4 * b4 * c0003;
}

std::optional<double> CloughTocherInterpolant::operator()(double x, double y, int* hint) const
{
    std::array<double, 3> bary{};
    const int t = locate(Vec2(x, y), hint ? *hint : 0, bary);
    if (t < 0)
        return std::nullopt;
    if (hint)
        *hint = t;
    for (auto& w : bary)
        w = std::max(w, 0.0);
    const double s = bary[0] + bary[1] + bary[2];
    for (auto& w : bary)
        w /= s;
    return evaluate(t, bary);
}

// ---------------------------------------------------------------------------

SurfaceGrid interpolate_grid(const SurfaceMesh& mesh, double dx, double dy,
                             const std::optional<RoiBox>& span)
{
    if (!(dx > 0.0) || !(dy > 0.0))
        fail(ErrorCode::InvalidArgument, "grid spacing must be positive");
    if (mesh.empty())
        fail(ErrorCode::InvalidArgument, "mesh is empty");

    Box2 bounds;
    if (span) {
        span->validate();
        bounds = {span->min_xy, span->max_xy};
    } else {
        bounds = mesh.xy_bounds();
    }

    SurfaceGrid grid;
    grid.origin_xy = bounds.min;
    grid.dx = dx;
    grid.dy = dy;
    grid.nx = static_cast<int>(std::floor(bounds.width() / dx + 1e-9)) + 1;
    grid.ny = static_cast<int>(std::floor(bounds.height() / dy + 1e-9)) + 1;
    if (grid.nx < 2 || grid.ny < 2)
        fail(ErrorCode::ResolutionTooCoarse, "lattice has fewer than 2x2 nodes");

    const std::size_t n = static_cast<std::size_t>(grid.nx) * grid.ny;
    grid.height.assign(n, std::numeric_limits<double>::quiet_NaN());
    grid.normal.assign(n, Vec3::UnitZ());
    grid.valid.assign(n, 0);

    const CloughTocherInterpolant interp(mesh);
    int hint = 0;
    for (int v = 0; v < grid.ny; ++v) {
        for (int u = 0; u < grid.nx; ++u) {
            const Vec2 xy = grid.cell_xy({u, v});
            if (const auto h = interp(xy.x(), xy.y(), &hint)) {
                grid.height[grid.index({u, v})] = *h;
                grid.valid[grid.index({u, v})] = 1;
            }
        }
    }
    if (grid.valid_count() < 4)
        fail(ErrorCode::ResolutionTooCoarse, "fewer than 2x2 valid cells");

    // Central differences of the interpolated field; the padded crop usually
    // covers one step past the lattice, so border cells are centred too.
    auto slope = [&](Cell c, int du, int dv, double step) {
        const Vec2 xy = grid.cell_xy(c);
        const Vec2 off(du * step, dv * step);
        const auto h_lo = interp(xy.x() - off.x(), xy.y() - off.y(), &hint);
        const auto h_hi = interp(xy.x() + off.x(), xy.y() + off.y(), &hint);
        const double mid = grid.height[grid.index(c)];
        if (h_lo && h_hi)
            return (*h_hi - *h_lo) / (2 * step);
        if (h_hi)
            return (*h_hi - mid) / step;
        if (h_lo)
            return (mid - *h_lo) / step;
        return 0.0;
    };
    for (int v = 0; v < grid.ny; ++v) {
        for (int u = 0; u < grid.nx; ++u) {
            const Cell c{u, v};
            if (!grid.valid[grid.index(c)])
                continue;
            const double gx = slope(c, 1, 0, dx);
            const double gy = slope(c, 0, 1, dy);
            grid.normal[grid.index(c)] = Vec3(-gx, -gy, 1.0).normalized();
        }
    }
    return grid;
}

SurfacePoint cell_to_surface(const SurfaceGrid& grid, Cell cell)
{
    if (!grid.is_valid(cell))
        fail(ErrorCode::InvalidCell, "cell (" + std::to_string(cell.u) + ", " +
                                         std::to_string(cell.v) + ") is not a valid grid cell");
    const Vec2 xy = grid.cell_xy(cell);
    return {Vec3(xy.x(), xy.y(), grid.height[grid.index(cell)]), grid.normal[grid.index(cell)]};
}

SurfaceGrid register_scene(const PointCloud& raw, const RoiBox& roi,
                           const RegistrationParams& params)
{
    const PointCloud filtered =
        preprocess_cloud(raw, params.voxel, params.outlier_k, params.outlier_sigma);
    const SurfaceMesh mesh = mesh_from_cloud(filtered);
    const SurfaceMesh cropped = crop_roi(mesh, roi.padded(2.0 * params.voxel));
    return interpolate_grid(cropped, params.dx, params.dy, roi);
}

}  // namespace subderm
