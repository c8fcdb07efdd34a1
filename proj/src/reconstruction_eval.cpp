#include "subderm/reconstruction_eval.hpp"

#include "subderm/errors.hpp"
#include "subderm/geometry/delaunay.hpp"
#include "subderm/geometry/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace subderm {

namespace {

// Greedy first-come merge on a hash grid with cell size equal to the merge distance.
class Deduper {
public:
    explicit Deduper(double dist) : dist_(dist) {}

    bool insert(const Vec3& p, std::vector<Vec3>& out)
    {
        const auto key = [&](const Vec3& q, int dx, int dy, int dz) {
            return Key{static_cast<long long>(std::floor(q.x() / dist_)) + dx,
                       static_cast<long long>(std::floor(q.y() / dist_)) + dy,
                       static_cast<long long>(std::floor(q.z() / dist_)) + dz};
        };
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dz = -1; dz <= 1; ++dz) {
                    const auto it = cells_.find(key(p, dx, dy, dz));
                    if (it == cells_.end())
                        continue;
                    for (const std::size_t i : it->second) {
                        if (squared_distance(out[i], p) < dist_ * dist_)
                            return false;
                    }
                }
            }
        }
        cells_[key(p, 0, 0, 0)].push_back(out.size());
        out.push_back(p);
        return true;
    }

private:
    struct Key {
        long long x, y, z;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const
        {
            std::size_t h = std::hash<long long>{}(k.x);
            h = h * 1000003u ^ std::hash<long long>{}(k.y);
            return h * 1000003u ^ std::hash<long long>{}(k.z);
        }
    };

    double dist_;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace

ReconCloud extract_contact_points(std::span<const PalpationTrajectory> trajectories,
                                  std::span<const ProbeResult> probes,
                                  const ProbeParams& params, double tip_radius,
                                  PalpationMode mode)
{
    ReconCloud out;
    Deduper dedup(kDedupDistance);

    for (const auto& probe : probes) {
        if (probe.classified_tumor && dedup.insert(probe.contact_point, out.points.points))
            ++out.from_probes;
    }
    if (mode == PalpationMode::CF) {
        for (const auto& traj : trajectories) {
            for (const auto& wp : traj.waypoints) {
                if (wp.f.z() < params.f_thres)
                    continue;
                if (dedup.insert(wp.pose + tip_radius * traj.axis, out.points.points))
                    ++out.from_contour;
            }
        }
    }
    if (out.points.empty())
        fail(ErrorCode::EmptyReconstruction, "no waypoint or probe qualified as a tumor contact");
    return out;
}

FScoreReport fscore(const PointCloud& recon, const PointCloud& gt, double r)
{
    if (recon.empty() || gt.empty())
        fail(ErrorCode::EmptyCloud, "F-score needs two non-empty clouds");
    if (!(r >= 0.0))
        fail(ErrorCode::InvalidArgument, "distance threshold must be >= 0");

    const KdTree gt_tree(gt.points);
    const KdTree recon_tree(recon.points);
    const double r2 = r * r;

    std::size_t hit_p = 0;
    for (const auto& p : recon.points)
        hit_p += gt_tree.any_within(p, r2) ? 1 : 0;
    std::size_t hit_r = 0;
    for (const auto& g : gt.points)
        hit_r += recon_tree.any_within(g, r2) ? 1 : 0;

    FScoreReport rep;
    rep.r = r;
    rep.n_recon = recon.size();
    rep.n_gt = gt.size();
    rep.precision = static_cast<double>(hit_p) / static_cast<double>(recon.size());
    rep.recall = static_cast<double>(hit_r) / static_cast<double>(gt.size());
    const double s = rep.precision + rep.recall;
    rep.fscore = s > 0.0 ? 2.0 * rep.precision * rep.recall / s : 0.0;
    return rep;
}

SurfaceMesh reconstruct_mesh(const ReconCloud& cloud)
{
    const auto& pts = cloud.points.points;
    std::vector<Vec2> xy;
    xy.reserve(pts.size());
    for (const auto& p : pts)
        xy.emplace_back(p.x(), p.y());
    const Triangulation tri = delaunay_2d(xy);

    std::vector<double> edges;
    edges.reserve(tri.triangles.size() * 3);
    for (const auto& t : tri.triangles) {
        for (int k = 0; k < 3; ++k)
            edges.push_back((pts[t[k]] - pts[t[(k + 1) % 3]]).norm());
    }
    auto mid = edges.begin() + static_cast<std::ptrdiff_t>(edges.size() / 2);
    std::nth_element(edges.begin(), mid, edges.end());
    const double limit = 3.0 * *mid;

    SurfaceMesh mesh;
    mesh.vertices = pts;
    for (const auto& t : tri.triangles) {
        bool keep = true;
        for (int k = 0; k < 3 && keep; ++k)
            keep = (pts[t[k]] - pts[t[(k + 1) % 3]]).norm() <= limit;
        if (keep)
            mesh.triangles.push_back(t);
    }
    compute_vertex_normals(mesh);
    return mesh;
}

TrialAggregate aggregate_trials(std::span<const FScoreReport> reports)
{
    if (reports.empty())
        fail(ErrorCode::Empty, "no reports to aggregate");
    TrialAggregate agg;
    agg.max = reports.front().fscore;
    double sum = 0.0;
    for (const auto& r : reports) {
        sum += r.fscore;
        agg.max = std::max(agg.max, r.fscore);
    }
    agg.mean = sum / static_cast<double>(reports.size());
    return agg;
}

}  // namespace subderm
