#include "subderm/geometry/delaunay.hpp"

#include "subderm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace subderm {

namespace {

struct Tri {
    std::array<int, 3> v;
    std::array<int, 3> nb;
};

// Positive when p lies strictly inside the circumcircle of CCW (a, b, c).
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p)
{
    const double adx = a.x() - p.x(), ady = a.y() - p.y();
    const double bdx = b.x() - p.x(), bdy = b.y() - p.y();
    const double cdx = c.x() - p.x(), cdy = c.y() - p.y();
    return (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy) +
           (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy) +
           (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
}

// Snake order over a coarse bucket grid so consecutive inserts are close.
std::vector<int> insertion_order(std::span<const Vec2> pts, const Vec2& lo, double extent)
{
    const int n = static_cast<int>(pts.size());
    const int rows = std::max(1, static_cast<int>(std::sqrt(n / 4.0)));
    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::pair<long, double>> key(pts.size());
    for (int i = 0; i < n; ++i) {
        const double fy = (pts[i].y() - lo.y()) / extent;
        const long row = std::clamp(static_cast<long>(fy * rows), 0L, static_cast<long>(rows - 1));
        const double fx = (pts[i].x() - lo.x()) / extent;
        key[i] = {row, row % 2 == 0 ? fx : -fx};
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] < key[b]; });
    return order;
}

}  // namespace

Triangulation delaunay_2d(std::span<const Vec2> points)
{
    const int n = static_cast<int>(points.size());
    if (n < 3)
        fail(ErrorCode::DegenerateCloud, "need at least three points");

    Vec2 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        if (!p.allFinite())
            fail(ErrorCode::DegenerateCloud, "non-finite point");
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double extent = std::max(hi.x() - lo.x(), hi.y() - lo.y());
    if (!(extent > 0.0))
        fail(ErrorCode::DegenerateCloud, "all points coincide");

    {
        int a = 0;
        for (int i = 1; i < n; ++i) {
            if (points[i].x() < points[a].x() ||
                (points[i].x() == points[a].x() && points[i].y() < points[a].y()))
                a = i;
        }
        int b = a;
        double far = -1.0;
        for (int i = 0; i < n; ++i) {
            const double d = (points[i] - points[a]).squaredNorm();
            if (d > far) {
                far = d;
                b = i;
            }
        }
        const double tol = 1e-12 * extent * extent;
        bool spread = false;
        for (int i = 0; i < n && !spread; ++i)
            spread = std::abs(orient2d(points[a], points[b], points[i])) > tol;
        if (!spread)
            fail(ErrorCode::DegenerateCloud, "points are collinear");
    }

    // Seed triangle from three well-spread points; every other point is inserted.
    int s0 = 0, s1 = 0, s2 = 0;
    {
        for (int i = 1; i < n; ++i) {
            if (points[i].x() < points[s0].x() ||
                (points[i].x() == points[s0].x() && points[i].y() < points[s0].y()))
                s0 = i;
        }
        double far = -1.0;
        for (int i = 0; i < n; ++i) {
            const double d = (points[i] - points[s0]).squaredNorm();
            if (d > far) {
                far = d;
                s1 = i;
            }
        }
        double area = 0.0;
        for (int i = 0; i < n; ++i) {
            const double o = std::abs(orient2d(points[s0], points[s1], points[i]));
            if (o > area) {
                area = o;
                s2 = i;
            }
        }
        if (orient2d(points[s0], points[s1], points[s2]) < 0.0)
            std::swap(s1, s2);
    }

    // Vertex n is the point at infinity; triangles holding it are ghosts
    // sitting on the convex hull edges.
    const int inf = n;
    std::vector<Vec2> v(points.begin(), points.end());
    v.emplace_back(Vec2::Constant(std::numeric_limits<double>::quiet_NaN()));

    std::vector<Tri> tris;
    tris.reserve(2 * static_cast<std::size_t>(n) + 8);
    tris.push_back({{s0, s1, s2}, {1, 2, 3}});
    // Ghost k sits on the seed edge opposite vertex k, reversed.
    const std::array<int, 3> seed{s0, s1, s2};
    for (int k = 0; k < 3; ++k) {
        const int a = seed[(k + 1) % 3], b = seed[(k + 2) % 3];
        // (b, a, inf): opposite b is edge (a, inf), opposite a is edge (inf, b).
        tris.push_back({{b, a, inf}, {1 + (k + 2) % 3, 1 + (k + 1) % 3, 0}});
    }

    auto is_ghost = [&](const Tri& t) { return t.v[0] == inf || t.v[1] == inf || t.v[2] == inf; };

    auto conflict = [&](const Tri& t, const Vec2& p) {
        for (int k = 0; k < 3; ++k) {
            if (t.v[k] != inf)
                continue;
            const Vec2& a = v[t.v[(k + 1) % 3]];
            const Vec2& b = v[t.v[(k + 2) % 3]];
            const double o = orient2d(a, b, p);
            if (o != 0.0)
                return o > 0.0;
            return (p - a).dot(p - b) < 0.0;
        }
        return incircle(v[t.v[0]], v[t.v[1]], v[t.v[2]], p) > 0.0;
    };

    std::vector<int> stamp(tris.size(), -1);
    stamp.reserve(tris.capacity());
    std::vector<int> by_start(v.size(), -1), by_end(v.size(), -1);

    struct Edge {
        int a, b, outside;
    };
    std::vector<int> bad;
    std::vector<int> stack;
    std::vector<Edge> boundary;
    const double dup_tol2 = (1e-12 * extent) * (1e-12 * extent);

    auto locate = [&](const Vec2& p, int start) {
        int t = start;
        if (is_ghost(tris[t])) {
            for (int k = 0; k < 3; ++k)
                if (tris[t].v[k] == inf)
                    t = tris[t].nb[k];
        }
        const std::size_t limit = 4 * tris.size() + 16;
        for (std::size_t step = 0; step < limit; ++step) {
            const Tri& tri = tris[t];
            if (is_ghost(tri))
                return t;  // stepped out across a hull edge
            bool moved = false;
            for (int j = 0; j < 3; ++j) {
                const int k = static_cast<int>((j + step) % 3);
                const Vec2& a = v[tri.v[(k + 1) % 3]];
                const Vec2& b = v[tri.v[(k + 2) % 3]];
                if (orient2d(a, b, p) < 0.0) {
                    t = tri.nb[k];
                    moved = true;
                    break;
                }
            }
            if (!moved)
                return t;
        }
        // Walk did not settle (degenerate geometry); scan instead.
        for (int i = 0; i < static_cast<int>(tris.size()); ++i) {
            const Tri& tri = tris[i];
            if (!is_ghost(tri) && orient2d(v[tri.v[0]], v[tri.v[1]], p) >= 0.0 &&
                orient2d(v[tri.v[1]], v[tri.v[2]], p) >= 0.0 &&
                orient2d(v[tri.v[2]], v[tri.v[0]], p) >= 0.0)
                return i;
        }
        for (int i = 0; i < static_cast<int>(tris.size()); ++i) {
            if (is_ghost(tris[i]) && conflict(tris[i], p))
                return i;
        }
        return start;
    };

    int last = 0;
    for (const int pi : insertion_order(points, lo, extent)) {
        if (pi == s0 || pi == s1 || pi == s2)
            continue;
        const Vec2& p = v[pi];
        const int t0 = locate(p, last);

        bool duplicate = false;
        for (const int vi : tris[t0].v)
            duplicate = duplicate || (vi != inf && (v[vi] - p).squaredNorm() <= dup_tol2);
        if (duplicate)
            continue;

        bad.clear();
        stack.clear();
        bad.push_back(t0);
        stack.push_back(t0);
        stamp[t0] = pi;
        while (!stack.empty()) {
            const int t = stack.back();
            stack.pop_back();
            for (const int nb : tris[t].nb) {
                if (stamp[nb] == pi)
                    continue;
                if (conflict(tris[nb], p)) {
                    stamp[nb] = pi;
                    bad.push_back(nb);
                    stack.push_back(nb);
                }
            }
        }

        boundary.clear();
        for (const int t : bad) {
            for (int k = 0; k < 3; ++k) {
                const int nb = tris[t].nb[k];
                if (stamp[nb] != pi)
                    boundary.push_back({tris[t].v[(k + 1) % 3], tris[t].v[(k + 2) % 3], nb});
            }
        }

        std::vector<int> slots(bad.begin(), bad.end());
        while (slots.size() < boundary.size()) {
            slots.push_back(static_cast<int>(tris.size()));
            tris.push_back({});
            stamp.push_back(-1);
        }
        for (std::size_t e = 0; e < boundary.size(); ++e) {
            by_start[boundary[e].a] = slots[e];
            by_end[boundary[e].b] = slots[e];
        }
        for (std::size_t e = 0; e < boundary.size(); ++e) {
            const Edge& edge = boundary[e];
            const int t = slots[e];
            tris[t].v = {edge.a, edge.b, pi};
            // Opposite a: edge (b, p), shared with the triangle starting at b.
            // Opposite b: edge (p, a), shared with the triangle ending at a.
            tris[t].nb = {by_start[edge.b], by_end[edge.a], edge.outside};
            stamp[t] = -1;
            Tri& o = tris[edge.outside];
            for (int k = 0; k < 3; ++k) {
                if (o.v[k] != edge.a && o.v[k] != edge.b)
                    o.nb[k] = t;
            }
        }
        last = slots.front();
    }

    Triangulation out;
    std::vector<int> remap(tris.size(), -1);
    for (std::size_t i = 0; i < tris.size(); ++i) {
        const auto& tv = tris[i].v;
        if (tv[0] < n && tv[1] < n && tv[2] < n) {
            remap[i] = static_cast<int>(out.triangles.size());
            out.triangles.push_back(tv);
        }
    }
    out.neighbors.reserve(out.triangles.size());
    for (std::size_t i = 0; i < tris.size(); ++i) {
        if (remap[i] < 0)
            continue;
        std::array<int, 3> nb{};
        for (int k = 0; k < 3; ++k)
            nb[k] = tris[i].nb[k] >= 0 ? remap[tris[i].nb[k]] : -1;
        out.neighbors.push_back(nb);
    }
    if (out.triangles.empty())
        fail(ErrorCode::DegenerateCloud, "triangulation produced no interior triangles");
    return out;
}

std::vector<std::array<int, 3>> triangle_neighbors(std::span<const Triangle> triangles)
{
    std::vector<std::array<int, 3>> nb(triangles.size(), {-1, -1, -1});
    std::unordered_map<std::uint64_t, std::pair<int, int>> open;
    open.reserve(triangles.size() * 2);
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
        for (int k = 0; k < 3; ++k) {
            const auto a = static_cast<std::uint32_t>(triangles[t][(k + 1) % 3]);
            const auto b = static_cast<std::uint32_t>(triangles[t][(k + 2) % 3]);
            const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
            auto it = open.find(key);
            if (it == open.end()) {
                open.emplace(key, std::make_pair(t, k));
            } else if (it->second.first >= 0) {
                const auto [ot, ok] = it->second;
                nb[t][k] = ot;
                nb[ot][ok] = t;
                it->second.first = -1;  // closed; further sharers stay unlinked
            }
        }
    }
    return nb;
}

}  // namespace subderm
