#pragma once

#include "subderm/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace subderm {

using Triangle = std::array<int, 3>;

/// Counter-clockwise triangles plus, for each, the neighbour across the edge
/// opposite vertex k (-1 on the hull).
struct Triangulation {
    std::vector<Triangle> triangles;
    std::vector<std::array<int, 3>> neighbors;
};

/// Bowyer-Watson Delaunay triangulation of XY points. Exact duplicates are
/// skipped (they appear in no triangle). Throws DegenerateCloud when fewer
/// than three non-collinear points exist.
Triangulation delaunay_2d(std::span<const Vec2> points);

/// Rebuilds adjacency (opposite-vertex convention) for an arbitrary triangle soup.
std::vector<std::array<int, 3>> triangle_neighbors(std::span<const Triangle> triangles);

/// Twice the signed area of (a, b, c); positive when counter-clockwise.
inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c)
{
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

}  // namespace subderm
