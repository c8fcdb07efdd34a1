#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstddef>
#include <vector>

namespace subderm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Grid lattice index (u along x, v along y).
struct Cell {
    int u = 0;
    int v = 0;

    auto operator<=>(const Cell&) const = default;
};

/// Axis-aligned box in the X-Y plane.
struct Box2 {
    Vec2 min = Vec2::Zero();
    Vec2 max = Vec2::Zero();

    bool contains(const Vec2& p) const
    {
        return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
    }
    double width() const { return max.x() - min.x(); }
    double height() const { return max.y() - min.y(); }
};

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty, or one unit normal per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_normals() const { return !normals.empty(); }

    /// Throws InvalidArgument when normals are present but mismatched or not unit length.
    void validate() const;
};

}  // namespace subderm
