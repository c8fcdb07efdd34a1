#pragma once

#include "subderm/types.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace subderm {

/// Static 3-D kd-tree over a borrowed point array. The points must outlive the tree.
class KdTree {
public:
    explicit KdTree(std::span<const Vec3> points);

    std::size_t size() const { return points_.size(); }

    /// Index and squared distance of the closest point. Tree must be nonempty.
    std::pair<std::size_t, double> nearest(const Vec3& q) const;

    /// True when some point p satisfies |p - q|^2 <= radius_sq.
    bool any_within(const Vec3& q, double radius_sq) const;

    /// Up to k nearest neighbours as (index, squared distance), closest first.
    std::vector<std::pair<std::size_t, double>> knn(const Vec3& q, std::size_t k) const;

private:
    struct Node {
        int axis = -1;      // -1 marks a leaf
        double split = 0.0;
        int left = -1;
        int right = -1;
        std::size_t begin = 0;
        std::size_t end = 0;
    };

    int build(std::size_t begin, std::size_t end, int depth);

    std::span<const Vec3> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

inline double squared_distance(const Vec3& a, const Vec3& b)
{
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace subderm
