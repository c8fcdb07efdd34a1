#include "subderm/geometry/kdtree.hpp"

#include "subderm/errors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace subderm {

namespace {

constexpr std::size_t kLeafSize = 8;

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points), order_(points.size())
{
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        root_ = build(0, points_.size(), 0);
    }
}

int KdTree::build(std::size_t begin, std::size_t end, int depth)
{
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    if (end - begin <= kLeafSize) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }

    // Split on the widest extent rather than cycling axes.
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                         return points_[a][axis] < points_[b][axis];
                     });
    const double split = points_[order_[mid]][axis];
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

std::pair<std::size_t, double> KdTree::nearest(const Vec3& q) const
{
    if (root_ < 0)
        fail(ErrorCode::EmptyCloud, "nearest-neighbour query on an empty tree");

    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();

    auto visit = [&](auto&& self, int id) -> void {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const double d2 = squared_distance(points_[order_[i]], q);
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = order_[i];
                }
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const int near = diff < 0.0 ? n.left : n.right;
        const int far = diff < 0.0 ? n.right : n.left;
        self(self, near);
        if (diff * diff <= best_d2)
            self(self, far);
    };
    visit(visit, root_);
    return {best, best_d2};
}

bool KdTree::any_within(const Vec3& q, double radius_sq) const
{
    if (root_ < 0)
        return false;

    auto visit = [&](auto&& self, int id) -> bool {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                if (squared_distance(points_[order_[i]], q) <= radius_sq)
                    return true;
            }
            return false;
        }
        const double diff = q[n.axis] - n.split;
        const int near = diff < 0.0 ? n.left : n.right;
        const int far = diff < 0.0 ? n.right : n.left;
        if (self(self, near))
            return true;
        return diff * diff <= radius_sq && self(self, far);
    };
    return visit(visit, root_);
}

std::vector<std::pair<std::size_t, double>> KdTree::knn(const Vec3& q, std::size_t k) const
{
    std::vector<std::pair<std::size_t, double>> out;
    if (root_ < 0 || k == 0)
        return out;

    auto worse = [](const std::pair<std::size_t, double>& a,
                    const std::pair<std::size_t, double>& b) {
        return a.second < b.second || (a.second == b.second && a.first < b.first);
    };
    std::priority_queue<std::pair<std::size_t, double>,
                        std::vector<std::pair<std::size_t, double>>, decltype(worse)>
        heap(worse);

    auto bound = [&] {
        return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().second;
    };

    auto visit = [&](auto&& self, int id) -> void {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const double d2 = squared_distance(points_[order_[i]], q);
                if (heap.size() < k) {
                    heap.emplace(order_[i], d2);
                } else if (d2 < heap.top().second) {
                    heap.pop();
                    heap.emplace(order_[i], d2);
                }
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const int near = diff < 0.0 ? n.left : n.right;
        const int far = diff < 0.0 ? n.right : n.left;
        self(self, near);
        if (diff * diff <= bound())
            self(self, far);
    };
    visit(visit, root_);

    out.resize(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = heap.top();
        heap.pop();
    }
    return out;
}

}  // namespace subderm
