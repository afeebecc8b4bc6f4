#include "gaf/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gaf {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points))
{
    if (points_.empty()) throw std::invalid_argument("KdTree: no points");
    std::vector<std::uint32_t> ids(points_.size());
    std::iota(ids.begin(), ids.end(), 0u);
    nodes_.reserve(points_.size());
    root_ = build(ids, 0, ids.size(), 0);
}

std::int32_t KdTree::build(std::vector<std::uint32_t>& ids, std::size_t lo, std::size_t hi, int depth)
{
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(ids.begin() + std::ptrdiff_t(lo), ids.begin() + std::ptrdiff_t(mid),
                     ids.begin() + std::ptrdiff_t(hi), [&](std::uint32_t a, std::uint32_t b) {
                         const double pa = points_[a][axis], pb = points_[b][axis];
                         return pa < pb || (pa == pb && a < b);
                     });
    const auto id = std::int32_t(nodes_.size());
    nodes_.push_back({ids[mid], -1, -1, std::uint8_t(axis)});
    const std::int32_t l = build(ids, lo, mid, depth + 1);
    const std::int32_t r = build(ids, mid + 1, hi, depth + 1);
    nodes_[std::size_t(id)].left = l;
    nodes_[std::size_t(id)].right = r;
    return id;
}

void KdTree::search(std::int32_t node, const Vec3& q, Hit& best) const
{
    if (node < 0) return;
    const Node& n = nodes_[std::size_t(node)];
    const Vec3& p = points_[n.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best.squared_distance || (d2 == best.squared_distance && n.point < best.index)) {
        best = {n.point, d2};
    }
    const double diff = q[n.axis] - p[n.axis];
    const std::int32_t near = diff <= 0.0 ? n.left : n.right;
    const std::int32_t far = diff <= 0.0 ? n.right : n.left;
    search(near, q, best);
    // <= keeps equidistant candidates on the far side reachable for the tie-break
    if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const
{
    Hit best{std::numeric_limits<std::uint32_t>::max(), std::numeric_limits<double>::infinity()};
    search(root_, query, best);
    return best;
}

}  // namespace gaf
