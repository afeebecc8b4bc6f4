#pragma once

#include "gaf/geometry.hpp"

#include <cstdint>
#include <vector>

namespace gaf {

/// Static 3-d tree for exact nearest-neighbor queries. Ties between
/// equidistant points resolve to the lowest input index.
class KdTree {
public:
    struct Hit {
        std::uint32_t index = 0;
        double squared_distance = 0.0;
    };

    explicit KdTree(std::vector<Vec3> points);

    Hit nearest(const Vec3& query) const;
    std::size_t size() const { return points_.size(); }
    const Vec3& point(std::size_t i) const { return points_[i]; }

private:
    struct Node {
        std::uint32_t point = 0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint8_t axis = 0;
    };

    std::int32_t build(std::vector<std::uint32_t>& ids, std::size_t lo, std::size_t hi, int depth);
    void search(std::int32_t node, const Vec3& q, Hit& best) const;

    std::vector<Vec3> points_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

}  // namespace gaf
