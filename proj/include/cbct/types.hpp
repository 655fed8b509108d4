#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace cbct {

using Index = std::int64_t;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Index3 = Eigen::Matrix<Index, 3, 1>;

/// Stored sample data is always 32-bit.
using Buffer = Eigen::ArrayXf;

/// Half-open integer range [begin, end).
struct IndexRange {
    Index begin = 0;
    Index end = 0;

    Index size() const { return end - begin; }
    bool empty() const { return end <= begin; }
    bool contains(Index i) const { return i >= begin && i < end; }
    bool contains(const IndexRange& other) const { return other.begin >= begin && other.end <= end; }

    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

inline Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

}  // namespace cbct
