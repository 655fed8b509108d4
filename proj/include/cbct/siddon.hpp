#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cbct/geometry.hpp"

namespace cbct {

struct SiddonSegment {
    Index3 voxel;
    double length;
};

/// Visits every voxel crossed by the ray inside the axial slab, in traversal order,
/// as visit(i, j, k, length). Crossing parameters are evaluated per plane, and each
/// segment is attributed to the voxel containing its midpoint, so faces belong to
/// voxels by half-open [low, high) intervals and zero-length crossings are skipped.
template <typename Visit>
void siddon_walk(const Ray& ray, const VoxelGrid& grid, IndexRange slab, Visit&& visit)
{
    if (ray.misses() || slab.empty())
        return;
    const Vec3 lo = grid.box_min();
    const Vec3& s = grid.voxel_size;
    const Vec3& o = ray.origin;
    const Vec3& d = ray.direction;

    double t = ray.t_entry;
    double t_end = ray.t_exit;
    const double z_lo = lo.z() + slab.begin * s.z();
    const double z_hi = lo.z() + slab.end * s.z();
    if (d.z() != 0.0) {
        double ta = (z_lo - o.z()) / d.z();
        double tb = (z_hi - o.z()) / d.z();
        if (ta > tb)
            std::swap(ta, tb);
        t = std::max(t, ta);
        t_end = std::min(t_end, tb);
    } else if (o.z() < z_lo || o.z() >= z_hi) {
        return;
    }
    if (!(t < t_end))
        return;

    constexpr double inf = std::numeric_limits<double>::infinity();
    const Index counts[3] = {grid.n_x, grid.n_y, grid.n_z};
    const Index plane_lo[3] = {0, 0, slab.begin};
    const Index plane_hi[3] = {grid.n_x, grid.n_y, slab.end};
    Index plane[3];
    Index step[3];
    double next[3];

    auto crossing = [&](int a, Index p) {
        if (p < plane_lo[a] || p > plane_hi[a])
            return inf;
        return (lo[a] + p * s[a] - o[a]) / d[a];
    };

    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            next[a] = inf;
            step[a] = 0;
            plane[a] = 0;
            continue;
        }
        const double f = (o[a] + t * d[a] - lo[a]) / s[a];
        step[a] = d[a] > 0.0 ? 1 : -1;
        plane[a] = d[a] > 0.0 ? static_cast<Index>(std::floor(f)) + 1 : static_cast<Index>(std::ceil(f)) - 1;
        next[a] = crossing(a, plane[a]);
        while (next[a] <= t) {
            plane[a] += step[a];
            next[a] = crossing(a, plane[a]);
        }
    }

    while (t < t_end) {
        const double t_next = std::min({next[0], next[1], next[2], t_end});
        if (t_next > t) {
            const double mid = 0.5 * (t + t_next);
            Index idx[3];
            for (int a = 0; a < 3; ++a) {
                const double f = (o[a] + mid * d[a] - lo[a]) / s[a];
                Index i = static_cast<Index>(std::floor(f));
                const Index top = a == 2 ? slab.end - 1 : counts[a] - 1;
                const Index bottom = a == 2 ? slab.begin : 0;
                idx[a] = std::clamp(i, bottom, top);
            }
            visit(idx[0], idx[1], idx[2], t_next - t);
        }
        t = t_next;
        for (int a = 0; a < 3; ++a) {
            while (next[a] <= t) {
                plane[a] += step[a];
                next[a] = crossing(a, plane[a]);
            }
        }
    }
}

/// Voxels crossed by the ray over the whole grid with their intersection lengths (mm).
std::vector<SiddonSegment> siddon_trace(const Ray& ray, const VoxelGrid& grid);

}  // namespace cbct
