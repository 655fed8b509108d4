#include "cbct/siddon.hpp"

namespace cbct {

std::vector<SiddonSegment> siddon_trace(const Ray& ray, const VoxelGrid& grid)
{
    std::vector<SiddonSegment> segments;
    siddon_walk(ray, grid, {0, grid.n_z}, [&](Index i, Index j, Index k, double length) {
        segments.push_back({Index3(i, j, k), length});
    });
    return segments;
}

}  // namespace cbct
