#include "cbct/plan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cbct {

Bytes slice_bytes(const VoxelGrid& grid)
{
    return static_cast<Bytes>(grid.slice_voxels()) * sizeof(float);
}

Bytes projection_bytes(const DetectorGrid& detector, Index angles)
{
    return static_cast<Bytes>(detector.pixel_count()) * static_cast<Bytes>(angles) * sizeof(float);
}

Index SplitPlan::max_slab_depth() const
{
    Index depth = 0;
    for (const IndexRange& r : slab_ranges)
        depth = std::max(depth, r.size());
    return depth;
}

Bytes SplitPlan::slab_bytes() const
{
    return static_cast<Bytes>(max_slab_depth()) * static_cast<Bytes>(n_x * n_y) * sizeof(float);
}

Bytes SplitPlan::chunk_bytes() const
{
    return static_cast<Bytes>(chunk_angles) * static_cast<Bytes>(n_u * n_v) * sizeof(float);
}

std::vector<IndexRange> SplitPlan::chunks_for_device(Index device) const
{
    if (op_kind == OpKind::Backward)
        return angle_chunks;
    std::vector<IndexRange> chunks;
    const IndexRange block = device_angles.at(static_cast<std::size_t>(device));
    for (Index a = block.begin; a < block.end; a += chunk_angles)
        chunks.push_back({a, std::min(a + chunk_angles, block.end)});
    return chunks;
}

std::vector<Index> SplitPlan::slabs_for_device(Index device) const
{
    std::vector<Index> slabs;
    for (Index k = 0; k < n_splits; ++k)
        if (op_kind == OpKind::Forward || slab_owner[static_cast<std::size_t>(k)] == device)
            slabs.push_back(k);
    return slabs;
}

bool SplitPlan::matches(const ScanGeometry& geometry, const DevicePool& pool) const
{
    const VoxelGrid& g = geometry.grid();
    const DetectorGrid& d = geometry.detector();
    return g.n_x == n_x && g.n_y == n_y && g.n_z == n_z && d.n_u == n_u && d.n_v == n_v &&
           geometry.angle_count() == n_angles && pool.size() == device_count;
}

namespace {

struct Accounting {
    Bytes slice;
    Bytes chunk;
    Bytes usable;
};

Accounting accounting(const ScanGeometry& geometry, const DevicePool& pool, Index chunk_angles,
                      const PlanOptions& options)
{
    validate(pool);
    if (!(options.usable_fraction > 0.0 && options.usable_fraction <= 1.0))
        throw std::invalid_argument("usable fraction must lie in (0, 1]");
    const double usable = std::floor(options.usable_fraction * static_cast<double>(pool.min_budget()));
    return {slice_bytes(geometry.grid()), projection_bytes(geometry.detector(), chunk_angles),
            static_cast<Bytes>(usable)};
}

Bytes footprint(const Accounting& acc, Index n_z, Index splits, int buffers)
{
    return static_cast<Bytes>(ceil_div(n_z, splits)) * acc.slice + static_cast<Bytes>(buffers) * acc.chunk;
}

/// Smallest split count >= lowest that fits; `buffers_for` maps a count to its buffer count.
template <typename BufferCount>
Index minimal_splits(const Accounting& acc, Index n_z, Index lowest, BufferCount&& buffers_for,
                     const PlanOptions& options)
{
    if (options.forced_splits) {
        const Index s = *options.forced_splits;
        if (s < 1 || s > n_z)
            throw InfeasiblePlan("forced split count " + std::to_string(s) + " outside [1, " +
                                 std::to_string(n_z) + "]");
        if (footprint(acc, n_z, s, buffers_for(s)) > acc.usable)
            throw InfeasiblePlan("forced split count " + std::to_string(s) + " does not fit the device budget");
        return s;
    }
    for (Index s = std::max<Index>(1, lowest); s <= n_z; ++s)
        if (footprint(acc, n_z, s, buffers_for(s)) <= acc.usable)
            return s;
    throw InfeasiblePlan("a single slice plus " + std::to_string(buffers_for(n_z)) + " projection buffers (" +
                         std::to_string(footprint(acc, n_z, n_z, buffers_for(n_z))) +
                         " bytes) exceeds the usable budget of " + std::to_string(acc.usable) + " bytes");
}

void fill_common(SplitPlan& plan, const ScanGeometry& geometry, const DevicePool& pool, Index splits,
                 Index chunk_angles, const Accounting& acc)
{
    const VoxelGrid& g = geometry.grid();
    plan.n_x = g.n_x;
    plan.n_y = g.n_y;
    plan.n_z = g.n_z;
    plan.n_u = geometry.detector().n_u;
    plan.n_v = geometry.detector().n_v;
    plan.n_angles = geometry.angle_count();
    plan.device_count = pool.size();
    plan.chunk_angles = chunk_angles;
    plan.usable_budget = acc.usable;

    const Index depth = ceil_div(g.n_z, splits);
    for (Index z = 0; z < g.n_z; z += depth)
        plan.slab_ranges.push_back({z, std::min(z + depth, g.n_z)});
    plan.n_splits = static_cast<Index>(plan.slab_ranges.size());
    plan.pin_host_image = plan.n_splits > 1 || pool.size() > 2;
    plan.per_device_bytes_peak =
        static_cast<Bytes>(depth) * acc.slice + static_cast<Bytes>(plan.buffer_count) * acc.chunk;
}

}  // namespace

SplitPlan plan_forward(const ScanGeometry& geometry, const DevicePool& pool, const ForwardTileSpec& tiles,
                       const PlanOptions& options)
{
    validate(tiles);
    const Index chunk = std::min(tiles.chunk_angles, geometry.angle_count());
    const Accounting acc = accounting(geometry, pool, chunk, options);
    auto buffers_for = [](Index s) { return s == 1 ? 2 : 3; };
    const Index splits = minimal_splits(acc, geometry.grid().n_z, 1, buffers_for, options);

    SplitPlan plan;
    plan.op_kind = OpKind::Forward;
    plan.buffer_count = buffers_for(splits);
    fill_common(plan, geometry, pool, splits, chunk, acc);

    const Index angles = geometry.angle_count();
    const Index devices = pool.size();
    Index next = 0;
    for (Index d = 0; d < devices; ++d) {
        const Index count = angles / devices + (d < angles % devices ? 1 : 0);
        plan.device_angles.push_back({next, next + count});
        next += count;
    }
    return plan;
}

SplitPlan plan_backward(const ScanGeometry& geometry, const DevicePool& pool, const BackwardTileSpec& tiles,
                        const PlanOptions& options)
{
    validate(tiles);
    const Index chunk = std::min(tiles.chunk_angles, geometry.angle_count());
    const Accounting acc = accounting(geometry, pool, chunk, options);
    const Index n_z = geometry.grid().n_z;
    const Index splits =
        minimal_splits(acc, n_z, std::min(pool.size(), n_z), [](Index) { return 2; }, options);

    SplitPlan plan;
    plan.op_kind = OpKind::Backward;
    plan.buffer_count = 2;
    fill_common(plan, geometry, pool, splits, chunk, acc);

    for (Index k = 0; k < plan.n_splits; ++k)
        plan.slab_owner.push_back(k % pool.size());
    for (Index a = 0; a < geometry.angle_count(); a += chunk)
        plan.angle_chunks.push_back({a, std::min(a + chunk, geometry.angle_count())});
    return plan;
}

std::string describe(const SplitPlan& plan)
{
    std::ostringstream out;
    out << "op=" << (plan.op_kind == OpKind::Forward ? "forward" : "backward") << '\n'
        << "n_splits=" << plan.n_splits << '\n'
        << "devices=" << plan.device_count << '\n'
        << "chunk_angles=" << plan.chunk_angles << '\n'
        << "buffer_count=" << plan.buffer_count << '\n'
        << "pin_host_image=" << (plan.pin_host_image ? "true" : "false") << '\n'
        << "per_device_bytes_peak=" << plan.per_device_bytes_peak << '\n'
        << "usable_budget=" << plan.usable_budget << '\n';
    for (std::size_t k = 0; k < plan.slab_ranges.size(); ++k) {
        out << "slab=" << k << " z=[" << plan.slab_ranges[k].begin << ',' << plan.slab_ranges[k].end << ')';
        if (plan.op_kind == OpKind::Backward)
            out << " device=" << plan.slab_owner[k];
        out << '\n';
    }
    if (plan.op_kind == OpKind::Forward)
        for (std::size_t d = 0; d < plan.device_angles.size(); ++d)
            out << "device=" << d << " angles=[" << plan.device_angles[d].begin << ','
                << plan.device_angles[d].end << ")\n";
    else
        out << "angle_chunks=" << plan.angle_chunks.size() << '\n';
    return out.str();
}

}  // namespace cbct
