#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbct/device.hpp"
#include "cbct/geometry.hpp"
#include "cbct/projectors.hpp"

namespace cbct {

enum class OpKind { Forward, Backward };

struct PlanOptions {
    /// Fraction of each device budget the planner may fill (driver/runtime reserve).
    double usable_fraction = 0.95;
    /// Overrides the minimal split count (must still fit the budget).
    std::optional<Index> forced_splits;
};

class InfeasiblePlan : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How one operator pass is cut into axial image slabs and angle chunks.
struct SplitPlan {
    OpKind op_kind = OpKind::Forward;
    Index n_splits = 1;
    std::vector<IndexRange> slab_ranges;
    /// Backward: owner device of each slab (round-robin). Forward: every device takes every slab.
    std::vector<Index> slab_owner;
    /// Forward: contiguous angle block per device. Backward: unused.
    std::vector<IndexRange> device_angles;
    /// Backward: the chunk sequence every device streams. Forward: unused.
    std::vector<IndexRange> angle_chunks;
    Index chunk_angles = 1;
    int buffer_count = 2;
    bool pin_host_image = false;
    Bytes per_device_bytes_peak = 0;
    Bytes usable_budget = 0;

    // Problem the plan was made for.
    Index n_x = 0, n_y = 0, n_z = 0;
    Index n_u = 0, n_v = 0, n_angles = 0;
    Index device_count = 0;

    Index max_slab_depth() const;
    Bytes slab_bytes() const;
    Bytes chunk_bytes() const;
    std::vector<IndexRange> chunks_for_device(Index device) const;
    std::vector<Index> slabs_for_device(Index device) const;
    bool matches(const ScanGeometry& geometry, const DevicePool& pool) const;
};

Bytes slice_bytes(const VoxelGrid& grid);
Bytes projection_bytes(const DetectorGrid& detector, Index angles);

/// Smallest split count whose slab plus launch buffers fit the usable budget of every device.
SplitPlan plan_forward(const ScanGeometry& geometry, const DevicePool& pool, const ForwardTileSpec& tiles = {},
                       const PlanOptions& options = {});
/// As plan_forward with two buffers, at least one slab per device and round-robin slab queues.
SplitPlan plan_backward(const ScanGeometry& geometry, const DevicePool& pool, const BackwardTileSpec& tiles = {},
                        const PlanOptions& options = {});

/// Human-readable `key=value` listing, one item per line.
std::string describe(const SplitPlan& plan);

}  // namespace cbct
