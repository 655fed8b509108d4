#pragma once

#include "cbct/device.hpp"
#include "cbct/plan.hpp"
#include "cbct/projectors.hpp"
#include "cbct/trace.hpp"
#include "cbct/volume.hpp"

namespace cbct {

/// Runs the forward operator under `plan`: each slab is broadcast to every device,
/// devices compute their angle chunks into two rotating buffers while the previous
/// chunk drains to the host, and later slabs stage the accumulated partial chunk back
/// in for on-device accumulation. Host-side accumulation follows ascending slab order.
ProjectionStack execute_forward(const Volume& volume, const ScanGeometry& geometry, const DevicePool& pool,
                                const SplitPlan& plan, ForwardMethod method, ExecutionTrace* trace = nullptr,
                                const ForwardTileSpec& tiles = {});

/// Runs backprojection under `plan`: each device walks its slab queue, streaming every
/// angle chunk through two buffers into the resident slab, then drains the slab.
Volume execute_backward(const ProjectionStack& projections, const ScanGeometry& geometry, const DevicePool& pool,
                        const SplitPlan& plan, WeightMode mode, ExecutionTrace* trace = nullptr,
                        const BackwardTileSpec& tiles = {});

/// Discrete-event simulation of the same command program under the pool's cost model.
ExecutionTrace simulate(const SplitPlan& plan, const ScanGeometry& geometry, const DevicePool& pool);

}  // namespace cbct
