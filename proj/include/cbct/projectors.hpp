#pragma once

#include "cbct/geometry.hpp"
#include "cbct/volume.hpp"

namespace cbct {

enum class ForwardMethod { Siddon, Interpolated };

/// FDK applies the (dso/U)^2 distance weight with bilinear detector sampling;
/// Matched is the exact adjoint of the Interpolated forward projector.
enum class WeightMode { FDK, Matched };

/// Forward launch tiling: tile_u x tile_v pixels by chunk_angles projections.
struct ForwardTileSpec {
    Index tile_u = 9;
    Index tile_v = 9;
    Index chunk_angles = 9;
};

/// Backward launch tiling: tile_x x tile_y voxel columns, each lane updating
/// voxels_per_unit consecutive slices, over chunk_angles projections per launch.
struct BackwardTileSpec {
    Index tile_x = 16;
    Index tile_y = 32;
    Index chunk_angles = 32;
    Index voxels_per_unit = 8;
};

void validate(const ForwardTileSpec& tiles);
void validate(const BackwardTileSpec& tiles);

/// Sampling step of the interpolated projector: half the smallest voxel dimension
/// (shortened so that a whole number of samples spans each chord).
double interpolation_step(const VoxelGrid& grid);

/// Projects the slab held by `volume` for the scan angles in `angles`. Voxels outside
/// the slab count as zero, so the projections of disjoint slabs sum to the projection
/// of their union.
ProjectionStack forward_project_slab(const Volume& volume, const ScanGeometry& geometry, IndexRange angles,
                                     ForwardMethod method, const ForwardTileSpec& tiles = {});

/// Adds the backprojection of `projections` over the slab `slab` onto `accumulate_into`.
/// Angles are consumed in launches of tiles.chunk_angles; each launch reduces per voxel
/// in double precision before adding to the stored slab.
void backproject_slab(const ProjectionStack& projections, const ScanGeometry& geometry, IndexRange slab,
                      WeightMode mode, const BackwardTileSpec& tiles, Volume& accumulate_into);

}  // namespace cbct
