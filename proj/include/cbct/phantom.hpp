#pragma once

#include <string>
#include <vector>

#include "cbct/volume.hpp"

namespace cbct {

enum class PhantomKind { SheppLogan3D, UniformCylinder, Blocks };

PhantomKind parse_phantom_kind(const std::string& text);
const char* to_string(PhantomKind kind);

/// One term of an ellipsoid phantom, in coordinates normalized to [-1, 1] per axis.
struct Ellipsoid {
    double value;
    double a, b, c;           ///< semi-axes along x, y, z
    double x0, y0, z0;        ///< center
    double phi_degrees;       ///< rotation about z
};

/// Modified 3D Shepp-Logan table (Yu, Ye and Wang; Toft's contrast values), as
/// distributed in Schabel's phantom3d, without the in-plane psi term.
const std::vector<Ellipsoid>& shepp_logan_table();

/// A box [lo, hi) of voxel indices with a constant value.
struct Box {
    Index3 lo;
    Index3 hi;
    float value;
};

/// Separated boxes, each one voxel clear of the faces, scaled to the grid.
std::vector<Box> block_layout(const VoxelGrid& grid);

constexpr float kCylinderValue = 0.02f;

/// Point-sampled at voxel centers. Coordinates are normalized by the grid's half extents.
Volume phantom(PhantomKind kind, const VoxelGrid& grid);

}  // namespace cbct
