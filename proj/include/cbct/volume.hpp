#pragma once

#include "cbct/geometry.hpp"
#include "cbct/types.hpp"

namespace cbct {

/// Attenuation map (1/mm) over an axial slab [slab.begin, slab.end) of a grid,
/// stored x-fastest, then y, then z.
struct Volume {
    VoxelGrid grid;
    IndexRange slab;
    Buffer data;

    static Volume zeros(const VoxelGrid& grid);
    static Volume zeros(const VoxelGrid& grid, IndexRange slab);
    static Volume constant(const VoxelGrid& grid, float value);

    bool is_full() const { return slab.begin == 0 && slab.end == grid.n_z; }
    Index depth() const { return slab.size(); }
    Index size() const { return static_cast<Index>(data.size()); }

    /// Linear offset of voxel (i, j, k); k is a global slice index.
    Index offset(Index i, Index j, Index k) const { return i + grid.n_x * (j + grid.n_y * (k - slab.begin)); }
    float& at(Index i, Index j, Index k) { return data[offset(i, j, k)]; }
    float at(Index i, Index j, Index k) const { return data[offset(i, j, k)]; }

    Volume extract(IndexRange sub) const;
    void insert(const Volume& part);
};

/// Line integrals for a contiguous block of scan angles, stored u-fastest, then v, then angle.
struct ProjectionStack {
    DetectorGrid detector;
    IndexRange angles;
    Buffer data;

    static ProjectionStack zeros(const DetectorGrid& detector, IndexRange angles);
    static ProjectionStack constant(const DetectorGrid& detector, IndexRange angles, float value);

    Index size() const { return static_cast<Index>(data.size()); }
    Index frame_pixels() const { return detector.pixel_count(); }

    Index offset(Index u, Index v, Index a) const { return u + detector.n_u * (v + detector.n_v * (a - angles.begin)); }
    float& at(Index u, Index v, Index a) { return data[offset(u, v, a)]; }
    float at(Index u, Index v, Index a) const { return data[offset(u, v, a)]; }

    ProjectionStack extract(IndexRange sub) const;
    void insert(const ProjectionStack& part);
};

double dot(const Volume& a, const Volume& b);
double dot(const ProjectionStack& a, const ProjectionStack& b);
double squared_norm(const Volume& a);
double squared_norm(const ProjectionStack& a);

/// max |a - b| / max |b|; 0 when both are identically zero.
double max_relative_error(const Buffer& a, const Buffer& reference);

}  // namespace cbct
