#pragma once

#include <utility>
#include <vector>

#include "cbct/types.hpp"

namespace cbct {

/// Image-side voxel lattice. Voxel (i, j, k) is centered at
/// origin_offset + ((i - (n_x-1)/2) * s_x, ...); z is the rotation axis.
struct VoxelGrid {
    Index n_x = 1;
    Index n_y = 1;
    Index n_z = 1;
    Vec3 voxel_size = Vec3::Ones();
    Vec3 origin_offset = Vec3::Zero();

    Index slice_voxels() const { return n_x * n_y; }
    Index voxel_count() const { return n_x * n_y * n_z; }
    Vec3 extent() const { return Vec3(n_x * voxel_size.x(), n_y * voxel_size.y(), n_z * voxel_size.z()); }
    Vec3 box_min() const { return origin_offset - 0.5 * extent(); }
    Vec3 box_max() const { return origin_offset + 0.5 * extent(); }
    Vec3 voxel_center(Index i, Index j, Index k) const;

    friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

/// Flat-panel detector. Pixel (u, v) is centered at
/// ((u - (n_u-1)/2) * p_u + offset_u, (v - (n_v-1)/2) * p_v + offset_v) in panel coordinates.
struct DetectorGrid {
    Index n_u = 1;
    Index n_v = 1;
    Vec2 pixel_size = Vec2::Ones();
    Vec2 offset = Vec2::Zero();

    Index pixel_count() const { return n_u * n_v; }
    Vec2 pixel_position(Index u, Index v) const;

    friend bool operator==(const DetectorGrid&, const DetectorGrid&) = default;
};

void validate(const VoxelGrid& grid);
void validate(const DetectorGrid& detector);

/// Circular cone-beam scan. The source sits on +x at angle 0, the detector on -x,
/// and the trajectory rotates about z. Construction validates that the grid's
/// circumscribing sphere lies strictly between source and detector at every angle.
class ScanGeometry {
public:
    ScanGeometry(double dso, double dsd, std::vector<double> angles, VoxelGrid grid, DetectorGrid detector);

    double dso() const { return dso_; }
    double dsd() const { return dsd_; }
    const std::vector<double>& angles() const { return angles_; }
    Index angle_count() const { return static_cast<Index>(angles_.size()); }
    const VoxelGrid& grid() const { return grid_; }
    const DetectorGrid& detector() const { return detector_; }

    /// Same scanner restricted to a contiguous block of angles.
    ScanGeometry with_angles(IndexRange range) const;
    /// Same scanner with a different lattice (e.g. a re-binned grid).
    ScanGeometry with_grid(const VoxelGrid& grid) const;

private:
    double dso_;
    double dsd_;
    std::vector<double> angles_;
    VoxelGrid grid_;
    DetectorGrid detector_;
};

/// Source and panel basis vectors at one angle.
struct DetectorFrame {
    Vec3 source;
    Vec3 axis;    // unit, source towards detector center
    Vec3 center;  // detector center (without offsets)
    Vec3 e_u;
    Vec3 e_v;
};

/// Parametric ray p(t) = origin + t * direction, clipped to the grid's bounding box.
struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitX();
    double t_entry = 0.0;
    double t_exit = -1.0;

    bool misses() const { return !(t_entry < t_exit); }
    double chord() const { return misses() ? 0.0 : t_exit - t_entry; }
    Vec3 at(double t) const { return origin + t * direction; }
};

Vec3 source_position(const ScanGeometry& geometry, Index angle_index);
DetectorFrame detector_frame(const ScanGeometry& geometry, Index angle_index);
Vec3 pixel_center(const ScanGeometry& geometry, Index angle_index, Index u, Index v);
Ray pixel_ray(const ScanGeometry& geometry, Index angle_index, Index u, Index v);
Ray pixel_ray(const DetectorFrame& frame, const ScanGeometry& geometry, Index u, Index v);

/// Slab-method box intersection; returns (t_entry, t_exit), entry > exit on a miss.
std::pair<double, double> intersect_box(const Vec3& origin, const Vec3& direction, const Vec3& lo, const Vec3& hi);
Ray make_ray(const Vec3& origin, const Vec3& direction, const VoxelGrid& grid);

/// Angles uniformly spaced over `arc` radians starting at 0.
std::vector<double> uniform_angles(Index count, double arc);

/// A cube of n^3 unit voxels centered on the axis, with dso = 4n, dsd = 8n and a
/// detector sized to cover the grid's circumscribing cylinder at every angle.
ScanGeometry standard_geometry(Index n, Index n_det_u, Index n_det_v, Index n_angles, double arc = 0.0);
ScanGeometry standard_geometry(const VoxelGrid& grid, Index n_det_u, Index n_det_v, Index n_angles, double arc = 0.0);

}  // namespace cbct
