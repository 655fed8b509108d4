#include "cbct/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cbct {

Vec3 VoxelGrid::voxel_center(Index i, Index j, Index k) const
{
    return origin_offset + Vec3((i - 0.5 * (n_x - 1)) * voxel_size.x(),
                                (j - 0.5 * (n_y - 1)) * voxel_size.y(),
                                (k - 0.5 * (n_z - 1)) * voxel_size.z());
}

Vec2 DetectorGrid::pixel_position(Index u, Index v) const
{
    return Vec2((u - 0.5 * (n_u - 1)) * pixel_size.x() + offset.x(),
                (v - 0.5 * (n_v - 1)) * pixel_size.y() + offset.y());
}

void validate(const VoxelGrid& grid)
{
    if (grid.n_x < 1 || grid.n_y < 1 || grid.n_z < 1)
        throw std::invalid_argument("voxel grid counts must be >= 1");
    if (!(grid.voxel_size.array() > 0.0).all() || !grid.voxel_size.allFinite())
        throw std::invalid_argument("voxel sizes must be positive");
    if (!grid.origin_offset.allFinite())
        throw std::invalid_argument("voxel grid offset must be finite");
    constexpr auto max_index = std::numeric_limits<Index>::max();
    if (grid.n_x > max_index / grid.n_y || grid.n_x * grid.n_y > max_index / grid.n_z)
        throw std::invalid_argument("voxel count overflows a 64-bit index");
}

void validate(const DetectorGrid& detector)
{
    if (detector.n_u < 1 || detector.n_v < 1)
        throw std::invalid_argument("detector pixel counts must be >= 1");
    if (!(detector.pixel_size.array() > 0.0).all() || !detector.pixel_size.allFinite())
        throw std::invalid_argument("detector pixel sizes must be positive");
    if (!detector.offset.allFinite())
        throw std::invalid_argument("detector offset must be finite");
}

ScanGeometry::ScanGeometry(double dso, double dsd, std::vector<double> angles, VoxelGrid grid,
                           DetectorGrid detector)
    : dso_(dso), dsd_(dsd), angles_(std::move(angles)), grid_(std::move(grid)), detector_(std::move(detector))
{
    validate(grid_);
    validate(detector_);
    if (!(dso_ > 0.0) || !(dsd_ > dso_) || !std::isfinite(dsd_))
        throw std::invalid_argument("scan geometry requires dsd > dso > 0");
    if (angles_.empty())
        throw std::invalid_argument("scan geometry requires at least one angle");

    const double radius = 0.5 * grid_.extent().norm();
    for (Index a = 0; a < angle_count(); ++a) {
        if (!std::isfinite(angles_[a]))
            throw std::invalid_argument("scan angles must be finite");
        const DetectorFrame frame = detector_frame(*this, a);
        const double depth = (grid_.origin_offset - frame.source).dot(frame.axis);
        if (!(depth - radius > 0.0) || !(depth + radius < dsd_)) {
            std::ostringstream msg;
            msg << "voxel grid does not lie strictly between source and detector at angle index " << a;
            throw std::invalid_argument(msg.str());
        }
    }
}

ScanGeometry ScanGeometry::with_angles(IndexRange range) const
{
    if (range.begin < 0 || range.end > angle_count() || range.empty())
        throw std::out_of_range("angle sub-range outside the scan");
    return ScanGeometry(dso_, dsd_, std::vector<double>(angles_.begin() + range.begin, angles_.begin() + range.end),
                        grid_, detector_);
}

ScanGeometry ScanGeometry::with_grid(const VoxelGrid& grid) const
{
    return ScanGeometry(dso_, dsd_, angles_, grid, detector_);
}

namespace {

void check_angle(const ScanGeometry& geometry, Index angle_index)
{
    if (angle_index < 0 || angle_index >= geometry.angle_count())
        throw std::out_of_range("angle index out of range");
}

}  // namespace

Vec3 source_position(const ScanGeometry& geometry, Index angle_index)
{
    check_angle(geometry, angle_index);
    const double theta = geometry.angles()[angle_index];
    return Vec3(geometry.dso() * std::cos(theta), geometry.dso() * std::sin(theta), 0.0);
}

DetectorFrame detector_frame(const ScanGeometry& geometry, Index angle_index)
{
    check_angle(geometry, angle_index);
    const double theta = geometry.angles()[angle_index];
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    DetectorFrame frame;
    frame.source = Vec3(geometry.dso() * c, geometry.dso() * s, 0.0);
    frame.axis = Vec3(-c, -s, 0.0);
    frame.center = frame.source + geometry.dsd() * frame.axis;
    frame.e_u = Vec3(-s, c, 0.0);
    frame.e_v = Vec3::UnitZ();
    return frame;
}

Vec3 pixel_center(const ScanGeometry& geometry, Index angle_index, Index u, Index v)
{
    const DetectorFrame frame = detector_frame(geometry, angle_index);
    const Vec2 p = geometry.detector().pixel_position(u, v);
    return frame.center + p.x() * frame.e_u + p.y() * frame.e_v;
}

Ray pixel_ray(const DetectorFrame& frame, const ScanGeometry& geometry, Index u, Index v)
{
    const DetectorGrid& det = geometry.detector();
    if (u < 0 || u >= det.n_u || v < 0 || v >= det.n_v)
        throw std::out_of_range("detector pixel index out of range");
    const Vec2 p = det.pixel_position(u, v);
    const Vec3 target = frame.center + p.x() * frame.e_u + p.y() * frame.e_v;
    return make_ray(frame.source, target - frame.source, geometry.grid());
}

Ray pixel_ray(const ScanGeometry& geometry, Index angle_index, Index u, Index v)
{
    return pixel_ray(detector_frame(geometry, angle_index), geometry, u, v);
}

std::pair<double, double> intersect_box(const Vec3& origin, const Vec3& direction, const Vec3& lo, const Vec3& hi)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    double t0 = -inf;
    double t1 = inf;
    for (int a = 0; a < 3; ++a) {
        if (direction[a] == 0.0) {
            if (origin[a] < lo[a] || origin[a] >= hi[a])
                return {inf, -inf};
            continue;
        }
        double ta = (lo[a] - origin[a]) / direction[a];
        double tb = (hi[a] - origin[a]) / direction[a];
        if (ta > tb)
            std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return {t0, t1};
}

Ray make_ray(const Vec3& origin, const Vec3& direction, const VoxelGrid& grid)
{
    const double length = direction.norm();
    if (!(length > 0.0))
        throw std::invalid_argument("ray direction must be non-zero");
    Ray ray;
    ray.origin = origin;
    ray.direction = direction / length;
    std::tie(ray.t_entry, ray.t_exit) = intersect_box(ray.origin, ray.direction, grid.box_min(), grid.box_max());
    return ray;
}

std::vector<double> uniform_angles(Index count, double arc)
{
    if (count < 1)
        throw std::invalid_argument("angle count must be >= 1");
    std::vector<double> angles(count);
    for (Index a = 0; a < count; ++a)
        angles[a] = arc * static_cast<double>(a) / static_cast<double>(count);
    return angles;
}

ScanGeometry standard_geometry(const VoxelGrid& grid, Index n_det_u, Index n_det_v, Index n_angles, double arc)
{
    validate(grid);
    if (arc <= 0.0)
        arc = 2.0 * std::numbers::pi;
    const Vec3 extent = grid.extent();
    const double size = extent.maxCoeff();
    const double dso = 4.0 * size;
    const double dsd = 8.0 * size;
    const double radius = 0.5 * std::hypot(extent.x(), extent.y()) + grid.origin_offset.head<2>().norm();
    const double half_height = 0.5 * extent.z() + std::abs(grid.origin_offset.z());
    const double magnification = dsd / (dso - radius);

    DetectorGrid det;
    det.n_u = n_det_u;
    det.n_v = n_det_v;
    det.pixel_size = Vec2(1.05 * 2.0 * radius * magnification / n_det_u,
                          1.05 * 2.0 * half_height * magnification / n_det_v);
    return ScanGeometry(dso, dsd, uniform_angles(n_angles, arc), grid, det);
}

ScanGeometry standard_geometry(Index n, Index n_det_u, Index n_det_v, Index n_angles, double arc)
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = grid.n_z = n;
    return standard_geometry(grid, n_det_u, n_det_v, n_angles, arc);
}

}  // namespace cbct
