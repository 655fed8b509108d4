#include "cbct/volume.hpp"

#include <stdexcept>

namespace cbct {

Volume Volume::zeros(const VoxelGrid& grid)
{
    return zeros(grid, {0, grid.n_z});
}

Volume Volume::zeros(const VoxelGrid& grid, IndexRange slab)
{
    validate(grid);
    if (slab.begin < 0 || slab.end > grid.n_z || slab.empty())
        throw std::out_of_range("slab range outside the voxel grid");
    Volume v;
    v.grid = grid;
    v.slab = slab;
    v.data = Buffer::Zero(grid.slice_voxels() * slab.size());
    return v;
}

Volume Volume::constant(const VoxelGrid& grid, float value)
{
    Volume v = zeros(grid);
    v.data.setConstant(value);
    return v;
}

Volume Volume::extract(IndexRange sub) const
{
    if (!slab.contains(sub) || sub.empty())
        throw std::out_of_range("extract range not held by this volume");
    Volume part;
    part.grid = grid;
    part.slab = sub;
    const Index slice = grid.slice_voxels();
    part.data = data.segment((sub.begin - slab.begin) * slice, sub.size() * slice);
    return part;
}

void Volume::insert(const Volume& part)
{
    if (!(part.grid == grid) || !slab.contains(part.slab))
        throw std::out_of_range("inserted slab does not fit this volume");
    const Index slice = grid.slice_voxels();
    data.segment((part.slab.begin - slab.begin) * slice, part.data.size()) = part.data;
}

ProjectionStack ProjectionStack::zeros(const DetectorGrid& detector, IndexRange angles)
{
    validate(detector);
    if (angles.begin < 0 || angles.empty())
        throw std::out_of_range("invalid projection angle range");
    ProjectionStack p;
    p.detector = detector;
    p.angles = angles;
    p.data = Buffer::Zero(detector.pixel_count() * angles.size());
    return p;
}

ProjectionStack ProjectionStack::constant(const DetectorGrid& detector, IndexRange angles, float value)
{
    ProjectionStack p = zeros(detector, angles);
    p.data.setConstant(value);
    return p;
}

ProjectionStack ProjectionStack::extract(IndexRange sub) const
{
    if (!angles.contains(sub) || sub.empty())
        throw std::out_of_range("extract range not held by this stack");
    ProjectionStack part;
    part.detector = detector;
    part.angles = sub;
    const Index frame = frame_pixels();
    part.data = data.segment((sub.begin - angles.begin) * frame, sub.size() * frame);
    return part;
}

void ProjectionStack::insert(const ProjectionStack& part)
{
    if (!(part.detector == detector) || !angles.contains(part.angles))
        throw std::out_of_range("inserted projections do not fit this stack");
    const Index frame = frame_pixels();
    data.segment((part.angles.begin - angles.begin) * frame, part.data.size()) = part.data;
}

double dot(const Volume& a, const Volume& b)
{
    return a.data.cast<double>().matrix().dot(b.data.cast<double>().matrix());
}

double dot(const ProjectionStack& a, const ProjectionStack& b)
{
    return a.data.cast<double>().matrix().dot(b.data.cast<double>().matrix());
}

double squared_norm(const Volume& a)
{
    return a.data.cast<double>().matrix().squaredNorm();
}

double squared_norm(const ProjectionStack& a)
{
    return a.data.cast<double>().matrix().squaredNorm();
}

double max_relative_error(const Buffer& a, const Buffer& reference)
{
    if (a.size() != reference.size())
        throw std::invalid_argument("size mismatch in max_relative_error");
    if (a.size() == 0)
        return 0.0;
    const double diff = (a.cast<double>() - reference.cast<double>()).abs().maxCoeff();
    const double scale = reference.cast<double>().abs().maxCoeff();
    if (scale == 0.0)
        return diff;
    return diff / scale;
}

}  // namespace cbct
