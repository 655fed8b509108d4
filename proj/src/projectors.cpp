#include "cbct/projectors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cbct/parallel.hpp"
#include "cbct/siddon.hpp"

namespace cbct {

void validate(const ForwardTileSpec& tiles)
{
    if (tiles.tile_u < 1 || tiles.tile_v < 1 || tiles.chunk_angles < 1)
        throw std::invalid_argument("forward tile dimensions must be >= 1");
}

void validate(const BackwardTileSpec& tiles)
{
    if (tiles.tile_x < 1 || tiles.tile_y < 1 || tiles.chunk_angles < 1 || tiles.voxels_per_unit < 1)
        throw std::invalid_argument("backward tile dimensions must be >= 1");
}

double interpolation_step(const VoxelGrid& grid)
{
    return 0.5 * grid.voxel_size.minCoeff();
}

namespace {

/// Trilinear sampling along the ray at a fixed set of points (independent of the
/// slab), reporting every (voxel, weight) pair whose voxel lies in slices [zr).
template <typename Visit>
void interpolated_walk(const Ray& ray, const VoxelGrid& grid, double step, IndexRange zr, Visit&& visit)
{
    if (ray.misses())
        return;
    const double chord = ray.t_exit - ray.t_entry;
    const Index samples = std::max<Index>(1, static_cast<Index>(std::ceil(chord / step)));
    const double h = chord / static_cast<double>(samples);
    const Vec3 lo = grid.box_min();
    const Vec3 inv = grid.voxel_size.cwiseInverse();
    const Vec3 base = (ray.origin - lo).cwiseProduct(inv).array() - 0.5;
    const Vec3 slope = ray.direction.cwiseProduct(inv);

    Index m0 = 0;
    Index m1 = samples;
    if (slope.z() != 0.0) {
        double ta = (static_cast<double>(zr.begin - 1) - base.z()) / slope.z();
        double tb = (static_cast<double>(zr.end) - base.z()) / slope.z();
        if (ta > tb)
            std::swap(ta, tb);
        m0 = std::max<Index>(0, static_cast<Index>(std::floor((ta - ray.t_entry) / h - 0.5)) - 1);
        m1 = std::min<Index>(samples, static_cast<Index>(std::ceil((tb - ray.t_entry) / h - 0.5)) + 2);
    }

    for (Index m = m0; m < m1; ++m) {
        const double t = ray.t_entry + (static_cast<double>(m) + 0.5) * h;
        const Vec3 c = base + t * slope;
        const double fx = std::floor(c.x());
        const double fy = std::floor(c.y());
        const double fz = std::floor(c.z());
        const Index i0 = static_cast<Index>(fx);
        const Index j0 = static_cast<Index>(fy);
        const Index k0 = static_cast<Index>(fz);
        if (k0 < zr.begin - 1 || k0 > zr.end - 1)
            continue;
        const double wx[2] = {1.0 - (c.x() - fx), c.x() - fx};
        const double wy[2] = {1.0 - (c.y() - fy), c.y() - fy};
        const double wz[2] = {1.0 - (c.z() - fz), c.z() - fz};
        for (int dz = 0; dz < 2; ++dz) {
            const Index k = k0 + dz;
            if (k < zr.begin || k >= zr.end)
                continue;
            for (int dy = 0; dy < 2; ++dy) {
                const Index j = j0 + dy;
                if (j < 0 || j >= grid.n_y)
                    continue;
                for (int dx = 0; dx < 2; ++dx) {
                    const Index i = i0 + dx;
                    if (i < 0 || i >= grid.n_x)
                        continue;
                    visit(i, j, k, h * wx[dx] * wy[dy] * wz[dz]);
                }
            }
        }
    }
}

std::vector<DetectorFrame> frames_for(const ScanGeometry& geometry, IndexRange angles)
{
    std::vector<DetectorFrame> frames;
    frames.reserve(angles.size());
    for (Index a = angles.begin; a < angles.end; ++a)
        frames.push_back(detector_frame(geometry, a));
    return frames;
}

void check_angles(const ScanGeometry& geometry, IndexRange angles)
{
    if (angles.empty() || angles.begin < 0 || angles.end > geometry.angle_count())
        throw std::out_of_range("angle range outside the scan");
}

struct PixelTile {
    IndexRange angles;
    IndexRange v;
    IndexRange u;
};

}  // namespace

ProjectionStack forward_project_slab(const Volume& volume, const ScanGeometry& geometry, IndexRange angles,
                                     ForwardMethod method, const ForwardTileSpec& tiles)
{
    if (!(volume.grid == geometry.grid()))
        throw std::invalid_argument("volume grid does not match the scan geometry");
    check_angles(geometry, angles);
    validate(tiles);

    const DetectorGrid& det = geometry.detector();
    ProjectionStack out = ProjectionStack::zeros(det, angles);
    const std::vector<DetectorFrame> frames = frames_for(geometry, angles);

    std::vector<PixelTile> work;
    for (Index a = angles.begin; a < angles.end; a += tiles.chunk_angles)
        for (Index v = 0; v < det.n_v; v += tiles.tile_v)
            for (Index u = 0; u < det.n_u; u += tiles.tile_u)
                work.push_back({{a, std::min(a + tiles.chunk_angles, angles.end)},
                                {v, std::min(v + tiles.tile_v, det.n_v)},
                                {u, std::min(u + tiles.tile_u, det.n_u)}});

    const VoxelGrid& grid = geometry.grid();
    const double step = interpolation_step(grid);
    const float* x = volume.data.data();

    parallel_for(static_cast<Index>(work.size()), [&](Index task) {
        const PixelTile& tile = work[task];
        for (Index a = tile.angles.begin; a < tile.angles.end; ++a) {
            const DetectorFrame& frame = frames[a - angles.begin];
            for (Index v = tile.v.begin; v < tile.v.end; ++v) {
                for (Index u = tile.u.begin; u < tile.u.end; ++u) {
                    const Ray ray = pixel_ray(frame, geometry, u, v);
                    double sum = 0.0;
                    if (method == ForwardMethod::Siddon) {
                        siddon_walk(ray, grid, volume.slab, [&](Index i, Index j, Index k, double length) {
                            sum += length * x[volume.offset(i, j, k)];
                        });
                    } else {
                        interpolated_walk(ray, grid, step, volume.slab, [&](Index i, Index j, Index k, double w) {
                            sum += w * x[volume.offset(i, j, k)];
                        });
                    }
                    out.at(u, v, a) = static_cast<float>(sum);
                }
            }
        }
    });
    return out;
}

namespace {

double bilinear(const ProjectionStack& p, Index a, double cu, double cv)
{
    const double fu = std::floor(cu);
    const double fv = std::floor(cv);
    const Index u0 = static_cast<Index>(fu);
    const Index v0 = static_cast<Index>(fv);
    const double wu[2] = {1.0 - (cu - fu), cu - fu};
    const double wv[2] = {1.0 - (cv - fv), cv - fv};
    double value = 0.0;
    for (int dv = 0; dv < 2; ++dv) {
        const Index v = v0 + dv;
        if (v < 0 || v >= p.detector.n_v)
            continue;
        for (int du = 0; du < 2; ++du) {
            const Index u = u0 + du;
            if (u < 0 || u >= p.detector.n_u)
                continue;
            value += wu[du] * wv[dv] * p.at(u, v, a);
        }
    }
    return value;
}

struct VoxelTile {
    IndexRange x;
    IndexRange y;
    IndexRange z;
};

void backproject_fdk(const ProjectionStack& proj, const ScanGeometry& geometry, IndexRange slab, IndexRange chunk,
                     const BackwardTileSpec& tiles, Volume& target)
{
    const VoxelGrid& grid = geometry.grid();
    const DetectorGrid& det = geometry.detector();
    std::vector<double> cos_t, sin_t;
    for (Index a = chunk.begin; a < chunk.end; ++a) {
        cos_t.push_back(std::cos(geometry.angles()[a]));
        sin_t.push_back(std::sin(geometry.angles()[a]));
    }

    std::vector<VoxelTile> work;
    for (Index z = slab.begin; z < slab.end; z += tiles.voxels_per_unit)
        for (Index y = 0; y < grid.n_y; y += tiles.tile_y)
            for (Index x = 0; x < grid.n_x; x += tiles.tile_x)
                work.push_back({{x, std::min(x + tiles.tile_x, grid.n_x)},
                                {y, std::min(y + tiles.tile_y, grid.n_y)},
                                {z, std::min(z + tiles.voxels_per_unit, slab.end)}});

    const double dso = geometry.dso();
    const double dsd = geometry.dsd();
    const double half_u = 0.5 * (det.n_u - 1);
    const double half_v = 0.5 * (det.n_v - 1);

    parallel_for(static_cast<Index>(work.size()), [&](Index task) {
        const VoxelTile& tile = work[task];
        for (Index k = tile.z.begin; k < tile.z.end; ++k)
            for (Index j = tile.y.begin; j < tile.y.end; ++j)
                for (Index i = tile.x.begin; i < tile.x.end; ++i) {
                    const Vec3 p = grid.voxel_center(i, j, k);
                    double acc = 0.0;
                    for (Index a = chunk.begin; a < chunk.end; ++a) {
                        const double c = cos_t[a - chunk.begin];
                        const double s = sin_t[a - chunk.begin];
                        const double depth = dso - (p.x() * c + p.y() * s);
                        const double lateral = -p.x() * s + p.y() * c;
                        const double mag = dsd / depth;
                        const double cu = (lateral * mag - det.offset.x()) / det.pixel_size.x() + half_u;
                        const double cv = (p.z() * mag - det.offset.y()) / det.pixel_size.y() + half_v;
                        const double weight = (dso / depth) * (dso / depth);
                        acc += weight * bilinear(proj, a, cu, cv);
                    }
                    target.at(i, j, k) += static_cast<float>(acc);
                }
    });
}

void backproject_matched(const ProjectionStack& proj, const ScanGeometry& geometry, IndexRange slab,
                         IndexRange chunk, Volume& target)
{
    const VoxelGrid& grid = geometry.grid();
    const DetectorGrid& det = geometry.detector();
    const double step = interpolation_step(grid);
    const std::vector<DetectorFrame> frames = frames_for(geometry, chunk);

    // Lanes own disjoint groups of slices; every lane walks all rays in the same order,
    // so each voxel sees its contributions in a fixed sequence.
    const Index lanes = std::clamp<Index>(worker_lanes(), 1, slab.size());
    const Index per_lane = ceil_div(slab.size(), lanes);
    const Index slice = grid.slice_voxels();

    parallel_for(ceil_div(slab.size(), per_lane), [&](Index lane) {
        const IndexRange zr{slab.begin + lane * per_lane, std::min(slab.end, slab.begin + (lane + 1) * per_lane)};
        std::vector<double> acc(static_cast<std::size_t>(slice * zr.size()), 0.0);
        for (Index a = chunk.begin; a < chunk.end; ++a) {
            const DetectorFrame& frame = frames[a - chunk.begin];
            for (Index v = 0; v < det.n_v; ++v)
                for (Index u = 0; u < det.n_u; ++u) {
                    const double y = proj.at(u, v, a);
                    if (y == 0.0)
                        continue;
                    const Ray ray = pixel_ray(frame, geometry, u, v);
                    interpolated_walk(ray, grid, step, zr, [&](Index i, Index j, Index k, double w) {
                        acc[static_cast<std::size_t>(i + grid.n_x * (j + grid.n_y * (k - zr.begin)))] += w * y;
                    });
                }
        }
        for (Index k = zr.begin; k < zr.end; ++k)
            for (Index j = 0; j < grid.n_y; ++j)
                for (Index i = 0; i < grid.n_x; ++i)
                    target.at(i, j, k) +=
                        static_cast<float>(acc[static_cast<std::size_t>(i + grid.n_x * (j + grid.n_y * (k - zr.begin)))]);
    });
}

}  // namespace

void backproject_slab(const ProjectionStack& projections, const ScanGeometry& geometry, IndexRange slab,
                      WeightMode mode, const BackwardTileSpec& tiles, Volume& accumulate_into)
{
    validate(tiles);
    if (!(projections.detector == geometry.detector()))
        throw std::invalid_argument("projection detector does not match the scan geometry");
    check_angles(geometry, projections.angles);
    if (!(accumulate_into.grid == geometry.grid()))
        throw std::invalid_argument("target volume grid does not match the scan geometry");
    if (slab.empty() || slab.begin < 0 || slab.end > geometry.grid().n_z || !accumulate_into.slab.contains(slab))
        throw std::out_of_range("backprojection slab not covered by the target volume");

    const IndexRange angles = projections.angles;
    for (Index a = angles.begin; a < angles.end; a += tiles.chunk_angles) {
        const IndexRange chunk{a, std::min(a + tiles.chunk_angles, angles.end)};
        if (mode == WeightMode::FDK)
            backproject_fdk(projections, geometry, slab, chunk, tiles, accumulate_into);
        else
            backproject_matched(projections, geometry, slab, chunk, accumulate_into);
    }
}

}  // namespace cbct
