#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cbct/projectors.hpp"
#include "cbct/random.hpp"
#include "cbct/siddon.hpp"
#include "oracles.hpp"

using namespace cbct;

namespace {

Volume random_volume(const VoxelGrid& grid, Rng& rng)
{
    Volume v = Volume::zeros(grid);
    rng.fill_uniform(v.data);
    return v;
}

ProjectionStack random_projections(const ScanGeometry& g, Rng& rng)
{
    ProjectionStack p = ProjectionStack::zeros(g.detector(), {0, g.angle_count()});
    rng.fill_uniform(p.data);
    return p;
}

const IndexRange all_angles(const ScanGeometry& g)
{
    return {0, g.angle_count()};
}

}  // namespace

TEST_CASE("siddon: axis-aligned traversal")
{
    VoxelGrid grid;
    grid.n_x = 3;
    const Ray ray = make_ray(Vec3(-10, 0, 0), Vec3(1, 0, 0), grid);
    const auto segments = siddon_trace(ray, grid);
    REQUIRE(segments.size() == 3);
    for (Index i = 0; i < 3; ++i) {
        CHECK(segments[i].voxel == Index3(i, 0, 0));
        CHECK(segments[i].length == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("siddon: diagonal through voxel corners")
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = 5;
    const Ray ray = make_ray(Vec3(-10, -10, 0), Vec3(1, 1, 0), grid);
    const auto segments = siddon_trace(ray, grid);
    REQUIRE(segments.size() == 5);
    for (Index i = 0; i < 5; ++i) {
        CHECK(segments[i].voxel == Index3(i, i, 0));
        CHECK(std::abs(segments[i].length - std::sqrt(2.0)) < 1e-9);
    }
}

TEST_CASE("siddon: misses give no segments")
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = grid.n_z = 4;
    CHECK(siddon_trace(make_ray(Vec3(-10, 5, 0), Vec3(1, 0, 0), grid), grid).empty());
}

TEST_CASE("siddon: lengths match a dense sampling oracle and sum to the chord")
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = grid.n_z = 8;
    grid.voxel_size = Vec3::Constant(0.5);
    Rng rng(3);
    int traced = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const Vec3 a(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Vec3 b(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Ray ray = make_ray(a - 10.0 * (b - a), b - a, grid);
        const auto segments = siddon_trace(ray, grid);
        if (ray.misses()) {
            CHECK(segments.empty());
            continue;
        }
        ++traced;
        double total = 0.0;
        std::map<oracle::VoxelKey, double> lengths;
        for (const auto& s : segments) {
            CHECK(s.length >= 0.0);
            total += s.length;
            lengths[{s.voxel.x(), s.voxel.y(), s.voxel.z()}] += s.length;
        }
        CHECK(std::abs(total - ray.chord()) <= 1e-6 * ray.chord());
        const auto sampled = oracle::sampled_lengths(ray, grid, 10000);
        for (const auto& [key, len] : sampled)
            CHECK(std::abs(lengths[key] - len) < 1e-3);
        for (const auto& [key, len] : lengths)
            if (!sampled.count(key))
                CHECK(len < 1e-3);
    }
    CHECK(traced > 20);
}

TEST_CASE("siddon: chord conservation on every pixel ray")
{
    const ScanGeometry g = standard_geometry(12, 20, 20, 6);
    for (Index a = 0; a < g.angle_count(); ++a)
        for (Index v = 0; v < 20; ++v)
            for (Index u = 0; u < 20; ++u) {
                const Ray ray = pixel_ray(g, a, u, v);
                double total = 0.0;
                siddon_walk(ray, g.grid(), {0, 12}, [&](Index, Index, Index, double len) { total += len; });
                CHECK(std::abs(total - ray.chord()) <= 1e-6 * std::max(1.0, ray.chord()));
            }
}

TEST_CASE("forward: uniform cube along the central ray")
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = grid.n_z = 10;
    DetectorGrid det;
    det.n_u = det.n_v = 5;
    const ScanGeometry g(100, 200, {0.0}, grid, det);
    const Volume cube = Volume::constant(grid, 0.02f);
    const ProjectionStack siddon = forward_project_slab(cube, g, {0, 1}, ForwardMethod::Siddon);
    CHECK(std::abs(siddon.at(2, 2, 0) - 0.2) < 1e-4);
    // Trilinear samples fade to zero over the outer half voxel at each face: 0.02 * (10 - 0.25).
    const ProjectionStack interp = forward_project_slab(cube, g, {0, 1}, ForwardMethod::Interpolated);
    CHECK(std::abs(interp.at(2, 2, 0) - 0.195) < 1e-4);
}

TEST_CASE("forward: zero, linearity and tile invariance")
{
    const ScanGeometry g = standard_geometry(16, 24, 20, 5);
    Rng rng(5);
    const Volume x = random_volume(g.grid(), rng);
    const Volume y = random_volume(g.grid(), rng);
    for (ForwardMethod method : {ForwardMethod::Siddon, ForwardMethod::Interpolated}) {
        CHECK(forward_project_slab(Volume::zeros(g.grid()), g, all_angles(g), method).data.abs().maxCoeff() == 0.0f);

        Volume combo = x;
        combo.data = 2.0f * x.data - 0.5f * y.data;
        const ProjectionStack px = forward_project_slab(x, g, all_angles(g), method);
        const ProjectionStack py = forward_project_slab(y, g, all_angles(g), method);
        const ProjectionStack pc = forward_project_slab(combo, g, all_angles(g), method);
        const Buffer expected = 2.0f * px.data - 0.5f * py.data;
        CHECK(max_relative_error(pc.data, expected) < 1e-5);

        const ProjectionStack tiled = forward_project_slab(x, g, all_angles(g), method, {4, 4, 2});
        CHECK((tiled.data == px.data).all());
    }
}

TEST_CASE("forward: slab projections add up to the full projection")
{
    const ScanGeometry g = standard_geometry(20, 28, 28, 6);
    Rng rng(9);
    const Volume x = random_volume(g.grid(), rng);
    for (ForwardMethod method : {ForwardMethod::Siddon, ForwardMethod::Interpolated}) {
        const ProjectionStack full = forward_project_slab(x, g, all_angles(g), method);
        for (Index cut : {1, 7, 10, 19}) {
            const ProjectionStack lower = forward_project_slab(x.extract({0, cut}), g, all_angles(g), method);
            const ProjectionStack upper = forward_project_slab(x.extract({cut, 20}), g, all_angles(g), method);
            const Buffer sum = lower.data + upper.data;
            CHECK(max_relative_error(sum, full.data) < 1e-5);
        }
    }
}

TEST_CASE("forward: errors")
{
    const ScanGeometry g = standard_geometry(8, 12, 12, 4);
    const ScanGeometry other = standard_geometry(9, 12, 12, 4);
    CHECK_THROWS_AS(forward_project_slab(Volume::zeros(other.grid()), g, {0, 4}, ForwardMethod::Siddon),
                    std::invalid_argument);
    CHECK_THROWS_AS(forward_project_slab(Volume::zeros(g.grid()), g, {2, 5}, ForwardMethod::Siddon),
                    std::out_of_range);
}

TEST_CASE("backward: zero projections leave the target unchanged")
{
    const ScanGeometry g = standard_geometry(12, 16, 16, 4);
    Rng rng(1);
    for (WeightMode mode : {WeightMode::FDK, WeightMode::Matched}) {
        Volume target = random_volume(g.grid(), rng);
        const Buffer before = target.data;
        backproject_slab(ProjectionStack::zeros(g.detector(), all_angles(g)), g, {0, 12}, mode, {}, target);
        CHECK((target.data == before).all());
    }
}

TEST_CASE("backward: FDK footprint of a single pixel")
{
    const ScanGeometry g = standard_geometry(16, 21, 21, 1);
    ProjectionStack p = ProjectionStack::zeros(g.detector(), {0, 1});
    const Index pu = 13, pv = 8;
    p.at(pu, pv, 0) = 1.0f;
    Volume out = Volume::zeros(g.grid());
    backproject_slab(p, g, {0, 16}, WeightMode::FDK, {}, out);

    const DetectorFrame f = detector_frame(g, 0);
    const DetectorGrid& d = g.detector();
    Index hits = 0;
    for (Index k = 0; k < 16; ++k)
        for (Index j = 0; j < 16; ++j)
            for (Index i = 0; i < 16; ++i) {
                // Where the source-to-voxel ray meets the panel, in pixel units.
                const Vec3 c = g.grid().voxel_center(i, j, k);
                const Vec3 dir = c - f.source;
                const Vec3 hit = f.source + (g.dsd() / dir.dot(f.axis)) * dir - f.center;
                const double du = hit.dot(f.e_u) / d.pixel_size.x() + 0.5 * (d.n_u - 1) - pu;
                const double dv = hit.dot(f.e_v) / d.pixel_size.y() + 0.5 * (d.n_v - 1) - pv;
                const bool inside = std::abs(du) < 1.0 && std::abs(dv) < 1.0;
                if (out.at(i, j, k) != 0.0f) {
                    ++hits;
                    CHECK(inside);
                } else if (std::abs(du) < 0.999 && std::abs(dv) < 0.999) {
                    CHECK(out.at(i, j, k) != 0.0f);
                }
            }
    CHECK(hits > 0);
}

TEST_CASE("backward: matched mode is the adjoint of the interpolated projector")
{
    const ScanGeometry g = standard_geometry(16, 24, 24, 8);
    Rng rng(21);
    for (int pair = 0; pair < 20; ++pair) {
        const Volume x = random_volume(g.grid(), rng);
        const ProjectionStack y = random_projections(g, rng);
        const ProjectionStack ax = forward_project_slab(x, g, all_angles(g), ForwardMethod::Interpolated);
        Volume aty = Volume::zeros(g.grid());
        backproject_slab(y, g, {0, 16}, WeightMode::Matched, {}, aty);
        const double lhs = dot(ax, y);
        const double rhs = dot(x, aty);
        CHECK(std::abs(lhs - rhs) / (std::sqrt(squared_norm(ax)) * std::sqrt(squared_norm(y))) <= 1e-4);
    }
}

TEST_CASE("backward: matched mode equals the dense transpose on 8^3")
{
    const ScanGeometry g = standard_geometry(8, 12, 12, 4);
    const Eigen::MatrixXd a = oracle::dense_forward(g, ForwardMethod::Interpolated);
    const Eigen::MatrixXd b = oracle::dense_backward(g, WeightMode::Matched);
    CHECK((b - a.transpose()).cwiseAbs().maxCoeff() <= 1e-5 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("backward: slabs are independent and chunking is exact")
{
    const ScanGeometry g = standard_geometry(16, 24, 24, 10);
    Rng rng(4);
    const ProjectionStack y = random_projections(g, rng);
    for (WeightMode mode : {WeightMode::FDK, WeightMode::Matched}) {
        Volume full = Volume::zeros(g.grid());
        backproject_slab(y, g, {0, 16}, mode, {}, full);
        for (Index cut : {3, 8}) {
            Volume lower = Volume::zeros(g.grid(), {0, cut});
            Volume upper = Volume::zeros(g.grid(), {cut, 16});
            backproject_slab(y, g, lower.slab, mode, {}, lower);
            backproject_slab(y, g, upper.slab, mode, {}, upper);
            Volume joined = Volume::zeros(g.grid());
            joined.insert(lower);
            joined.insert(upper);
            CHECK((joined.data == full.data).all());
        }
        Volume tiled = Volume::zeros(g.grid());
        backproject_slab(y, g, {0, 16}, mode, {4, 4, 32, 2}, tiled);
        CHECK((tiled.data == full.data).all());
    }
}

TEST_CASE("backward: errors")
{
    const ScanGeometry g = standard_geometry(8, 12, 12, 4);
    const ProjectionStack y = ProjectionStack::zeros(g.detector(), {0, 4});
    Volume part = Volume::zeros(g.grid(), {0, 4});
    CHECK_THROWS_AS(backproject_slab(y, g, {2, 6}, WeightMode::FDK, {}, part), std::out_of_range);
    CHECK_THROWS_AS(backproject_slab(y, g, {0, 4}, WeightMode::FDK, {0, 1, 1, 1}, part), std::invalid_argument);
}
