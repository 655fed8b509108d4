#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cbct/geometry.hpp"
#include "cbct/random.hpp"

using namespace cbct;

namespace {

ScanGeometry small_scan(std::vector<double> angles, double dso = 100.0)
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = grid.n_z = 8;
    DetectorGrid det;
    det.n_u = 15;
    det.n_v = 11;
    det.pixel_size = Vec2(2.0, 2.0);
    return ScanGeometry(dso, 2.0 * dso, std::move(angles), grid, det);
}

Vec3 rotate_z(const Vec3& p, double delta)
{
    return Vec3(std::cos(delta) * p.x() - std::sin(delta) * p.y(), std::sin(delta) * p.x() + std::cos(delta) * p.y(),
                p.z());
}

}  // namespace

TEST_CASE("source position follows the rotation convention")
{
    const double pi = std::numbers::pi;
    const ScanGeometry g = small_scan({0.0, pi / 2, pi});
    CHECK(source_position(g, 0).isApprox(Vec3(100, 0, 0)));
    CHECK((source_position(g, 1) - Vec3(0, 100, 0)).norm() < 1e-9);
    CHECK((source_position(g, 2) - Vec3(-100, 0, 0)).norm() < 1e-9);

    const ScanGeometry h = small_scan({pi}, 50.0);
    CHECK((source_position(h, 0) - Vec3(-50, 0, 0)).norm() < 1e-9);
    CHECK_THROWS_AS(source_position(g, 3), std::out_of_range);
    CHECK_THROWS_AS(source_position(g, -1), std::out_of_range);
}

TEST_CASE("central ray and misses")
{
    const ScanGeometry g = small_scan({0.0});
    const Ray central = pixel_ray(g, 0, 7, 5);
    CHECK((central.direction - Vec3(-1, 0, 0)).norm() < 1e-12);
    CHECK(central.t_entry == doctest::Approx(96.0));
    CHECK(central.t_exit == doctest::Approx(104.0));

    // Corner pixel lies far outside the grid's shadow.
    const Ray corner = pixel_ray(g, 0, 0, 0);
    CHECK(corner.misses());
    CHECK(corner.t_entry > corner.t_exit);
    CHECK_THROWS_AS(pixel_ray(g, 0, 15, 0), std::out_of_range);
}

TEST_CASE("pixel rays are unit length and reach their pixel on the detector plane")
{
    Rng rng(7);
    const ScanGeometry g = small_scan(uniform_angles(12, 2 * std::numbers::pi));
    for (int trial = 0; trial < 200; ++trial) {
        const Index a = rng.integer(0, 11);
        const Index u = rng.integer(0, g.detector().n_u - 1);
        const Index v = rng.integer(0, g.detector().n_v - 1);
        const Ray ray = pixel_ray(g, a, u, v);
        const DetectorFrame frame = detector_frame(g, a);
        CHECK(std::abs(ray.direction.norm() - 1.0) < 1e-12);
        CHECK((ray.origin - frame.source).norm() == 0.0);
        const double t = g.dsd() / ray.direction.dot(frame.axis);
        const Vec3 hit = ray.at(t);
        CHECK(std::abs((hit - frame.center).dot(frame.axis)) < 1e-9 * g.dsd());
        CHECK((hit - pixel_center(g, a, u, v)).norm() < 1e-9 * g.dsd());
    }
}

TEST_CASE("rotating every angle rotates sources and rays")
{
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> angles;
        for (int a = 0; a < 4; ++a)
            angles.push_back(rng.uniform(-4.0, 4.0));
        const double delta = rng.uniform(-3.0, 3.0);
        std::vector<double> shifted = angles;
        for (double& t : shifted)
            t += delta;
        const ScanGeometry g = small_scan(angles);
        const ScanGeometry h = small_scan(shifted);
        for (Index a = 0; a < 4; ++a) {
            CHECK((rotate_z(source_position(g, a), delta) - source_position(h, a)).norm() < 1e-9);
            const Index u = rng.integer(0, 14);
            const Index v = rng.integer(0, 10);
            CHECK((rotate_z(pixel_ray(g, a, u, v).direction, delta) - pixel_ray(h, a, u, v).direction).norm() < 1e-9);
        }
    }
}

TEST_CASE("mirrored pixels give mirrored rays")
{
    const ScanGeometry g = small_scan({0.3, 1.7});
    for (Index a = 0; a < 2; ++a) {
        const DetectorFrame f = detector_frame(g, a);
        for (Index u = 0; u < 15; ++u)
            for (Index v = 0; v < 11; ++v) {
                const Vec3 d = pixel_ray(g, a, u, v).direction;
                const Vec3 m = pixel_ray(g, a, 14 - u, v).direction;
                const Vec3 reflected = d - 2.0 * d.dot(f.e_u) * f.e_u;
                CHECK((reflected - m).norm() < 1e-9);
            }
    }
}

TEST_CASE("pixel rays are deterministic")
{
    const ScanGeometry g = small_scan(uniform_angles(5, 2.0));
    const Ray a = pixel_ray(g, 3, 4, 2);
    const Ray b = pixel_ray(g, 3, 4, 2);
    CHECK(a.origin == b.origin);
    CHECK(a.direction == b.direction);
    CHECK(a.t_entry == b.t_entry);
    CHECK(a.t_exit == b.t_exit);
}

TEST_CASE("geometry construction is validated")
{
    VoxelGrid grid;
    grid.n_x = grid.n_y = grid.n_z = 8;
    DetectorGrid det;
    CHECK_THROWS_AS(ScanGeometry(100, 100, {0.0}, grid, det), std::invalid_argument);
    CHECK_THROWS_AS(ScanGeometry(-1, 100, {0.0}, grid, det), std::invalid_argument);
    CHECK_THROWS_AS(ScanGeometry(100, 200, {}, grid, det), std::invalid_argument);
    // Circumscribing sphere (radius ~6.9) would reach past the source.
    CHECK_THROWS_AS(ScanGeometry(6, 200, {0.0}, grid, det), std::invalid_argument);
    // ... or past the detector.
    CHECK_THROWS_AS(ScanGeometry(100, 105, {0.0}, grid, det), std::invalid_argument);
    grid.n_x = 0;
    CHECK_THROWS_AS(ScanGeometry(100, 200, {0.0}, grid, det), std::invalid_argument);
    grid.n_x = 8;
    det.pixel_size = Vec2(0.0, 1.0);
    CHECK_THROWS_AS(ScanGeometry(100, 200, {0.0}, grid, det), std::invalid_argument);
}

TEST_CASE("sub-scans keep the scanner")
{
    const ScanGeometry g = small_scan(uniform_angles(10, 2.0));
    const ScanGeometry sub = g.with_angles({3, 7});
    REQUIRE(sub.angle_count() == 4);
    CHECK(sub.angles()[0] == g.angles()[3]);
    CHECK(pixel_ray(sub, 1, 4, 4).direction == pixel_ray(g, 4, 4, 4).direction);
    CHECK_THROWS_AS(g.with_angles({8, 11}), std::out_of_range);
}

TEST_CASE("standard geometry covers the grid shadow")
{
    const ScanGeometry g = standard_geometry(16, 24, 24, 8);
    const DetectorGrid& d = g.detector();
    for (Index a = 0; a < g.angle_count(); ++a) {
        CHECK(pixel_ray(g, a, 0, d.n_v / 2).misses());
        CHECK(pixel_ray(g, a, d.n_u - 1, d.n_v / 2).misses());
        CHECK(pixel_ray(g, a, d.n_u / 2, 0).misses());
    }
}
