#include "cbct/phantom.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cbct {

PhantomKind parse_phantom_kind(const std::string& text)
{
    if (text == "shepp-logan" || text == "shepp_logan" || text == "SheppLogan3D")
        return PhantomKind::SheppLogan3D;
    if (text == "cylinder" || text == "UniformCylinder")
        return PhantomKind::UniformCylinder;
    if (text == "blocks" || text == "Blocks")
        return PhantomKind::Blocks;
    throw std::invalid_argument("unknown phantom '" + text + "' (expected shepp-logan, cylinder or blocks)");
}

const char* to_string(PhantomKind kind)
{
    switch (kind) {
    case PhantomKind::SheppLogan3D:
        return "shepp-logan";
    case PhantomKind::UniformCylinder:
        return "cylinder";
    case PhantomKind::Blocks:
        return "blocks";
    }
    return "?";
}

const std::vector<Ellipsoid>& shepp_logan_table()
{
    //                                 A      a      b      c      x0       y0     z0    phi
    static const std::vector<Ellipsoid> table = {
        {1.0, 0.6900, 0.920, 0.810, 0.00, 0.0000, 0.00, 0.0},
        {-0.8, 0.6624, 0.874, 0.780, 0.00, -0.0184, 0.00, 0.0},
        {-0.2, 0.1100, 0.310, 0.220, 0.22, 0.0000, 0.00, -18.0},
        {-0.2, 0.1600, 0.410, 0.280, -0.22, 0.0000, 0.00, 18.0},
        {0.1, 0.2100, 0.250, 0.410, 0.00, 0.3500, -0.15, 0.0},
        {0.1, 0.0460, 0.046, 0.050, 0.00, 0.1000, 0.25, 0.0},
        {0.1, 0.0460, 0.046, 0.050, 0.00, -0.1000, 0.25, 0.0},
        {0.1, 0.0460, 0.023, 0.050, -0.08, -0.6050, 0.00, 0.0},
        {0.1, 0.0230, 0.023, 0.020, 0.00, -0.6060, 0.00, 0.0},
        {0.1, 0.0230, 0.046, 0.020, 0.06, -0.6050, 0.00, 0.0},
    };
    return table;
}

std::vector<Box> block_layout(const VoxelGrid& grid)
{
    auto at = [](Index n, Index part) { return n * part / 32; };
    auto box = [&](Index x0, Index x1, Index y0, Index y1, Index z0, Index z1, float value) {
        return Box{Index3(at(grid.n_x, x0), at(grid.n_y, y0), at(grid.n_z, z0)),
                   Index3(at(grid.n_x, x1), at(grid.n_y, y1), at(grid.n_z, z1)), value};
    };
    return {box(4, 14, 4, 14, 4, 14, 1.0f), box(18, 28, 4, 12, 6, 26, 0.6f), box(4, 12, 18, 28, 16, 28, 0.3f),
            box(16, 28, 18, 28, 2, 12, 0.8f)};
}

Volume phantom(PhantomKind kind, const VoxelGrid& grid)
{
    Volume v = Volume::zeros(grid);
    const Vec3 half = 0.5 * grid.extent();
    switch (kind) {
    case PhantomKind::SheppLogan3D: {
        const auto& table = shepp_logan_table();
        for (Index k = 0; k < grid.n_z; ++k)
            for (Index j = 0; j < grid.n_y; ++j)
                for (Index i = 0; i < grid.n_x; ++i) {
                    const Vec3 p = (grid.voxel_center(i, j, k) - grid.origin_offset).cwiseQuotient(half);
                    double value = 0.0;
                    for (const Ellipsoid& e : table) {
                        const double phi = e.phi_degrees * std::numbers::pi / 180.0;
                        const double dx = p.x() - e.x0, dy = p.y() - e.y0, dz = p.z() - e.z0;
                        const double xr = std::cos(phi) * dx + std::sin(phi) * dy;
                        const double yr = -std::sin(phi) * dx + std::cos(phi) * dy;
                        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) + (dz * dz) / (e.c * e.c) <= 1.0)
                            value += e.value;
                    }
                    v.at(i, j, k) = static_cast<float>(value);
                }
        break;
    }
    case PhantomKind::UniformCylinder: {
        const double radius = 0.4 * std::min(grid.extent().x(), grid.extent().y());
        const double half_height = 0.4 * grid.extent().z();
        for (Index k = 0; k < grid.n_z; ++k)
            for (Index j = 0; j < grid.n_y; ++j)
                for (Index i = 0; i < grid.n_x; ++i) {
                    const Vec3 p = grid.voxel_center(i, j, k) - grid.origin_offset;
                    if (std::hypot(p.x(), p.y()) <= radius && std::abs(p.z()) <= half_height)
                        v.at(i, j, k) = kCylinderValue;
                }
        break;
    }
    case PhantomKind::Blocks:
        for (const Box& b : block_layout(grid))
            for (Index k = b.lo.z(); k < b.hi.z(); ++k)
                for (Index j = b.lo.y(); j < b.hi.y(); ++j)
                    for (Index i = b.lo.x(); i < b.hi.x(); ++i)
                        v.at(i, j, k) = b.value;
        break;
    }
    return v;
}

}  // namespace cbct
