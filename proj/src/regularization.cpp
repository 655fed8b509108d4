#include "cbct/regularization.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cbct/parallel.hpp"

namespace cbct {

void validate(const TvParams& params)
{
    if (params.inner_iters < 1 || params.outer_syncs < 1)
        throw std::invalid_argument("TV iteration counts must be >= 1");
    if (params.halo_depth < 0)
        throw std::invalid_argument("halo depth must be non-negative");
    if (params.minimizer == TvMinimizer::GradientDescent && !(params.step > 0.0))
        throw std::invalid_argument("TV gradient step must be positive");
    if (params.minimizer == TvMinimizer::Rof && !(params.lambda > 0.0 && std::isfinite(params.lambda)))
        throw std::invalid_argument("ROF lambda must be positive");
}

double tv_norm(const Volume& volume)
{
    const VoxelGrid& g = volume.grid;
    if (g.n_x < 2 || g.n_y < 2 || volume.depth() < 2)
        throw std::invalid_argument("TV needs at least two voxels along every axis");
    const Index nx = g.n_x, ny = g.n_y, nz = volume.depth();
    const float* u = volume.data.data();
    double total = 0.0;
    for (Index k = 0; k < nz; ++k)
        for (Index j = 0; j < ny; ++j)
            for (Index i = 0; i < nx; ++i) {
                const Index v = i + nx * (j + ny * k);
                const double c = u[v];
                const double dx = i + 1 < nx ? u[v + 1] - c : 0.0;
                const double dy = j + 1 < ny ? u[v + nx] - c : 0.0;
                const double dz = k + 1 < nz ? u[v + nx * ny] - c : 0.0;
                total += std::sqrt(dx * dx + dy * dy + dz * dz);
            }
    return total;
}

namespace {

// A block of slices stored x-fastest; both z ends of the local array are treated as faces.
struct Shape {
    Index nx, ny, nz;
    bool open_top = false;  ///< the last slice is a ghost, not the volume's upper face
    Index slice() const { return nx * ny; }
    Index count() const { return nx * ny * nz; }
};

/// Smoothed TV subgradient: g_v = -sum_a d_a(v)/n(v) + sum_a d_a(v-a)/n(v-a).
void tv_gradient(const float* u, float* g, const Shape& s)
{
    const Index sx = 1, sy = s.nx, sz = s.slice();
    auto norm_at = [&](Index i, Index j, Index k, Index v, double& dx, double& dy, double& dz) {
        const double c = u[v];
        dx = i + 1 < s.nx ? u[v + sx] - c : 0.0;
        dy = j + 1 < s.ny ? u[v + sy] - c : 0.0;
        dz = k + 1 < s.nz ? u[v + sz] - c : 0.0;
        return std::sqrt(dx * dx + dy * dy + dz * dz + kTvEpsilon);
    };
    parallel_for(s.nz, [&](Index k) {
        double dx, dy, dz, ex, ey, ez;
        for (Index j = 0; j < s.ny; ++j)
            for (Index i = 0; i < s.nx; ++i) {
                const Index v = i + s.nx * (j + s.ny * k);
                const double n = norm_at(i, j, k, v, dx, dy, dz);
                double value = -(dx + dy + dz) / n;
                if (i > 0) {
                    const double m = norm_at(i - 1, j, k, v - sx, ex, ey, ez);
                    value += ex / m;
                }
                if (j > 0) {
                    const double m = norm_at(i, j - 1, k, v - sy, ex, ey, ez);
                    value += ey / m;
                }
                if (k > 0) {
                    const double m = norm_at(i, j, k - 1, v - sz, ex, ey, ez);
                    value += ez / m;
                }
                g[v] = static_cast<float>(value);
            }
    });
}

/// Adjoint of minus the forward-difference gradient (zero gradient past the last slice).
double divergence(const float* px, const float* py, const float* pz, const Shape& s, Index i, Index j, Index k,
                  Index v)
{
    double d = 0.0;
    if (i + 1 < s.nx)
        d += px[v];
    if (i > 0)
        d -= px[v - 1];
    if (j + 1 < s.ny)
        d += py[v];
    if (j > 0)
        d -= py[v - s.nx];
    if (k + 1 < s.nz || s.open_top)
        d += pz[v];
    if (k > 0)
        d -= pz[v - s.slice()];
    return d;
}

struct Block {
    HaloSlab slab;  // u for gradient descent, f for ROF
    Shape shape;
    Buffer g;                   // gradient descent
    Buffer px, py, pz, w;       // ROF dual field and its work array

    Index core_offset() const { return slab.ghosts_below() * shape.slice(); }
    Index core_count() const { return slab.core.size() * shape.slice(); }
};

/// One projected-gradient step on the dual field; returns the largest |p| afterwards.
double rof_step(Block& b, double lambda)
{
    const Shape& s = b.shape;
    const float* f = b.slab.data.data.data();
    float* px = b.px.data();
    float* py = b.py.data();
    float* pz = b.pz.data();
    float* w = b.w.data();
    const double inv_lambda = 1.0 / lambda;
    parallel_for(s.nz, [&](Index k) {
        for (Index j = 0; j < s.ny; ++j)
            for (Index i = 0; i < s.nx; ++i) {
                const Index v = i + s.nx * (j + s.ny * k);
                w[v] = static_cast<float>(divergence(px, py, pz, s, i, j, k, v) - f[v] * inv_lambda);
            }
    });
    std::vector<double> slice_max(static_cast<std::size_t>(s.nz), 0.0);
    parallel_for(s.nz, [&](Index k) {
        double peak = 0.0;
        for (Index j = 0; j < s.ny; ++j)
            for (Index i = 0; i < s.nx; ++i) {
                const Index v = i + s.nx * (j + s.ny * k);
                const double c = w[v];
                const double qx = px[v] + kRofDualStep * (i + 1 < s.nx ? w[v + 1] - c : 0.0);
                const double qy = py[v] + kRofDualStep * (j + 1 < s.ny ? w[v + s.nx] - c : 0.0);
                const double qz = pz[v] + kRofDualStep * (k + 1 < s.nz ? w[v + s.slice()] - c : 0.0);
                const double scale = std::max(1.0, std::sqrt(qx * qx + qy * qy + qz * qz));
                px[v] = static_cast<float>(qx / scale);
                py[v] = static_cast<float>(qy / scale);
                pz[v] = static_cast<float>(qz / scale);
                const double a = px[v], b2 = py[v], c2 = pz[v];
                peak = std::max(peak, std::sqrt(a * a + b2 * b2 + c2 * c2));
            }
        slice_max[static_cast<std::size_t>(k)] = peak;
    });
    return *std::max_element(slice_max.begin(), slice_max.end());
}

/// u = f - lambda * div p over the core of a block.
void rof_primal(const Block& b, double lambda, Volume& out)
{
    const Shape& s = b.shape;
    const float* f = b.slab.data.data.data();
    const Index below = b.slab.ghosts_below();
    parallel_for(b.slab.core.size(), [&](Index kc) {
        const Index k = kc + below;
        for (Index j = 0; j < s.ny; ++j)
            for (Index i = 0; i < s.nx; ++i) {
                const Index v = i + s.nx * (j + s.ny * k);
                const double d = divergence(b.px.data(), b.py.data(), b.pz.data(), s, i, j, k, v);
                out.at(i, j, b.slab.core.begin + kc) = static_cast<float>(f[v] - lambda * d);
            }
    });
}

/// Copies ghost slices of `field(block)` from the owners' cores.
template <typename Field>
void exchange(std::vector<Block>& blocks, Field&& field)
{
    for (Block& dst : blocks) {
        const Index slice = dst.shape.slice();
        for (Index z = dst.slab.held.begin; z < dst.slab.held.end; ++z) {
            if (dst.slab.core.contains(z))
                continue;
            for (Block& src : blocks)
                if (src.slab.core.contains(z)) {
                    const Buffer& from = field(src);
                    Buffer& to = field(dst);
                    to.segment((z - dst.slab.held.begin) * slice, slice) =
                        from.segment((z - src.slab.held.begin) * slice, slice);
                    break;
                }
        }
    }
}

std::vector<Block> make_blocks(const Volume& volume, Index count, Index halo, TvMinimizer minimizer)
{
    std::vector<Block> blocks;
    for (HaloSlab& slab : make_halo_slabs(volume, count, halo)) {
        Block b;
        b.shape = {volume.grid.n_x, volume.grid.n_y, slab.held.size(), slab.held.end < volume.grid.n_z};
        b.slab = std::move(slab);
        const Index n = b.shape.count();
        if (minimizer == TvMinimizer::GradientDescent) {
            b.g = Buffer::Zero(n);
        } else {
            b.px = Buffer::Zero(n);
            b.py = Buffer::Zero(n);
            b.pz = Buffer::Zero(n);
            b.w = Buffer::Zero(n);
        }
        blocks.push_back(std::move(b));
    }
    return blocks;
}

/// Per-slice sums of g^2 over the block's core, in slice order.
std::vector<double> core_slice_sums(const Block& b)
{
    const Index slice = b.shape.slice();
    std::vector<double> sums(static_cast<std::size_t>(b.slab.core.size()), 0.0);
    const float* g = b.g.data() + b.core_offset();
    for (Index k = 0; k < b.slab.core.size(); ++k) {
        double s = 0.0;
        for (Index v = 0; v < slice; ++v) {
            const double x = g[k * slice + v];
            s += x * x;
        }
        sums[static_cast<std::size_t>(k)] = s;
    }
    return sums;
}

void gradient_iteration(std::vector<Block>& blocks, const TvParams& params, Index total_voxels)
{
    for (Block& b : blocks)
        tv_gradient(b.slab.data.data.data(), b.g.data(), b.shape);

    // Blocks are ordered by z, so concatenated slice sums run in ascending z.
    std::vector<double> block_sq(blocks.size(), 0.0);
    double global_sq = 0.0;
    for (std::size_t n = 0; n < blocks.size(); ++n)
        for (double s : core_slice_sums(blocks[n])) {
            block_sq[n] += s;
            global_sq += s;
        }

    for (std::size_t n = 0; n < blocks.size(); ++n) {
        Block& b = blocks[n];
        double norm = std::sqrt(global_sq);
        if (params.norm_mode == NormMode::LocalApprox)
            norm = std::sqrt(block_sq[n]) *
                   std::sqrt(static_cast<double>(total_voxels) / static_cast<double>(b.core_count()));
        if (!(norm > 0.0))
            continue;
        const double scale = params.step / norm;
        float* u = b.slab.data.data.data();
        const float* g = b.g.data();
        for (Index v = 0; v < b.shape.count(); ++v)
            u[v] = static_cast<float>(u[v] - scale * g[v]);
    }
}

/// Runs epochs x inner iterations over `count` blocks, exchanging halos between epochs.
Volume run_blocks(const Volume& volume, Index count, Index halo, Index epochs, const TvParams& params,
                  RofDiagnostics* diagnostics)
{
    std::vector<Block> blocks = make_blocks(volume, count, halo, params.minimizer);
    const Index total = volume.grid.slice_voxels() * volume.depth();
    double peak = 0.0;
    for (Index epoch = 0; epoch < epochs; ++epoch) {
        for (Index it = 0; it < params.inner_iters; ++it) {
            if (params.minimizer == TvMinimizer::GradientDescent) {
                gradient_iteration(blocks, params, total);
            } else {
                for (Block& b : blocks)
                    peak = std::max(peak, rof_step(b, params.lambda));
            }
        }
        if (blocks.size() > 1) {
            if (params.minimizer == TvMinimizer::GradientDescent) {
                exchange(blocks, [](Block& b) -> Buffer& { return b.slab.data.data; });
            } else {
                exchange(blocks, [](Block& b) -> Buffer& { return b.px; });
                exchange(blocks, [](Block& b) -> Buffer& { return b.py; });
                exchange(blocks, [](Block& b) -> Buffer& { return b.pz; });
            }
        }
    }
    if (diagnostics)
        diagnostics->max_dual_norm = peak;

    if (params.minimizer == TvMinimizer::GradientDescent) {
        std::vector<HaloSlab> slabs;
        for (Block& b : blocks)
            slabs.push_back(std::move(b.slab));
        return gather_cores(slabs);
    }
    Volume out = Volume::zeros(volume.grid, volume.slab);
    for (const Block& b : blocks)
        rof_primal(b, params.lambda, out);
    return out;
}

void require_full(const Volume& volume)
{
    if (!volume.is_full())
        throw std::invalid_argument("TV minimization needs the whole volume");
}

}  // namespace

std::vector<HaloSlab> make_halo_slabs(const Volume& volume, Index blocks, Index halo_depth)
{
    require_full(volume);
    const Index n_z = volume.grid.n_z;
    if (blocks < 1 || blocks > n_z)
        throw std::invalid_argument("block count must lie in [1, n_z]");
    const Index depth = ceil_div(n_z, blocks);
    std::vector<HaloSlab> slabs;
    for (Index z = 0; z < n_z; z += depth) {
        HaloSlab s;
        s.core = {z, std::min(z + depth, n_z)};
        s.halo_depth = halo_depth;
        s.held = {std::max<Index>(0, s.core.begin - halo_depth), std::min(n_z, s.core.end + halo_depth)};
        s.data = volume.extract(s.held);
        slabs.push_back(std::move(s));
    }
    return slabs;
}

void exchange_halos(std::vector<HaloSlab>& slabs)
{
    for (HaloSlab& dst : slabs)
        for (Index z = dst.held.begin; z < dst.held.end; ++z) {
            if (dst.core.contains(z))
                continue;
            for (const HaloSlab& src : slabs)
                if (src.core.contains(z)) {
                    dst.data.insert(src.data.extract({z, z + 1}));
                    break;
                }
        }
}

Volume gather_cores(const std::vector<HaloSlab>& slabs)
{
    if (slabs.empty())
        throw std::invalid_argument("no slabs to gather");
    Volume out = Volume::zeros(slabs.front().data.grid);
    for (const HaloSlab& s : slabs)
        out.insert(s.data.extract(s.core));
    return out;
}

Volume minimize_tv_gradient(const Volume& volume, const TvParams& params)
{
    validate(params);
    if (params.minimizer != TvMinimizer::GradientDescent)
        throw std::invalid_argument("minimize_tv_gradient needs the gradient-descent minimizer");
    require_full(volume);
    return run_blocks(volume, 1, 0, 1, params, nullptr);
}

Volume minimize_rof(const Volume& volume, const TvParams& params, RofDiagnostics* diagnostics)
{
    validate(params);
    if (params.minimizer != TvMinimizer::Rof)
        throw std::invalid_argument("minimize_rof needs the ROF minimizer");
    require_full(volume);
    return run_blocks(volume, 1, 0, 1, params, diagnostics);
}

Volume split_minimize(const Volume& volume, const DevicePool& pool, const TvParams& params, SplitReport* report,
                      const PlanOptions& options)
{
    validate(params);
    validate(pool);
    require_full(volume);
    if (params.halo_depth < params.inner_iters)
        throw std::invalid_argument("halo depth " + std::to_string(params.halo_depth) + " is shallower than " +
                                    std::to_string(params.inner_iters) + " inner iterations");
    if (!(options.usable_fraction > 0.0 && options.usable_fraction <= 1.0))
        throw std::invalid_argument("usable fraction must lie in (0, 1]");

    const Index n_z = volume.grid.n_z;
    const Bytes slice = slice_bytes(volume.grid);
    const Bytes copies = params.minimizer == TvMinimizer::GradientDescent ? 2 : 6;
    const Bytes usable =
        static_cast<Bytes>(std::floor(options.usable_fraction * static_cast<double>(pool.min_budget())));
    auto block_bytes = [&](Index blocks) {
        const Index held = blocks == 1 ? n_z : std::min(n_z, ceil_div(n_z, blocks) + 2 * params.halo_depth);
        return static_cast<Bytes>(held) * slice * copies;
    };

    Index blocks = std::min(pool.size(), n_z);
    while (blocks <= n_z && block_bytes(blocks) > usable)
        ++blocks;
    if (blocks > n_z)
        throw InfeasiblePlan("one slice with " + std::to_string(params.halo_depth) + "-deep halos and " +
                             std::to_string(copies) + " copies exceeds the usable device budget");
    // Equal-depth cutting may yield fewer blocks than requested.
    blocks = ceil_div(n_z, ceil_div(n_z, blocks));

    Volume out = run_blocks(volume, blocks, params.halo_depth, params.outer_syncs, params, nullptr);

    if (report) {
        report->blocks = blocks;
        report->resident = blocks <= pool.size();
        report->block_bytes = block_bytes(blocks);
        const Bytes fields = params.minimizer == TvMinimizer::GradientDescent ? 1 : 3;
        Bytes ghosts = 0;
        for (const HaloSlab& s : make_halo_slabs(volume, blocks, params.halo_depth))
            ghosts += static_cast<Bytes>(s.ghosts_below() + s.ghosts_above());
        const Bytes image = static_cast<Bytes>(n_z) * slice;
        const Bytes epochs = static_cast<Bytes>(params.outer_syncs);
        if (report->resident) {
            report->bytes_moved = 2 * image + epochs * ghosts * slice * fields;
        } else {
            // Each epoch every block streams in with its halos and its core streams back,
            // for the image and every auxiliary field that persists between epochs.
            const Bytes persistent = params.minimizer == TvMinimizer::GradientDescent ? 1 : 4;
            report->bytes_moved = epochs * persistent * (image + ghosts * slice + image);
        }
    }
    return out;
}

}  // namespace cbct
