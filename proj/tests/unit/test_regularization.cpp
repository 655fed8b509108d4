#include <doctest.h>

#include <cmath>

#include "cbct/phantom.hpp"
#include "cbct/random.hpp"
#include "cbct/regularization.hpp"
#include "oracles.hpp"

using namespace cbct;

namespace {

VoxelGrid cube(Index n)
{
    VoxelGrid g;
    g.n_x = g.n_y = g.n_z = n;
    return g;
}

TvParams gradient_params(Index iters, double step)
{
    TvParams p;
    p.minimizer = TvMinimizer::GradientDescent;
    p.inner_iters = iters;
    p.halo_depth = iters;
    p.step = step;
    return p;
}

TvParams rof_params(Index iters, double lambda)
{
    TvParams p;
    p.minimizer = TvMinimizer::Rof;
    p.inner_iters = iters;
    p.halo_depth = iters;
    p.lambda = lambda;
    return p;
}

DevicePool roomy_pool(Index devices)
{
    DeviceSpec spec;
    spec.memory_budget = kGiB;
    return DevicePool::uniform(devices, spec);
}

double closed_form_box_tv(const Box& b)
{
    const double a = static_cast<double>(b.hi.x() - b.lo.x());
    const double bb = static_cast<double>(b.hi.y() - b.lo.y());
    const double c = static_cast<double>(b.hi.z() - b.lo.z());
    const double faces = bb * c + a * c + a * bb;
    const double singles = (bb - 1) * (c - 1) + (a - 1) * (c - 1) + (a - 1) * (bb - 1);
    return b.value * (faces + singles + std::sqrt(2.0) * (a + bb + c - 3) + std::sqrt(3.0));
}

}  // namespace

TEST_CASE("tv norm: definitions")
{
    CHECK(tv_norm(Volume::constant(cube(6), 3.5f)) == 0.0);

    Volume spike = Volume::zeros(cube(5));
    spike.at(2, 2, 2) = 1.0f;
    CHECK(tv_norm(spike) == doctest::Approx(std::sqrt(3.0) + 3.0).epsilon(1e-12));

    Rng rng(1);
    Volume r = Volume::zeros(cube(7));
    rng.fill_uniform(r.data);
    Volume scaled = r;
    scaled.data *= 2.5f;
    CHECK(tv_norm(scaled) == doctest::Approx(2.5 * tv_norm(r)).epsilon(1e-6));

    VoxelGrid flat = cube(4);
    flat.n_z = 1;
    CHECK_THROWS_AS(tv_norm(Volume::zeros(flat)), std::invalid_argument);
}

TEST_CASE("tv norm: block phantom matches the closed form")
{
    const VoxelGrid g = cube(32);
    double expected = 0.0;
    for (const Box& b : block_layout(g))
        expected += closed_form_box_tv(b);
    CHECK(tv_norm(phantom(PhantomKind::Blocks, g)) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("gradient descent: fixed point and descent")
{
    const Volume flat = Volume::constant(cube(8), 0.7f);
    CHECK((minimize_tv_gradient(flat, gradient_params(10, 0.1)).data == flat.data).all());

    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Volume x = Volume::zeros(cube(10));
        rng.fill_uniform(x.data, -1.0f, 2.0f);
        const double range = x.data.maxCoeff() - x.data.minCoeff();
        double before = tv_norm(x);
        for (int it = 0; it < 5; ++it) {
            x = minimize_tv_gradient(x, gradient_params(1, 1e-3 * range));
            const double after = tv_norm(x);
            CHECK(after <= before);
            before = after;
        }
    }
    CHECK_THROWS_AS(minimize_tv_gradient(flat, gradient_params(1, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS(minimize_tv_gradient(flat, rof_params(1, 0.1)), std::invalid_argument);
}

TEST_CASE("gradient descent: halves the TV of a noisy block phantom")
{
    Volume x = phantom(PhantomKind::Blocks, cube(32));
    Rng rng(17);
    rng.add_noise(x.data, 0.05);
    const double before = tv_norm(x);
    // Each step moves the image by `step` in L2; 60 steps of 0.15 cover most of the noise energy (~9.1).
    const Volume y = minimize_tv_gradient(x, gradient_params(60, 0.15));
    const double after = tv_norm(y);
    MESSAGE("TV " << before << " -> " << after);
    CHECK(after <= 0.5 * before);
}

TEST_CASE("rof: fixed points and limits")
{
    const Volume flat = Volume::constant(cube(6), 1.25f);
    const Volume same = minimize_rof(flat, rof_params(50, 0.3));
    CHECK((same.data - flat.data).abs().maxCoeff() <= 1e-6);

    Rng rng(2);
    Volume x = Volume::zeros(cube(8));
    rng.fill_uniform(x.data);
    const Volume near = minimize_rof(x, rof_params(50, 1e-7));
    CHECK((near.data - x.data).abs().maxCoeff() <= 1e-5);
    CHECK_THROWS_AS(minimize_rof(x, rof_params(5, 0.0)), std::invalid_argument);
}

TEST_CASE("rof: dual field stays in the unit ball")
{
    Rng rng(3);
    Volume x = Volume::zeros(cube(12));
    rng.fill_uniform(x.data, 0.0f, 4.0f);
    RofDiagnostics diag;
    minimize_rof(x, rof_params(100, 0.5), &diag);
    CHECK(diag.max_dual_norm <= 1.0 + 1e-6);
    CHECK(diag.max_dual_norm > 0.5);
}

TEST_CASE("rof: a z-only profile matches exact 1D TV denoising")
{
    VoxelGrid g;
    g.n_x = g.n_y = 4;
    g.n_z = 32;
    Rng rng(11);
    std::vector<double> profile(32);
    for (Index k = 0; k < 32; ++k)
        profile[k] = (k < 10 ? 1.0 : k < 22 ? 0.2 : 0.6) + rng.normal(0.0, 0.05);
    Volume x = Volume::zeros(g);
    for (Index k = 0; k < 32; ++k)
        for (Index j = 0; j < 4; ++j)
            for (Index i = 0; i < 4; ++i)
                x.at(i, j, k) = static_cast<float>(profile[k]);
    const double lambda = 0.08;
    const std::vector<double> exact = oracle::tv1d_denoise(profile, lambda);
    CHECK(oracle::tv1d_certificate_gap(profile, exact, lambda) < 1e-9);

    const Volume u = minimize_rof(x, rof_params(4000, lambda));
    double worst = 0.0;
    for (Index k = 0; k < 32; ++k)
        for (Index j = 0; j < 4; ++j)
            for (Index i = 0; i < 4; ++i)
                worst = std::max(worst, std::abs(u.at(i, j, k) - exact[k]));
    MESSAGE("max deviation from 1D oracle " << worst);
    CHECK(worst < 1e-3);
}

TEST_CASE("halo slabs: cutting, exchange and gathering")
{
    Rng rng(4);
    Volume x = Volume::zeros(cube(10));
    rng.fill_uniform(x.data);
    std::vector<HaloSlab> slabs = make_halo_slabs(x, 3, 2);
    REQUIRE(slabs.size() == 3);
    CHECK(slabs[0].core == IndexRange{0, 4});
    CHECK(slabs[0].held == IndexRange{0, 6});
    CHECK(slabs[1].held == IndexRange{2, 10});
    CHECK(slabs[2].core == IndexRange{8, 10});
    for (HaloSlab& s : slabs)
        s.data.data.setConstant(-1.0f);
    for (HaloSlab& s : slabs) {
        Volume core = x.extract(s.core);
        s.data.insert(core);
    }
    exchange_halos(slabs);
    for (const HaloSlab& s : slabs)
        CHECK((s.data.data == x.extract(s.held).data).all());
    CHECK((gather_cores(slabs).data == x.data).all());
}

TEST_CASE("split minimize: one roomy device is the monolithic minimizer")
{
    Rng rng(6);
    Volume x = phantom(PhantomKind::Blocks, cube(16));
    rng.add_noise(x.data, 0.05);
    SplitReport report;
    TvParams p = gradient_params(6, 0.05);
    CHECK((split_minimize(x, roomy_pool(1), p, &report).data == minimize_tv_gradient(x, p).data).all());
    CHECK(report.blocks == 1);
    CHECK(report.resident);
    TvParams r = rof_params(6, 0.1);
    CHECK((split_minimize(x, roomy_pool(1), r).data == minimize_rof(x, r).data).all());
}

TEST_CASE("split minimize: halo epochs reproduce the monolithic run")
{
    Rng rng(8);
    Volume x = phantom(PhantomKind::Blocks, cube(24));
    rng.add_noise(x.data, 0.05);
    for (Index devices : {2, 3}) {
        TvParams p = gradient_params(4, 0.05);
        p.outer_syncs = 3;
        SplitReport report;
        const Volume split = split_minimize(x, roomy_pool(devices), p, &report);
        CHECK(report.blocks == devices);
        CHECK(max_relative_error(split.data, minimize_tv_gradient(x, gradient_params(12, 0.05)).data) <= 1e-6);

        TvParams r = rof_params(4, 0.1);
        r.outer_syncs = 3;
        const Volume rsplit = split_minimize(x, roomy_pool(devices), r);
        CHECK(max_relative_error(rsplit.data, minimize_rof(x, rof_params(12, 0.1)).data) <= 1e-6);
    }
}

TEST_CASE("split minimize: blocks round-trip through the host when they do not fit")
{
    Rng rng(9);
    Volume x = phantom(PhantomKind::Blocks, cube(24));
    rng.add_noise(x.data, 0.05);
    TvParams p = gradient_params(3, 0.05);
    p.outer_syncs = 2;
    DeviceSpec small;
    small.memory_budget = 24 * 24 * 4 * 2 * 12;  // twelve slices of two copies
    SplitReport report;
    PlanOptions full;
    full.usable_fraction = 1.0;
    const Volume split = split_minimize(x, DevicePool::uniform(2, small), p, &report, full);
    CHECK(report.blocks > 2);
    CHECK_FALSE(report.resident);
    CHECK(report.block_bytes <= small.memory_budget);
    CHECK(max_relative_error(split.data, minimize_tv_gradient(x, gradient_params(6, 0.05)).data) <= 1e-6);
}

TEST_CASE("split minimize: local norm estimate stays close")
{
    Rng rng(10);
    Volume x = Volume::zeros(cube(24));
    rng.fill_uniform(x.data);
    TvParams p = gradient_params(8, 0.5);
    p.outer_syncs = 2;
    const double exact = tv_norm(split_minimize(x, roomy_pool(2), p));
    p.norm_mode = NormMode::LocalApprox;
    const double approx = tv_norm(split_minimize(x, roomy_pool(2), p));
    CHECK(std::abs(approx - exact) <= 0.02 * exact);
}

TEST_CASE("split minimize: errors")
{
    const Volume x = Volume::zeros(cube(16));
    TvParams p = gradient_params(8, 0.1);
    p.halo_depth = 4;
    CHECK_THROWS_AS(split_minimize(x, roomy_pool(2), p), std::invalid_argument);
    DeviceSpec tiny;
    tiny.memory_budget = 1000;
    CHECK_THROWS_AS(split_minimize(x, DevicePool::uniform(2, tiny), gradient_params(2, 0.1)), InfeasiblePlan);
}
