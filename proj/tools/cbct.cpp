#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbct/algorithms.hpp"
#include "cbct/io.hpp"
#include "cbct/phantom.hpp"
#include "cbct/pipeline.hpp"
#include "cbct/random.hpp"

using namespace cbct;

namespace {

/// Flags shared by every subcommand that needs a device pool or a scan.
struct Common {
    std::vector<std::string> devices;
    double usable_fraction = 0.95;
    Index chunk_angles = 0;
    Index splits = 0;
    std::uint64_t seed = 0;

    std::string geometry_file;
    Index size = 64;
    Index detector = 0;
    Index angles = 90;
    double arc = 2.0 * std::numbers::pi;

    DevicePool pool() const
    {
        if (devices.empty())
            return DevicePool::uniform(1, DeviceSpec{});
        DevicePool p;
        for (const std::string& d : devices)
            p.devices.push_back(parse_device_spec(d));
        validate(p);
        return p;
    }

    PlanOptions plan_options() const
    {
        PlanOptions o;
        o.usable_fraction = usable_fraction;
        if (splits > 0)
            o.forced_splits = splits;
        return o;
    }

    ForwardTileSpec forward_tiles() const
    {
        ForwardTileSpec t;
        if (chunk_angles > 0)
            t.chunk_angles = chunk_angles;
        return t;
    }

    BackwardTileSpec backward_tiles() const
    {
        BackwardTileSpec t;
        if (chunk_angles > 0)
            t.chunk_angles = chunk_angles;
        return t;
    }

    /// The geometry file if given, otherwise the standard scan around `grid`.
    ScanGeometry geometry(const std::optional<VoxelGrid>& grid = std::nullopt) const
    {
        if (!geometry_file.empty())
            return read_geometry(geometry_file);
        VoxelGrid g;
        if (grid) {
            g = *grid;
        } else {
            g.n_x = g.n_y = g.n_z = size;
        }
        const Index n_det = detector > 0 ? detector : g.n_x + g.n_x / 2;
        return standard_geometry(g, n_det, n_det, angles, arc);
    }
};

void add_pool_flags(CLI::App& app, Common& c)
{
    app.add_option("--device", c.devices,
                   "Device spec, repeatable: mem=<bytes>,bwpage=<B/s>,bwpin=<B/s>,pin=<s/B>,fwd=,bwd=,acc=");
    app.add_option("--usable-fraction", c.usable_fraction, "Fraction of each budget the planner may fill")
        ->check(CLI::Range(0.01, 1.0));
    app.add_option("--chunk-angles", c.chunk_angles, "Projections per kernel launch")->check(CLI::PositiveNumber);
    app.add_option("--splits", c.splits, "Force this many image slabs")->check(CLI::PositiveNumber);
}

void add_geometry_flags(CLI::App& app, Common& c)
{
    app.add_option("--geometry", c.geometry_file, "Geometry sidecar; overrides the flags below");
    app.add_option("--size", c.size, "Voxels per axis of a cubic grid")->check(CLI::PositiveNumber);
    app.add_option("--detector", c.detector, "Detector pixels per side (default 1.5 x grid width)")
        ->check(CLI::PositiveNumber);
    app.add_option("--angles", c.angles, "Number of projections")->check(CLI::PositiveNumber);
    app.add_option("--arc", c.arc, "Scanned arc in radians")->check(CLI::PositiveNumber);
}

void add_seed_flag(CLI::App& app, Common& c)
{
    app.add_option("--seed", c.seed, "Seed for every random draw");
}

int run_phantom(const Common& c, const std::string& kind, double noise, const std::string& out,
                const std::string& geometry_out)
{
    const ScanGeometry g = c.geometry();
    Volume v = phantom(parse_phantom_kind(kind), g.grid());
    if (noise > 0.0) {
        Rng rng(c.seed);
        rng.add_noise(v.data, noise);
    }
    write_volume(out, v);
    if (!geometry_out.empty())
        write_geometry(geometry_out, g);
    return 0;
}

int run_project(const Common& c, const std::string& in, const std::string& method, double noise,
                const std::string& out, const std::string& trace_out)
{
    const Volume v = read_volume(in);
    const ScanGeometry g = c.geometry(v.grid);
    if (!(g.grid() == v.grid))
        throw std::invalid_argument("volume grid does not match the geometry");
    const DevicePool pool = c.pool();
    const SplitPlan plan = plan_forward(g, pool, c.forward_tiles(), c.plan_options());
    const ForwardMethod m = method == "siddon"         ? ForwardMethod::Siddon
                            : method == "interpolated" ? ForwardMethod::Interpolated
                                                       : throw std::invalid_argument("unknown method '" + method + "'");
    ExecutionTrace trace;
    ProjectionStack p = execute_forward(v, g, pool, plan, m, &trace, c.forward_tiles());
    if (noise > 0.0) {
        Rng rng(c.seed);
        rng.add_noise(p.data, noise);
    }
    write_projections(out, p, &g);
    if (!trace_out.empty()) {
        std::ostringstream text;
        write_trace(text, trace);
        write_text_file(trace_out, text.str());
    }
    return 0;
}

ScanGeometry projection_geometry(const Common& c, const ProjectionFile& file)
{
    if (!c.geometry_file.empty())
        return read_geometry(c.geometry_file);
    if (!file.geometry)
        throw std::invalid_argument("projections carry no geometry; pass --geometry");
    return *file.geometry;
}

int run_backproject(const Common& c, const std::string& in, const std::string& mode, const std::string& out)
{
    const ProjectionFile file = read_projections(in);
    const ScanGeometry g = projection_geometry(c, file);
    const WeightMode w = mode == "fdk"       ? WeightMode::FDK
                         : mode == "matched" ? WeightMode::Matched
                                             : throw std::invalid_argument("unknown mode '" + mode + "'");
    const DevicePool pool = c.pool();
    const SplitPlan plan = plan_backward(g, pool, c.backward_tiles(), c.plan_options());
    write_volume(out, execute_backward(file.projections, g, pool, plan, w, nullptr, c.backward_tiles()));
    return 0;
}

struct ReconFlags {
    std::string algorithm = "cgls";
    Index iterations = 10;
    Index block_size = 1;
    double relaxation = 1.0;
    std::string tv;
    Index tv_iters = 20;
    double tv_step = 1e-3;
    double tv_lambda = 0.05;
    std::string residuals;
};

int run_recon(const Common& c, const ReconFlags& f, const std::string& in, const std::string& out)
{
    const ProjectionFile file = read_projections(in);
    const ScanGeometry g = projection_geometry(c, file);
    ReconConfig config;
    config.algorithm = parse_algorithm(f.algorithm);
    config.iterations = f.iterations;
    config.block_size = f.block_size;
    config.relaxation = f.relaxation;
    config.pool = c.pool();
    config.plan_options = c.plan_options();
    config.forward_tiles = c.forward_tiles();
    config.backward_tiles = c.backward_tiles();
    if (!f.tv.empty()) {
        TvParams tv;
        if (f.tv == "gd")
            tv.minimizer = TvMinimizer::GradientDescent;
        else if (f.tv == "rof")
            tv.minimizer = TvMinimizer::Rof;
        else
            throw std::invalid_argument("unknown TV minimizer '" + f.tv + "' (expected gd or rof)");
        tv.inner_iters = tv.halo_depth = f.tv_iters;
        tv.step = f.tv_step;
        tv.lambda = f.tv_lambda;
        config.tv = tv;
    }
    validate(config, g.angle_count());
    const ReconResult r = reconstruct(file.projections, g, config);
    if (r.breakdown)
        std::cerr << "warning: CGLS stopped early after " << r.residuals.size() << " iterations\n";
    write_volume(out, r.volume);
    if (!f.residuals.empty())
        write_text_file(f.residuals, format_residuals(r.residuals));
    return 0;
}

SplitPlan make_plan(const Common& c, const ScanGeometry& g, const DevicePool& pool, const std::string& op)
{
    if (op == "forward")
        return plan_forward(g, pool, c.forward_tiles(), c.plan_options());
    if (op == "backward")
        return plan_backward(g, pool, c.backward_tiles(), c.plan_options());
    throw std::invalid_argument("unknown operator '" + op + "' (expected forward or backward)");
}

int run_plan(const Common& c, const std::string& op)
{
    const DevicePool pool = c.pool();
    std::cout << describe(make_plan(c, c.geometry(), pool, op));
    return 0;
}

int run_simulate(const Common& c, const std::string& op)
{
    const ScanGeometry g = c.geometry();
    const DevicePool pool = c.pool();
    write_trace(std::cout, simulate(make_plan(c, g, pool, op), g, pool));
    return 0;
}

/// Simulated makespan with the first 1..D devices of the pool.
int run_bench(const Common& c, const std::string& op)
{
    const ScanGeometry g = c.geometry();
    const DevicePool pool = c.pool();
    double base = 0.0;
    for (Index d = 1; d <= pool.size(); ++d) {
        DevicePool sub;
        sub.devices.assign(pool.devices.begin(), pool.devices.begin() + d);
        const SplitPlan plan = make_plan(c, g, sub, op);
        const ExecutionTrace t = simulate(plan, g, sub);
        if (d == 1)
            base = t.makespan;
        std::printf("devices=%lld n_splits=%lld makespan=%.6f ratio=%.4f\n", static_cast<long long>(d),
                    static_cast<long long>(plan.n_splits), t.makespan, t.makespan / base);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Out-of-core multi-device cone-beam CT reconstruction"};
    app.require_subcommand(1);
    Common c;

    auto* phantom_cmd = app.add_subcommand("phantom", "Generate a phantom volume");
    std::string kind = "shepp-logan", out, in, geometry_out;
    double noise = 0.0;
    phantom_cmd->add_option("--kind", kind, "shepp-logan, cylinder or blocks");
    phantom_cmd->add_option("--noise", noise, "Gaussian noise sigma added to every voxel");
    phantom_cmd->add_option("-o,--out", out, "Output sidecar")->required();
    phantom_cmd->add_option("--geometry-out", geometry_out, "Also write the scan geometry");
    add_geometry_flags(*phantom_cmd, c);
    add_seed_flag(*phantom_cmd, c);

    auto* project_cmd = app.add_subcommand("project", "Forward project a volume");
    std::string method = "interpolated", trace_out;
    project_cmd->add_option("-i,--in", in, "Input volume sidecar")->required();
    project_cmd->add_option("-o,--out", out, "Output projections sidecar")->required();
    project_cmd->add_option("--method", method, "siddon or interpolated");
    project_cmd->add_option("--noise", noise, "Gaussian noise sigma added to every pixel");
    project_cmd->add_option("--trace", trace_out, "Write the execution trace here");
    add_geometry_flags(*project_cmd, c);
    add_pool_flags(*project_cmd, c);
    add_seed_flag(*project_cmd, c);

    auto* back_cmd = app.add_subcommand("backproject", "Backproject projections");
    std::string mode = "matched";
    back_cmd->add_option("-i,--in", in, "Input projections sidecar")->required();
    back_cmd->add_option("-o,--out", out, "Output volume sidecar")->required();
    back_cmd->add_option("--mode", mode, "fdk or matched");
    back_cmd->add_option("--geometry", c.geometry_file, "Geometry sidecar (default: the one in the input)");
    add_pool_flags(*back_cmd, c);

    auto* recon_cmd = app.add_subcommand("recon", "Reconstruct a volume from projections");
    ReconFlags rf;
    recon_cmd->add_option("-i,--in", in, "Input projections sidecar")->required();
    recon_cmd->add_option("-o,--out", out, "Output volume sidecar")->required();
    recon_cmd->add_option("--geometry", c.geometry_file, "Geometry sidecar (default: the one in the input)");
    recon_cmd->add_option("--algorithm", rf.algorithm, "fdk, cgls or ossart");
    recon_cmd->add_option("--iterations", rf.iterations, "Iterations")->check(CLI::PositiveNumber);
    recon_cmd->add_option("--block-size", rf.block_size, "OS-SART projections per subset")->check(CLI::PositiveNumber);
    recon_cmd->add_option("--relaxation", rf.relaxation, "OS-SART relaxation in (0, 2)");
    recon_cmd->add_option("--tv", rf.tv, "TV minimizer after each OS-SART iteration: gd or rof");
    recon_cmd->add_option("--tv-iters", rf.tv_iters, "TV iterations (also the halo depth)")
        ->check(CLI::PositiveNumber);
    recon_cmd->add_option("--tv-step", rf.tv_step, "Gradient-descent step length");
    recon_cmd->add_option("--tv-lambda", rf.tv_lambda, "ROF weight");
    recon_cmd->add_option("--residuals", rf.residuals, "Write iter=<n> residual=<r> records here");
    add_pool_flags(*recon_cmd, c);
    add_seed_flag(*recon_cmd, c);

    std::string op = "forward";
    auto* plan_cmd = app.add_subcommand("plan", "Print the split plan for an operator");
    plan_cmd->add_option("--op", op, "forward or backward");
    add_geometry_flags(*plan_cmd, c);
    add_pool_flags(*plan_cmd, c);

    auto* sim_cmd = app.add_subcommand("simulate", "Print the simulated execution trace");
    sim_cmd->add_option("--op", op, "forward or backward");
    add_geometry_flags(*sim_cmd, c);
    add_pool_flags(*sim_cmd, c);

    auto* bench_cmd = app.add_subcommand("bench", "Simulated makespan against device count");
    bench_cmd->add_option("--op", op, "forward or backward");
    add_geometry_flags(*bench_cmd, c);
    add_pool_flags(*bench_cmd, c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "cbct: error: " << e.what() << "\n";
        return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
    }

    try {
        if (phantom_cmd->parsed())
            return run_phantom(c, kind, noise, out, geometry_out);
        if (project_cmd->parsed())
            return run_project(c, in, method, noise, out, trace_out);
        if (back_cmd->parsed())
            return run_backproject(c, in, mode, out);
        if (recon_cmd->parsed())
            return run_recon(c, rf, in, out);
        if (plan_cmd->parsed())
            return run_plan(c, op);
        if (sim_cmd->parsed())
            return run_simulate(c, op);
        if (bench_cmd->parsed())
            return run_bench(c, op);
    } catch (const std::exception& e) {
        std::cerr << "cbct: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
