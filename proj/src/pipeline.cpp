#include "cbct/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <functional>
#include <future>
#include <memory>
#include <thread>

namespace cbct {

namespace {

enum class Engine { Compute = 0, H2D = 1, D2H = 2 };

/// One step of a device's command stream. Both executors consume the same program.
struct Command {
    Index device = 0;
    EventKind kind = EventKind::Kernel;
    std::string payload;
    Bytes bytes = 0;
    double compute_seconds = 0.0;
    std::vector<std::size_t> deps;
    std::function<void()> action;

    Engine engine() const
    {
        switch (kind) {
        case EventKind::TransferIn:
            return Engine::H2D;
        case EventKind::TransferOut:
            return Engine::D2H;
        default:
            return Engine::Compute;
        }
    }
};

struct Allocation {
    Bytes bytes;
    std::string what;
};

struct Program {
    std::vector<Command> commands;
    std::vector<std::vector<Allocation>> allocations;  // per device
    bool pinned = false;
    Bytes pinned_bytes = 0;

    std::size_t add(Command c)
    {
        commands.push_back(std::move(c));
        return commands.size() - 1;
    }
};

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

std::string range_tag(IndexRange r)
{
    return "a" + std::to_string(r.begin) + "-" + std::to_string(r.end - 1);
}

void push_dep(std::vector<std::size_t>& deps, std::size_t dep)
{
    if (dep != kNone)
        deps.push_back(dep);
}

double max_pin_rate(const DevicePool& pool)
{
    double rate = 0.0;
    for (const DeviceSpec& d : pool.devices)
        rate = std::max(rate, d.pin_cost_rate);
    return rate;
}

void check_plan(const SplitPlan& plan, OpKind kind, const ScanGeometry& geometry, const DevicePool& pool)
{
    validate(pool);
    if (plan.op_kind != kind)
        throw std::invalid_argument("plan was made for the other operator");
    if (!plan.matches(geometry, pool))
        throw std::invalid_argument("plan does not match the geometry and device pool");
}

// Real-mode device state for the forward pass.
struct ForwardState {
    const Volume* volume = nullptr;
    const ScanGeometry* geometry = nullptr;
    ForwardMethod method = ForwardMethod::Interpolated;
    ForwardTileSpec tiles;
    ProjectionStack* out = nullptr;
    std::vector<Volume> slab;
    std::vector<std::array<ProjectionStack, 3>> buffer;
};

Program forward_program(const SplitPlan& plan, const DevicePool& pool,
                        const std::shared_ptr<ForwardState>& state)
{
    Program program;
    const Index devices = pool.size();
    const Bytes slice = static_cast<Bytes>(plan.n_x * plan.n_y) * sizeof(float);
    const Bytes frame = static_cast<Bytes>(plan.n_u * plan.n_v) * sizeof(float);
    program.pinned = plan.pin_host_image;
    program.pinned_bytes = slice * static_cast<Bytes>(plan.n_z);
    program.allocations.resize(static_cast<std::size_t>(devices));

    std::vector<std::vector<IndexRange>> chunks(static_cast<std::size_t>(devices));
    Index rounds = 0;
    for (Index d = 0; d < devices; ++d) {
        chunks[d] = plan.chunks_for_device(d);
        rounds = std::max(rounds, static_cast<Index>(chunks[d].size()));
        if (!chunks[d].empty()) {
            program.allocations[d].push_back({plan.slab_bytes(), "image slab"});
            for (int b = 0; b < plan.buffer_count; ++b)
                program.allocations[d].push_back({plan.chunk_bytes(), "projection buffer " + std::to_string(b)});
        }
    }

    // Per device: indices of kernels, accumulations and drains by global chunk counter.
    std::vector<std::vector<std::size_t>> kernel(devices), accumulate(devices), drain(devices);
    std::vector<std::vector<std::size_t>> previous_drain(devices);  // same chunk, previous split

    for (Index k = 0; k < plan.n_splits; ++k) {
        const IndexRange slab = plan.slab_ranges[k];
        const std::string split = "s" + std::to_string(k);
        std::vector<std::size_t> slab_in(devices, kNone);
        for (Index d = 0; d < devices; ++d) {
            if (chunks[d].empty())
                continue;
            Command c;
            c.device = d;
            c.kind = EventKind::TransferIn;
            c.payload = "slab:" + std::to_string(k);
            c.bytes = slice * static_cast<Bytes>(slab.size());
            if (!kernel[d].empty())
                c.deps.push_back(kernel[d].back());
            if (state)
                c.action = [state, d, slab] { state->slab[d] = state->volume->extract(slab); };
            slab_in[d] = program.add(std::move(c));
        }

        auto emit_drain = [&](Index d, Index c_index) {
            const std::size_t g = static_cast<std::size_t>(k * static_cast<Index>(chunks[d].size()) + c_index);
            const IndexRange chunk = chunks[d][c_index];
            Command c;
            c.device = d;
            c.kind = EventKind::TransferOut;
            c.payload = "proj:" + split + ":" + range_tag(chunk);
            c.bytes = frame * static_cast<Bytes>(chunk.size());
            c.deps.push_back(k > 0 ? accumulate[d][g] : kernel[d][g]);
            if (state)
                c.action = [state, d, g] { state->out->insert(state->buffer[d][g % 2]); };
            drain[d].push_back(program.add(std::move(c)));
        };

        for (Index r = 0; r <= rounds; ++r) {
            if (r < rounds) {
                for (Index d = 0; d < devices; ++d) {
                    const Index n = static_cast<Index>(chunks[d].size());
                    if (r >= n)
                        continue;
                    const std::size_t g = static_cast<std::size_t>(k * n + r);
                    const IndexRange chunk = chunks[d][r];
                    const std::string tag = split + ":" + range_tag(chunk);
                    const Bytes chunk_bytes = frame * static_cast<Bytes>(chunk.size());

                    std::size_t partial = kNone;
                    if (k > 0) {
                        Command c;
                        c.device = d;
                        c.kind = EventKind::TransferIn;
                        c.payload = "partial:" + tag;
                        c.bytes = chunk_bytes;
                        if (g > 0)
                            push_dep(c.deps, accumulate[d][g - 1]);
                        c.deps.push_back(previous_drain[d][r]);
                        if (state)
                            c.action = [state, d, chunk] { state->buffer[d][2] = state->out->extract(chunk); };
                        partial = program.add(std::move(c));
                    }

                    Command kc;
                    kc.device = d;
                    kc.kind = EventKind::Kernel;
                    kc.payload = "fp:" + tag;
                    kc.compute_seconds = pool.devices[d].compute.forward *
                                         static_cast<double>(plan.n_x * plan.n_y * slab.size() * chunk.size());
                    kc.deps.push_back(slab_in[d]);
                    if (g >= 2)
                        kc.deps.push_back(drain[d][g - 2]);
                    if (state)
                        kc.action = [state, d, g, chunk] {
                            state->buffer[d][g % 2] = forward_project_slab(state->slab[d], *state->geometry, chunk,
                                                                           state->method, state->tiles);
                        };
                    kernel[d].push_back(program.add(std::move(kc)));

                    if (k > 0) {
                        Command ac;
                        ac.device = d;
                        ac.kind = EventKind::Accumulate;
                        ac.payload = "acc:" + tag;
                        ac.compute_seconds =
                            pool.devices[d].compute.accumulate * static_cast<double>(chunk_bytes / sizeof(float));
                        ac.deps = {kernel[d][g], partial};
                        if (state)
                            ac.action = [state, d, g] { state->buffer[d][g % 2].data += state->buffer[d][2].data; };
                        accumulate[d].push_back(program.add(std::move(ac)));
                    } else {
                        accumulate[d].push_back(kNone);
                    }
                }
            }
            // Drain the previous round's buffers while this round computes.
            if (r >= 1)
                for (Index d = 0; d < devices; ++d)
                    if (r - 1 < static_cast<Index>(chunks[d].size()))
                        emit_drain(d, r - 1);
        }
        for (Index d = 0; d < devices; ++d) {
            const Index n = static_cast<Index>(chunks[d].size());
            previous_drain[d].assign(drain[d].end() - n, drain[d].end());
        }
    }
    return program;
}

struct BackwardState {
    const ProjectionStack* projections = nullptr;
    const ScanGeometry* geometry = nullptr;
    WeightMode mode = WeightMode::Matched;
    BackwardTileSpec tiles;
    Volume* out = nullptr;
    std::vector<Volume> slab;
    std::vector<std::array<ProjectionStack, 2>> buffer;
};

Program backward_program(const SplitPlan& plan, const DevicePool& pool,
                         const std::shared_ptr<BackwardState>& state)
{
    Program program;
    const Index devices = pool.size();
    const Bytes slice = static_cast<Bytes>(plan.n_x * plan.n_y) * sizeof(float);
    const Bytes frame = static_cast<Bytes>(plan.n_u * plan.n_v) * sizeof(float);
    program.pinned = plan.pin_host_image;
    program.pinned_bytes = slice * static_cast<Bytes>(plan.n_z);
    program.allocations.resize(static_cast<std::size_t>(devices));

    std::vector<std::vector<Index>> queue(devices);
    Index depth = 0;
    for (Index d = 0; d < devices; ++d) {
        queue[d] = plan.slabs_for_device(d);
        depth = std::max(depth, static_cast<Index>(queue[d].size()));
        if (!queue[d].empty()) {
            program.allocations[d].push_back({plan.slab_bytes(), "image slab"});
            for (int b = 0; b < 2; ++b)
                program.allocations[d].push_back({plan.chunk_bytes(), "projection buffer " + std::to_string(b)});
        }
    }

    const std::vector<IndexRange>& chunks = plan.angle_chunks;
    const Index n_chunks = static_cast<Index>(chunks.size());
    std::vector<std::vector<std::size_t>> kernel(devices);
    std::vector<std::size_t> last_drain(devices, kNone);

    for (Index q = 0; q < depth; ++q) {
        for (Index c_index = 0; c_index < n_chunks; ++c_index) {
            const IndexRange chunk = chunks[c_index];
            for (Index d = 0; d < devices; ++d) {
                if (q >= static_cast<Index>(queue[d].size()))
                    continue;
                const Index k = queue[d][q];
                const IndexRange slab = plan.slab_ranges[k];
                const std::size_t g = static_cast<std::size_t>(q * n_chunks + c_index);
                const std::string tag = "s" + std::to_string(k) + ":" + range_tag(chunk);

                Command in;
                in.device = d;
                in.kind = EventKind::TransferIn;
                in.payload = "chunk:" + tag;
                in.bytes = frame * static_cast<Bytes>(chunk.size());
                if (g >= 2)
                    in.deps.push_back(kernel[d][g - 2]);
                if (state)
                    in.action = [state, d, g, chunk] {
                        state->buffer[d][g % 2] = state->projections->extract(chunk);
                    };
                const std::size_t in_index = program.add(std::move(in));

                Command kc;
                kc.device = d;
                kc.kind = EventKind::Kernel;
                kc.payload = "bp:" + tag;
                kc.compute_seconds = pool.devices[d].compute.backward *
                                     static_cast<double>(plan.n_x * plan.n_y * slab.size() * chunk.size());
                kc.deps.push_back(in_index);
                if (c_index == 0)
                    push_dep(kc.deps, last_drain[d]);
                if (g >= 1)
                    kc.deps.push_back(kernel[d][g - 1]);
                if (state) {
                    const bool first = c_index == 0;
                    kc.action = [state, d, g, slab, first] {
                        const ScanGeometry& geo = *state->geometry;
                        if (first)
                            state->slab[d] = Volume::zeros(geo.grid(), slab);
                        backproject_slab(state->buffer[d][g % 2], geo, slab, state->mode, state->tiles,
                                         state->slab[d]);
                    };
                }
                kernel[d].push_back(program.add(std::move(kc)));
            }
        }
        for (Index d = 0; d < devices; ++d) {
            if (q >= static_cast<Index>(queue[d].size()))
                continue;
            const Index k = queue[d][q];
            Command out;
            out.device = d;
            out.kind = EventKind::TransferOut;
            out.payload = "slab:" + std::to_string(k);
            out.bytes = slice * static_cast<Bytes>(plan.slab_ranges[k].size());
            out.deps.push_back(kernel[d].back());
            if (state)
                out.action = [state, d] { state->out->insert(state->slab[d]); };
            last_drain[d] = program.add(std::move(out));
        }
    }
    return program;
}

std::vector<MemoryLedger> reserve(const Program& program, const DevicePool& pool)
{
    std::vector<MemoryLedger> ledgers;
    for (Index d = 0; d < pool.size(); ++d) {
        ledgers.emplace_back(pool.devices[d].memory_budget);
        for (const Allocation& a : program.allocations[d])
            ledgers.back().allocate(a.bytes, "device " + std::to_string(d) + " " + a.what);
    }
    return ledgers;
}

void finish_trace(ExecutionTrace& trace, const std::vector<MemoryLedger>& ledgers)
{
    for (const MemoryLedger& l : ledgers) {
        trace.high_water.push_back(l.high_water());
        trace.budgets.push_back(l.budget());
    }
    trace.makespan = 0.0;
    for (const TraceEvent& e : trace.events)
        trace.makespan = std::max(trace.makespan, e.end);
}

TraceEvent host_event(EventKind kind, Bytes bytes, double start, double end)
{
    return {kHostDevice, kind, "host_image", start, end, bytes};
}

/// Runs the program with one worker thread per (device, engine). Each worker takes its
/// commands in program order and waits on their dependencies; program order is a
/// topological order, so the streams cannot deadlock.
ExecutionTrace run_program(Program& program, const DevicePool& pool)
{
    std::vector<MemoryLedger> ledgers = reserve(program, pool);
    const std::size_t n = program.commands.size();
    std::vector<std::promise<void>> done(n);
    std::vector<std::shared_future<void>> ready;
    ready.reserve(n);
    for (auto& p : done)
        ready.push_back(p.get_future().share());

    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    auto seconds = [&t0](Clock::time_point t) { return std::chrono::duration<double>(t - t0).count(); };

    ExecutionTrace trace;
    if (program.pinned)
        trace.events.push_back(host_event(EventKind::Pin, program.pinned_bytes, 0.0, 0.0));

    const Index devices = pool.size();
    std::vector<std::vector<std::size_t>> streams(static_cast<std::size_t>(devices * 3));
    for (std::size_t i = 0; i < n; ++i) {
        const Command& c = program.commands[i];
        streams[static_cast<std::size_t>(c.device * 3 + static_cast<Index>(c.engine()))].push_back(i);
    }
    std::vector<std::vector<TraceEvent>> logs(streams.size());
    {
        std::vector<std::jthread> workers;
        for (std::size_t s = 0; s < streams.size(); ++s) {
            if (streams[s].empty())
                continue;
            workers.emplace_back([&, s] {
                for (std::size_t i : streams[s]) {
                    Command& c = program.commands[i];
                    try {
                        for (std::size_t dep : c.deps)
                            ready[dep].get();
                        const double start = seconds(Clock::now());
                        if (c.action)
                            c.action();
                        const double end = seconds(Clock::now());
                        logs[s].push_back({c.device, c.kind, c.payload, start, end, c.bytes});
                        done[i].set_value();
                    } catch (...) {
                        done[i].set_exception(std::current_exception());
                    }
                }
            });
        }
    }
    for (auto& f : ready)
        f.get();

    for (auto& log : logs)
        trace.events.insert(trace.events.end(), log.begin(), log.end());
    std::stable_sort(trace.events.begin() + (program.pinned ? 1 : 0), trace.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.start < b.start; });
    if (program.pinned) {
        const double t = seconds(Clock::now());
        trace.events.push_back(host_event(EventKind::Unpin, program.pinned_bytes, t, t));
    }
    finish_trace(trace, ledgers);
    return trace;
}

/// Discrete-event timing of the program. The host issues commands in program order.
/// Pinned transfers are asynchronous on their own copy engine; pageable transfers wait
/// for the device to go idle and block the host until they complete.
ExecutionTrace simulate_program(const Program& program, const DevicePool& pool)
{
    std::vector<MemoryLedger> ledgers = reserve(program, pool);
    ExecutionTrace trace;
    trace.simulated = true;

    double host = 0.0;
    const double pin_rate = max_pin_rate(pool);
    if (program.pinned) {
        const double end = pin_rate * static_cast<double>(program.pinned_bytes);
        trace.events.push_back(host_event(EventKind::Pin, program.pinned_bytes, 0.0, end));
        host = end;
    }

    std::vector<std::array<double, 3>> engine_free(static_cast<std::size_t>(pool.size()), {host, host, host});
    std::vector<double> finish(program.commands.size(), 0.0);
    double last = host;
    for (std::size_t i = 0; i < program.commands.size(); ++i) {
        const Command& c = program.commands[i];
        const DeviceSpec& spec = pool.devices[c.device];
        auto& free = engine_free[c.device];
        double start = host;
        for (std::size_t dep : c.deps)
            start = std::max(start, finish[dep]);
        double end = start;
        if (c.engine() == Engine::Compute) {
            start = std::max(start, free[0]);
            end = start + c.compute_seconds;
            free[0] = end;
        } else if (program.pinned) {
            const int e = static_cast<int>(c.engine());
            start = std::max(start, free[e]);
            end = start + static_cast<double>(c.bytes) / spec.bw_pinned;
            free[e] = end;
        } else {
            start = std::max({start, free[0], free[1], free[2]});
            end = start + static_cast<double>(c.bytes) / spec.bw_pageable;
            free = {end, end, end};
            host = end;
        }
        finish[i] = end;
        last = std::max(last, end);
        trace.events.push_back({c.device, c.kind, c.payload, start, end, c.bytes});
    }
    if (program.pinned)
        trace.events.push_back(host_event(EventKind::Unpin, program.pinned_bytes, last,
                                          last + pin_rate * static_cast<double>(program.pinned_bytes)));
    finish_trace(trace, ledgers);
    return trace;
}

}  // namespace

ProjectionStack execute_forward(const Volume& volume, const ScanGeometry& geometry, const DevicePool& pool,
                                const SplitPlan& plan, ForwardMethod method, ExecutionTrace* trace,
                                const ForwardTileSpec& tiles)
{
    check_plan(plan, OpKind::Forward, geometry, pool);
    if (!(volume.grid == geometry.grid()) || !volume.is_full())
        throw std::invalid_argument("forward execution needs a full volume on the geometry's grid");

    ProjectionStack out = ProjectionStack::zeros(geometry.detector(), {0, geometry.angle_count()});
    auto state = std::make_shared<ForwardState>();
    state->volume = &volume;
    state->geometry = &geometry;
    state->method = method;
    state->tiles = tiles;
    state->out = &out;
    state->slab.resize(static_cast<std::size_t>(pool.size()));
    state->buffer.resize(static_cast<std::size_t>(pool.size()));

    Program program = forward_program(plan, pool, state);
    ExecutionTrace result = run_program(program, pool);
    if (trace)
        *trace = std::move(result);
    return out;
}

Volume execute_backward(const ProjectionStack& projections, const ScanGeometry& geometry, const DevicePool& pool,
                        const SplitPlan& plan, WeightMode mode, ExecutionTrace* trace, const BackwardTileSpec& tiles)
{
    check_plan(plan, OpKind::Backward, geometry, pool);
    if (!(projections.detector == geometry.detector()) || projections.angles.begin != 0 ||
        projections.angles.end != geometry.angle_count())
        throw std::invalid_argument("backward execution needs every projection of the scan");

    Volume out = Volume::zeros(geometry.grid());
    auto state = std::make_shared<BackwardState>();
    state->projections = &projections;
    state->geometry = &geometry;
    state->mode = mode;
    state->tiles = tiles;
    state->out = &out;
    state->slab.resize(static_cast<std::size_t>(pool.size()));
    state->buffer.resize(static_cast<std::size_t>(pool.size()));

    Program program = backward_program(plan, pool, state);
    ExecutionTrace result = run_program(program, pool);
    if (trace)
        *trace = std::move(result);
    return out;
}

ExecutionTrace simulate(const SplitPlan& plan, const ScanGeometry& geometry, const DevicePool& pool)
{
    check_plan(plan, plan.op_kind, geometry, pool);
    const Program program = plan.op_kind == OpKind::Forward ? forward_program(plan, pool, nullptr)
                                                            : backward_program(plan, pool, nullptr);
    return simulate_program(program, pool);
}

}  // namespace cbct
