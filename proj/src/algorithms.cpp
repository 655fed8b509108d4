#include "cbct/algorithms.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "cbct/parallel.hpp"
#include "cbct/pipeline.hpp"

namespace cbct {

Algorithm parse_algorithm(const std::string& text)
{
    if (text == "fdk" || text == "FDK")
        return Algorithm::FDK;
    if (text == "cgls" || text == "CGLS")
        return Algorithm::CGLS;
    if (text == "ossart" || text == "os-sart" || text == "OSSART" || text == "sart")
        return Algorithm::OSSART;
    throw std::invalid_argument("unknown algorithm '" + text + "' (expected fdk, cgls or ossart)");
}

const char* to_string(Algorithm algorithm)
{
    switch (algorithm) {
    case Algorithm::FDK:
        return "fdk";
    case Algorithm::CGLS:
        return "cgls";
    case Algorithm::OSSART:
        return "ossart";
    }
    return "?";
}

void validate(const ReconConfig& config, Index angle_count)
{
    if (config.iterations < 1)
        throw std::invalid_argument("iterations must be at least 1");
    if (config.block_size < 1 || config.block_size > angle_count)
        throw std::invalid_argument("block size must lie in [1, " + std::to_string(angle_count) + "]");
    if (!(config.relaxation > 0.0 && config.relaxation < 2.0))
        throw std::invalid_argument("relaxation must lie in (0, 2)");
    if (config.tv) {
        if (config.algorithm != Algorithm::OSSART)
            throw std::invalid_argument("TV regularization composes with OS-SART only");
        validate(*config.tv);
    }
    validate(config.pool);
    validate(config.forward_tiles);
    validate(config.backward_tiles);
}

ScanOperator::ScanOperator(const ScanGeometry& geometry, const DevicePool& pool, const PlanOptions& options,
                           const ForwardTileSpec& forward_tiles, const BackwardTileSpec& backward_tiles)
    : geometry_(geometry), pool_(pool), forward_tiles_(forward_tiles), backward_tiles_(backward_tiles),
      forward_plan_(plan_forward(geometry, pool, forward_tiles, options)),
      backward_plan_(plan_backward(geometry, pool, backward_tiles, options))
{
}

ProjectionStack ScanOperator::forward(const Volume& volume) const
{
    return execute_forward(volume, geometry_, pool_, forward_plan_, ForwardMethod::Interpolated, nullptr,
                           forward_tiles_);
}

Volume ScanOperator::backward(const ProjectionStack& projections) const
{
    return execute_backward(projections, geometry_, pool_, backward_plan_, WeightMode::Matched, nullptr,
                            backward_tiles_);
}

namespace {

double angular_step(const std::vector<double>& angles)
{
    if (angles.size() < 2)
        return 2.0 * std::numbers::pi;
    return std::abs(angles.back() - angles.front()) / static_cast<double>(angles.size() - 1);
}

void warn_if_short(const ScanGeometry& geometry, double step)
{
    const DetectorGrid& det = geometry.detector();
    const double half_width = 0.5 * static_cast<double>(det.n_u) * det.pixel_size.x();
    const double fan = 2.0 * std::atan(half_width / geometry.dsd());
    const double covered = step * static_cast<double>(geometry.angle_count());
    if (covered + 1e-9 < std::numbers::pi + fan)
        std::cerr << "warning: scan covers " << covered << " rad, less than a short scan (" << std::numbers::pi + fan
                  << " rad)\n";
}

/// Frequency response of the band-limited ramp kernel sampled at `spacing`, on `length` points.
std::vector<std::complex<double>> ramp_response(Index length, Index support, double spacing)
{
    std::vector<double> kernel(static_cast<std::size_t>(length), 0.0);
    const double pi2 = std::numbers::pi * std::numbers::pi;
    kernel[0] = 1.0 / (4.0 * spacing * spacing);
    for (Index n = 1; n < support; n += 2) {
        const double h = -1.0 / (static_cast<double>(n * n) * pi2 * spacing * spacing);
        kernel[static_cast<std::size_t>(n)] = h;
        kernel[static_cast<std::size_t>(length - n)] = h;
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> response;
    fft.fwd(response, kernel);
    return response;
}

ProjectionStack rebased(ProjectionStack stack)
{
    stack.angles = {0, stack.angles.size()};
    return stack;
}

ProjectionStack ones_like(const ScanGeometry& geometry)
{
    return ProjectionStack::constant(geometry.detector(), {0, geometry.angle_count()}, 1.0f);
}

/// Elementwise 1/x with small entries mapped to zero.
void guarded_inverse(Buffer& values)
{
    values = (values.abs() < 1e-8f).select(0.0f, values.inverse());
}

double relative_residual(const ProjectionStack& b, const ProjectionStack& ax, double b_norm)
{
    if (b_norm == 0.0)
        return (ax.data.cast<double>().matrix().norm() == 0.0) ? 0.0 : 1.0;
    return (b.data.cast<double>() - ax.data.cast<double>()).matrix().norm() / b_norm;
}

}  // namespace

ProjectionStack fdk_filter(const ProjectionStack& projections, const ScanGeometry& geometry)
{
    if (projections.size() == 0 || projections.angles.empty())
        throw std::invalid_argument("FDK needs at least one projection");
    if (!(projections.detector == geometry.detector()))
        throw std::invalid_argument("projections do not match the geometry's detector");
    const DetectorGrid& det = geometry.detector();
    const Index n_u = det.n_u;
    const Index length = static_cast<Index>(std::bit_ceil(static_cast<std::uint64_t>(2 * n_u)));
    // Filtering happens on the detector scaled back to the rotation axis.
    const double spacing = det.pixel_size.x() * geometry.dso() / geometry.dsd();
    const std::vector<std::complex<double>> response = ramp_response(length, n_u, spacing);
    const double step = angular_step(geometry.angles());
    warn_if_short(geometry, step);
    const double scale = spacing * step / 2.0;
    const double dsd = geometry.dsd();

    ProjectionStack out = ProjectionStack::zeros(det, projections.angles);
    const Index rows = projections.angles.size() * det.n_v;
    parallel_for(rows, [&](Index row) {
        const Index a = projections.angles.begin + row / det.n_v;
        const Index v = row % det.n_v;
        Eigen::FFT<double> fft;
        std::vector<double> line(static_cast<std::size_t>(length), 0.0);
        for (Index u = 0; u < n_u; ++u) {
            const Vec2 p = det.pixel_position(u, v);
            const double cosine = dsd / std::sqrt(dsd * dsd + p.squaredNorm());
            line[static_cast<std::size_t>(u)] = cosine * projections.at(u, v, a);
        }
        std::vector<std::complex<double>> spectrum;
        fft.fwd(spectrum, line);
        for (std::size_t f = 0; f < spectrum.size(); ++f)
            spectrum[f] *= response[f];
        fft.inv(line, spectrum);
        for (Index u = 0; u < n_u; ++u)
            out.at(u, v, a) = static_cast<float>(scale * line[static_cast<std::size_t>(u)]);
    });
    return out;
}

Volume fdk(const ProjectionStack& projections, const ScanGeometry& geometry, const DevicePool& pool,
           const PlanOptions& options, const BackwardTileSpec& tiles)
{
    const ProjectionStack filtered = fdk_filter(projections, geometry);
    const SplitPlan plan = plan_backward(geometry, pool, tiles, options);
    return execute_backward(filtered, geometry, pool, plan, WeightMode::FDK, nullptr, tiles);
}

ReconResult cgls(const ProjectionStack& projections, const ScanGeometry& geometry, const ReconConfig& config)
{
    validate(config, geometry.angle_count());
    const ScanOperator op(geometry, config.pool, config.plan_options, config.forward_tiles, config.backward_tiles);

    ReconResult result{Volume::zeros(geometry.grid()), {}, false};
    const double b_norm = std::sqrt(squared_norm(projections));
    ProjectionStack r = projections;
    Volume s = op.backward(r);
    Volume p = s;
    double gamma = squared_norm(s);
    for (Index it = 0; it < config.iterations; ++it) {
        const ProjectionStack q = op.forward(p);
        const double delta = squared_norm(q);
        if (delta < 1e-30) {
            result.breakdown = true;
            break;
        }
        const double alpha = gamma / delta;
        result.volume.data = (result.volume.data.cast<double>() + alpha * p.data.cast<double>()).cast<float>();
        r.data = (r.data.cast<double>() - alpha * q.data.cast<double>()).cast<float>();
        result.residuals.push_back(b_norm > 0.0 ? std::sqrt(squared_norm(r)) / b_norm : 0.0);

        s = op.backward(r);
        const double next_gamma = squared_norm(s);
        if (gamma < 1e-30) {
            result.breakdown = true;
            break;
        }
        const double beta = next_gamma / gamma;
        gamma = next_gamma;
        p.data = (s.data.cast<double>() + beta * p.data.cast<double>()).cast<float>();
    }
    return result;
}

ReconResult os_sart(const ProjectionStack& projections, const ScanGeometry& geometry, const ReconConfig& config,
                    const Volume* initial)
{
    validate(config, geometry.angle_count());
    if (projections.angles != IndexRange{0, geometry.angle_count()})
        throw std::invalid_argument("OS-SART needs every projection of the scan");

    struct Subset {
        ScanOperator op;
        ProjectionStack data;
        Buffer row_weight;
        Buffer column_weight;
    };
    std::vector<Subset> subsets;
    for (Index a = 0; a < geometry.angle_count(); a += config.block_size) {
        const IndexRange angles{a, std::min(a + config.block_size, geometry.angle_count())};
        ScanOperator op(geometry.with_angles(angles), config.pool, config.plan_options, config.forward_tiles,
                        config.backward_tiles);
        Buffer row = op.forward(Volume::constant(geometry.grid(), 1.0f)).data;
        Buffer column = op.backward(ones_like(op.geometry())).data;
        guarded_inverse(row);
        guarded_inverse(column);
        subsets.push_back({std::move(op), rebased(projections.extract(angles)), std::move(row), std::move(column)});
    }
    const ScanOperator full(geometry, config.pool, config.plan_options, config.forward_tiles, config.backward_tiles);
    const double b_norm = std::sqrt(squared_norm(projections));

    ReconResult result{initial ? *initial : Volume::zeros(geometry.grid()), {}, false};
    if (!(result.volume.grid == geometry.grid()) || !result.volume.is_full())
        throw std::invalid_argument("initial volume does not match the geometry's grid");
    for (Index it = 0; it < config.iterations; ++it) {
        for (const Subset& s : subsets) {
            ProjectionStack correction = s.op.forward(result.volume);
            correction.data = (s.data.data - correction.data) * s.row_weight;
            const Volume update = s.op.backward(correction);
            result.volume.data += static_cast<float>(config.relaxation) * s.column_weight * update.data;
        }
        if (config.tv)
            result.volume = split_minimize(result.volume, config.pool, *config.tv, nullptr, config.plan_options);
        result.residuals.push_back(relative_residual(projections, full.forward(result.volume), b_norm));
    }
    return result;
}

ReconResult reconstruct(const ProjectionStack& projections, const ScanGeometry& geometry, const ReconConfig& config)
{
    switch (config.algorithm) {
    case Algorithm::FDK:
        return {fdk(projections, geometry, config.pool, config.plan_options, config.backward_tiles), {}, false};
    case Algorithm::CGLS:
        return cgls(projections, geometry, config);
    case Algorithm::OSSART:
        return os_sart(projections, geometry, config);
    }
    throw std::invalid_argument("unknown algorithm");
}

std::string format_residuals(const std::vector<double>& residuals)
{
    std::string out;
    char line[64];
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        std::snprintf(line, sizeof line, "iter=%zu residual=%.9g\n", i + 1, residuals[i]);
        out += line;
    }
    return out;
}

}  // namespace cbct
