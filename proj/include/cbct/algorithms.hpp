#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cbct/device.hpp"
#include "cbct/plan.hpp"
#include "cbct/projectors.hpp"
#include "cbct/regularization.hpp"
#include "cbct/volume.hpp"

namespace cbct {

enum class Algorithm { FDK, CGLS, OSSART };

Algorithm parse_algorithm(const std::string& text);
const char* to_string(Algorithm algorithm);

struct ReconConfig {
    Algorithm algorithm = Algorithm::CGLS;
    Index iterations = 10;
    Index block_size = 1;      ///< OS-SART angles per subset; the last subset may be smaller
    double relaxation = 1.0;   ///< OS-SART, in (0, 2)
    std::optional<TvParams> tv;  ///< OS-SART only: TV minimization after every iteration
    DevicePool pool = DevicePool::uniform(1, DeviceSpec{});
    PlanOptions plan_options;
    ForwardTileSpec forward_tiles;
    BackwardTileSpec backward_tiles;
};

void validate(const ReconConfig& config, Index angle_count);

/// The interpolated projector and its matched adjoint, each applied through a split
/// plan made once for the given scan.
class ScanOperator {
public:
    ScanOperator(const ScanGeometry& geometry, const DevicePool& pool, const PlanOptions& options = {},
                 const ForwardTileSpec& forward_tiles = {}, const BackwardTileSpec& backward_tiles = {});

    ProjectionStack forward(const Volume& volume) const;
    Volume backward(const ProjectionStack& projections) const;

    const ScanGeometry& geometry() const { return geometry_; }
    const SplitPlan& forward_plan() const { return forward_plan_; }
    const SplitPlan& backward_plan() const { return backward_plan_; }

private:
    ScanGeometry geometry_;
    DevicePool pool_;
    ForwardTileSpec forward_tiles_;
    BackwardTileSpec backward_tiles_;
    SplitPlan forward_plan_;
    SplitPlan backward_plan_;
};

struct ReconResult {
    Volume volume;
    /// |b - A x| / |b| after each iteration.
    std::vector<double> residuals;
    bool breakdown = false;  ///< CGLS stopped on a vanishing denominator
};

/// Cosine weighting and ramp filtering of every detector row, scaled by half the
/// angular step. Exposed separately so the filter can be tested in isolation.
ProjectionStack fdk_filter(const ProjectionStack& projections, const ScanGeometry& geometry);

/// Filtered backprojection for circular cone-beam scans.
Volume fdk(const ProjectionStack& projections, const ScanGeometry& geometry, const DevicePool& pool,
           const PlanOptions& options = {}, const BackwardTileSpec& tiles = {});

/// Conjugate gradient on the normal equations from a zero start.
ReconResult cgls(const ProjectionStack& projections, const ScanGeometry& geometry, const ReconConfig& config);

/// Ordered-subset SART; `initial` defaults to zero.
ReconResult os_sart(const ProjectionStack& projections, const ScanGeometry& geometry, const ReconConfig& config,
                    const Volume* initial = nullptr);

/// Dispatches on config.algorithm. FDK reports no residuals.
ReconResult reconstruct(const ProjectionStack& projections, const ScanGeometry& geometry, const ReconConfig& config);

/// One `iter=<n> residual=<r>` line per entry, counting from 1.
std::string format_residuals(const std::vector<double>& residuals);

}  // namespace cbct
