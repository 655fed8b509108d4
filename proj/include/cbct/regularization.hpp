#pragma once

#include "cbct/device.hpp"
#include "cbct/plan.hpp"
#include "cbct/volume.hpp"

namespace cbct {

enum class TvMinimizer { GradientDescent, Rof };

/// How the gradient-descent step is normalized on a split volume: by the exact norm over
/// the whole volume, or by each block's own norm scaled as if the gradient were uniform.
enum class NormMode { ExactGlobal, LocalApprox };

struct TvParams {
    TvMinimizer minimizer = TvMinimizer::GradientDescent;
    Index outer_syncs = 1;
    Index inner_iters = 60;
    Index halo_depth = 60;
    double step = 1e-3;    ///< gradient descent: L2 length of each update
    double lambda = 0.05;  ///< ROF: weight of the TV term
    NormMode norm_mode = NormMode::ExactGlobal;
};

void validate(const TvParams& params);

/// Dual step of the ROF iteration; 1/12 bounds the squared norm of the 3D gradient.
constexpr double kRofDualStep = 1.0 / 12.0;
/// Smoothing inside the TV square root of the gradient-descent minimizer.
constexpr double kTvEpsilon = 1e-8;

/// Isotropic TV with forward differences, zero past the upper faces.
double tv_norm(const Volume& volume);

/// inner_iters steps of v <- v - step * g / |g| on the smoothed TV subgradient g.
Volume minimize_tv_gradient(const Volume& volume, const TvParams& params);

struct RofDiagnostics {
    double max_dual_norm = 0.0;  ///< largest |p| seen after any projection
};

/// Approximately solves argmin_u |u - f|^2 / 2 + lambda * TV(u) by projected gradient
/// iterations on the dual field, inner_iters iterations.
Volume minimize_rof(const Volume& volume, const TvParams& params, RofDiagnostics* diagnostics = nullptr);

/// An axial block with replicated neighbor slices on each interior side.
struct HaloSlab {
    IndexRange core;
    Index halo_depth = 0;
    IndexRange held;  ///< core plus up to halo_depth ghost slices per interior side
    Volume data;      ///< values over `held`

    Index ghosts_below() const { return core.begin - held.begin; }
    Index ghosts_above() const { return held.end - core.end; }
};

/// Cuts [0, n_z) into `blocks` cores of ceil(n_z / blocks) slices and attaches halos.
std::vector<HaloSlab> make_halo_slabs(const Volume& volume, Index blocks, Index halo_depth);
/// Overwrites every ghost slice with the matching core slice of its owner.
void exchange_halos(std::vector<HaloSlab>& slabs);
/// Reassembles the cores into one volume.
Volume gather_cores(const std::vector<HaloSlab>& slabs);

struct SplitReport {
    Index blocks = 0;
    bool resident = true;            ///< every device keeps its block(s) between epochs
    Bytes block_bytes = 0;           ///< working set of one block, copies included
    Bytes bytes_moved = 0;           ///< host<->device and halo traffic
};

/// Multi-device TV minimization: blocks with halo_depth-deep ghosts run inner_iters
/// local iterations between halo exchanges, for outer_syncs epochs.
Volume split_minimize(const Volume& volume, const DevicePool& pool, const TvParams& params,
                      SplitReport* report = nullptr, const PlanOptions& options = {});

}  // namespace cbct
