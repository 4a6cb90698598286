#pragma once

#include <cstdint>

#include "nelson/config.hpp"
#include "nelson/spectral.hpp"

namespace nelson {

/// Ensemble for the autocorrelation estimator: paths start at perihelion
/// with the default step and run for run.duration, planar unless asked.
TrajectoryEnsemble autocorr_ensemble(const PhysParams& p, const AutocorrRun& run, std::uint64_t seed, int threads = 0,
                                     bool planar = true);

/// Observable used for the autocorrelation gap: exp(i v), whose modulus of
/// the covariance decays without the orbital oscillation.
cplx orbit_phase(const TrajectoryRecord& r);

struct GapComparison {
    GridSpec grid;
    GapResult matrix;
    AutocorrResult autocorr;
    double agreement_ratio{0};  ///< max(matrix/autocorr, autocorr/matrix)
};

/// Matrix gap on grid next to the autocorrelation gap of an ensemble that
/// is planar exactly when the grid is.
GapComparison compare_gaps(const PhysParams& p, const GridSpec& grid, const GapOptions& gap,
                           const AutocorrOptions& ac, const AutocorrRun& run, std::uint64_t seed, int threads = 0);

struct IdentityResiduals {
    double energy{0};         ///< max |Z.Z/2 - mu/|x| - E| / |E|
    double orthogonality{0};  ///< max |grad R . grad S| / (|grad R| |grad S|)
    int points{0};
};
/// Worst residuals of the two pointwise identities over n Halton points in
/// [-4a, 4a]^3, skipping 0.05a around the origin and 0.02a around Sigma.
IdentityResiduals identity_residuals(const PhysParams& p, int n);

/// Planar grid on [lo, hi] (units of a) with the node density of resolving_density.
GridSpec resolved_plane_grid(const PhysParams& p, std::array<double, 2> lo, std::array<double, 2> hi,
                             DriftScheme scheme = DriftScheme::ScharfetterGummel);

}  // namespace nelson
