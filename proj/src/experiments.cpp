#include "nelson/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "nelson/coords.hpp"
#include "nelson/field.hpp"

namespace nelson {

namespace {

double radical_inverse(int i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

}  // namespace

IdentityResiduals identity_residuals(const PhysParams& p, int n) {
    IdentityResiduals out;
    const double scale = std::abs(p.energy()), s = 4.0 * p.a();
    for (int i = 1; out.points < n; ++i) {
        const CartesianPoint x{s * (2.0 * radical_inverse(i, 2) - 1.0), s * (2.0 * radical_inverse(i, 3) - 1.0),
                               s * (2.0 * radical_inverse(i, 5) - 1.0)};
        if (x.norm() < 0.05 * p.a() || sigma_distance(p, x) < 0.02 * p.a()) continue;
        ++out.points;
        const ComplexVec3 z = eval_z_limit(p, x);
        out.energy = std::max(out.energy, std::abs(0.5 * z.square() - p.mu() / x.norm() - p.energy()) / scale);
        const Gradients g = eval_gradients(p, x);
        out.orthogonality =
            std::max(out.orthogonality, std::abs(g.grad_R.dot(g.grad_S)) / (g.grad_R.norm() * g.grad_S.norm() + 1e-300));
    }
    return out;
}

TrajectoryEnsemble autocorr_ensemble(const PhysParams& p, const AutocorrRun& run, std::uint64_t seed, int threads,
                                     bool planar) {
    SimConfig c = SimConfig::defaults(p);
    c.planar = planar;
    c.n_paths = run.n_paths;
    c.n_steps = std::lround(run.duration / c.dt);
    c.record_stride = run.record_stride;
    c.seed = seed;
    c.threads = threads;
    c.x0 = kepler_point(p, 0.0);
    c.validate();
    return simulate_ensemble(c);
}

cplx orbit_phase(const TrajectoryRecord& r) { return std::polar(1.0, r.v); }

GapComparison compare_gaps(const PhysParams& p, const GridSpec& grid, const GapOptions& gap,
                           const AutocorrOptions& ac, const AutocorrRun& run, std::uint64_t seed, int threads) {
    GapComparison out;
    out.grid = grid;
    out.matrix = gap_from_matrix(build_generator(p, grid), gap);
    out.autocorr = gap_from_autocorrelation(autocorr_ensemble(p, run, seed, threads, grid.dimension == 2), orbit_phase, ac);
    const double r = out.matrix.gap / out.autocorr.gamma;
    out.agreement_ratio = std::max(r, 1.0 / r);
    return out;
}

GridSpec resolved_plane_grid(const PhysParams& p, std::array<double, 2> lo, std::array<double, 2> hi,
                             DriftScheme scheme) {
    const int k = resolving_density(p, 2);
    GridSpec g;
    g.dimension = 2;
    g.lo = {lo[0], lo[1], 0.0};
    g.hi = {hi[0], hi[1], 0.0};
    g.n = {std::max(2, static_cast<int>(std::ceil((hi[0] - lo[0]) * k - 1e-9))),
           std::max(2, static_cast<int>(std::ceil((hi[1] - lo[1]) * k - 1e-9))), 1};
    g.scheme = scheme;
    g.validate();
    return g;
}

}  // namespace nelson
