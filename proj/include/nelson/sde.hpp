#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nelson/params.hpp"
#include "nelson/types.hpp"

namespace nelson {

/// Start points spread uniformly in angle on a circle of the given radius
/// in the plane z = height (path i sits at angle 2 pi i / n_paths).
struct RingStart {
    double radius{3.0};
    double height{0.0};
};

struct SimConfig {
    PhysParams params;
    double dt{1e-3};
    long n_steps{50000};
    int n_paths{256};
    std::uint64_t seed{0};
    std::variant<CartesianPoint, RingStart> x0{RingStart{}};
    double drift_cap{100.0};
    int record_stride{100};
    /// Restrict noise to the (x, y) plane; with z0 = 0 the path stays planar.
    bool planar{false};
    /// Switch the noise off and integrate the deterministic flow dx = b dt.
    bool deterministic{false};
    /// Worker threads; 0 picks the hardware concurrency.
    int threads{0};

    /// dt = 1e-3 lambda^3/mu^2, drift_cap = 10 mu/(lambda eps), ring at 3a.
    static SimConfig defaults(const PhysParams& p);
    /// Throws ConfigError unless dt, n_steps, n_paths, stride are positive and
    /// dt * drift_cap < a/2.
    void validate() const;
    [[nodiscard]] CartesianPoint start_point(int path) const;
    [[nodiscard]] double noise_scale() const { return deterministic ? 0.0 : params.eps(); }
};

struct StepResult {
    CartesianPoint x;
    bool capped{false};
};

/// One Euler-Maruyama step x + b dt + eps sqrt(dt) gauss, with the drift
/// rescaled to drift_cap when it is larger. Throws an Origin DomainError
/// for |x| < 1e-8 a.
StepResult step(const SimConfig& cfg, const CartesianPoint& x, const Vec3& gauss);

struct TrajectoryRecord {
    double t{0};
    CartesianPoint x;
    double u{0};  ///< NaN where the elliptic coordinates are undefined
    double v{0};
    double dist_sigma{0};
};

struct PathResult {
    std::vector<TrajectoryRecord> records;
    long cap_rejections{0};
    /// Cap rejections that happened within 0.1a of Sigma but outside 0.05a of the origin.
    long cap_rejections_near_sigma{0};
    long sigma_crossings{0};
    bool truncated{false};
    double truncation_time{0};
    std::string truncation_reason;
    bool interior_start{false};
};

struct TrajectoryEnsemble {
    SimConfig config;
    std::vector<PathResult> paths;
};

/// Runs every path on its own normal stream (NormalStream(seed, path)).
/// Step errors truncate the offending path; the ensemble always completes.
TrajectoryEnsemble simulate_ensemble(const SimConfig& cfg);

/// Simulates a single path; exposed for tests and for replaying one path.
PathResult simulate_path(const SimConfig& cfg, int path);

struct PathDiagnostics {
    std::vector<double> t, u, v, abs_z, areal_velocity;
};

struct KeplerReport {
    std::vector<PathDiagnostics> paths;
    std::vector<double> times;               ///< record times of path 0
    std::vector<double> converged_fraction;  ///< over non-truncated paths, per record
    double final_converged_fraction{0};
    int truncated_paths{0};
    int interior_starts{0};
    long cap_rejections{0};
    long cap_rejections_near_sigma{0};
    long sigma_crossings{0};
    /// Mean time for the unwrapped v to advance by 2 pi (needs a full turn).
    std::optional<double> mean_period;
    double mean_abs_z_after_burn_in{0};
    double mean_u_final{0};
    double mean_u_final_stderr{0};
};

struct ConvergenceCriteria {
    double u_tol{0.15};
    double z_tol{0.2};
    double burn_in{0.0};
};

KeplerReport kepler_diagnostics(const TrajectoryEnsemble& ens, const PhysParams& p,
                                const ConvergenceCriteria& crit = {});

/// CSV with header path,t,x,y,z,u,v,dist_sigma, or one JSON object per
/// record when jsonl is set. The first line carries the metadata comment.
void write_trajectories(std::ostream& os, const TrajectoryEnsemble& ens, bool jsonl,
                        const std::string& metadata = {});

}  // namespace nelson
