#include "nelson/sde.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <limits>
#include <ostream>
#include <thread>

#include "nelson/coords.hpp"
#include "nelson/field.hpp"
#include "nelson/rng.hpp"

namespace nelson {

SimConfig SimConfig::defaults(const PhysParams& p) {
    SimConfig cfg;
    cfg.params = p;
    cfg.dt = 1e-3 * p.lambda() * p.lambda() * p.lambda() / (p.mu() * p.mu());
    cfg.drift_cap = 10.0 * p.mu() / (p.lambda() * p.eps());
    cfg.x0 = RingStart{3.0 * p.a(), 0.0};
    return cfg;
}

void SimConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sim.dt must be positive");
    if (n_steps < 1) throw ConfigError("sim.n_steps must be >= 1");
    if (n_paths < 1) throw ConfigError("sim.n_paths must be >= 1");
    if (record_stride < 1) throw ConfigError("sim.record_stride must be >= 1");
    if (!(drift_cap > 0.0)) throw ConfigError("sim.drift_cap must be positive");
    if (!(dt * drift_cap < 0.5 * params.a()))
        throw ConfigError("sim.dt * sim.drift_cap must stay below a/2");
    if (threads < 0) throw ConfigError("sim.threads must be >= 0");
    if (const auto* ring = std::get_if<RingStart>(&x0)) {
        if (!(ring->radius > 0.0)) throw ConfigError("ring radius must be positive");
    } else if (!std::get<CartesianPoint>(x0).finite()) {
        throw ConfigError("x0 must be finite");
    }
}

CartesianPoint SimConfig::start_point(int path) const {
    if (const auto* ring = std::get_if<RingStart>(&x0)) {
        const double th = kTwoPi * path / n_paths;
        return {ring->radius * std::cos(th), ring->radius * std::sin(th), ring->height};
    }
    return std::get<CartesianPoint>(x0);
}

StepResult step(const SimConfig& cfg, const CartesianPoint& x, const Vec3& gauss) {
    const PhysParams& p = cfg.params;
    if (!(x.norm() >= 1e-8 * p.a()))
        throw DomainError(DomainError::Kind::Origin, "path entered the origin ball |x| < 1e-8 a");
    Vec3 b = eval_drift(p, x);
    StepResult out;
    const double speed = b.norm();
    if (speed > cfg.drift_cap) {
        b = b * (cfg.drift_cap / speed);
        out.capped = true;
    }
    Vec3 noise = gauss;
    if (cfg.planar) noise.z = 0.0;
    out.x = x + b * cfg.dt + noise * (cfg.noise_scale() * std::sqrt(cfg.dt));
    if (!out.x.finite()) throw DomainError(DomainError::Kind::OutOfRange, "non-finite state after step");
    return out;
}

namespace {

TrajectoryRecord make_record(const PhysParams& p, double t, const CartesianPoint& x) {
    TrajectoryRecord r;
    r.t = t;
    r.x = x;
    try {
        const EllipticCoords c = to_elliptic(p, x);
        r.u = c.u;
        r.v = c.v;
    } catch (const DomainError&) {
        r.u = r.v = std::numeric_limits<double>::quiet_NaN();
    }
    r.dist_sigma = sigma_distance(p, x);
    return r;
}

}  // namespace

PathResult simulate_path(const SimConfig& cfg, int path) {
    const PhysParams& p = cfg.params;
    PathResult out;
    CartesianPoint x = cfg.start_point(path);
    try {
        out.interior_start = to_elliptic(p, x).u > p.ecc();
    } catch (const DomainError&) {
        out.interior_start = false;
    }
    out.records.reserve(static_cast<std::size_t>(cfg.n_steps / cfg.record_stride) + 1);
    out.records.push_back(make_record(p, 0.0, x));

    NormalStream normals(cfg.seed, static_cast<std::uint64_t>(path));
    const double e = p.ecc(), k = 4.0 * p.a() * e;
    for (long n = 1; n <= cfg.n_steps; ++n) {
        const Vec3 g = cfg.deterministic ? Vec3{} : normals.vec3();
        StepResult s;
        try {
            s = step(cfg, x, g);
        } catch (const DomainError& err) {
            out.truncated = true;
            out.truncation_time = static_cast<double>(n - 1) * cfg.dt;
            out.truncation_reason = err.what();
            break;
        }
        if (s.capped) {
            ++out.cap_rejections;
            if (x.norm() > 0.05 * p.a() && sigma_distance(p, x) < 0.1 * p.a()) ++out.cap_rejections_near_sigma;
        }
        if (x.y * s.x.y < 0.0) {
            const double f = x.y / (x.y - s.x.y);
            const CartesianPoint c = x + (s.x - x) * f;
            const double level = e * std::hypot(c.x, c.z) - c.x;
            if (level > 0.0 && level < k) ++out.sigma_crossings;
        }
        x = s.x;
        if (n % cfg.record_stride == 0) out.records.push_back(make_record(p, static_cast<double>(n) * cfg.dt, x));
    }
    return out;
}

TrajectoryEnsemble simulate_ensemble(const SimConfig& cfg) {
    cfg.validate();
    TrajectoryEnsemble ens;
    ens.config = cfg;
    ens.paths.resize(static_cast<std::size_t>(cfg.n_paths));

    int workers = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, cfg.n_paths);
    std::atomic<int> next{0};
    auto work = [&] {
        for (int i = next++; i < cfg.n_paths; i = next++) ens.paths[static_cast<std::size_t>(i)] = simulate_path(cfg, i);
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return ens;
}

KeplerReport kepler_diagnostics(const TrajectoryEnsemble& ens, const PhysParams& p, const ConvergenceCriteria& crit) {
    KeplerReport rep;
    const double e = p.ecc();
    auto converged = [&](const TrajectoryRecord& r) {
        return std::isfinite(r.u) && std::abs(r.u - e) < crit.u_tol && std::abs(r.x.z) < crit.z_tol;
    };

    double period_sum = 0.0, z_sum = 0.0, u_sum = 0.0, u_sq = 0.0;
    long period_count = 0, z_count = 0, u_count = 0;
    std::size_t max_records = 0;
    for (const PathResult& path : ens.paths) {
        max_records = std::max(max_records, path.records.size());
        rep.cap_rejections += path.cap_rejections;
        rep.cap_rejections_near_sigma += path.cap_rejections_near_sigma;
        rep.sigma_crossings += path.sigma_crossings;
        rep.interior_starts += path.interior_start;
        rep.truncated_paths += path.truncated;

        PathDiagnostics d;
        const auto& rec = path.records;
        const std::size_t n = rec.size();
        for (std::size_t i = 0; i < n; ++i) {
            d.t.push_back(rec[i].t);
            d.u.push_back(rec[i].u);
            d.v.push_back(rec[i].v);
            d.abs_z.push_back(std::abs(rec[i].x.z));
            double areal = std::numeric_limits<double>::quiet_NaN();
            if (n >= 2) {
                const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 < n ? i + 1 : n - 1;
                const double dt = rec[hi].t - rec[lo].t;
                const double vx = (rec[hi].x.x - rec[lo].x.x) / dt, vy = (rec[hi].x.y - rec[lo].x.y) / dt;
                areal = 0.5 * (rec[i].x.x * vy - rec[i].x.y * vx);
            }
            d.areal_velocity.push_back(areal);
        }

        // Unwrapped eccentric angle; a full turn past each multiple of 2 pi.
        double unwrapped = 0.0, prev_v = std::numeric_limits<double>::quiet_NaN(), start_v = 0.0;
        double last_cross = rec.empty() ? 0.0 : rec[0].t;
        int turns = 0;
        bool started = false;
        double prev_unwrapped = 0.0, prev_t = 0.0;
        for (const auto& r : rec) {
            if (!std::isfinite(r.v)) continue;
            if (!started) {
                started = true;
                prev_v = r.v;
                start_v = r.v;
                unwrapped = r.v;
                last_cross = r.t;
                prev_unwrapped = unwrapped;
                prev_t = r.t;
                continue;
            }
            double dv = r.v - prev_v;
            if (dv > kPi) dv -= kTwoPi;
            if (dv < -kPi) dv += kTwoPi;
            unwrapped += dv;
            prev_v = r.v;
            const double target = start_v + kTwoPi * (turns + 1);
            if (unwrapped >= target && prev_unwrapped < target) {
                const double f = (target - prev_unwrapped) / (unwrapped - prev_unwrapped);
                const double tc = prev_t + f * (r.t - prev_t);
                period_sum += tc - last_cross;
                ++period_count;
                last_cross = tc;
                ++turns;
            }
            prev_unwrapped = unwrapped;
            prev_t = r.t;
        }

        if (!path.truncated) {
            for (const auto& r : rec)
                if (r.t >= crit.burn_in) {
                    z_sum += std::abs(r.x.z);
                    ++z_count;
                }
            if (!rec.empty() && std::isfinite(rec.back().u)) {
                u_sum += rec.back().u;
                u_sq += rec.back().u * rec.back().u;
                ++u_count;
            }
        }
        rep.paths.push_back(std::move(d));
    }

    if (!ens.paths.empty())
        for (const auto& r : ens.paths.front().records) rep.times.push_back(r.t);
    rep.converged_fraction.assign(max_records, 0.0);
    std::vector<int> alive(max_records, 0);
    int final_ok = 0, final_total = 0;
    for (const PathResult& path : ens.paths) {
        if (path.truncated) continue;
        for (std::size_t i = 0; i < path.records.size(); ++i) {
            ++alive[i];
            rep.converged_fraction[i] += converged(path.records[i]);
        }
        ++final_total;
        final_ok += !path.records.empty() && converged(path.records.back());
    }
    for (std::size_t i = 0; i < max_records; ++i)
        rep.converged_fraction[i] = alive[i] ? rep.converged_fraction[i] / alive[i] : 0.0;
    rep.final_converged_fraction = final_total ? static_cast<double>(final_ok) / final_total : 0.0;
    if (period_count > 0) rep.mean_period = period_sum / static_cast<double>(period_count);
    rep.mean_abs_z_after_burn_in = z_count ? z_sum / static_cast<double>(z_count) : 0.0;
    if (u_count > 0) {
        rep.mean_u_final = u_sum / u_count;
        const double var = u_count > 1 ? (u_sq - u_sum * u_sum / u_count) / (u_count - 1) : 0.0;
        rep.mean_u_final_stderr = std::sqrt(std::max(0.0, var) / u_count);
    }
    return rep;
}

namespace {

void put_number(std::ostream& os, double v, bool json) {
    if (!std::isfinite(v)) {
        os << (json ? "null" : "nan");
        return;
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    os.write(buf, res.ptr - buf);
}

}  // namespace

void write_trajectories(std::ostream& os, const TrajectoryEnsemble& ens, bool jsonl, const std::string& metadata) {
    if (!metadata.empty()) os << "# " << metadata << '\n';
    if (!jsonl) os << "path,t,x,y,z,u,v,dist_sigma\n";
    static const char* const keys[] = {"t", "x", "y", "z", "u", "v", "dist_sigma"};
    for (std::size_t i = 0; i < ens.paths.size(); ++i) {
        for (const auto& r : ens.paths[i].records) {
            const double vals[] = {r.t, r.x.x, r.x.y, r.x.z, r.u, r.v, r.dist_sigma};
            if (jsonl) {
                os << "{\"path\":" << i;
                for (int k = 0; k < 7; ++k) {
                    os << ",\"" << keys[k] << "\":";
                    put_number(os, vals[k], true);
                }
                os << "}\n";
            } else {
                os << i;
                for (double v : vals) {
                    os << ',';
                    put_number(os, v, false);
                }
                os << '\n';
            }
        }
    }
}

}  // namespace nelson
