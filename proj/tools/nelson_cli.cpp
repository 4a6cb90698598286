// nelson: field tables, simulations, measure and spectral reports, and the
// acceptance suite of the limiting Nelson diffusion of the elliptic state.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nelson/acceptance.hpp"
#include "nelson/config.hpp"
#include "nelson/coords.hpp"
#include "nelson/experiments.hpp"
#include "nelson/field.hpp"
#include "nelson/measure.hpp"
#include "nelson/sde.hpp"
#include "nelson/spectral.hpp"

using namespace nelson;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kConfig = 2, kDomain = 3, kIo = 4 };

// Options shared by every subcommand; unset flags leave the file value.
struct Common {
    std::string config;
    std::optional<double> lambda, mu, ecc, eps;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c, bool with_seed) {
    app->add_option("--config", c.config, "JSON run configuration");
    app->add_option("--lambda", c.lambda, "angular momentum scale");
    app->add_option("--mu", c.mu, "force constant");
    app->add_option("--ecc", c.ecc, "eccentricity in (0,1)");
    app->add_option("--eps", c.eps, "diffusion scale in (0,1]");
    app->add_option("--out", c.out_dir, "output directory");
    app->add_option("--threads", c.threads, "worker threads (0 = all cores)");
    if (with_seed) app->add_option("--seed", c.seed, "RNG seed (required for stochastic runs)");
}

// defaults < file < preset < flags
RunConfig resolve(const Common& c, const json& preset = json::object(), const json& extra_flags = json::object()) {
    json doc = c.config.empty() ? json::object() : read_config_document(c.config);
    if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
    if (preset.contains("sim") && preset["sim"].contains("start_point") && doc.contains("sim")) {
        doc["sim"].erase("ring_radius");
        doc["sim"].erase("ring_height");
    }
    doc.merge_patch(preset);
    json flags = extra_flags;
    if (c.lambda) flags["params"]["lambda"] = *c.lambda;
    if (c.mu) flags["params"]["mu"] = *c.mu;
    if (c.ecc) flags["params"]["ecc"] = *c.ecc;
    if (c.eps) flags["params"]["eps"] = *c.eps;
    if (c.out_dir) flags["output"]["dir"] = *c.out_dir;
    if (c.threads) flags["sim"]["threads"] = *c.threads;
    if (c.seed) flags["sim"]["seed"] = *c.seed;
    doc.merge_patch(flags);
    return resolve_config(doc);
}

void require_seed(const Common& c, const char* what) {
    if (!c.seed) throw ConfigError(std::string("--seed is required for ") + what);
}

std::string metadata(const RunConfig& cfg) { return to_json(cfg).dump(); }

std::ofstream open_output(const RunConfig& cfg, const std::string& file) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output.dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.output.dir);
    const std::string path = cfg.output.path(file);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out.precision(17);
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("write failed for " + path);
}

void write_json_file(const RunConfig& cfg, const std::string& file, const json& doc) {
    std::ofstream out = open_output(cfg, file);
    out << doc.dump(2) << '\n';
    finish(out, cfg.output.path(file));
}

json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
json cnum(cplx z) { return {{"re", z.real()}, {"im", z.imag()}}; }

std::string short_vec(const Vec3& v) {
    auto f = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.8g", std::abs(x) < 1e-12 ? 0.0 : x);
        return std::string(buf);
    };
    return "(" + f(v.x) + "," + f(v.y) + "," + f(v.z) + ")";
}

CartesianPoint parse_point(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("--point expects x,y,z");
        }
    }
    if (v.size() != 3) throw ConfigError("--point expects x,y,z");
    return {v[0], v[1], v[2]};
}

// ---------------------------------------------------------------- field

struct FieldArgs {
    Common common;
    std::string point;
    bool grid{false};
    int nx{101}, ny{81};
    bool identities{false};
    int n{10000};
};

int cmd_field(const FieldArgs& a) {
    const RunConfig cfg = resolve(a.common);
    const PhysParams& p = cfg.params;
    if (a.identities) {
        const IdentityResiduals r = identity_residuals(p, a.n);
        const bool ok = r.energy < 1e-8 && r.orthogonality < 1e-8;
        std::cout << json{{"points", r.points}, {"max_energy_residual", r.energy},
                          {"max_orthogonality", r.orthogonality}, {"pass", ok}}.dump(2)
                  << '\n';
        return ok ? kOk : kVerifyFailed;
    }
    if (a.grid) {
        // plane z = 0 over the grid box; singular nodes are left out
        std::ostream& os = std::cout;
        os.precision(12);
        os << "# " << metadata(cfg) << '\n';
        os << "x,y,z,u,v,R_eps,drift_x,drift_y,drift_z,in_sigma\n";
        for (int j = 0; j < a.ny; ++j) {
            for (int i = 0; i < a.nx; ++i) {
                const double x = (cfg.grid.lo[0] + (cfg.grid.hi[0] - cfg.grid.lo[0]) * (i + 0.5) / a.nx) * p.a();
                const double y = (cfg.grid.lo[1] + (cfg.grid.hi[1] - cfg.grid.lo[1]) * (j + 0.5) / a.ny) * p.a();
                const CartesianPoint q{x, y, 0.0};
                try {
                    const EllipticCoords c = to_elliptic(p, q);
                    const Vec3 b = eval_drift(p, q);
                    os << x << ',' << y << ",0," << c.u << ',' << c.v << ',' << R_eps(p, q) << ',' << b.x << ','
                       << b.y << ',' << b.z << ',' << (in_sigma(p, q) ? 1 : 0) << '\n';
                } catch (const DomainError&) {
                }
            }
        }
        return kOk;
    }
    if (a.point.empty()) throw ConfigError("field needs --point, --grid or --check-identities");
    const CartesianPoint x = parse_point(a.point);
    const FieldSample s = evaluate_fields(p, x);
    json out = {{"point", vec(x)},
                {"nu", cnum(s.nu)},
                {"alpha", s.alpha},
                {"beta", s.beta},
                {"Z", {{"x", cnum(s.z_vec.x)}, {"y", cnum(s.z_vec.y)}, {"z", cnum(s.z_vec.z)}}},
                {"grad_R", vec(s.grad_R)},
                {"grad_S", vec(s.grad_S)},
                {"drift", short_vec(s.drift)},
                {"drift_components", vec(s.drift)},
                {"near_branch_point", s.near_branch_point},
                {"in_sigma", in_sigma(p, x)},
                {"config", to_json(cfg)}};
    std::cout << out.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    Common common;
    bool figure1{false};
    bool deterministic{false};
    bool jsonl{false};
};

json kepler_json(const KeplerReport& r, const RunConfig& cfg) {
    json j = {{"final_converged_fraction", r.final_converged_fraction},
              {"truncated_paths", r.truncated_paths},
              {"interior_starts", r.interior_starts},
              {"cap_rejections", r.cap_rejections},
              {"cap_rejections_near_sigma", r.cap_rejections_near_sigma},
              {"sigma_crossings", r.sigma_crossings},
              {"mean_abs_z_after_burn_in", r.mean_abs_z_after_burn_in},
              {"mean_u_final", r.mean_u_final},
              {"mean_u_final_stderr", r.mean_u_final_stderr},
              {"convergence_tube", {{"u_tol", cfg.convergence.u_tol}, {"z_tol", cfg.convergence.z_tol}}}};
    j["mean_period"] = r.mean_period ? json(*r.mean_period) : json(nullptr);
    j["kepler_period"] = cfg.params.period();
    if (r.mean_period) j["period_rel_error"] = std::abs(*r.mean_period - cfg.params.period()) / cfg.params.period();
    if (!cfg.sim.deterministic)
        j["stationary_tube_fraction"] = laplace_tube_fraction(cfg.params, cfg.convergence.u_tol, cfg.convergence.z_tol);
    if (!r.paths.empty() && !r.paths.front().areal_velocity.empty()) {
        double sum = 0.0;
        long n = 0;
        const PathDiagnostics& d = r.paths.front();
        for (std::size_t k = 0; k < d.t.size(); ++k) {
            if (d.t[k] < cfg.burn_in || !std::isfinite(d.areal_velocity[k])) continue;
            sum += d.areal_velocity[k];
            ++n;
        }
        if (n > 0) j["mean_areal_velocity_path0"] = sum / n;
    }
    return j;
}

int cmd_simulate(const SimulateArgs& a) {
    if (a.figure1 && a.deterministic) throw ConfigError("--figure1 and --deterministic are exclusive");
    json preset = json::object();
    if (a.figure1) {
        preset = {{"params", {{"ecc", 0.5}, {"eps", 0.1}}},
                  {"sim", {{"n_paths", 256}, {"n_steps", 50000}, {"u_tol", 0.15}, {"z_tol", 0.2}, {"burn_in", 0.0}}}};
    }
    if (a.deterministic) {
        // one noiseless orbit from perihelion; resolve first to learn a and the period
        const RunConfig base = resolve(a.common);
        const PhysParams& p = base.params;
        const double dt = 1e-4 * p.lambda() * p.lambda() * p.lambda() / (p.mu() * p.mu());
        preset = {{"sim", {{"deterministic", true}, {"dt", dt}, {"n_paths", 1},
                           {"n_steps", std::lround(3.0 * p.period() / dt)}, {"record_stride", 10},
                           {"start_point", {p.a() * (1.0 - p.ecc()), 0.0, 0.0}}, {"burn_in", 0.0}}}};
    }
    json flags = json::object();
    if (a.jsonl) flags["output"]["jsonl"] = true;
    if (!a.deterministic) require_seed(a.common, "simulate");
    const RunConfig cfg = resolve(a.common, preset, flags);
    const TrajectoryEnsemble ens = simulate_ensemble(cfg.sim);

    std::string traj = cfg.output.trajectories;
    if (cfg.output.jsonl && traj.size() > 4 && traj.substr(traj.size() - 4) == ".csv")
        traj = traj.substr(0, traj.size() - 4) + ".jsonl";
    {
        std::ofstream out = open_output(cfg, traj);
        write_trajectories(out, ens, cfg.output.jsonl, metadata(cfg));
        finish(out, cfg.output.path(traj));
    }
    const KeplerReport rep = kepler_diagnostics(ens, cfg.params, cfg.convergence);
    json diag = {{"config", to_json(cfg)}, {"kepler", kepler_json(rep, cfg)}, {"trajectories", cfg.output.path(traj)}};
    if (a.figure1) diag["figure1_threshold_met"] = rep.final_converged_fraction >= 0.95;
    write_json_file(cfg, cfg.output.diagnostics, diag);
    std::cout << diag["kepler"].dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------- measure

struct MeasureArgs {
    Common common;
    bool marginal{false};
    double samples{1e6};
    bool widths{false};
    int width_points{360};
};

int cmd_measure(const MeasureArgs& a) {
    if (!a.marginal && !a.widths) throw ConfigError("measure needs --marginal and/or --widths");
    json summary = json::object();
    RunConfig cfg = resolve(a.common);
    if (a.marginal) {
        require_seed(a.common, "measure --marginal");
        if (!(a.samples >= 1e4)) throw ConfigError("--samples must be at least 1e4");
        // steps per path so that records after burn-in reach the sample count
        const double per_path = std::ceil(a.samples / cfg.sim.n_paths);
        const double needed = cfg.burn_in + (per_path + 1.0) * cfg.sim.record_stride * cfg.sim.dt;
        json flags = {{"sim", {{"n_steps", std::max(cfg.sim.n_steps, std::lround(std::ceil(needed / cfg.sim.dt)))}}}};
        cfg = resolve(a.common, json::object(), flags);
        const TrajectoryEnsemble ens = simulate_ensemble(cfg.sim);
        const EmpiricalMarginal m = empirical_marginal(ens, cfg.histogram_bins, cfg.burn_in);
        std::ofstream out = open_output(cfg, cfg.output.marginal);
        write_marginal_csv(out, m, cfg.params.ecc(), metadata(cfg));
        finish(out, cfg.output.path(cfg.output.marginal));
        summary["marginal"] = json::parse(marginal_summary_json(m, cfg.params.ecc()));
        summary["marginal"]["l1_below_0.05"] = m.l1(cfg.params.ecc()) < 0.05;
        json spread = json::array();
        for (double v0 : {0.0, 0.5 * kPi, kPi, 1.5 * kPi}) {
            const ZWindowStats z = z_window_stats(ens, v0, 0.1, cfg.burn_in);
            spread.push_back({{"v", v0}, {"sd_z", z.sd}, {"count", z.count},
                              {"predicted_sd_z", effective_widths(cfg.params, v0).sigma_z / std::sqrt(2.0)}});
        }
        summary["z_spread"] = spread;
    }
    if (a.widths) {
        std::ofstream out = open_output(cfg, cfg.output.widths);
        write_width_profile_csv(out, cfg.params, a.width_points, metadata(cfg));
        finish(out, cfg.output.path(cfg.output.widths));
        summary["widths"] = cfg.output.path(cfg.output.widths);
    }
    summary["config"] = to_json(cfg);
    write_json_file(cfg, cfg.output.diagnostics, summary);
    json brief = summary;
    brief.erase("config");
    std::cout << brief.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------- spectral

struct SpectralArgs {
    Common common;
    bool gap{false};
    bool scan{false};
    std::optional<int> dim;
    bool no_autocorr{false};
};

int cmd_spectral(const SpectralArgs& a) {
    if (!a.gap && !a.scan) throw ConfigError("spectral needs --gap and/or --scan");
    json flags = json::object();
    if (a.dim) flags["grid"]["dimension"] = *a.dim;
    const RunConfig cfg = resolve(a.common, json::object(), flags);
    json printed = json::object();
    if (a.gap) {
        json grid = to_json(cfg)["grid"];
        json report = {{"params", to_json(cfg)["params"]}, {"grid", grid}};
        if (a.no_autocorr) {
            const GapResult g = gap_from_matrix(build_generator(cfg.params, cfg.grid), cfg.gap);
            report["gap"] = g.gap;
            report["eigenvalue"] = cnum(g.eigenvalue);
            report["eigen_residual"] = g.residual;
            report["autocorr_gap"] = nullptr;
            report["autocorr_ci"] = nullptr;
            report["agreement_ratio"] = nullptr;
        } else {
            require_seed(a.common, "spectral --gap (autocorrelation ensemble)");
            const GapComparison g =
                compare_gaps(cfg.params, cfg.grid, cfg.gap, cfg.autocorr, cfg.autocorr_run, cfg.sim.seed, cfg.sim.threads);
            report["gap"] = g.matrix.gap;
            report["eigenvalue"] = cnum(g.matrix.eigenvalue);
            report["eigen_residual"] = g.matrix.residual;
            report["autocorr_gap"] = g.autocorr.gamma;
            report["autocorr_ci"] = {g.autocorr.ci_low, g.autocorr.ci_high};
            report["autocorr_fitted_lags"] = g.autocorr.fitted_lags;
            report["agreement_ratio"] = g.agreement_ratio;
        }
        report["config"] = to_json(cfg);
        write_json_file(cfg, cfg.output.gap, report);
        report.erase("config");
        printed["gap"] = report;
    }
    if (a.scan) {
        const GuScanReport r = gu_radial_scan(cfg.params, cfg.spectral, cfg.scan_radii, cfg.scan);
        std::ofstream out = open_output(cfg, cfg.output.scan);
        out << "# " << metadata(cfg) << '\n' << "r,max_Gu,bound\n";
        for (std::size_t k = 0; k < r.radii.size(); ++k)
            out << json(r.radii[k]).dump() << ',' << json(r.max_gu[k]).dump() << ',' << json(r.bound).dump() << '\n';
        finish(out, cfg.output.path(cfg.output.scan));
        printed["scan"] = {{"r1_found", r.r1_found},
                           {"r1_hat", r.r1_found ? json(r.r1_hat) : json(nullptr)},
                           {"bound", r.bound},
                           {"sup_grad_log_T", r.sup_grad_log_T},
                           {"C", cfg.spectral.C},
                           {"csv", cfg.output.path(cfg.output.scan)}};
    }
    std::cout << printed.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
    bool quick{false};
    std::vector<int> only;
    int threads{0};
    std::string json_path;
};

int cmd_verify(const VerifyArgs& a) {
    AcceptanceOptions opt;
    opt.quick = a.quick;
    opt.only = a.only;
    opt.threads = a.threads;
    opt.on_result = [](const CriterionResult& r) { std::cout << format_result(r) << std::endl; };
    const auto results = run_acceptance(opt);
    if (!a.json_path.empty()) {
        json doc = json::array();
        for (const auto& r : results)
            doc.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"known_deviation", r.known_deviation},
                           {"seconds", r.seconds}, {"data", r.data}});
        std::ofstream out(a.json_path);
        if (!out) throw IoError("cannot write " + a.json_path);
        out << doc.dump(2) << '\n';
        if (!out) throw IoError("write failed for " + a.json_path);
    }
    return all_passed(results) ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Limiting Nelson diffusion of the elliptic state"};
    app.require_subcommand(1);

    FieldArgs field;
    auto* f = app.add_subcommand("field", "evaluate fields at a point, on a grid, or check identities");
    add_common(f, field.common, false);
    f->add_option("--point", field.point, "x,y,z");
    f->add_flag("--grid", field.grid, "CSV table on the z = 0 plane of the grid box");
    f->add_option("--nx", field.nx, "grid columns")->check(CLI::PositiveNumber);
    f->add_option("--ny", field.ny, "grid rows")->check(CLI::PositiveNumber);
    f->add_flag("--check-identities", field.identities, "max energy and orthogonality residuals");
    f->add_option("--n", field.n, "points for --check-identities")->check(CLI::PositiveNumber);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Euler-Maruyama ensemble with Kepler diagnostics");
    add_common(s, sim.common, true);
    s->add_flag("--figure1", sim.figure1, "e = 0.5, eps = 0.1, 256 paths from the 3a ring to T = 50");
    s->add_flag("--deterministic", sim.deterministic, "noiseless flow from perihelion, dt = 1e-4");
    s->add_flag("--jsonl", sim.jsonl, "trajectories as JSON lines");

    MeasureArgs meas;
    auto* m = app.add_subcommand("measure", "empirical marginal in v and width profiles");
    add_common(m, meas.common, true);
    m->add_flag("--marginal", meas.marginal, "histogram of v against (1 - e cos v)/2pi");
    m->add_option("--samples", meas.samples, "stationary samples (e.g. 1e6)");
    m->add_flag("--widths", meas.widths, "width profile CSV");
    m->add_option("--width-points", meas.width_points, "angles in the width profile")->check(CLI::PositiveNumber);

    SpectralArgs spec;
    auto* g = app.add_subcommand("spectral", "spectral gap and radial drift scan");
    add_common(g, spec.common, true);
    g->add_flag("--gap", spec.gap, "matrix gap with the autocorrelation cross-check");
    g->add_flag("--scan", spec.scan, "radial scan of G_u|x|");
    g->add_option("--dim", spec.dim, "grid dimension (2 or 3)");
    g->add_flag("--no-autocorr", spec.no_autocorr, "matrix gap only");

    VerifyArgs ver;
    auto* v = app.add_subcommand("verify", "run the acceptance checks");
    v->add_flag("--quick", ver.quick, "closed-form checks only");
    v->add_option("--only", ver.only, "criterion numbers")->delimiter(',');
    v->add_option("--threads", ver.threads, "worker threads");
    v->add_option("--json", ver.json_path, "write full results as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*f) return cmd_field(field);
        if (*s) return cmd_simulate(sim);
        if (*m) return cmd_measure(meas);
        if (*g) return cmd_spectral(spec);
        if (*v) return cmd_verify(ver);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return kDomain;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDomain;
    }
    return kConfig;
}
