#include "nelson/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

namespace nelson {

using nlohmann::json;

namespace {

void reject_unknown(const json& section, const std::string& name, const std::set<std::string>& allowed) {
    if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
    for (const auto& [key, value] : section.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + name + "." + key + "'");
    }
}

json section_of(const json& doc, const std::string& name) {
    if (!doc.contains(name)) return json::object();
    return doc.at(name);
}

template <class T>
T get_or(const json& section, const char* key, T fallback) {
    if (!section.contains(key)) return fallback;
    return section.at(key).get<T>();
}

std::array<double, 3> triple_or(const json& section, const char* key, std::array<double, 3> fallback) {
    if (!section.contains(key)) return fallback;
    const auto v = section.at(key).get<std::vector<double>>();
    if (v.empty() || v.size() > 3) throw ConfigError(std::string("grid.") + key + " must have 1 to 3 entries");
    for (std::size_t i = 0; i < v.size(); ++i) fallback[i] = v[i];
    return fallback;
}

const char* scheme_name(DriftScheme s) { return s == DriftScheme::Upwind ? "upwind" : "sg"; }

DriftScheme parse_scheme(const std::string& s) {
    if (s == "upwind") return DriftScheme::Upwind;
    if (s == "sg" || s == "scharfetter-gummel") return DriftScheme::ScharfetterGummel;
    throw ConfigError("grid.scheme must be 'upwind' or 'sg'");
}

RunConfig resolve_unchecked(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
    reject_unknown(doc, "<root>", {"params", "sim", "grid", "spectral", "output"});
    const json jp = section_of(doc, "params");
    const json js = section_of(doc, "sim");
    const json jg = section_of(doc, "grid");
    const json jx = section_of(doc, "spectral");
    const json jo = section_of(doc, "output");
    reject_unknown(jp, "params", {"lambda", "mu", "ecc", "eps"});
    reject_unknown(js, "sim", {"dt", "n_steps", "n_paths", "seed", "ring_radius", "ring_height", "start_point",
                               "drift_cap", "record_stride", "planar", "deterministic", "threads", "burn_in",
                               "histogram_bins", "u_tol", "z_tol"});
    reject_unknown(jg, "grid", {"dimension", "lo", "hi", "n", "excluded", "scheme"});
    reject_unknown(jx, "spectral", {"C", "r0", "shift", "krylov_dim", "max_refine", "tol", "autocorr_burn_in",
                                    "lag_spacing", "max_lags", "bootstrap", "bootstrap_seed", "min_relative",
                                    "autocorr_paths", "autocorr_duration", "autocorr_stride", "scan_radii",
                                    "scan_angles", "scan_include_T"});
    reject_unknown(jo, "output", {"dir", "trajectories", "diagnostics", "marginal", "widths", "gap", "scan", "jsonl"});

    RunConfig c;
    c.params = PhysParams(get_or(jp, "lambda", 1.0), get_or(jp, "mu", 1.0), get_or(jp, "ecc", 0.5),
                          get_or(jp, "eps", 0.1));
    const PhysParams& p = c.params;

    c.sim = SimConfig::defaults(p);
    c.sim.deterministic = get_or(js, "deterministic", false);
    // The noiseless flow needs the finer step to resolve the period to 0.1%.
    const double time_unit = p.lambda() * p.lambda() * p.lambda() / (p.mu() * p.mu());
    c.sim.dt = get_or(js, "dt", (c.sim.deterministic ? 1e-4 : 1e-3) * time_unit);
    c.sim.n_steps = get_or(js, "n_steps", c.sim.n_steps);
    c.sim.n_paths = get_or(js, "n_paths", c.sim.n_paths);
    c.sim.seed = get_or<std::uint64_t>(js, "seed", 0);
    c.sim.drift_cap = get_or(js, "drift_cap", c.sim.drift_cap);
    c.sim.record_stride = get_or(js, "record_stride", c.sim.record_stride);
    c.sim.planar = get_or(js, "planar", false);
    c.sim.threads = get_or(js, "threads", 0);
    if (js.contains("start_point")) {
        if (js.contains("ring_radius") || js.contains("ring_height"))
            throw ConfigError("sim.start_point excludes sim.ring_radius and sim.ring_height");
        const auto v = js.at("start_point").get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError("sim.start_point must have three entries");
        c.sim.x0 = CartesianPoint{v[0], v[1], v[2]};
    } else {
        c.sim.x0 = RingStart{get_or(js, "ring_radius", 3.0 * p.a()), get_or(js, "ring_height", 0.0)};
    }
    c.burn_in = get_or(js, "burn_in", c.burn_in);
    c.histogram_bins = get_or(js, "histogram_bins", c.histogram_bins);
    c.convergence.u_tol = get_or(js, "u_tol", c.convergence.u_tol);
    c.convergence.z_tol = get_or(js, "z_tol", c.convergence.z_tol);
    c.convergence.burn_in = c.burn_in;
    c.sim.validate();
    if (c.burn_in < 0.0) throw ConfigError("sim.burn_in must be >= 0");
    if (c.histogram_bins < 2) throw ConfigError("sim.histogram_bins must be >= 2");
    if (!(c.convergence.u_tol > 0.0 && c.convergence.z_tol > 0.0)) throw ConfigError("sim.u_tol and sim.z_tol must be positive");

    c.grid.dimension = get_or(jg, "dimension", 2);
    if (c.grid.dimension != 2 && c.grid.dimension != 3) throw ConfigError("grid.dimension must be 2 or 3");
    c.grid.lo = triple_or(jg, "lo", {-3.0, -2.0, -1.5});
    c.grid.hi = triple_or(jg, "hi", {2.0, 2.0, 1.5});
    c.grid.excluded = get_or(jg, "excluded", c.grid.excluded);
    c.grid.scheme = parse_scheme(get_or<std::string>(jg, "scheme", "sg"));
    if (jg.contains("n")) {
        const auto v = jg.at("n").get<std::vector<int>>();
        if (v.empty() || v.size() > 3) throw ConfigError("grid.n must have 1 to 3 entries");
        c.grid.n = {1, 1, 1};
        for (std::size_t i = 0; i < v.size(); ++i) c.grid.n[i] = v[i];
    } else {
        const int k = resolving_density(p, c.grid.dimension);
        c.grid.n = {1, 1, 1};
        for (int d = 0; d < c.grid.dimension; ++d) {
            const auto i = static_cast<std::size_t>(d);
            c.grid.n[i] = std::max(2, static_cast<int>(std::ceil((c.grid.hi[i] - c.grid.lo[i]) * k - 1e-9)));
        }
    }
    c.grid.validate();

    c.spectral.C = get_or(jx, "C", 3.0);
    c.spectral.r0 = get_or(jx, "r0", c.spectral.r0);
    c.gap.shift = get_or(jx, "shift", c.gap.shift);
    c.gap.krylov_dim = get_or(jx, "krylov_dim", c.gap.krylov_dim);
    c.gap.max_refine = get_or(jx, "max_refine", c.gap.max_refine);
    c.gap.tol = get_or(jx, "tol", c.gap.tol);
    c.autocorr.burn_in = get_or(jx, "autocorr_burn_in", c.autocorr.burn_in);
    c.autocorr.lag_spacing = get_or(jx, "lag_spacing", c.autocorr.lag_spacing);
    c.autocorr.max_lags = get_or(jx, "max_lags", c.autocorr.max_lags);
    c.autocorr.bootstrap = get_or(jx, "bootstrap", c.autocorr.bootstrap);
    c.autocorr.seed = get_or<std::uint64_t>(jx, "bootstrap_seed", c.autocorr.seed);
    c.autocorr.min_relative = get_or(jx, "min_relative", c.autocorr.min_relative);
    c.autocorr_run.n_paths = get_or(jx, "autocorr_paths", c.autocorr_run.n_paths);
    c.autocorr_run.duration = get_or(jx, "autocorr_duration", c.autocorr_run.duration);
    c.autocorr_run.record_stride = get_or(jx, "autocorr_stride", c.autocorr_run.record_stride);
    c.scan_radii = get_or(jx, "scan_radii", c.scan_radii);
    c.scan.n_angles = get_or(jx, "scan_angles", c.scan.n_angles);
    c.scan.include_T = get_or(jx, "scan_include_T", c.scan.include_T);
    if (!(c.spectral.r0 > 0.0)) throw ConfigError("spectral.r0 must be positive");
    if (!(c.gap.shift > 0.0) || c.gap.krylov_dim < 4 || c.gap.max_refine < 1 || !(c.gap.tol > 0.0))
        throw ConfigError("spectral eigensolver settings out of range");
    if (c.autocorr.burn_in < 0.0 || c.autocorr.lag_spacing < 0.0 || c.autocorr.max_lags < 3 ||
        c.autocorr.bootstrap < 2 || !(c.autocorr.min_relative > 0.0 && c.autocorr.min_relative < 1.0))
        throw ConfigError("spectral autocorrelation settings out of range");
    if (c.autocorr_run.n_paths < 2 || !(c.autocorr_run.duration > c.autocorr.burn_in) || c.autocorr_run.record_stride < 1)
        throw ConfigError("spectral autocorrelation run settings out of range");
    if (c.scan_radii.empty() || std::any_of(c.scan_radii.begin(), c.scan_radii.end(), [](double r) { return !(r > 0.0); }))
        throw ConfigError("spectral.scan_radii must be positive");
    if (c.scan.n_angles < 1) throw ConfigError("spectral.scan_angles must be positive");

    c.output.dir = get_or(jo, "dir", c.output.dir);
    c.output.trajectories = get_or(jo, "trajectories", c.output.trajectories);
    c.output.diagnostics = get_or(jo, "diagnostics", c.output.diagnostics);
    c.output.marginal = get_or(jo, "marginal", c.output.marginal);
    c.output.widths = get_or(jo, "widths", c.output.widths);
    c.output.gap = get_or(jo, "gap", c.output.gap);
    c.output.scan = get_or(jo, "scan", c.output.scan);
    c.output.jsonl = get_or(jo, "jsonl", c.output.jsonl);
    return c;
}

}  // namespace

std::string OutputConfig::path(const std::string& file) const {
    return (std::filesystem::path(dir) / file).string();
}

int resolving_density(const PhysParams& p, int dimension) {
    const double h_max = min_effective_width(p, dimension) / (4.5 * p.a());
    const int k = static_cast<int>(std::ceil(1.0 / h_max));
    return 5 * ((k + 4) / 5);
}

RunConfig resolve_config(const json& doc) {
    try {
        return resolve_unchecked(doc);
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config value has the wrong type: ") + ex.what());
    }
}

json read_config_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ConfigError("config file " + path + " is not valid JSON: " + ex.what());
    }
}

RunConfig load_config(const std::string& path) { return resolve_config(read_config_document(path)); }

json to_json(const RunConfig& c) {
    json doc;
    doc["params"] = {{"lambda", c.params.lambda()}, {"mu", c.params.mu()}, {"ecc", c.params.ecc()}, {"eps", c.params.eps()}};
    json sim = {{"dt", c.sim.dt},
                {"n_steps", c.sim.n_steps},
                {"n_paths", c.sim.n_paths},
                {"seed", c.sim.seed},
                {"drift_cap", c.sim.drift_cap},
                {"record_stride", c.sim.record_stride},
                {"planar", c.sim.planar},
                {"deterministic", c.sim.deterministic},
                {"threads", c.sim.threads},
                {"burn_in", c.burn_in},
                {"histogram_bins", c.histogram_bins},
                {"u_tol", c.convergence.u_tol},
                {"z_tol", c.convergence.z_tol}};
    if (const auto* ring = std::get_if<RingStart>(&c.sim.x0)) {
        sim["ring_radius"] = ring->radius;
        sim["ring_height"] = ring->height;
    } else {
        const auto& x = std::get<CartesianPoint>(c.sim.x0);
        sim["start_point"] = {x.x, x.y, x.z};
    }
    doc["sim"] = sim;
    std::vector<double> lo, hi;
    std::vector<int> n;
    for (int d = 0; d < c.grid.dimension; ++d) {
        const auto i = static_cast<std::size_t>(d);
        lo.push_back(c.grid.lo[i]);
        hi.push_back(c.grid.hi[i]);
        n.push_back(c.grid.n[i]);
    }
    doc["grid"] = {{"dimension", c.grid.dimension}, {"lo", lo}, {"hi", hi}, {"n", n},
                   {"excluded", c.grid.excluded}, {"scheme", scheme_name(c.grid.scheme)}};
    doc["spectral"] = {{"C", c.spectral.C},
                       {"r0", c.spectral.r0},
                       {"shift", c.gap.shift},
                       {"krylov_dim", c.gap.krylov_dim},
                       {"max_refine", c.gap.max_refine},
                       {"tol", c.gap.tol},
                       {"autocorr_burn_in", c.autocorr.burn_in},
                       {"lag_spacing", c.autocorr.lag_spacing},
                       {"max_lags", c.autocorr.max_lags},
                       {"bootstrap", c.autocorr.bootstrap},
                       {"bootstrap_seed", c.autocorr.seed},
                       {"min_relative", c.autocorr.min_relative},
                       {"autocorr_paths", c.autocorr_run.n_paths},
                       {"autocorr_duration", c.autocorr_run.duration},
                       {"autocorr_stride", c.autocorr_run.record_stride},
                       {"scan_radii", c.scan_radii},
                       {"scan_angles", c.scan.n_angles},
                       {"scan_include_T", c.scan.include_T}};
    doc["output"] = {{"dir", c.output.dir},           {"trajectories", c.output.trajectories},
                     {"diagnostics", c.output.diagnostics}, {"marginal", c.output.marginal},
                     {"widths", c.output.widths},     {"gap", c.output.gap},
                     {"scan", c.output.scan},         {"jsonl", c.output.jsonl}};
    return doc;
}

}  // namespace nelson
