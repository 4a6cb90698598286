#include "nelson/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "nelson/config.hpp"
#include "nelson/coords.hpp"
#include "nelson/experiments.hpp"
#include "nelson/field.hpp"
#include "nelson/measure.hpp"
#include "nelson/sde.hpp"
#include "nelson/special.hpp"
#include "nelson/spectral.hpp"

namespace nelson {

using nlohmann::json;

namespace {

const double kEccs[] = {0.1, 0.3, 0.5, 0.7, 0.9};

// Named sub-checks; the criterion passes when all of them do.
class Checks {
public:
    void add(const std::string& name, bool ok, double value) {
        items_.push_back({name, ok, value});
        data_[name] = {{"value", value}, {"pass", ok}};
    }
    [[nodiscard]] bool ok() const {
        return std::all_of(items_.begin(), items_.end(), [](const Item& i) { return i.ok; });
    }
    [[nodiscard]] bool ok_except(const std::string& name) const {
        return std::all_of(items_.begin(), items_.end(), [&](const Item& i) { return i.ok || i.name == name; });
    }
    [[nodiscard]] std::string summary() const {
        std::ostringstream os;
        os.precision(3);
        bool first = true;
        for (const auto& i : items_) {
            os << (first ? "" : "; ") << i.name << '=' << i.value << (i.ok ? "" : " [fail]");
            first = false;
        }
        return os.str();
    }
    [[nodiscard]] const json& data() const { return data_; }

private:
    struct Item {
        std::string name;
        bool ok;
        double value;
    };
    std::vector<Item> items_;
    json data_ = json::object();
};

double radical_inverse(int i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

CartesianPoint halton_point(int i, double half_width) {
    return {half_width * (2.0 * radical_inverse(i, 2) - 1.0), half_width * (2.0 * radical_inverse(i, 3) - 1.0),
            half_width * (2.0 * radical_inverse(i, 5) - 1.0)};
}

CriterionResult identities(const AcceptanceOptions&) {
    Checks c;
    double worst_energy = 0.0, worst_orth = 0.0;
    long count = 0;
    for (double e : kEccs) {
        const IdentityResiduals r = identity_residuals(PhysParams(1.0, 1.0, e, 0.1), 10000);
        worst_energy = std::max(worst_energy, r.energy);
        worst_orth = std::max(worst_orth, r.orthogonality);
        count += r.points;
    }
    c.add("max_energy_residual", worst_energy < 1e-9, worst_energy);
    c.add("max_orthogonality", worst_orth < 1e-8, worst_orth);
    c.add("points", count >= 10000, static_cast<double>(count));
    return {1, "identity suite", c.ok(), false, c.summary(), 0, c.data()};
}

CriterionResult kepler_velocity(const AcceptanceOptions&) {
    Checks c;
    double worst_speed = 0.0, worst_angle = 0.0;
    for (double e : kEccs) {
        const PhysParams p(1.0, 1.0, e, 0.1);
        for (int k = 0; k < 360; ++k) {
            const double v = kTwoPi * k / 360.0, cv = std::cos(v);
            const Vec3 b = eval_drift(p, kepler_point(p, v));
            const double vis_viva = p.mu() / p.lambda() * std::sqrt((1.0 + e * cv) / (1.0 - e * cv));
            worst_speed = std::max(worst_speed, std::abs(b.norm() - vis_viva) / vis_viva);
            const Vec3 t{-p.a() * std::sin(v), p.a() * p.ecc_conj() * cv, 0.0};
            const Vec3 cross{b.y * t.z - b.z * t.y, b.z * t.x - b.x * t.z, b.x * t.y - b.y * t.x};
            worst_angle = std::max(worst_angle, std::atan2(cross.norm(), b.dot(t)));
        }
    }
    c.add("max_speed_rel_error", worst_speed < 1e-9, worst_speed);
    c.add("max_tangency_angle", worst_angle < 1e-9, worst_angle);
    return {2, "Kepler velocity", c.ok(), false, c.summary(), 0, c.data()};
}

CriterionResult t_and_g(const AcceptanceOptions&) {
    Checks c;
    double worst_t = 0.0, worst_tg = 0.0, worst_int = 0.0;
    for (double e : kEccs) {
        for (int k = 0; k < 720; ++k) {
            const double v = kTwoPi * k / 720.0;
            worst_t = std::max(worst_t, std::abs(T_closed(e, v) - T_ode(e, v)));
            worst_tg = std::max(worst_tg, std::abs(T_closed(e, v) * g_weight(e, v) - (1 - e * e) * (1 - e * std::cos(v))));
        }
        const double q = g_integral_quadrature(e), el = g_integral_elliptic(e);
        worst_int = std::max(worst_int, std::abs(q - el) / el);
    }
    c.add("T_closed_vs_ode", worst_t < 1e-8, worst_t);
    c.add("Tg_identity", worst_tg < 1e-12, worst_tg);
    c.add("g_integral_rel", worst_int < 1e-8, worst_int);
    return {3, "T/g/normalization", c.ok(), false, c.summary(), 0, c.data()};
}

CriterionResult marginal_law(const AcceptanceOptions& opt) {
    Checks c;
    const PhysParams p(1.0, 1.0, 0.5, 0.05);
    SimConfig s = SimConfig::defaults(p);
    s.n_paths = 64;
    s.n_steps = 200000;
    s.record_stride = 10;
    s.seed = opt.seed + 4;
    s.threads = opt.threads;
    const double burn_in = 20.0;
    const TrajectoryEnsemble ens = simulate_ensemble(s);
    const EmpiricalMarginal m = empirical_marginal(ens, 64, burn_in);
    c.add("samples", m.total() >= 1000000, static_cast<double>(m.total()));
    c.add("L1", m.l1(p.ecc()) < 0.05, m.l1(p.ecc()));
    double worst = 0.0;
    for (double v0 : {0.0, 0.5 * kPi, kPi, 1.5 * kPi}) {
        const ZWindowStats z = z_window_stats(ens, v0, 0.1, burn_in);
        const double expected = effective_widths(p, v0).sigma_z / std::sqrt(2.0);
        worst = std::max(worst, std::abs(z.sd - expected) / expected);
    }
    c.add("max_z_spread_rel_error", worst < 0.2, worst);
    return {4, "marginal law", c.ok(), false, c.summary(), 0, c.data()};
}

CriterionResult ring_convergence(const AcceptanceOptions& opt) {
    Checks c;
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig s = SimConfig::defaults(p);
    s.n_paths = 256;
    s.n_steps = std::lround(50.0 / s.dt);
    s.record_stride = 100;
    s.seed = opt.seed + 5;
    s.threads = opt.threads;
    const KeplerReport rep = kepler_diagnostics(simulate_ensemble(s), p, {0.15, 0.2, 0.0});
    const double f = rep.final_converged_fraction;
    const double predicted = laplace_tube_fraction(p, 0.15, 0.2);
    const double sd = std::sqrt(predicted * (1.0 - predicted) / s.n_paths);
    c.add("final_converged_fraction", f >= 0.95, f);
    c.add("stationary_prediction", true, predicted);
    c.add("truncated_paths", rep.truncated_paths == 0, rep.truncated_paths);
    CriterionResult r{5, "ring convergence", c.ok(), false, c.summary(), 0, c.data()};
    // The 95% level sits above the mass of the tube under the stationary law
    // itself, so a failure that agrees with that mass is the known shortfall.
    r.known_deviation = !r.pass && c.ok_except("final_converged_fraction") && predicted < 0.95 &&
                        std::abs(f - predicted) < 3.0 * sd;
    return r;
}

CriterionResult convergence_chain(const AcceptanceOptions&) {
    Checks c;
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    int monotone = 0, taken = 0;
    double worst_last = 0.0;
    for (int i = 1; taken < 20; ++i) {
        const CartesianPoint h = halton_point(i, 1.0);
        const CartesianPoint x{-0.5 * p.a() + 2.5 * p.a() * h.x, 2.5 * p.a() * h.y, 1.5 * p.a() * h.z};
        // off the nodal set: away from the origin and from Sigma
        if (x.norm() < 0.2 * p.a() || sigma_distance(p, x) < 0.2 * p.a()) continue;
        ++taken;
        const ComplexVec3 zl = eval_z_limit(p, x);
        double prev = INFINITY;
        bool ok = true;
        for (int n : {10, 50, 250, 1250}) {
            const double err = z_finite_n(p, n, x).distance(zl);
            ok = ok && err < prev;
            prev = err;
        }
        worst_last = std::max(worst_last, prev);
        monotone += ok ? 1 : 0;
    }
    c.add("strictly_decreasing_points", monotone == 20, monotone);
    c.add("max_error_n1250", true, worst_last);
    for (double nu : {8.0, 100.0}) {
        const cplx limit = 1.0 - std::sqrt(1.0 - 4.0 / nu);
        const double err = std::abs(q_ratio(2 * 2000, nu) / std::sqrt(nu / 2.0) - limit);
        c.add("q_ratio_error_nu" + std::to_string(static_cast<int>(nu)), err < 1e-3, err);
    }
    return {6, "convergence chain", c.ok(), false, c.summary(), 0, c.data()};
}

CriterionResult spectral_suite(const AcceptanceOptions& opt) {
    Checks c;
    json extra = json::object();
    const double eps_c = 0.2, D = 0.5 * eps_c * eps_c;
    auto zero = [](const CartesianPoint&) { return Vec3{}; };
    {
        GridSpec g;
        g.dimension = 1;
        g.lo = {0.0, 0.0, 0.0};
        g.hi = {2.0, 0.0, 0.0};
        g.n = {400, 1, 1};
        g.excluded = 0.0;
        GeneratorMatrix gm = build_generator_from_drift(g, D, zero);
        gm.w = stationary_vector(gm);
        const double exact = D * (kPi / 2.0) * (kPi / 2.0);
        const double err = std::abs(gap_from_matrix(gm).gap - exact) / exact;
        c.add("neumann_1d_rel_error", err < 0.02, err);
    }
    {
        GridSpec g;
        g.dimension = 2;
        g.lo = {0.0, 0.0, 0.0};
        g.hi = {2.0, 1.5, 0.0};
        g.n = {200, 200, 1};
        g.excluded = 0.0;
        GeneratorMatrix gm = build_generator_from_drift(g, D, zero);
        gm.w = stationary_vector(gm);
        const double exact = D * (kPi / 2.0) * (kPi / 2.0);
        const double err = std::abs(gap_from_matrix(gm).gap - exact) / exact;
        c.add("neumann_2d_rel_error", err < 0.05, err);
    }
    // Grid doubling; at eps = 0.1 a box hugging the ellipse keeps the fine
    // grid desk-sized while leaving several widths of margin.
    struct Doubling {
        double eps;
        GridSpec grid;
    };
    GridSpec tight;
    tight.dimension = 2;
    tight.lo = {-1.9, -1.25, 0.0};
    tight.hi = {0.9, 1.25, 0.0};
    tight.n = {280, 250, 1};
    tight.scheme = DriftScheme::ScharfetterGummel;
    std::vector<Doubling> runs{{0.1, tight}};
    for (double eps : {0.2, 0.3})
        runs.push_back({eps, resolved_plane_grid(PhysParams(1.0, 1.0, 0.5, eps), {-3.0, -2.0}, {2.0, 2.0})});
    double worst_change = 0.0, worst_residual = 0.0, min_gap = INFINITY;
    json gaps = json::array();
    for (const auto& d : runs) {
        const PhysParams p(1.0, 1.0, 0.5, d.eps);
        const GapResult a = gap_from_matrix(build_generator(p, d.grid));
        const GapResult b = gap_from_matrix(build_generator(p, d.grid.refined()));
        const double change = std::abs(a.gap - b.gap) / std::abs(b.gap);
        worst_change = std::max(worst_change, change);
        worst_residual = std::max({worst_residual, a.residual, b.residual});
        min_gap = std::min({min_gap, a.gap, b.gap});
        gaps.push_back({{"eps", d.eps}, {"n", d.grid.n[0]}, {"gap", a.gap}, {"gap_refined", b.gap},
                        {"imag", b.eigenvalue.imag()}, {"change", change}});
    }
    extra["gap_vs_eps"] = gaps;
    c.add("min_gap", min_gap > 0.0, min_gap);
    c.add("max_eigen_residual", worst_residual < 1e-8, worst_residual);
    c.add("max_doubling_change", worst_change <= 0.10, worst_change);

    double worst_ratio = 0.0;
    json pairs = json::array();
    std::uint64_t seed = opt.seed + 7;
    for (double e : {0.3, 0.5}) {
        for (double eps : {0.2, 0.3}) {
            const PhysParams p(1.0, 1.0, e, eps);
            const GapComparison g = compare_gaps(p, resolved_plane_grid(p, {-3.0, -2.0}, {2.0, 2.0}), {}, {},
                                                 AutocorrRun{}, seed++, opt.threads);
            worst_ratio = std::max(worst_ratio, g.agreement_ratio);
            pairs.push_back({{"e", e}, {"eps", eps}, {"matrix_gap", g.matrix.gap}, {"autocorr_gap", g.autocorr.gamma},
                             {"autocorr_ci", {g.autocorr.ci_low, g.autocorr.ci_high}}, {"ratio", g.agreement_ratio}});
        }
    }
    extra["cross_estimator"] = pairs;
    c.add("max_agreement_ratio", worst_ratio <= 2.0, worst_ratio);
    json data = c.data();
    data.update(extra);
    return {7, "spectral suite", c.ok(), false, c.summary(), 0, data};
}

CriterionResult proof_machinery(const AcceptanceOptions&) {
    Checks c;
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> ang(0.0, kTwoPi), du(-0.1, 0.1), dz(-0.05, 0.05);
        double worst = 0.0;
        for (double eps : {0.1, 0.2, 0.4}) {
            const PhysParams p(1.0, 1.0, 0.5, eps);
            for (int taken = 0; taken < 10;) {
                const CartesianPoint x = from_elliptic(p, {p.ecc() + du(rng), ang(rng), dz(rng)});
                if (sigma_distance(p, x) < 0.1 * p.a()) continue;
                ++taken;
                const HtildeResidual r = htilde_residual_auto(p, x);
                worst = std::max(worst, std::abs(r.lhs - r.rhs) / std::abs(r.rhs));
            }
        }
        c.add("htilde_max_rel", worst < 1e-6, worst);
    }
    const PhysParams p3(1.0, 1.0, 0.5, 0.3);
    {
        // first order: halving h roughly halves the residual
        const auto a = adjoint_grid_residual(p3, build_generator(p3, resolved_plane_grid(p3, {-3.0, -2.0}, {2.0, 2.0}, DriftScheme::Upwind)));
        GridSpec fine = resolved_plane_grid(p3, {-3.0, -2.0}, {2.0, 2.0}, DriftScheme::Upwind).refined();
        const auto b = adjoint_grid_residual(p3, build_generator(p3, fine));
        const double ratio = a.rms / b.rms;
        c.add("adjoint_halving_ratio", ratio > 1.5 && ratio < 3.0, ratio);
    }
    {
        GridSpec g;
        g.dimension = 2;
        g.lo = {-2.5, -1.5, 0.0};
        g.hi = {1.5, 1.5, 0.0};
        g.scheme = DriftScheme::ScharfetterGummel;
        g.n = {200, 150, 1};
        const GeneratorMatrix coarse = build_generator(p3, g);
        const GeneratorMatrix fine = build_generator(p3, g.refined());
        const CartesianPoint centre{-p3.a() * p3.ecc(), p3.a() * p3.ecc_conj(), 0.0};
        const TestFunction bump = bump_function(centre, 0.6), lin = clipped_linear(centre, 0.6, 0);
        const double b1 = dirichlet_identity_check(coarse, bump).relative, b2 = dirichlet_identity_check(fine, bump).relative;
        const double l1 = dirichlet_identity_check(coarse, lin).relative, l2 = dirichlet_identity_check(fine, lin).relative;
        c.add("dirichlet_bump_refined", b2 < b1, b2);
        c.add("dirichlet_linear_refined", l2 < l1, l2);
        c.add("dirichlet_constant", std::abs(dirichlet_identity_check(fine, constant_function(1.0)).lhs) < 1e-10, 0.0);
    }
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SpectralConfig s;
    s.C = 3.0;  // sup |grad ln T_hat| outside r0 is about 2.6
    const std::vector<double> radii{0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0};
    const GuScanReport rep = gu_radial_scan(p, s, radii);
    GuScanOptions flat_opt;
    flat_opt.include_T = false;
    const GuScanReport flat = gu_radial_scan(p, s, {100.0}, flat_opt);
    c.add("gu_C_covers_sup_grad_lnT", rep.sup_grad_log_T < s.C, rep.sup_grad_log_T);
    c.add("gu_r1_hat", rep.r1_found && std::isfinite(rep.r1_hat), rep.r1_hat);
    const double at100 = rep.max_gu.back();
    const double half = -p.mu() / (2.0 * p.lambda()), full = -p.mu() / p.lambda();
    c.add("gu_asymptote_vs_minus_mu_over_2lambda", std::abs(at100 - half) <= 0.05 * std::abs(half), at100);
    c.add("gu_asymptote_vs_minus_mu_over_lambda", std::abs(at100 - full) <= 0.05 * std::abs(full), at100);
    c.add("gu_flat_T_asymptote", std::abs(flat.max_gu.back() - full) <= 0.05 * std::abs(full), flat.max_gu.back());
    CriterionResult r{8, "proof machinery", c.ok(), false, c.summary(), 0, c.data()};
    // (eps^2/2|x|)(2 + 2 grad R.x) tends to -mu/lambda, twice the stated
    // target; the failure is known when the scan lands on that limit.
    r.known_deviation = !r.pass && c.ok_except("gu_asymptote_vs_minus_mu_over_2lambda");
    return r;
}

}  // namespace

CriterionResult run_criterion(int id, const AcceptanceOptions& opt) {
    using Fn = CriterionResult (*)(const AcceptanceOptions&);
    static const Fn table[] = {identities, kepler_velocity, t_and_g, marginal_law,
                               ring_convergence, convergence_chain, spectral_suite, proof_machinery};
    if (id < 1 || id > 8) throw ConfigError("acceptance criteria are numbered 1 to 8");
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
        r = table[id - 1](opt);
    } catch (const std::exception& ex) {
        r = CriterionResult{id, "criterion " + std::to_string(id), false, false, std::string("error: ") + ex.what(), 0, {}};
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt) {
    std::vector<int> ids = opt.only;
    if (ids.empty()) ids = opt.quick ? std::vector<int>{1, 2, 3, 6} : std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<CriterionResult> out;
    for (int id : ids) {
        out.push_back(run_criterion(id, opt));
        if (opt.on_result) opt.on_result(out.back());
    }
    return out;
}

std::string format_result(const CriterionResult& r) {
    char head[96];
    std::snprintf(head, sizeof head, "%s %d %-22s (%.1f s) ", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds);
    std::string line = head;
    if (r.known_deviation) line += "[known deviation] ";
    return line + r.detail;
}

}  // namespace nelson
