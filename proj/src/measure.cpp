#include "nelson/measure.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "nelson/coords.hpp"
#include "nelson/field.hpp"
#include "nelson/quadrature.hpp"
#include "nelson/special.hpp"

namespace nelson {

namespace {

double q_of(double e, double v) { return 1.0 + e * e * e * e - 2.0 * e * e * std::cos(2.0 * v); }

}  // namespace

double T_closed(double e, double v) { return (1.0 - e * e) / std::sqrt(q_of(e, v)); }

double dlnT_dv(double e, double v) { return -2.0 * e * e * std::sin(2.0 * v) / q_of(e, v); }

double T_ode(double e, double v) {
    return std::exp(integrate([e](double t) { return dlnT_dv(e, t); }, 0.0, v));
}

double g_weight(double e, double v) { return (1.0 - e * std::cos(v)) * std::sqrt(q_of(e, v)); }

double g_integral_quadrature(double e) {
    // Split at pi: the integrand has a sharper profile near v = 0 for large e.
    auto g = [e](double v) { return g_weight(e, v); };
    return integrate(g, 0.0, kPi) + integrate(g, kPi, kTwoPi);
}

double g_integral_elliptic(double e) {
    const double xi_minus = 2.0 * e / (1.0 - e * e), xi_plus = 2.0 * e / (1.0 + e * e);
    return 2.0 * ((1.0 - e * e) * elliptic_e(-xi_minus * xi_minus) + (1.0 + e * e) * elliptic_e(xi_plus * xi_plus));
}

double log_laplace_mass(const PhysParams& p) {
    const double a = p.a(), eps2 = p.eps() * p.eps();
    return std::log(kPi * a * a * a * eps2 / p.lambda()) + p.lambda() / eps2 * std::log(16.0 / (p.ecc() * p.ecc())) +
           std::log(g_integral_quadrature(p.ecc()));
}

EllipseHessian ellipse_hessian(const PhysParams& p, double v) {
    const double e = p.ecc(), eps2 = p.eps() * p.eps(), c = std::cos(v), l = p.lambda();
    return {-l * (1.0 + e * e + 2.0 * e * c) / (4.0 * e * e * eps2 * (1.0 - e * e)),
            -p.mu() * p.mu() / (eps2 * l * l * l * (1.0 + e * e - 2.0 * e * c))};
}

Widths effective_widths(const PhysParams& p, double v) {
    const double e = p.ecc(), c = std::cos(v);
    const double scale = p.eps() * std::pow(p.lambda(), 1.5) / p.mu();
    return {scale * std::sqrt((1.0 - e * c) * (1.0 + e * e + 2.0 * e * c) / (1.0 + e * c)),
            scale * std::sqrt(1.0 + e * e - 2.0 * e * c)};
}

EllipseDensity make_ellipse_density(const PhysParams& p) {
    const double e = p.ecc();
    EllipseDensity d;
    d.T_of_v = [e](double v) { return T_closed(e, v); };
    d.g_of_v = [e](double v) { return g_weight(e, v); };
    d.normalization = 0.5 * g_integral_elliptic(e);
    d.widths = [p](double v) { return effective_widths(p, v); };
    return d;
}

double expect_on_ellipse(const PhysParams& p, const std::function<double(double)>& f) {
    const double e = p.ecc();
    auto w = [&](double v) { return f(v) * (1.0 - e * std::cos(v)); };
    return (integrate(w, 0.0, kPi) + integrate(w, kPi, kTwoPi)) / kTwoPi;
}

double laplace_tube_fraction(const PhysParams& p, double u_tol, double z_tol) {
    auto inside = [&](double v) {
        const EllipseHessian h = ellipse_hessian(p, v);
        // Gaussian sd 1/sqrt(2|R''|); erf(tol/(sqrt2 sd)) = erf(tol sqrt|R''|)
        return std::erf(u_tol * std::sqrt(-h.uu)) * std::erf(z_tol * std::sqrt(-h.zz));
    };
    return expect_on_ellipse(p, inside);
}

double expect_on_ellipse_tg(const PhysParams& p, const std::function<double(double)>& f) {
    const double e = p.ecc();
    auto num = [&](double v) { return f(v) * T_closed(e, v) * g_weight(e, v); };
    auto den = [&](double v) { return T_closed(e, v) * g_weight(e, v); };
    return (integrate(num, 0.0, kPi) + integrate(num, kPi, kTwoPi)) /
           (integrate(den, 0.0, kPi) + integrate(den, kPi, kTwoPi));
}

double R_eps(const PhysParams& p, const CartesianPoint& x) { return log_psi_limit(p, x).real(); }

double log_T_hat(const PhysParams& p, const CartesianPoint& x) {
    return std::log(T_closed(p.ecc(), to_elliptic(p, x).v));
}

Vec3 grad_log_T_hat(const PhysParams& p, const CartesianPoint& x) {
    const EllipticCoords c = to_elliptic(p, x);
    if (!(c.u < 1.0)) return {};  // on the Sigma segment the v-gradient is unbounded
    return grad_v(p, c) * dlnT_dv(p.ecc(), c.v);
}

double log_density(const PhysParams& p, const CartesianPoint& x) { return 2.0 * R_eps(p, x) + log_T_hat(p, x); }

AdjointResidual adjoint_residual(const PhysParams& p, const CartesianPoint& x, double h) {
    const double eps2 = p.eps() * p.eps();
    AdjointResidual out;
    double lap_s = 0.0;
    for (int c = 0; c < 3; ++c) {
        Vec3 s{};
        s[c] = h;
        const CartesianPoint xp = x + s, xm = x - s;
        const double rp = std::exp(2.0 * log_psi_difference(p, x, xp).real());
        const double rm = std::exp(2.0 * log_psi_difference(p, x, xm).real());
        const double bp = eval_drift(p, xp)[c], bm = eval_drift(p, xm)[c];
        out.lhs += 0.5 * eps2 * (rp - 2.0 + rm) / (h * h) - (bp * rp - bm * rm) / (2.0 * h);
        lap_s += eps2 * (eval_gradients(p, xp).grad_S[c] - eval_gradients(p, xm).grad_S[c]) / (2.0 * h);
    }
    out.rhs = -lap_s;
    return out;
}

EmpiricalMarginal::EmpiricalMarginal(int bins, double burn_in, int thinning)
    : counts_(static_cast<std::size_t>(bins > 0 ? bins : 0), 0), burn_in_(burn_in), thinning_(thinning) {
    if (bins < 1) throw ConfigError("histogram needs at least one bin");
    if (thinning < 1) throw ConfigError("thinning must be >= 1");
}

void EmpiricalMarginal::add(double v) {
    if (!std::isfinite(v)) return;
    double w = std::fmod(v, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    auto k = static_cast<std::size_t>(w / kTwoPi * static_cast<double>(counts_.size()));
    k = std::min(k, counts_.size() - 1);
    ++counts_[k];
    ++total_;
}

void EmpiricalMarginal::merge(const EmpiricalMarginal& other) {
    if (other.counts_.size() != counts_.size()) throw ConfigError("cannot merge histograms with different binning");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    total_ += other.total_;
}

std::vector<double> EmpiricalMarginal::edges() const {
    std::vector<double> e(counts_.size() + 1);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = kTwoPi * static_cast<double>(k) / static_cast<double>(counts_.size());
    return e;
}

std::vector<double> EmpiricalMarginal::centers() const {
    const auto e = edges();
    std::vector<double> c(counts_.size());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = 0.5 * (e[k] + e[k + 1]);
    return c;
}

std::vector<double> EmpiricalMarginal::probabilities() const {
    std::vector<double> q(counts_.size(), 0.0);
    if (total_ == 0) return q;
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = static_cast<double>(counts_[k]) / static_cast<double>(total_);
    return q;
}

std::vector<double> EmpiricalMarginal::analytic(double e) const {
    const auto ed = edges();
    std::vector<double> q(counts_.size());
    for (std::size_t k = 0; k < q.size(); ++k)
        q[k] = ((ed[k + 1] - ed[k]) - e * (std::sin(ed[k + 1]) - std::sin(ed[k]))) / kTwoPi;
    return q;
}

double EmpiricalMarginal::l1(double e) const {
    const auto p = probabilities(), q = analytic(e);
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
    return s;
}

double EmpiricalMarginal::chi2(double e) const {
    const auto q = analytic(e);
    const double n = static_cast<double>(total_);
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double expct = n * q[k];
        const double d = static_cast<double>(counts_[k]) - expct;
        s += d * d / expct;
    }
    return s;
}

EmpiricalMarginal empirical_marginal(const TrajectoryEnsemble& ens, int bins, double burn_in, int thinning) {
    EmpiricalMarginal m(bins, burn_in, thinning);
    for (const PathResult& path : ens.paths) {
        if (path.truncated) continue;
        long idx = 0;
        for (const auto& r : path.records) {
            if (r.t < burn_in) continue;
            if (idx++ % thinning == 0) m.add(r.v);
        }
    }
    if (m.total() < 10000)
        throw DomainError(DomainError::Kind::InsufficientSamples,
                          "empirical marginal needs at least 1e4 post-burn-in samples, got " + std::to_string(m.total()));
    return m;
}

ZWindowStats z_window_stats(const TrajectoryEnsemble& ens, double v0, double half_width, double burn_in) {
    double s = 0.0, s2 = 0.0;
    long long n = 0;
    for (const PathResult& path : ens.paths) {
        if (path.truncated) continue;
        for (const auto& r : path.records) {
            if (r.t < burn_in || !std::isfinite(r.v)) continue;
            double d = std::remainder(r.v - v0, kTwoPi);
            if (std::abs(d) > half_width) continue;
            s += r.x.z;
            s2 += r.x.z * r.x.z;
            ++n;
        }
    }
    ZWindowStats z;
    z.count = n;
    if (n > 0) z.mean = s / static_cast<double>(n);
    if (n > 1) z.sd = std::sqrt(std::max(0.0, (s2 - s * s / static_cast<double>(n)) / static_cast<double>(n - 1)));
    return z;
}

void write_marginal_csv(std::ostream& os, const EmpiricalMarginal& m, double e, const std::string& metadata) {
    if (!metadata.empty()) os << "# " << metadata << '\n';
    os << "bin_center,empirical,analytic\n";
    const auto c = m.centers(), p = m.probabilities(), q = m.analytic(e);
    const double width = kTwoPi / m.bins();
    os.precision(12);
    for (std::size_t k = 0; k < c.size(); ++k) os << c[k] << ',' << p[k] / width << ',' << q[k] / width << '\n';
}

std::string marginal_summary_json(const EmpiricalMarginal& m, double e) {
    nlohmann::json j{{"l1", m.l1(e)}, {"chi2", m.chi2(e)}, {"samples", m.total()}, {"bins", m.bins()},
                     {"burn_in", m.burn_in()}, {"thinning", m.thinning()}};
    return j.dump();
}

void write_width_profile_csv(std::ostream& os, const PhysParams& p, int n, const std::string& metadata) {
    if (!metadata.empty()) os << "# " << metadata << '\n';
    os << "v,sigma_normal,sigma_z\n";
    os.precision(12);
    for (int k = 0; k < n; ++k) {
        const double v = kTwoPi * k / n;
        const Widths w = effective_widths(p, v);
        os << v << ',' << w.sigma_normal << ',' << w.sigma_z << '\n';
    }
}

}  // namespace nelson
