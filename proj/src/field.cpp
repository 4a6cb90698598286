#include "nelson/field.hpp"

#include <algorithm>
#include <limits>

namespace nelson {

namespace {

// Shared Cartesian pieces of nu: nu = (mu/(lambda^2 e)) (p - i q) with
// p = e|x| - x, q = sqrt(1-e^2) y.
struct NuParts {
    double r;
    double p;
    double q;
    double denom;  // p^2 + q^2
};

NuParts nu_parts(const PhysParams& prm, const CartesianPoint& x) {
    const double r = x.norm();
    if (!(r > 0.0)) throw DomainError(DomainError::Kind::Origin, "field evaluated at the origin |x| = 0");
    const double p = prm.ecc() * r - x.x;
    const double q = prm.ecc_conj() * x.y;
    return {r, p, q, p * p + q * q};
}

double guarded_sqrt(double v, const char* what) {
    if (v >= 0.0) return std::sqrt(v);
    if (v > -1e-13) return 0.0;
    throw DomainError(DomainError::Kind::DegenerateDenominator, std::string("negative radicand in ") + what);
}

}  // namespace

cplx eval_nu(const PhysParams& prm, const CartesianPoint& x) {
    const double r = x.norm();
    if (!(r > 0.0)) throw DomainError(DomainError::Kind::Origin, "nu evaluated at the origin |x| = 0");
    const double e = prm.ecc();
    const double scale = prm.mu() / (prm.lambda() * prm.lambda());
    return {scale * (r - x.x / e), -scale * x.y * prm.ecc_conj() / e};
}

BranchRoot branch_root(const PhysParams& prm, const CartesianPoint& x) {
    const cplx nu = eval_nu(prm, x);
    if (nu == cplx(0.0, 0.0))
        throw DomainError(DomainError::Kind::DegenerateDenominator, "nu = 0 on the focal cone y = 0, x = e|x|");
    cplx w = 1.0 - 4.0 / nu;
    // y = 0 uses the +0 side of the cut on both evaluation routes.
    if (w.imag() == 0.0) w = cplx(w.real(), 0.0);
    return {std::sqrt(w), std::abs(w) < 1e-12};
}

AlphaBeta eval_alpha_beta(const PhysParams& prm, const CartesianPoint& x) {
    const NuParts np = nu_parts(prm, x);
    const double guard = 64.0 * std::numeric_limits<double>::epsilon() * np.r;
    if (!(np.denom > guard * guard))
        throw DomainError(DomainError::Kind::DegenerateDenominator,
                          "alpha/beta denominator vanishes on the focal cone y = 0, e|x| = x");
    const double k = 4.0 * prm.a() * prm.ecc();  // 4 lambda^2 e / mu
    const double mod_w = guarded_sqrt(((np.p - k) * (np.p - k) + np.q * np.q) / np.denom, "|1-4/nu|");
    const double hk = 0.5 * k;
    const double re_w = ((np.p - hk) * (np.p - hk) + np.q * np.q - hk * hk) / np.denom;
    double im_w = -k * np.q / np.denom;
    if (im_w == 0.0) im_w = 0.0;

    AlphaBeta out;
    if (re_w >= 0.0) {
        out.alpha = guarded_sqrt(0.5 * mod_w + 0.5 * re_w, "alpha");
        out.beta = out.alpha > 0.0 ? im_w / (2.0 * out.alpha) : 0.0;
    } else {
        // Same radical, arranged to avoid cancellation between |w| and Re w.
        const double abs_beta = guarded_sqrt(0.5 * mod_w - 0.5 * re_w, "beta");
        out.beta = std::copysign(abs_beta, im_w);
        out.alpha = std::abs(im_w) / (2.0 * abs_beta);
    }
    return out;
}

ComplexVec3 eval_z_limit(const PhysParams& prm, const CartesianPoint& x) {
    const cplx s = branch_root(prm, x).value;
    const double r = x.norm();
    const cplx i(0.0, 1.0);
    const cplx radial = i * prm.mu() / (2.0 * prm.lambda()) * (1.0 + s) / r;
    const cplx fixed = prm.mu() / (2.0 * prm.lambda() * prm.ecc()) * (1.0 - s);
    return {radial * x.x + fixed * i, radial * x.y - fixed * prm.ecc_conj(), radial * x.z};
}

std::array<cplx, 2> eval_z_limit_planar(const PhysParams& prm, double x, double y) {
    // nu and the root recomputed from the planar point directly.
    const double r = std::hypot(x, y);
    if (!(r > 0.0)) throw DomainError(DomainError::Kind::Origin, "planar field evaluated at the origin");
    const double e = prm.ecc();
    const double scale = prm.mu() / (prm.lambda() * prm.lambda());
    const cplx nu(scale * (r - x / e), -scale * y * prm.ecc_conj() / e);
    if (nu == cplx(0.0, 0.0)) throw DomainError(DomainError::Kind::DegenerateDenominator, "nu = 0");
    cplx w = 1.0 - 4.0 / nu;
    if (w.imag() == 0.0) w = cplx(w.real(), 0.0);
    const cplx s = std::sqrt(w);
    const cplx i(0.0, 1.0);
    const cplx radial = i * prm.mu() / (2.0 * prm.lambda()) * (1.0 + s) / r;
    const cplx fixed = prm.mu() / (2.0 * prm.lambda() * e) * (1.0 - s);
    return {radial * x + fixed * i, radial * y - fixed * prm.ecc_conj()};
}

Gradients eval_gradients(const PhysParams& prm, const CartesianPoint& x) {
    const AlphaBeta ab = eval_alpha_beta(prm, x);
    const double e = prm.ecc();
    const double ec = prm.ecc_conj();
    const double r = x.norm();
    const double pre = -prm.mu() / (2.0 * e * prm.lambda() * prm.eps() * prm.eps());
    const Vec3 xhat = x / r;
    Gradients g;
    g.grad_R = (xhat * ((1.0 + ab.alpha) * e) + Vec3{1.0 - ab.alpha, ab.beta * ec, 0.0}) * pre;
    g.grad_S = (xhat * (ab.beta * e) + Vec3{-ab.beta, (1.0 - ab.alpha) * ec, 0.0}) * pre;
    return g;
}

Vec3 eval_drift(const PhysParams& prm, const CartesianPoint& x) {
    const AlphaBeta ab = eval_alpha_beta(prm, x);
    const double e = prm.ecc();
    const double r = x.norm();
    const double c = prm.mu() / (2.0 * prm.lambda());
    const double apb1 = ab.alpha + ab.beta + 1.0;
    return {c * ((ab.alpha + ab.beta - 1.0) / e - apb1 * x.x / r),
            c * ((ab.alpha - ab.beta - 1.0) * prm.ecc_conj() / e - apb1 * x.y / r),
            -c * apb1 * x.z / r};
}

FieldSample evaluate_fields(const PhysParams& prm, const CartesianPoint& x) {
    FieldSample s;
    s.nu = eval_nu(prm, x);
    const AlphaBeta ab = eval_alpha_beta(prm, x);
    s.alpha = ab.alpha;
    s.beta = ab.beta;
    s.near_branch_point = branch_root(prm, x).near_branch_point;
    s.z_vec = eval_z_limit(prm, x);
    const Gradients g = eval_gradients(prm, x);
    s.grad_R = g.grad_R;
    s.grad_S = g.grad_S;
    s.drift = eval_drift(prm, x);
    return s;
}

namespace {

// Distance in the (x, z) half-plane from (px, pz) to the closed region
// {0 <= e r - x <= 4ae}; zero inside.
double planar_sigma_distance(const PhysParams& prm, double px, double pz) {
    const double e = prm.ecc();
    const double k = 4.0 * prm.a() * e;
    const double r = std::hypot(px, pz);
    const double level = e * r - px;
    if (level >= 0.0 && level <= k) return 0.0;

    if (level < 0.0) {
        // Inside the wedge beyond the cone x = e r: nearest point on a ray.
        const double dz = std::abs(pz);
        const double ux = e, uz = std::sqrt(1.0 - e * e);
        const double t = std::max(0.0, px * ux + dz * uz);
        return std::hypot(px - t * ux, dz - t * uz);
    }

    // Outside the hyperbola branch r (e - cos th) = k: the region it bounds is
    // convex, so the squared distance along the branch is unimodal and a
    // coarse scan followed by golden section finds the minimum.
    const double th0 = std::acos(e);
    auto dist2 = [&](double th) {
        const double rr = k / (e - std::cos(th));
        const double hx = rr * std::cos(th) - px;
        const double hz = rr * std::sin(th) - pz;
        return hx * hx + hz * hz;
    };
    constexpr int kSamples = 96;
    const double lo_th = th0, hi_th = kTwoPi - th0;
    const double step = (hi_th - lo_th) / kSamples;
    int best = 1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 1; j < kSamples; ++j) {
        const double d = dist2(lo_th + j * step);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    double a = lo_th + (best - 1) * step, b = lo_th + (best + 1) * step;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = dist2(c), fd = dist2(d);
    for (int it = 0; it < 100 && (b - a) > 1e-15; ++it) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - gr * (b - a); fc = dist2(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + gr * (b - a); fd = dist2(d);
        }
    }
    return std::sqrt(std::min({best_d, fc, fd}));
}

}  // namespace

bool in_sigma(const PhysParams& prm, const CartesianPoint& x) {
    if (x.y != 0.0) return false;
    const double level = prm.ecc() * x.norm() - x.x;
    return level > 0.0 && level < 4.0 * prm.a() * prm.ecc();
}

double sigma_distance(const PhysParams& prm, const CartesianPoint& x) {
    if (in_sigma(prm, x)) return 0.0;
    const double d = planar_sigma_distance(prm, x.x, x.z);
    return std::hypot(x.y, d);
}

}  // namespace nelson
