#include "nelson/coords.hpp"

#include <algorithm>

namespace nelson {

CartesianPoint from_elliptic(const PhysParams& p, const EllipticCoords& c) {
    const double e = p.ecc();
    if (!(c.u > -e && c.u <= 1.0))
        throw DomainError(DomainError::Kind::OutOfRange, "elliptic coordinate u outside (-e, 1]");
    const double t = e + c.u;
    const double s = 2.0 * p.a() * e / t;
    const double root = std::sqrt(std::max(0.0, (1.0 - c.u) * (1.0 + c.u)));
    return {s * (std::cos(c.v) - c.u), s * root * std::sin(c.v), c.z};
}

EllipticCoords to_elliptic(const PhysParams& p, const CartesianPoint& x) {
    const double e = p.ecc();
    const double two_ae = 2.0 * p.a() * e;
    const double r = std::hypot(x.x, x.y);
    if (!(r > 0.0))
        throw DomainError(DomainError::Kind::OutOfRange, "elliptic coordinates undefined on the axis x = y = 0");

    // Defocal residual in t = e + u; increasing in t, nonnegative at t = 1 + e.
    auto residual = [&](double t) {
        const double focus = -2.0 * two_ae * (t - e) / t;
        return r + std::hypot(x.x - focus, x.y) - 2.0 * two_ae / t;
    };

    double hi = 1.0 + e;
    double lo = hi;
    int guard = 0;
    do {
        lo *= 0.5;
        if (++guard > 1100)
            throw DomainError(DomainError::Kind::NoConvergence, "failed to bracket elliptic u coordinate");
    } while (residual(lo) >= 0.0);

    double t = hi;
    if (residual(hi) > 0.0) {
        int it = 0;
        for (; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            (residual(mid) < 0.0 ? lo : hi) = mid;
        }
        if (hi - lo > 1e-13 * hi)
            throw DomainError(DomainError::Kind::NoConvergence, "elliptic u bisection did not converge");
        t = 0.5 * (lo + hi);
    }

    const double u = t - e;
    const double root = std::sqrt(std::max(0.0, (1.0 + e - t) * (1.0 + u)));
    const double cos_v = u + x.x * t / two_ae;
    const double sin_v = root > 0.0 ? x.y * t / (two_ae * root) : 0.0;
    // On the u = 1 segment sin v is unresolved; take v in [0, pi].
    double v = root > 0.0 ? std::atan2(sin_v, cos_v) : std::acos(std::clamp(cos_v, -1.0, 1.0));
    if (v < 0.0) v += kTwoPi;
    if (v >= kTwoPi) v -= kTwoPi;
    return {u, v, x.z};
}

CartesianPoint kepler_point(const PhysParams& p, double v) {
    return {p.a() * (std::cos(v) - p.ecc()), p.a() * p.ecc_conj() * std::sin(v), 0.0};
}

std::array<double, 4> elliptic_jacobian(const PhysParams& p, double u, double v) {
    const double e = p.ecc();
    const double two_ae = 2.0 * p.a() * e;
    const double t = e + u;
    const double root = std::sqrt((1.0 - u) * (1.0 + u));
    const double sv = std::sin(v), cv = std::cos(v);
    return {-two_ae * (e + cv) / (t * t), -two_ae * sv / t,
            -two_ae * sv * (1.0 + e * u) / (root * t * t), two_ae * root * cv / t};
}

Vec3 grad_v(const PhysParams& p, const EllipticCoords& c) {
    const auto j = elliptic_jacobian(p, c.u, c.v);
    const double det = j[0] * j[3] - j[1] * j[2];
    return {-j[2] / det, j[0] / det, 0.0};
}

}  // namespace nelson
