#include "nelson/special.hpp"

#include <algorithm>

#include "nelson/field.hpp"

namespace nelson {

namespace {

constexpr int kScaleBits = 512;
const double kScaleHi = std::ldexp(1.0, kScaleBits);
const double kScaleLo = std::ldexp(1.0, -kScaleBits);

cplx ldexp(cplx z, int k) { return {std::ldexp(z.real(), k), std::ldexp(z.imag(), k)}; }

double magnitude(cplx z) { return std::max(std::abs(z.real()), std::abs(z.imag())); }

// Renormalizes the recurrence state by a shared power of two.
template <std::size_t N>
void rescale(std::array<cplx*, N> state, int& exponent, bool& scaled) {
    double big = 0.0;
    for (const cplx* s : state) big = std::max(big, magnitude(*s));
    int shift = 0;
    if (big > kScaleHi)
        shift = -kScaleBits;
    else if (big > 0.0 && big < kScaleLo)
        shift = kScaleBits;
    if (shift == 0) return;
    for (cplx* s : state) *s = ldexp(*s, shift);
    exponent -= shift;
    scaled = true;
}

}  // namespace

cplx PolyEval::unscaled_value() const { return ldexp(value, exponent); }
cplx PolyEval::unscaled_derivative() const { return ldexp(derivative, exponent); }

PolyEval laguerre(int n, cplx z) {
    if (n < 0) throw ConfigError("Laguerre degree must be nonnegative");
    PolyEval out;
    out.degree = n;
    cplx prev = 1.0, cur = 1.0 - z;        // L_0, L_1
    cplx dprev = 0.0, dcur = -1.0;         // L_0', L_1'
    if (n == 0) {
        out.value = prev;
        out.derivative = dprev;
        return out;
    }
    for (int k = 1; k < n; ++k) {
        const cplx next = ((2.0 * k + 1.0 - z) * cur - static_cast<double>(k) * prev) / (k + 1.0);
        const cplx dnext = dcur - cur;
        prev = cur;
        cur = next;
        dprev = dcur;
        dcur = dnext;
        rescale<4>({&prev, &cur, &dprev, &dcur}, out.exponent, out.overflow_scaled);
    }
    out.value = cur;
    out.derivative = dcur;
    return out;
}

PolyEval hermite(int m, cplx z) {
    if (m < 0) throw ConfigError("Hermite degree must be nonnegative");
    PolyEval out;
    out.degree = m;
    cplx prev = 1.0, cur = 2.0 * z;  // H_0, H_1
    if (m == 0) {
        out.value = prev;
        out.derivative = 0.0;
        return out;
    }
    for (int k = 1; k < m; ++k) {
        const cplx next = 2.0 * z * cur - 2.0 * k * prev;
        prev = cur;
        cur = next;
        rescale<2>({&prev, &cur}, out.exponent, out.overflow_scaled);
    }
    out.value = cur;
    out.derivative = 2.0 * m * prev;
    return out;
}

cplx q_ratio(int m, cplx nu) {
    if (m < 0) throw ConfigError("Hermite degree must be nonnegative");
    if (m == 0) return 0.0;
    const double root_m1 = std::sqrt(m + 1.0);
    const cplx w = root_m1 * std::sqrt(nu / 2.0);
    const PolyEval h = hermite(m, w);
    if (h.value == cplx(0.0) || std::abs(h.derivative) > 1e14 * std::abs(h.value))
        throw DomainError(DomainError::Kind::Node, "Hermite polynomial vanishes at the Q-ratio argument");
    return h.ratio() / root_m1;
}

ComplexVec3 z_finite_n(const PhysParams& p, int n, const CartesianPoint& x) {
    if (n < 1) throw ConfigError("principal quantum number n must be >= 1");
    const cplx nu = eval_nu(p, x);
    const PolyEval lag = laguerre(n - 1, static_cast<double>(n) * nu);
    if (lag.value == cplx(0.0) || std::abs(lag.derivative) > 1e13 * std::abs(lag.value))
        throw DomainError(DomainError::Kind::Node, "point lies on a node of L_{n-1}(n nu)");
    const cplx ratio = n == 1 ? cplx(0.0) : lag.ratio();
    const double r = x.norm();
    const cplx i(0.0, 1.0);
    const cplx radial = i * p.mu() / p.lambda() * (1.0 - ratio) / r;
    const cplx fixed = p.mu() / (p.lambda() * p.ecc()) * ratio;
    return {radial * x.x + fixed * i, radial * x.y - fixed * p.ecc_conj(), radial * x.z};
}

cplx log_psi_limit(const PhysParams& p, const CartesianPoint& x) {
    const cplx nu = eval_nu(p, x);
    const cplx s = branch_root(p, x).value;
    const double n_eff = p.lambda() / (p.eps() * p.eps());
    return n_eff * (std::log(nu) + 2.0 * std::log(1.0 + s) + 0.5 * nu * (1.0 - s)) -
           p.mu() * x.norm() / (p.lambda() * p.eps() * p.eps());
}

cplx log_psi_difference(const PhysParams& p, const CartesianPoint& x0, const CartesianPoint& x1) {
    const cplx nu0 = eval_nu(p, x0), nu1 = eval_nu(p, x1);
    const cplx s0 = branch_root(p, x0).value, s1 = branch_root(p, x1).value;
    const double n_eff = p.lambda() / (p.eps() * p.eps());
    return n_eff * (std::log(nu1 / nu0) + 2.0 * std::log((1.0 + s1) / (1.0 + s0)) +
                    0.5 * (nu1 * (1.0 - s1) - nu0 * (1.0 - s0))) -
           p.mu() * (x1.norm() - x0.norm()) / (p.lambda() * p.eps() * p.eps());
}

double elliptic_e(double m) {
    if (!(m <= 1.0)) throw DomainError(DomainError::Kind::OutOfRange, "elliptic_e parameter must satisfy m <= 1");
    if (m == 1.0) return 1.0;
    // Arithmetic-geometric mean with the Legendre c_n sum.
    // c_n^2 follows c_{n+1}^2 = c_n^4 / (16 a_{n+1}^2), which avoids the
    // cancellation in (a - b)/2 and covers m < 0 where c_0 is imaginary.
    double a = 1.0, b = std::sqrt(1.0 - m);
    double c2 = m;
    double sum = 0.5 * m;
    double weight = 0.5;
    for (int n = 0; n < 64; ++n) {
        const double an = 0.5 * (a + b);
        b = std::sqrt(a * b);
        a = an;
        c2 = c2 * c2 / (16.0 * a * a);
        weight *= 2.0;
        sum += weight * c2;
        if (weight * c2 <= 1e-18 * std::abs(sum)) break;
    }
    return kPi / (2.0 * a) * (1.0 - sum);
}

}  // namespace nelson
