#pragma once

#include "nelson/params.hpp"
#include "nelson/types.hpp"

namespace nelson {

/// Polynomial value and derivative from a three-term recurrence. When the
/// recurrence crossed 2^512 the pair was renormalized: the true values are
/// value * 2^exponent and derivative * 2^exponent.
struct PolyEval {
    cplx value;
    cplx derivative;
    int degree{0};
    bool overflow_scaled{false};
    int exponent{0};

    [[nodiscard]] cplx ratio() const { return derivative / value; }
    [[nodiscard]] cplx unscaled_value() const;
    [[nodiscard]] cplx unscaled_derivative() const;
};

/// Laguerre polynomial L_n(z) and L_n'(z).
PolyEval laguerre(int n, cplx z);

/// Physicists' Hermite polynomial H_m(z) and H_m'(z) = 2m H_{m-1}(z).
PolyEval hermite(int m, cplx z);

/// Q_m = H_m'(w) / (sqrt(m+1) H_m(w)) at w = sqrt(m+1) sqrt(nu/2).
cplx q_ratio(int m, cplx nu);

/// Finite-n vector Z_{eps,n} = -i eps^2 grad ln psi_{eps,n}, eps^2 = lambda/n.
ComplexVec3 z_finite_n(const PhysParams& p, int n, const CartesianPoint& x);

/// Logarithm of the limiting wave function, principal branches. Its real
/// part is R_eps; on the Kepler ellipse it equals (lambda/2eps^2) ln(16/e^2).
cplx log_psi_limit(const PhysParams& p, const CartesianPoint& x);

/// log psi(x1) - log psi(x0) assembled from ratios, continuous across the
/// cut of log nu for nearby points.
cplx log_psi_difference(const PhysParams& p, const CartesianPoint& x0, const CartesianPoint& x1);

/// Complete elliptic integral of the second kind in parameter convention,
/// E(m) = int_0^{pi/2} sqrt(1 - m sin^2 t) dt, m <= 1.
double elliptic_e(double m);

}  // namespace nelson
