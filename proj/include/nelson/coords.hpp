#pragma once

#include "nelson/params.hpp"
#include "nelson/types.hpp"

namespace nelson {

/// Cylindrical Keplerian elliptic coordinates. The u-curves are ellipses of
/// eccentricity |u| with foci (0,0) and (-4aeu/(e+u), 0): u = e is the Kepler
/// ellipse, u = 1 the Sigma segment and u -> -e the ellipse at infinity.
/// On the Kepler ellipse v is the eccentric angle.
struct EllipticCoords {
    double u{0};  ///< in (-e, 1]
    double v{0};  ///< in [0, 2pi)
    double z{0};
};

CartesianPoint from_elliptic(const PhysParams& p, const EllipticCoords& c);

/// Inverse map. Solves |x| + |x - F(u)| = 2 s(u), s(u) = 2ae/(e+u), for u by
/// bisection in t = e + u, then recovers v with atan2. Throws OutOfRange on
/// the planar origin and NoConvergence if the bracket does not close.
EllipticCoords to_elliptic(const PhysParams& p, const CartesianPoint& x);

/// Point on the Kepler ellipse at eccentric angle v: (a cos v - ae, a sqrt(1-e^2) sin v, 0).
CartesianPoint kepler_point(const PhysParams& p, double v);

/// Planar Jacobian d(x,y)/d(u,v), row-major {dx/du, dx/dv, dy/du, dy/dv}.
std::array<double, 4> elliptic_jacobian(const PhysParams& p, double u, double v);

/// Gradient of the v coordinate in Cartesian space (z component zero).
Vec3 grad_v(const PhysParams& p, const EllipticCoords& c);

}  // namespace nelson
