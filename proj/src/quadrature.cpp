#include "nelson/quadrature.hpp"

#include <algorithm>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nelson/types.hpp"

namespace nelson {

double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol) {
    if (a == b) return 0.0;
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    double error = 0.0;
    double l1 = 0.0;
    // Boost stops on a relative criterion; a coarse pass gives the L1 scale
    // that turns abs_tol into one, floored well above roundoff.
    (void)GK::integrate(f, a, b, 0, 0.0, &error, &l1);
    const double rel = std::max(1e-15, 0.1 * abs_tol / std::max(l1, 1e-300));
    const double value = GK::integrate(f, a, b, 15, rel, &error, &l1);
    if (!std::isfinite(value) || error > abs_tol)
        throw DomainError(DomainError::Kind::Quadrature,
                          "adaptive quadrature did not reach the requested tolerance");
    return value;
}

}  // namespace nelson
