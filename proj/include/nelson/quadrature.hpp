#pragma once

#include <functional>

namespace nelson {

/// Adaptive Gauss-Kronrod (61-point) integral of f over [a, b]. Throws a
/// Quadrature DomainError when the error estimate exceeds abs_tol.
double integrate(const std::function<double(double)>& f, double a, double b, double abs_tol = 1e-12);

}  // namespace nelson
