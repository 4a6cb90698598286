#pragma once

#include "nelson/params.hpp"
#include "nelson/types.hpp"

namespace nelson {

/// Complex argument nu of the Laguerre polynomial:
/// nu = (mu/lambda^2)(|x| - x/e - i y sqrt(1-e^2)/e). Throws at the origin.
cplx eval_nu(const PhysParams& p, const CartesianPoint& x);

/// Principal square root sqrt(1 - 4/nu) together with a flag raised when
/// |1 - 4/nu| < 1e-12 (the branch point nu = 4).
struct BranchRoot {
    cplx value;
    bool near_branch_point{false};
};
BranchRoot branch_root(const PhysParams& p, const CartesianPoint& x);

/// alpha = Re sqrt(1-4/nu) >= 0 and beta = Im sqrt(1-4/nu), evaluated from
/// the real Cartesian radicals (no complex arithmetic).
struct AlphaBeta {
    double alpha{0};
    double beta{0};
};
AlphaBeta eval_alpha_beta(const PhysParams& p, const CartesianPoint& x);

/// Correspondence limit Z_{0,inf}(x) of the complex Hopf-Cole velocity.
ComplexVec3 eval_z_limit(const PhysParams& p, const CartesianPoint& x);

/// Planar correspondence limit (x, y components only) evaluated from the
/// two-dimensional formula; used to check the restriction property.
std::array<cplx, 2> eval_z_limit_planar(const PhysParams& p, double x, double y);

struct Gradients {
    Vec3 grad_R;  ///< grad R_eps, units 1/(length eps^2)
    Vec3 grad_S;  ///< grad S_eps
};
Gradients eval_gradients(const PhysParams& p, const CartesianPoint& x);

/// Drift b(x) of the limiting diffusion, Cartesian components.
Vec3 eval_drift(const PhysParams& p, const CartesianPoint& x);

/// Every local field quantity at a point.
struct FieldSample {
    cplx nu;
    double alpha{0};
    double beta{0};
    ComplexVec3 z_vec;
    Vec3 grad_R;
    Vec3 grad_S;
    Vec3 drift;
    bool near_branch_point{false};
};
FieldSample evaluate_fields(const PhysParams& p, const CartesianPoint& x);

/// True when x lies in the open drift-discontinuity surface Sigma
/// (y = 0 and 0 < e|x| - x < 4ae).
bool in_sigma(const PhysParams& p, const CartesianPoint& x);

/// Euclidean distance from x to Sigma (0 on Sigma itself, distance to the
/// closure otherwise).
double sigma_distance(const PhysParams& p, const CartesianPoint& x);

}  // namespace nelson
