#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nelson/params.hpp"
#include "nelson/sde.hpp"
#include "nelson/types.hpp"

namespace nelson {

/// Slowly varying factor of the invariant density along the ellipse,
/// T(v) = (1-e^2)/sqrt(1+e^4-2e^2 cos 2v).
double T_closed(double e, double v);

/// d ln T / dv = -2e^2 sin 2v / (1+e^4-2e^2 cos 2v).
double dlnT_dv(double e, double v);

/// T(v) from T(0) = 1 and adaptive quadrature of d ln T/dv.
double T_ode(double e, double v);

/// Laplace weight g(v) = (1 - e cos v) sqrt(1+e^4-2e^2 cos 2v).
double g_weight(double e, double v);

/// int_0^{2pi} g(v) dv by adaptive quadrature.
double g_integral_quadrature(double e);

/// The same integral as 2[(1-e^2) E(-xi_-^2) + (1+e^2) E(xi_+^2)],
/// xi_pm = 2e/(1 pm e^2), E in parameter convention.
double g_integral_elliptic(double e);

/// Natural log of the leading Laplace asymptotic of int exp(2R/eps^2) d^3x:
/// ln[(pi a^3 eps^2/lambda) (16/e^2)^(lambda/eps^2) int g dv].
double log_laplace_mass(const PhysParams& p);

/// Diagonal of the Hessian of R_eps in (u, v, z) on the Kepler ellipse
/// (the v-v entry is zero).
struct EllipseHessian {
    double uu{0};
    double zz{0};
};
EllipseHessian ellipse_hessian(const PhysParams& p, double v);

/// Effective widths eps |R''|^(-1/2) of the volcano: in-plane normal to the
/// ellipse and along z. The Gaussian standard deviations are these over sqrt 2.
struct Widths {
    double sigma_normal{0};
    double sigma_z{0};
};
Widths effective_widths(const PhysParams& p, double v);

struct EllipseDensity {
    std::function<double(double)> T_of_v;
    std::function<double(double)> g_of_v;
    double normalization{0};  ///< (1-e^2)E(-xi_-^2) + (1+e^2)E(xi_+^2)
    std::function<Widths(double)> widths;
};
EllipseDensity make_ellipse_density(const PhysParams& p);

/// Limiting expectation (1/2pi) int f(v)(1 - e cos v) dv.
double expect_on_ellipse(const PhysParams& p, const std::function<double(double)>& f);

/// Mass of the tube |u - e| < u_tol, |z| < z_tol under the Gaussian
/// (Laplace) approximation of the invariant law: the leading-order value of
/// the fraction of stationary paths inside it.
double laplace_tube_fraction(const PhysParams& p, double u_tol, double z_tol);

/// Ratio form int f T g dv / int T g dv; equal to expect_on_ellipse.
double expect_on_ellipse_tg(const PhysParams& p, const std::function<double(double)>& f);

/// R_eps(x) = Re log psi; equals (lambda/2eps^2) ln(16/e^2) on the ellipse.
double R_eps(const PhysParams& p, const CartesianPoint& x);

/// ln T(v(x)) with v the cylindrical elliptic coordinate, NaN-free off the axis.
double log_T_hat(const PhysParams& p, const CartesianPoint& x);

/// grad ln T_hat = (d ln T/dv) grad v.
Vec3 grad_log_T_hat(const PhysParams& p, const CartesianPoint& x);

/// ln rho_eps = 2 R_eps + ln T_hat (unnormalized).
double log_density(const PhysParams& p, const CartesianPoint& x);

/// Pointwise check of the forward equation for rho = exp(2R/eps^2):
/// both sides of (eps^2/2) Lap rho - div(b rho) = -Lap S rho, divided by
/// rho(x), by central differences with step h. S = eps^2 S_eps.
struct AdjointResidual {
    double lhs{0};
    double rhs{0};
};
AdjointResidual adjoint_residual(const PhysParams& p, const CartesianPoint& x, double h);

/// Histogram of the eccentric angle on [0, 2pi).
class EmpiricalMarginal {
public:
    explicit EmpiricalMarginal(int bins, double burn_in = 0.0, int thinning = 1);

    void add(double v);
    /// Adds the counts of a histogram with the same binning.
    void merge(const EmpiricalMarginal& other);

    [[nodiscard]] int bins() const { return static_cast<int>(counts_.size()); }
    [[nodiscard]] const std::vector<long long>& counts() const { return counts_; }
    [[nodiscard]] long long total() const { return total_; }
    [[nodiscard]] double burn_in() const { return burn_in_; }
    [[nodiscard]] int thinning() const { return thinning_; }
    [[nodiscard]] std::vector<double> edges() const;
    [[nodiscard]] std::vector<double> centers() const;
    [[nodiscard]] std::vector<double> probabilities() const;
    /// Bin integrals of (1 - e cos v)/2pi.
    [[nodiscard]] std::vector<double> analytic(double e) const;
    /// sum_k |p_k - q_k| over bins (the L1 distance of the densities).
    [[nodiscard]] double l1(double e) const;
    /// Pearson chi^2 against the analytic bin probabilities.
    [[nodiscard]] double chi2(double e) const;

private:
    std::vector<long long> counts_;
    long long total_{0};
    double burn_in_;
    int thinning_;
};

/// Histogram of v over records with t >= burn_in of non-truncated paths,
/// keeping every thinning-th record. Throws InsufficientSamples below 1e4.
EmpiricalMarginal empirical_marginal(const TrajectoryEnsemble& ens, int bins, double burn_in, int thinning = 1);

/// Moments of z over stationary records whose v lies within half_width of v0.
struct ZWindowStats {
    double mean{0};
    double sd{0};
    long long count{0};
};
ZWindowStats z_window_stats(const TrajectoryEnsemble& ens, double v0, double half_width, double burn_in);

/// CSV bin_center,empirical,analytic (empirical and analytic as densities).
void write_marginal_csv(std::ostream& os, const EmpiricalMarginal& m, double e, const std::string& metadata = {});
/// {"l1":..,"chi2":..,"samples":..}
std::string marginal_summary_json(const EmpiricalMarginal& m, double e);
/// CSV v,sigma_normal,sigma_z on n equally spaced angles.
void write_width_profile_csv(std::ostream& os, const PhysParams& p, int n, const std::string& metadata = {});

}  // namespace nelson
