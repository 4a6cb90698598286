#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "nelson/params.hpp"
#include "nelson/sde.hpp"
#include "nelson/types.hpp"

namespace nelson {

enum class DriftScheme {
    Upwind,            ///< first-order upwind differences
    ScharfetterGummel  ///< exponentially fitted fluxes; positive and second order at small cell Peclet
};

/// Cell-centred tensor grid with reflecting walls on the box faces: node i
/// sits at lo + (i + 1/2) h with h = (hi - lo)/n. Box and excluded radius are
/// in units of the semimajor axis a; dimension 1 exists for control problems.
struct GridSpec {
    int dimension{2};
    std::array<double, 3> lo{-4.0, -4.0, -4.0};
    std::array<double, 3> hi{4.0, 4.0, 4.0};
    std::array<int, 3> n{200, 200, 1};
    double excluded{0.05};
    DriftScheme scheme{DriftScheme::Upwind};

    [[nodiscard]] double spacing(int axis, double a = 1.0) const {
        return (hi[static_cast<std::size_t>(axis)] - lo[static_cast<std::size_t>(axis)]) * a /
               n[static_cast<std::size_t>(axis)];
    }
    /// Same box with every cell split in two along each axis.
    [[nodiscard]] GridSpec refined() const;
    void validate() const;
};

struct GeneratorMatrix {
    GridSpec grid;
    double a{1.0};
    double diffusion{0.0};  ///< eps^2/2
    Eigen::SparseMatrix<double, Eigen::RowMajor> G;
    std::vector<CartesianPoint> points;  ///< node coordinates (active nodes only)
    std::vector<std::array<int, 3>> index;
    std::vector<int> active;  ///< grid linear index -> active index or -1
    double max_row_sum{0};
    double min_offdiag{0};
    double cell_volume{1};
    Eigen::VectorXd w;           ///< discrete stationary law (left null vector), sums to 1
    /// exp(2 R_eps) times the slow factor on the nodes, sums to 1 (Nelson drift
    /// only). The slow factor is T_hat in 3D and (1 + e^2 + 2e cos v)^(-1/2) in the plane.
    Eigen::VectorXd w_analytic;

    [[nodiscard]] Eigen::Index size() const { return G.rows(); }
    /// Active index of the neighbour of node i one step along axis (+1 or -1), or -1.
    [[nodiscard]] int neighbour(int i, int axis, int dir) const;
};

/// Smallest volcano width over the ellipse: the in-plane normal width, and
/// also sigma_z in 3D.
double min_effective_width(const PhysParams& p, int dimension);

/// Generator (eps^2/2)Lap + b.grad of the limiting diffusion on the grid
/// (planar fields for dimension 2). Throws a Resolution DomainError when
/// h >= min effective width / 4 or when a negative off-diagonal appears.
GeneratorMatrix build_generator(const PhysParams& p, const GridSpec& grid);

/// Generic variant for control problems with an arbitrary drift.
GeneratorMatrix build_generator_from_drift(const GridSpec& grid, double diffusion,
                                           const std::function<Vec3(const CartesianPoint&)>& drift, double a = 1.0);

/// Solves w^T G = 0 with w > 0, sum w = 1, by pinning one component.
Eigen::VectorXd stationary_vector(const GeneratorMatrix& G);

struct GapOptions {
    double shift{0.25};      ///< real shift c of the Arnoldi operator (c - G)^-1
    int krylov_dim{60};
    int max_refine{60};
    double tol{1e-10};
};

struct GapResult {
    double gap{0};           ///< Re of the nonzero eigenvalue of -G with the smallest real part
    cplx eigenvalue;         ///< that eigenvalue of -G
    Eigen::VectorXcd eigenvector;
    double residual{0};      ///< ||G f + lambda f||_w / ||f||_w
    bool converged{false};
    int iterations{0};
    std::vector<cplx> ritz;  ///< eigenvalues of -G resolved by the Krylov stage
};

/// Shift-invert Arnoldi on the w-mean-zero subspace followed by complex
/// shifted inverse iteration for the selected eigenpair.
GapResult gap_from_matrix(const GeneratorMatrix& G, const GapOptions& opt = {});

struct AutocorrOptions {
    double burn_in{10.0};
    double lag_spacing{0.0};  ///< 0 selects a quarter of the Kepler period
    int max_lags{40};
    int bootstrap{200};
    std::uint64_t seed{1};
    double min_relative{0.05};  ///< stop the fit once |C| drops below this fraction of |C(0)|
};

struct AutocorrResult {
    double gamma{0};
    double ci_low{0};
    double ci_high{0};
    double stderr_{0};
    std::vector<double> lags;
    std::vector<double> abs_cov;
    int fitted_lags{0};
};

using Observable = std::function<cplx(const TrajectoryRecord&)>;

/// Least-squares fit of log|C(t)| = log A - gamma t on lags that are multiples
/// of lag_spacing, with a bootstrap over paths for the error bar. A complex
/// observable such as exp(iv) gives a smooth |C|; a real one oscillates at the
/// orbital frequency and needs lag_spacing equal to the period. Throws
/// FitFailure on zero variance, too few usable lags or a non-decaying fit.
AutocorrResult gap_from_autocorrelation(const TrajectoryEnsemble& ens, const Observable& f,
                                        const AutocorrOptions& opt = {});

struct TestFunction {
    std::function<double(const CartesianPoint&)> value;
    std::function<Vec3(const CartesianPoint&)> grad;
};
/// Smooth compactly supported bump exp(1 - 1/(1 - |x-c|^2/rho^2)).
TestFunction bump_function(const CartesianPoint& centre, double radius);
/// (x_axis - c_axis) times the bump.
TestFunction clipped_linear(const CartesianPoint& centre, double radius, int axis);
TestFunction constant_function(double c);

struct DirichletCheck {
    double lhs{0};  ///< -sum w f (G f)
    double rhs{0};  ///< (eps^2/2) sum w |grad f|^2
    double relative{0};
};
DirichletCheck dirichlet_identity_check(const GeneratorMatrix& G, const TestFunction& f);
DirichletCheck dirichlet_identity_check(const PhysParams& p, const TestFunction& f, const GridSpec& grid);

struct SpectralConfig {
    double C{1.0};
    double r0{2.0};
    /// (mu - eps^2 lambda C)/(eps^2 lambda); throws ConfigError unless 0 < C < mu/(eps^2 lambda).
    [[nodiscard]] double C_tilde(const PhysParams& p) const;
};

struct GuScanOptions {
    int n_angles{2000};
    bool include_T{true};
};

struct GuScanReport {
    std::vector<double> radii;
    std::vector<double> max_gu;
    double bound{0};  ///< -eps^2 C_tilde / 2
    double r1_hat{0};  ///< smallest scanned radius beyond which every max is <= bound (inf if none)
    bool r1_found{false};
    double sup_grad_log_T{0};  ///< over scanned points with |x| >= r0
};

/// G_u |x| = (eps^2 / 2|x|)(2 + 2 grad R_eps . x + grad ln T_hat . x) maximized
/// over a Fibonacci sphere (pole-free) at each radius.
GuScanReport gu_radial_scan(const PhysParams& p, const SpectralConfig& cfg, const std::vector<double>& radii,
                            const GuScanOptions& opt = {});
double gu_value(const PhysParams& p, const CartesianPoint& x, bool include_T = true);

struct HtildeResidual {
    cplx lhs;  ///< H psi~ / psi~ by finite differences
    cplx rhs;  ///< eps^4 (Lap S_eps + 2 grad R_eps . grad S_eps)
    bool richardson_consistent{true};
    double h_used{0};
};

/// Generic fields for the similarity-transform identity: ln psi~ = R - S and
/// the drift b = eps^2 grad(R + S), R and S in the eps-scaled convention.
struct NelsonFields {
    double eps{1};
    std::function<double(const CartesianPoint&, const CartesianPoint&)> log_psi_tilde_diff;  ///< ln psi~(x1) - ln psi~(x0)
    std::function<Vec3(const CartesianPoint&)> drift;
    std::function<Vec3(const CartesianPoint&)> grad_R;
    std::function<Vec3(const CartesianPoint&)> grad_S;
    int dimension{3};
};
NelsonFields limiting_fields(const PhysParams& p);

/// H~ = (1/2)(-eps^4 Lap + eps^2 div b + b^2) applied to psi~ = exp(R - S),
/// divided by psi~. Finite differences use step h; a three-step Richardson
/// comparison flags steps dominated by truncation or roundoff.
HtildeResidual htilde_residual(const NelsonFields& f, const CartesianPoint& x, double h);
HtildeResidual htilde_residual(const PhysParams& p, const CartesianPoint& x, double h);
/// Picks the step from a ladder below 0.1 length by the smallest change of the
/// lhs between neighbouring steps; length is eps a for the limiting fields.
HtildeResidual htilde_residual_auto(const NelsonFields& f, const CartesianPoint& x, double length);
HtildeResidual htilde_residual_auto(const PhysParams& p, const CartesianPoint& x);

/// Grid residual r_i = (G^T rho)_i / rho_i + Lap S(x_i) for rho = exp(2 R_eps),
/// RMS over nodes inside the tube |u - e| < tube, away from Sigma and the walls.
struct AdjointGridResidual {
    double rms{0};
    double rms_reference{0};  ///< RMS of Lap S on the same nodes
    long nodes{0};
};
AdjointGridResidual adjoint_grid_residual(const PhysParams& p, const GeneratorMatrix& G, double tube = 0.2);

/// L1 distance between the discrete stationary vector and the analytic weight.
double stationary_l1(const GeneratorMatrix& G);

}  // namespace nelson
