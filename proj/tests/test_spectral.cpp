#include "doctest.h"

#include <random>

#include "nelson/coords.hpp"
#include "nelson/field.hpp"
#include "nelson/measure.hpp"
#include "nelson/spectral.hpp"

using namespace nelson;

namespace {

GridSpec box1d(int n, double L) {
    GridSpec g;
    g.dimension = 1;
    g.lo = {0.0, 0.0, 0.0};
    g.hi = {L, 0.0, 0.0};
    g.n = {n, 1, 1};
    g.excluded = 0.0;
    return g;
}

GridSpec plane_box(int nx, DriftScheme s = DriftScheme::ScharfetterGummel) {
    GridSpec g;
    g.dimension = 2;
    g.lo = {-3.0, -2.0, 0.0};
    g.hi = {2.0, 2.0, 0.0};
    g.n = {nx, nx * 4 / 5, 1};
    g.scheme = s;
    return g;
}

auto zero_drift = [](const CartesianPoint&) { return Vec3{}; };

}  // namespace

TEST_CASE("pure Laplacian: symmetric, constant null vector, Neumann gap in 1D") {
    const double eps = 0.3, L = 2.0, D = 0.5 * eps * eps;
    const GeneratorMatrix gm = build_generator_from_drift(box1d(400, L), D, zero_drift);
    const Eigen::SparseMatrix<double> G = gm.G;
    CHECK((Eigen::MatrixXd(G) - Eigen::MatrixXd(G.transpose())).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(gm.max_row_sum < 1e-9);
    GeneratorMatrix with_w = gm;
    with_w.w = stationary_vector(gm);
    CHECK((with_w.w.array() - 1.0 / 400).abs().maxCoeff() < 1e-12);

    const GapResult r = gap_from_matrix(with_w);
    const double exact = D * (kPi / L) * (kPi / L);
    CHECK(r.converged);
    CHECK(std::abs(r.gap - exact) / exact < 0.02);
    CHECK(std::abs(r.eigenvalue.imag()) < 1e-10);
}

TEST_CASE("pure Laplacian in 2D matches the Neumann gap at n = 200 per axis") {
    const double eps = 0.3, L = 2.0, D = 0.5 * eps * eps;
    GridSpec g;
    g.dimension = 2;
    g.lo = {0.0, 0.0, 0.0};
    g.hi = {L, 1.5, 0.0};  // the slowest mode is along the longer side
    g.n = {200, 200, 1};
    g.excluded = 0.0;
    GeneratorMatrix gm = build_generator_from_drift(g, D, zero_drift);
    gm.w = stationary_vector(gm);
    const GapResult r = gap_from_matrix(gm);
    const double exact = D * (kPi / L) * (kPi / L);
    CHECK(r.residual < 1e-8);
    CHECK(std::abs(r.gap - exact) / exact < 0.05);
}

TEST_CASE("Neumann gap error falls at second order in h") {
    const double D = 0.02, L = 1.0, exact = D * kPi * kPi;
    double prev = 0.0;
    for (int n : {50, 100, 200}) {
        GeneratorMatrix gm = build_generator_from_drift(box1d(n, L), D, zero_drift);
        gm.w = stationary_vector(gm);
        const double err = std::abs(gap_from_matrix(gm).gap - exact);
        if (prev > 0.0) CHECK(prev / err == doctest::Approx(4.0).epsilon(0.1));
        prev = err;
    }
}

TEST_CASE("constant drift acting on a linear ramp gives the drift exactly") {
    const double c = 0.7;
    for (DriftScheme s : {DriftScheme::Upwind, DriftScheme::ScharfetterGummel}) {
        GridSpec g = box1d(41, 1.0);
        g.scheme = s;
        const GeneratorMatrix gm =
            build_generator_from_drift(g, 0.01, [c](const CartesianPoint&) { return Vec3{c, 0.0, 0.0}; });
        Eigen::VectorXd ramp(gm.size());
        for (Eigen::Index i = 0; i < gm.size(); ++i) ramp[i] = 3.0 * gm.points[static_cast<std::size_t>(i)].x - 1.0;
        const Eigen::VectorXd out = gm.G * ramp;
        for (Eigen::Index i = 1; i + 1 < gm.size(); ++i) CHECK(out[i] == doctest::Approx(3.0 * c).epsilon(1e-10));
    }
}

TEST_CASE("Nelson generator: positivity, zero row sums, origin excluded") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    const GeneratorMatrix gm = build_generator(p, plane_box(80));
    CHECK(gm.min_offdiag >= 0.0);
    CHECK(gm.max_row_sum < 1e-12 * gm.G.coeffs().cwiseAbs().maxCoeff() * 10);
    for (const auto& x : gm.points) CHECK(x.norm() >= 0.05 * p.a());
    CHECK(std::abs(gm.w.sum() - 1.0) < 1e-12);
    CHECK(gm.w.minCoeff() > 0.0);
    // w^T G = 0
    const Eigen::VectorXd res = gm.G.transpose() * gm.w;
    CHECK(res.cwiseAbs().maxCoeff() < 1e-12 * gm.G.coeffs().cwiseAbs().maxCoeff());
}

TEST_CASE("upwind also keeps a Markov sign structure") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    const GeneratorMatrix gm = build_generator(p, plane_box(81, DriftScheme::Upwind));
    CHECK(gm.min_offdiag >= 0.0);
}

TEST_CASE("under-resolved grids are rejected") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    try {
        (void)build_generator(p, plane_box(41));
        FAIL("expected a resolution error");
    } catch (const DomainError& e) {
        CHECK(e.kind() == DomainError::Kind::Resolution);
    }
    GridSpec bad = plane_box(80);
    bad.excluded = 5.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("refinement splits every cell") {
    const GridSpec g = plane_box(80);
    const GridSpec f = g.refined();
    CHECK(f.n[0] == 160);
    CHECK(f.spacing(0) == doctest::Approx(0.5 * g.spacing(0)));
}

TEST_CASE("2D Nelson gap: positive, tight residual, stable under grid doubling") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    GeneratorMatrix coarse = build_generator(p, plane_box(80));
    GeneratorMatrix fine = build_generator(p, plane_box(80).refined());
    const GapResult a = gap_from_matrix(coarse), b = gap_from_matrix(fine);
    CHECK(a.gap > 0.0);
    CHECK(b.gap > 0.0);
    CHECK(a.residual < 1e-8);
    CHECK(b.residual < 1e-8);
    CHECK(std::abs(a.gap - b.gap) / b.gap < 0.1);
    // the slowest mode rotates with the orbit
    CHECK(std::abs(std::abs(b.eigenvalue.imag()) - 1.0) < 0.2);
}

TEST_CASE("autocorrelation of a constant observable is rejected") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 4;
    c.n_steps = 20000;
    c.record_stride = 50;
    c.planar = true;
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    try {
        (void)gap_from_autocorrelation(ens, [](const TrajectoryRecord&) { return cplx(1.0, 0.0); });
        FAIL("expected a fit failure");
    } catch (const DomainError& e) {
        CHECK(e.kind() == DomainError::Kind::FitFailure);
    }
}

TEST_CASE("autocorrelation gap of cos v agrees with the matrix gap at e = 0.5, eps = 0.2") {
    const PhysParams p(1.0, 1.0, 0.5, 0.2);
    SimConfig c = SimConfig::defaults(p);
    c.planar = true;
    c.n_paths = 96;
    c.n_steps = 250000;
    c.record_stride = 50;
    c.seed = 11;
    c.x0 = CartesianPoint{p.a() * (1.0 - p.ecc()), 0.0, 0.0};
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    AutocorrOptions o;
    o.lag_spacing = p.period();  // a real observable must be sampled in phase
    o.bootstrap = 100;
    const AutocorrResult ac =
        gap_from_autocorrelation(ens, [](const TrajectoryRecord& r) { return cplx(std::cos(r.v), 0.0); }, o);
    const double g = gap_from_matrix(build_generator(p, plane_box(125))).gap;
    CHECK(ac.gamma > 0.5 * g);
    CHECK(ac.gamma < 2.0 * g);
    CHECK(ac.ci_low <= ac.gamma);
    CHECK(ac.ci_high >= ac.gamma);

    AutocorrOptions q;
    q.bootstrap = 100;
    const AutocorrResult z =
        gap_from_autocorrelation(ens, [](const TrajectoryRecord& r) { return std::polar(1.0, r.v); }, q);
    CHECK(z.fitted_lags >= 5);
    CHECK(z.gamma > 0.5 * g);
    CHECK(z.gamma < 2.0 * g);
}

TEST_CASE("Dirichlet-form identity: constants give zero and bumps converge") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    GridSpec g;
    g.dimension = 2;
    g.lo = {-2.5, -1.5, 0.0};
    g.hi = {1.5, 1.5, 0.0};
    g.scheme = DriftScheme::ScharfetterGummel;
    const CartesianPoint c{-p.a() * p.ecc(), p.a() * p.ecc_conj(), 0.0};  // end of the minor axis

    g.n = {200, 150, 1};
    const GeneratorMatrix coarse = build_generator(p, g);
    g.n = {400, 300, 1};  // h = a/100
    const GeneratorMatrix fine = build_generator(p, g);

    const DirichletCheck k = dirichlet_identity_check(fine, constant_function(2.0));
    CHECK(std::abs(k.lhs) < 1e-10);
    CHECK(k.rhs == 0.0);

    const TestFunction bump = bump_function(c, 0.6);
    const DirichletCheck b1 = dirichlet_identity_check(coarse, bump), b2 = dirichlet_identity_check(fine, bump);
    CHECK(b2.relative < 5e-2);
    CHECK(b2.relative < b1.relative);

    const TestFunction lin = clipped_linear(c, 0.6, 0);
    const DirichletCheck l1 = dirichlet_identity_check(coarse, lin), l2 = dirichlet_identity_check(fine, lin);
    CHECK(l2.relative < l1.relative);
}

TEST_CASE("test function gradients match finite differences") {
    const CartesianPoint c{0.1, -0.2, 0.3};
    const TestFunction fs[] = {bump_function(c, 0.8), clipped_linear(c, 0.8, 1)};
    const CartesianPoint x{0.3, 0.1, 0.2};
    for (const auto& f : fs) {
        const Vec3 g = f.grad(x);
        for (int d = 0; d < 3; ++d) {
            Vec3 s{};
            s[d] = 1e-6;
            CHECK(g[d] == doctest::Approx((f.value(x + s) - f.value(x - s)) / 2e-6).epsilon(1e-6));
        }
    }
}

TEST_CASE("discrete adjoint residual of exp(2R) shrinks with h") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    double prev = 0.0;
    for (int nx : {100, 200}) {
        const GeneratorMatrix gm = build_generator(p, plane_box(nx, DriftScheme::Upwind));
        const AdjointGridResidual r = adjoint_grid_residual(p, gm);
        CHECK(r.nodes > 100);
        if (prev > 0.0) {
            // first order: halving h roughly halves the residual
            CHECK(prev / r.rms > 1.5);
            CHECK(prev / r.rms < 3.0);
        }
        prev = r.rms;
    }
}

TEST_CASE("discrete stationary vector: second-order self-convergence") {
    const PhysParams p(1.0, 1.0, 0.5, 0.6);
    // Fine cell masses summed onto the parent coarse cells.
    auto coarsen = [](const GeneratorMatrix& f, const GeneratorMatrix& c) {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(c.size());
        for (Eigen::Index i = 0; i < f.size(); ++i) {
            const auto& id = f.index[static_cast<std::size_t>(i)];
            const int k = c.active[static_cast<std::size_t>((id[1] / 2) * c.grid.n[0] + id[0] / 2)];
            if (k >= 0) out[k] += f.w[i];
        }
        return out;
    };
    const GeneratorMatrix a = build_generator(p, plane_box(100)), b = build_generator(p, plane_box(200)),
                          c = build_generator(p, plane_box(400));
    const double d1 = (a.w - coarsen(b, a)).cwiseAbs().sum(), d2 = (b.w - coarsen(c, b)).cwiseAbs().sum();
    CHECK(d1 / d2 > 3.0);
}

TEST_CASE("discrete stationary vector approaches the planar analytic weight as eps shrinks") {
    const double l_small = stationary_l1(build_generator(PhysParams(1.0, 1.0, 0.5, 0.2), plane_box(125)));
    const double l_large = stationary_l1(build_generator(PhysParams(1.0, 1.0, 0.5, 0.4), plane_box(125)));
    CHECK(l_small < 0.05);
    CHECK(l_small < l_large);
}

TEST_CASE("similarity-transform identity for the limiting fields") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(0.0, kTwoPi), du(-0.1, 0.1), dz(-0.05, 0.05);
    for (double eps : {0.1, 0.2, 0.4}) {
        const PhysParams p(1.0, 1.0, 0.5, eps);
        for (int k = 0; k < 10; ++k) {
            const EllipticCoords ec{p.ecc() + du(rng), ang(rng), dz(rng)};
            const CartesianPoint x = from_elliptic(p, ec);
            if (sigma_distance(p, x) < 0.1) continue;
            const HtildeResidual r = htilde_residual_auto(p, x);
            CHECK(std::abs(r.lhs - r.rhs) / std::abs(r.rhs) < 1e-6);
        }
    }
}

TEST_CASE("similarity-transform residual scales like eps^2 at fixed x") {
    const CartesianPoint x = from_elliptic(PhysParams(1.0, 1.0, 0.5, 0.1), {0.55, 1.0, 0.02});
    std::vector<double> scaled;
    for (double eps : {0.1, 0.2, 0.4}) {
        const HtildeResidual r = htilde_residual(PhysParams(1.0, 1.0, 0.5, eps), x, 1e-3);
        scaled.push_back(r.rhs.real() / (eps * eps));
    }
    CHECK(scaled[1] == doctest::Approx(scaled[0]).epsilon(1e-6));
    CHECK(scaled[2] == doctest::Approx(scaled[0]).epsilon(1e-6));
}

TEST_CASE("similarity identity vanishes for the oscillator ground state") {
    const double omega = 1.3, eps = 0.3;
    NelsonFields f;
    f.eps = eps;
    f.dimension = 1;
    f.log_psi_tilde_diff = [=](const CartesianPoint& a, const CartesianPoint& b) {
        return -omega * (b.x * b.x - a.x * a.x) / (2.0 * eps * eps);
    };
    f.drift = [=](const CartesianPoint& x) { return Vec3{-omega * x.x, 0.0, 0.0}; };
    f.grad_R = [=](const CartesianPoint& x) { return Vec3{-omega * x.x / (eps * eps), 0.0, 0.0}; };
    f.grad_S = [](const CartesianPoint&) { return Vec3{}; };
    for (double x : {-1.0, 0.2, 0.7}) {
        const HtildeResidual r = htilde_residual(f, {x, 0.0, 0.0}, 1e-3);
        CHECK(std::abs(r.lhs) < 1e-8);
        CHECK(std::abs(r.rhs) == 0.0);
    }
}

TEST_CASE("C_tilde enforces the standing assumption") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SpectralConfig s;
    s.C = 1.0;
    CHECK(s.C_tilde(p) == doctest::Approx(99.0));
    s.C = 100.0;
    CHECK_THROWS_AS((void)s.C_tilde(p), ConfigError);
    s.C = 0.0;
    CHECK_THROWS_AS((void)s.C_tilde(p), ConfigError);
}

TEST_CASE("radial drift estimate: finite r1 and the -mu/lambda limit") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SpectralConfig s;
    s.C = 3.0;  // sup |grad ln T_hat| outside r0 is about 2.6, reached near y = 0
    const std::vector<double> radii{0.1, 1.0, 2.0, 5.0, 10.0, 30.0, 100.0};
    GuScanOptions o;
    o.n_angles = 500;
    const GuScanReport rep = gu_radial_scan(p, s, radii, o);
    CHECK(rep.sup_grad_log_T < s.C);
    CHECK(rep.r1_found);
    CHECK(rep.r1_hat > 1.0);
    CHECK(rep.max_gu.front() > rep.bound);  // violated inside the ellipse region
    CHECK(rep.max_gu.back() == doctest::Approx(-p.mu() / p.lambda()).epsilon(0.05));

    o.include_T = false;
    const GuScanReport flat = gu_radial_scan(p, s, {100.0}, o);
    CHECK(flat.max_gu.back() == doctest::Approx(-p.mu() / p.lambda()).epsilon(0.05));
}
