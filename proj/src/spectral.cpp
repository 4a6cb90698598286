#include "nelson/spectral.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/SparseLU>

#include "nelson/coords.hpp"
#include "nelson/field.hpp"
#include "nelson/measure.hpp"
#include "nelson/special.hpp"

namespace nelson {

namespace {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using ColSparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

// Bernoulli function x/(e^x - 1).
double bernoulli(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
    return x / std::expm1(x);
}

double inf() { return std::numeric_limits<double>::infinity(); }

}  // namespace

GridSpec GridSpec::refined() const {
    GridSpec g = *this;
    for (int d = 0; d < dimension; ++d) g.n[static_cast<std::size_t>(d)] = 2 * n[static_cast<std::size_t>(d)];
    return g;
}

void GridSpec::validate() const {
    if (dimension < 1 || dimension > 3) throw ConfigError("grid.dimension must be 1, 2 or 3");
    for (int d = 0; d < dimension; ++d) {
        const auto k = static_cast<std::size_t>(d);
        if (n[k] < 2) throw ConfigError("grid.n must be >= 2 on every axis");
        if (!(hi[k] > lo[k])) throw ConfigError("grid box must have hi > lo");
    }
    if (excluded < 0.0) throw ConfigError("grid.excluded must be >= 0");
    if (excluded > 0.0) {
        for (int d = 0; d < dimension; ++d) {
            const auto k = static_cast<std::size_t>(d);
            if (!(lo[k] < -excluded && hi[k] > excluded))
                throw ConfigError("the excluded origin ball must lie strictly inside the box");
        }
    }
}

int GeneratorMatrix::neighbour(int i, int axis, int dir) const {
    auto idx = index[static_cast<std::size_t>(i)];
    idx[static_cast<std::size_t>(axis)] += dir;
    const auto k = static_cast<std::size_t>(axis);
    if (idx[k] < 0 || idx[k] >= grid.n[k]) return -1;
    const long lin = (static_cast<long>(idx[2]) * grid.n[1] + idx[1]) * grid.n[0] + idx[0];
    return active[static_cast<std::size_t>(lin)];
}

GeneratorMatrix build_generator_from_drift(const GridSpec& grid, double diffusion,
                                           const std::function<Vec3(const CartesianPoint&)>& drift, double a) {
    grid.validate();
    GeneratorMatrix out;
    out.grid = grid;
    for (int d = grid.dimension; d < 3; ++d) out.grid.n[static_cast<std::size_t>(d)] = 1;
    out.a = a;
    out.diffusion = diffusion;
    const auto& n = out.grid.n;
    std::array<double, 3> h{1.0, 1.0, 1.0};
    out.cell_volume = 1.0;
    for (int d = 0; d < grid.dimension; ++d) {
        h[static_cast<std::size_t>(d)] = out.grid.spacing(d, a);
        out.cell_volume *= h[static_cast<std::size_t>(d)];
    }

    const long total = static_cast<long>(n[0]) * n[1] * n[2];
    out.active.assign(static_cast<std::size_t>(total), -1);
    for (int k = 0; k < n[2]; ++k)
        for (int j = 0; j < n[1]; ++j)
            for (int i = 0; i < n[0]; ++i) {
                CartesianPoint x{a * out.grid.lo[0] + (i + 0.5) * h[0], 0.0, 0.0};
                if (grid.dimension >= 2) x.y = a * out.grid.lo[1] + (j + 0.5) * h[1];
                if (grid.dimension >= 3) x.z = a * out.grid.lo[2] + (k + 0.5) * h[2];
                if (grid.excluded > 0.0 && x.norm() < grid.excluded * a) continue;
                const long lin = (static_cast<long>(k) * n[1] + j) * n[0] + i;
                out.active[static_cast<std::size_t>(lin)] = static_cast<int>(out.points.size());
                out.points.push_back(x);
                out.index.push_back({i, j, k});
            }

    const auto N = static_cast<Eigen::Index>(out.points.size());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * (2 * grid.dimension + 1));
    out.min_offdiag = inf();
    for (Eigen::Index r = 0; r < N; ++r) {
        const Vec3 b = drift(out.points[static_cast<std::size_t>(r)]);
        double diag = 0.0;
        for (int d = 0; d < grid.dimension; ++d) {
            const double hd = h[static_cast<std::size_t>(d)];
            const double base = diffusion / (hd * hd);
            double up, down;
            if (grid.scheme == DriftScheme::Upwind) {
                up = base + std::max(b[d], 0.0) / hd;
                down = base + std::max(-b[d], 0.0) / hd;
            } else {
                const double pe = b[d] * hd / diffusion;
                up = base * bernoulli(-pe);
                down = base * bernoulli(pe);
            }
            for (int dir : {+1, -1}) {
                const int c = out.neighbour(static_cast<int>(r), d, dir);
                if (c < 0) continue;  // reflecting wall or excluded ball: the flux is dropped
                const double rate = dir > 0 ? up : down;
                out.min_offdiag = std::min(out.min_offdiag, rate);
                trip.emplace_back(r, c, rate);
                diag -= rate;
            }
        }
        trip.emplace_back(r, r, diag);
    }
    out.G.resize(N, N);
    out.G.setFromTriplets(trip.begin(), trip.end());
    out.G.makeCompressed();
    if (out.min_offdiag < 0.0 || !std::isfinite(out.min_offdiag))
        throw DomainError(DomainError::Kind::Resolution, "discrete generator has a negative off-diagonal rate");

    Eigen::VectorXd ones = Eigen::VectorXd::Ones(N);
    out.max_row_sum = (out.G * ones).cwiseAbs().maxCoeff();
    return out;
}

double min_effective_width(const PhysParams& p, int dimension) {
    double min_width = inf();
    for (int k = 0; k < 720; ++k) {
        const Widths w = effective_widths(p, kTwoPi * k / 720.0);
        min_width = std::min(min_width, w.sigma_normal);
        if (dimension == 3) min_width = std::min(min_width, w.sigma_z);
    }
    return min_width;
}

GeneratorMatrix build_generator(const PhysParams& p, const GridSpec& grid) {
    if (grid.dimension != 2 && grid.dimension != 3)
        throw ConfigError("the Nelson generator is built on 2D or 3D grids");
    const double min_width = min_effective_width(p, grid.dimension);
    for (int d = 0; d < grid.dimension; ++d) {
        if (!(grid.spacing(d, p.a()) < 0.25 * min_width))
            throw DomainError(DomainError::Kind::Resolution,
                              "grid spacing must stay below a quarter of the smallest effective width");
    }
    const bool planar = grid.dimension == 2;
    auto drift = [&](const CartesianPoint& x) {
        try {
            return eval_drift(p, planar ? CartesianPoint{x.x, x.y, 0.0} : x);
        } catch (const DomainError&) {
            throw DomainError(DomainError::Kind::Resolution, "grid node falls on a singular point of the drift");
        }
    };
    GeneratorMatrix out = build_generator_from_drift(grid, 0.5 * p.eps() * p.eps(), drift, p.a());

    const auto N = out.size();
    Eigen::VectorXd logw(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const CartesianPoint& x = out.points[static_cast<std::size_t>(i)];
        double lt = 0.0;
        try {
            const double v = to_elliptic(p, planar ? CartesianPoint{x.x, x.y, 0.0} : x).v;
            // In the plane the z-width of the volcano is integrated out, so the
            // slow factor becomes T sigma_z, proportional to (1 + e^2 + 2e cos v)^(-1/2).
            lt = planar ? -0.5 * std::log(1.0 + p.ecc() * p.ecc() + 2.0 * p.ecc() * std::cos(v))
                        : std::log(T_closed(p.ecc(), v));
        } catch (const DomainError&) {
            lt = 0.0;
        }
        logw[i] = 2.0 * R_eps(p, planar ? CartesianPoint{x.x, x.y, 0.0} : x) + lt;
    }
    const double m = logw.maxCoeff();
    out.w_analytic = (logw.array() - m).exp();
    out.w_analytic /= out.w_analytic.sum();
    out.w = stationary_vector(out);
    return out;
}

Eigen::VectorXd stationary_vector(const GeneratorMatrix& gm) {
    const auto N = gm.size();
    // Any pinned node works for an irreducible chain.
    ColSparse gt = ColSparse(gm.G.transpose());
    ColSparse reduced = gt.bottomRightCorner(N - 1, N - 1);
    Eigen::VectorXd rhs = -Eigen::VectorXd(gt.block(1, 0, N - 1, 1));
    Eigen::SparseLU<ColSparse, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(reduced);
    if (lu.info() != Eigen::Success)
        throw DomainError(DomainError::Kind::NoConvergence, "stationary system is singular (reducible chain?)");
    Eigen::VectorXd w(N);
    w[0] = 1.0;
    w.tail(N - 1) = lu.solve(rhs);
    w /= w.sum();
    return w;
}

GapResult gap_from_matrix(const GeneratorMatrix& gm, const GapOptions& opt) {
    const auto N = gm.size();
    const Eigen::VectorXd w = gm.w.size() == N ? gm.w : stationary_vector(gm);
    const ColSparse G = ColSparse(gm.G);
    ColSparse I(N, N);
    I.setIdentity();

    // Deflation of constants: P f = f - <w, f> 1.
    auto project = [&](Eigen::VectorXd& v) { v.array() -= w.dot(v); };

    Eigen::SparseLU<ColSparse, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(ColSparse(opt.shift * I - G));
    if (lu.info() != Eigen::Success) throw DomainError(DomainError::Kind::NoConvergence, "shifted factorization failed");

    const int m = std::min<int>(opt.krylov_dim, static_cast<int>(N) - 2);
    Eigen::MatrixXd V(N, m + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> nd;
    Eigen::VectorXd v0(N);
    for (Eigen::Index i = 0; i < N; ++i) v0[i] = nd(rng);
    project(v0);
    V.col(0) = v0 / v0.norm();
    int steps = m;
    for (int j = 0; j < m; ++j) {
        Eigen::VectorXd z = lu.solve(V.col(j));
        project(z);
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd c = V.leftCols(j + 1).transpose() * z;
            z -= V.leftCols(j + 1) * c;
            H.block(0, j, j + 1, 1) += c;
        }
        H(j + 1, j) = z.norm();
        if (H(j + 1, j) < 1e-14) {
            steps = j + 1;
            break;
        }
        V.col(j + 1) = z / H(j + 1, j);
    }

    Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(steps, steps));
    GapResult res;
    const double scale = std::max(1.0, gm.diffusion);
    double best_re = inf();
    cplx best{};
    for (int k = 0; k < steps; ++k) {
        const cplx theta = es.eigenvalues()[k];
        if (std::abs(theta) < 1e-300) continue;
        const Eigen::VectorXcd y = es.eigenvectors().col(k);
        const double est = std::abs(H(steps, steps - 1) * y[steps - 1]) / std::abs(theta);
        if (steps < m) {
            // invariant subspace found: every Ritz value is exact
        } else if (est > 1e-6) {
            continue;
        }
        const cplx lambda = 1.0 / theta - opt.shift;
        if (std::abs(lambda) < 1e-9 * scale) continue;
        res.ritz.push_back(lambda);
        if (lambda.real() < best_re) {
            best_re = lambda.real();
            best = lambda;
        }
    }
    if (res.ritz.empty()) throw DomainError(DomainError::Kind::NoConvergence, "no Ritz value converged");
    std::sort(res.ritz.begin(), res.ritz.end(), [](cplx a, cplx b) { return a.real() < b.real(); });

    // Complex shifted inverse iteration on (-G - sigma) for the selected eigenpair.
    using CSparse = Eigen::SparseMatrix<cplx, Eigen::ColMajor>;
    const cplx sigma = best + cplx(1e-7 * std::abs(best), 1e-7 * std::abs(best));
    CSparse A = (-G).cast<cplx>() - sigma * I.cast<cplx>();
    Eigen::SparseLU<CSparse, Eigen::COLAMDOrdering<int>> clu;
    clu.compute(A);
    if (clu.info() != Eigen::Success) throw DomainError(DomainError::Kind::NoConvergence, "complex factorization failed");

    // Start from the Ritz vector of the selected value.
    int kbest = 0;
    double dbest = inf();
    for (int k = 0; k < steps; ++k) {
        const cplx theta = es.eigenvalues()[k];
        const double d = std::abs(1.0 / theta - opt.shift - best);
        if (d < dbest) {
            dbest = d;
            kbest = k;
        }
    }
    Eigen::VectorXcd x = V.leftCols(steps).cast<cplx>() * es.eigenvectors().col(kbest);
    auto wnorm = [&](const Eigen::VectorXcd& v) { return std::sqrt((w.array() * v.array().abs2()).sum()); };
    x /= wnorm(x);
    cplx lambda = best;
    double residual = inf();
    int it = 0;
    for (; it < opt.max_refine; ++it) {
        Eigen::VectorXcd y = clu.solve(x);
        const cplx mean = (w.cast<cplx>().array() * y.array()).sum();
        y.array() -= mean;
        y /= wnorm(y);
        const Eigen::VectorXcd gy = G.cast<cplx>() * y;
        // Weighted Rayleigh quotient.
        const cplx num = (w.cast<cplx>().array() * y.array().conjugate() * (-gy).array()).sum();
        lambda = num;  // y has unit w-norm
        residual = wnorm(gy + lambda * y);
        x = y;
        if (residual < opt.tol) break;
    }
    res.eigenvalue = lambda;
    res.gap = lambda.real();
    res.eigenvector = x;
    res.residual = residual;
    res.iterations = it + 1;
    res.converged = residual < opt.tol;
    return res;
}

AutocorrResult gap_from_autocorrelation(const TrajectoryEnsemble& ens, const Observable& f, const AutocorrOptions& opt) {
    const SimConfig& cfg = ens.config;
    const double rec_dt = cfg.dt * cfg.record_stride;
    const double spacing = opt.lag_spacing > 0.0 ? opt.lag_spacing : 0.25 * cfg.params.period();
    const long lag_step = std::max<long>(1, std::lround(spacing / rec_dt));

    // Stationary observable series per usable path.
    std::vector<std::vector<cplx>> series;
    cplx total{};
    long count = 0;
    for (const PathResult& path : ens.paths) {
        if (path.truncated) continue;
        std::vector<cplx> s;
        for (const auto& r : path.records)
            if (r.t >= opt.burn_in && std::isfinite(r.v)) s.push_back(f(r));
        for (const cplx& c : s) total += c;
        count += static_cast<long>(s.size());
        if (!s.empty()) series.push_back(std::move(s));
    }
    if (count < 2 || series.empty())
        throw DomainError(DomainError::Kind::FitFailure, "no stationary samples for the autocorrelation fit");
    const cplx mean = total / static_cast<double>(count);

    const int J = opt.max_lags;
    const std::size_t P = series.size();
    // Per-path lagged sums S[p][j] and pair counts n[p][j].
    std::vector<std::vector<cplx>> S(P, std::vector<cplx>(static_cast<std::size_t>(J) + 1));
    std::vector<std::vector<double>> cnt(P, std::vector<double>(static_cast<std::size_t>(J) + 1));
    for (std::size_t pi = 0; pi < P; ++pi) {
        const auto& s = series[pi];
        for (int j = 0; j <= J; ++j) {
            const long lag = j * lag_step;
            cplx acc{};
            long n = 0;
            for (long t = 0; t + lag < static_cast<long>(s.size()); ++t) {
                acc += (s[static_cast<std::size_t>(t + lag)] - mean) * std::conj(s[static_cast<std::size_t>(t)] - mean);
                ++n;
            }
            S[pi][static_cast<std::size_t>(j)] = acc;
            cnt[pi][static_cast<std::size_t>(j)] = static_cast<double>(n);
        }
    }

    auto covariance = [&](const std::vector<std::size_t>& pick) {
        std::vector<double> c(static_cast<std::size_t>(J) + 1, 0.0);
        for (int j = 0; j <= J; ++j) {
            cplx acc{};
            double n = 0;
            for (std::size_t pi : pick) {
                acc += S[pi][static_cast<std::size_t>(j)];
                n += cnt[pi][static_cast<std::size_t>(j)];
            }
            c[static_cast<std::size_t>(j)] = n > 0 ? std::abs(acc / n) : 0.0;
        }
        return c;
    };

    // Fit log|C_j| = log A - gamma t_j over j = 1.. while |C_j| >= min_relative |C_0|.
    auto fit = [&](const std::vector<double>& c, int& used) {
        used = 0;
        std::vector<double> tt, yy;
        for (int j = 1; j <= J; ++j) {
            const double cj = c[static_cast<std::size_t>(j)];
            if (!(cj >= opt.min_relative * c[0])) break;
            tt.push_back(static_cast<double>(j * lag_step) * rec_dt);
            yy.push_back(std::log(cj));
        }
        used = static_cast<int>(tt.size());
        if (used < 3) return std::numeric_limits<double>::quiet_NaN();
        const double mt = std::accumulate(tt.begin(), tt.end(), 0.0) / used;
        const double my = std::accumulate(yy.begin(), yy.end(), 0.0) / used;
        double sxy = 0.0, sxx = 0.0;
        for (int k = 0; k < used; ++k) {
            sxy += (tt[static_cast<std::size_t>(k)] - mt) * (yy[static_cast<std::size_t>(k)] - my);
            sxx += (tt[static_cast<std::size_t>(k)] - mt) * (tt[static_cast<std::size_t>(k)] - mt);
        }
        return -sxy / sxx;
    };

    std::vector<std::size_t> all(P);
    std::iota(all.begin(), all.end(), 0);
    const std::vector<double> c = covariance(all);
    if (!(c[0] > 1e-14)) throw DomainError(DomainError::Kind::FitFailure, "observable has zero variance");

    AutocorrResult res;
    for (int j = 0; j <= J; ++j) {
        res.lags.push_back(static_cast<double>(j * lag_step) * rec_dt);
        res.abs_cov.push_back(c[static_cast<std::size_t>(j)]);
    }
    res.gamma = fit(c, res.fitted_lags);
    if (!std::isfinite(res.gamma))
        throw DomainError(DomainError::Kind::FitFailure, "autocovariance decays below the fit floor within two lags");
    if (!(res.gamma > 0.0)) throw DomainError(DomainError::Kind::FitFailure, "autocovariance does not decay");

    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> pick(0, P - 1);
    std::vector<double> boot;
    std::vector<std::vector<double>> boot_c;
    for (int b = 0; b < opt.bootstrap; ++b) {
        std::vector<std::size_t> sel(P);
        for (auto& s : sel) s = pick(rng);
        const auto cb = covariance(sel);
        int used = 0;
        const double g = fit(cb, used);
        if (std::isfinite(g)) boot.push_back(g);
        boot_c.push_back(cb);
    }
    // Monotone decay within three bootstrap standard deviations over the fitted window.
    for (int j = 1; j < res.fitted_lags; ++j) {
        double m1 = 0.0, m2 = 0.0;
        for (const auto& cb : boot_c) {
            const double d = cb[static_cast<std::size_t>(j + 1)] - cb[static_cast<std::size_t>(j)];
            m1 += d;
            m2 += d * d;
        }
        const double nb = static_cast<double>(boot_c.size());
        const double sd = nb > 1 ? std::sqrt(std::max(0.0, (m2 - m1 * m1 / nb) / (nb - 1))) : 0.0;
        if (c[static_cast<std::size_t>(j + 1)] - c[static_cast<std::size_t>(j)] > 3.0 * sd + 1e-12 * c[0])
            throw DomainError(DomainError::Kind::FitFailure, "autocovariance is non-monotone beyond noise");
    }
    if (boot.size() >= 2) {
        std::sort(boot.begin(), boot.end());
        auto q = [&](double pr) { return boot[static_cast<std::size_t>(pr * static_cast<double>(boot.size() - 1))]; };
        res.ci_low = q(0.025);
        res.ci_high = q(0.975);
        const double mb = std::accumulate(boot.begin(), boot.end(), 0.0) / static_cast<double>(boot.size());
        double v = 0.0;
        for (double g : boot) v += (g - mb) * (g - mb);
        res.stderr_ = std::sqrt(v / static_cast<double>(boot.size() - 1));
    } else {
        res.ci_low = res.ci_high = res.gamma;
    }
    return res;
}

TestFunction bump_function(const CartesianPoint& centre, double radius) {
    TestFunction f;
    f.value = [=](const CartesianPoint& x) {
        const double s = (x - centre).dot(x - centre) / (radius * radius);
        return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
    };
    f.grad = [=](const CartesianPoint& x) {
        const Vec3 d = x - centre;
        const double s = d.dot(d) / (radius * radius);
        if (s >= 1.0) return Vec3{};
        const double val = std::exp(1.0 - 1.0 / (1.0 - s));
        // d/ds of -1/(1-s) is -1/(1-s)^2; ds/dx = 2 d / radius^2
        return d * (-val / ((1.0 - s) * (1.0 - s)) * 2.0 / (radius * radius));
    };
    return f;
}

TestFunction clipped_linear(const CartesianPoint& centre, double radius, int axis) {
    const TestFunction b = bump_function(centre, radius);
    TestFunction f;
    f.value = [=](const CartesianPoint& x) { return (x[axis] - centre[axis]) * b.value(x); };
    f.grad = [=](const CartesianPoint& x) {
        Vec3 g = b.grad(x) * (x[axis] - centre[axis]);
        g[axis] += b.value(x);
        return g;
    };
    return f;
}

TestFunction constant_function(double c) {
    return {[c](const CartesianPoint&) { return c; }, [](const CartesianPoint&) { return Vec3{}; }};
}

DirichletCheck dirichlet_identity_check(const GeneratorMatrix& gm, const TestFunction& f) {
    const auto N = gm.size();
    Eigen::VectorXd fv(N);
    double rhs = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const CartesianPoint& x = gm.points[static_cast<std::size_t>(i)];
        fv[i] = f.value(x);
        const Vec3 g = f.grad(x);
        rhs += gm.w[i] * g.dot(g);
    }
    rhs *= gm.diffusion;
    const Eigen::VectorXd gf = gm.G * fv;
    const double lhs = -(gm.w.array() * fv.array() * gf.array()).sum();
    DirichletCheck out{lhs, rhs, 0.0};
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    out.relative = scale > 1e-300 ? std::abs(lhs - rhs) / scale : 0.0;
    return out;
}

DirichletCheck dirichlet_identity_check(const PhysParams& p, const TestFunction& f, const GridSpec& grid) {
    return dirichlet_identity_check(build_generator(p, grid), f);
}

double SpectralConfig::C_tilde(const PhysParams& p) const {
    const double eps2 = p.eps() * p.eps();
    if (!(C > 0.0 && C < p.mu() / (eps2 * p.lambda())))
        throw ConfigError("spectral.C must satisfy 0 < C < mu/(eps^2 lambda)");
    return (p.mu() - eps2 * p.lambda() * C) / (eps2 * p.lambda());
}

double gu_value(const PhysParams& p, const CartesianPoint& x, bool include_T) {
    const double r = x.norm();
    const Gradients g = eval_gradients(p, x);
    double t_term = 0.0;
    if (include_T) {
        try {
            t_term = grad_log_T_hat(p, x).dot(x);
        } catch (const DomainError&) {
            t_term = 0.0;  // on the symmetry axis v is undefined and T_hat is flat
        }
    }
    return p.eps() * p.eps() / (2.0 * r) * (2.0 + 2.0 * g.grad_R.dot(x) + t_term);
}

GuScanReport gu_radial_scan(const PhysParams& p, const SpectralConfig& cfg, const std::vector<double>& radii,
                            const GuScanOptions& opt) {
    GuScanReport rep;
    rep.bound = -0.5 * p.eps() * p.eps() * cfg.C_tilde(p);
    const int n = opt.n_angles;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    std::vector<Vec3> dirs;
    dirs.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        // Offset by 1/2 so no point sits on a pole.
        const double zc = 1.0 - 2.0 * (k + 0.5) / n;
        const double rho = std::sqrt(1.0 - zc * zc);
        const double ph = golden * k;
        dirs.push_back({rho * std::cos(ph), rho * std::sin(ph), zc});
    }
    for (double r : radii) {
        if (!(r > 0.0)) throw ConfigError("scan radii must be positive");
        double mx = -inf();
        for (const Vec3& d : dirs) {
            const CartesianPoint x = d * r;
            double g;
            try {
                g = gu_value(p, x, opt.include_T);
            } catch (const DomainError&) {
                continue;  // focal cone: drift singular, skip the direction
            }
            mx = std::max(mx, g);
            if (opt.include_T && r >= cfg.r0) {
                try {
                    rep.sup_grad_log_T = std::max(rep.sup_grad_log_T, grad_log_T_hat(p, x).norm());
                } catch (const DomainError&) {
                }
            }
        }
        rep.radii.push_back(r);
        rep.max_gu.push_back(mx);
    }
    // r1_hat: smallest radius from which the bound holds for every larger scanned radius.
    std::vector<std::size_t> order(rep.radii.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rep.radii[a] < rep.radii[b]; });
    rep.r1_hat = inf();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (rep.max_gu[*it] <= rep.bound) {
            rep.r1_hat = rep.radii[*it];
            rep.r1_found = true;
        } else {
            break;
        }
    }
    return rep;
}

NelsonFields limiting_fields(const PhysParams& p) {
    NelsonFields f;
    f.eps = p.eps();
    f.log_psi_tilde_diff = [p](const CartesianPoint& x0, const CartesianPoint& x1) {
        const cplx d = log_psi_difference(p, x0, x1);
        return d.real() - d.imag();
    };
    f.drift = [p](const CartesianPoint& x) { return eval_drift(p, x); };
    f.grad_R = [p](const CartesianPoint& x) { return eval_gradients(p, x).grad_R; };
    f.grad_S = [p](const CartesianPoint& x) { return eval_gradients(p, x).grad_S; };
    f.dimension = 3;
    return f;
}

namespace {

std::pair<double, double> htilde_pair(const NelsonFields& f, const CartesianPoint& x, double h) {
    const double e2 = f.eps * f.eps;
    double lap_ratio = 0.0, div_b = 0.0, lap_s = 0.0;
    for (int c = 0; c < f.dimension; ++c) {
        Vec3 s{};
        s[c] = h;
        const double up = f.log_psi_tilde_diff(x, x + s), dn = f.log_psi_tilde_diff(x, x - s);
        lap_ratio += (std::expm1(up) + std::expm1(dn)) / (h * h);
        div_b += (f.drift(x + s)[c] - f.drift(x - s)[c]) / (2.0 * h);
        lap_s += (f.grad_S(x + s)[c] - f.grad_S(x - s)[c]) / (2.0 * h);
    }
    const Vec3 b = f.drift(x);
    const double lhs = 0.5 * (-e2 * e2 * lap_ratio + e2 * div_b + b.dot(b));
    const double rhs = e2 * e2 * (lap_s + 2.0 * f.grad_R(x).dot(f.grad_S(x)));
    return {lhs, rhs};
}

}  // namespace

HtildeResidual htilde_residual(const NelsonFields& f, const CartesianPoint& x, double h) {
    const auto a = htilde_pair(f, x, h);
    const auto b = htilde_pair(f, x, 0.5 * h);
    const auto c = htilde_pair(f, x, 0.25 * h);
    HtildeResidual out;
    // Richardson extrapolation of the O(h^2) differences.
    out.lhs = (4.0 * b.first - a.first) / 3.0;
    out.rhs = (4.0 * b.second - a.second) / 3.0;
    out.h_used = h;
    const double d1 = a.first - b.first, d2 = b.first - c.first;
    const double scale = std::abs(b.first) + std::abs(b.second) + 1e-300;
    if (std::abs(d1) > 1e-11 * scale) {
        const double ratio = d1 / d2;
        out.richardson_consistent = std::isfinite(ratio) && ratio > 2.0 && ratio < 8.0;
    }
    return out;
}

HtildeResidual htilde_residual(const PhysParams& p, const CartesianPoint& x, double h) {
    return htilde_residual(limiting_fields(p), x, h);
}

HtildeResidual htilde_residual_auto(const NelsonFields& f, const CartesianPoint& x, double length) {
    // Ladder of steps a factor 10^(1/4) apart; keep the middle of the flattest
    // three-step stretch of the lhs.
    std::vector<HtildeResidual> ladder;
    for (int k = 0; k < 17; ++k) ladder.push_back(htilde_residual(f, x, 0.1 * length * std::pow(10.0, -0.25 * k)));
    std::size_t best = 1;
    double best_d = inf();
    for (std::size_t k = 1; k + 1 < ladder.size(); ++k) {
        const double d = std::abs(ladder[k - 1].lhs - ladder[k].lhs) + std::abs(ladder[k].lhs - ladder[k + 1].lhs);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return ladder[best];
}

HtildeResidual htilde_residual_auto(const PhysParams& p, const CartesianPoint& x) {
    return htilde_residual_auto(limiting_fields(p), x, p.eps() * p.a());
}

AdjointGridResidual adjoint_grid_residual(const PhysParams& p, const GeneratorMatrix& gm, double tube) {
    const auto N = gm.size();
    const bool planar = gm.grid.dimension == 2;
    auto lift = [&](const CartesianPoint& x) { return planar ? CartesianPoint{x.x, x.y, 0.0} : x; };
    Eigen::VectorXd logr(N);
    for (Eigen::Index i = 0; i < N; ++i) logr[i] = 2.0 * R_eps(p, lift(gm.points[static_cast<std::size_t>(i)]));
    const ColSparse Gc = ColSparse(gm.G);  // column i of G holds the rates into node i
    const double eps2 = p.eps() * p.eps();
    const double hmin = gm.grid.spacing(0, gm.a);
    AdjointGridResidual out;
    double acc = 0.0, ref = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const CartesianPoint x = lift(gm.points[static_cast<std::size_t>(i)]);
        bool interior = true;
        for (int d = 0; d < gm.grid.dimension && interior; ++d)
            interior = gm.neighbour(static_cast<int>(i), d, +1) >= 0 && gm.neighbour(static_cast<int>(i), d, -1) >= 0;
        if (!interior || sigma_distance(p, x) < 0.1 * p.a()) continue;
        double u;
        try {
            u = to_elliptic(p, x).u;
        } catch (const DomainError&) {
            continue;
        }
        if (std::abs(u - p.ecc()) > tube) continue;
        double gt = 0.0;
        for (ColSparse::InnerIterator it(Gc, i); it; ++it) gt += it.value() * std::exp(logr[it.row()] - logr[i]);
        // Lap S in the planar case is the in-plane part; Lap of the eps-free S = eps^2 S_eps.
        double lap_s = 0.0;
        for (int d = 0; d < gm.grid.dimension; ++d) {
            Vec3 s{};
            s[d] = 0.5 * hmin;
            lap_s += eps2 * (eval_gradients(p, x + s).grad_S[d] - eval_gradients(p, x - s).grad_S[d]) / hmin;
        }
        const double r = gt + lap_s;
        acc += r * r;
        ref += lap_s * lap_s;
        ++out.nodes;
    }
    if (out.nodes > 0) {
        out.rms = std::sqrt(acc / static_cast<double>(out.nodes));
        out.rms_reference = std::sqrt(ref / static_cast<double>(out.nodes));
    }
    return out;
}

double stationary_l1(const GeneratorMatrix& gm) { return (gm.w - gm.w_analytic).cwiseAbs().sum(); }

}  // namespace nelson
