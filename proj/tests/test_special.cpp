#include <random>

#include "doctest.h"
#include "nelson/coords.hpp"
#include "nelson/field.hpp"
#include "nelson/quadrature.hpp"
#include "nelson/special.hpp"

using namespace nelson;

namespace {

// Unscaled Laguerre recurrence for the scaling-invariance comparison.
std::pair<cplx, cplx> laguerre_direct(int n, cplx z) {
    cplx l0 = 1.0, l1 = 1.0 - z;
    if (n == 0) return {l0, 0.0};
    for (int k = 1; k < n; ++k) {
        const cplx l2 = ((2.0 * k + 1.0 - z) * l1 - static_cast<double>(k) * l0) / (k + 1.0);
        l0 = l1;
        l1 = l2;
    }
    // n L_n' = n L_n - n L_{n-1}
    return {l1, (static_cast<double>(n) * l1 - static_cast<double>(n) * l0) / z};
}

}  // namespace

TEST_CASE("Laguerre base cases and values") {
    const cplx z(0.3, -1.2);
    CHECK(std::abs(laguerre(0, z).value - 1.0) == 0.0);
    CHECK(std::abs(laguerre(1, z).value - (1.0 - z)) < 1e-15);
    CHECK(laguerre(2, 1.0).value.real() == doctest::Approx(-0.5));
    const PolyEval l2 = laguerre(2, z);
    CHECK(std::abs(l2.derivative - (z - 2.0)) < 1e-14);
    CHECK_THROWS_AS(laguerre(-1, z), ConfigError);
}

TEST_CASE("Hermite base cases and recurrence") {
    CHECK(hermite(0, 0.7).value.real() == 1.0);
    CHECK(hermite(1, 0.7).value.real() == doctest::Approx(1.4));
    CHECK(hermite(2, 1.0).value.real() == doctest::Approx(2.0));
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    std::uniform_int_distribution<int> M(1, 49);
    for (int i = 0; i < 200; ++i) {
        const int m = M(rng);
        const cplx z(U(rng), U(rng));
        const cplx hp = hermite(m + 1, z).unscaled_value(), h = hermite(m, z).unscaled_value(),
                   hm = hermite(m - 1, z).unscaled_value();
        CHECK(std::abs(hp + 2.0 * m * hm - 2.0 * z * h) < 1e-10 * (std::abs(hp) + std::abs(z * h) + 1.0));
        CHECK(std::abs(hermite(m, z).unscaled_derivative() - 2.0 * m * hm) < 1e-12 * (m * std::abs(hm) + 1.0));
    }
}

TEST_CASE("overflow scaling agrees with direct evaluation") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(-30.0, 30.0);
    int scaled_seen = 0;
    for (int i = 0; i < 200; ++i) {
        const cplx z(U(rng), U(rng));
        for (int n : {5, 40, 150, 300}) {
            const auto [v, d] = laguerre_direct(n, z);
            if (!std::isfinite(std::abs(v)) || !std::isfinite(std::abs(d)) || std::abs(v) > 1e300) continue;
            const PolyEval pe = laguerre(n, z);
            scaled_seen += pe.overflow_scaled;
            CHECK(std::abs(pe.unscaled_value() - v) < 1e-12 * std::abs(v) * n);
            CHECK(std::abs(pe.unscaled_derivative() - d) < 1e-11 * std::abs(d) * n);
        }
    }
    (void)scaled_seen;
    const PolyEval big = laguerre(2000, cplx(2000.0 * 4.5, 0.0));
    CHECK(big.overflow_scaled);
    CHECK(std::isfinite(std::abs(big.ratio())));
}

TEST_CASE("Q ratio limits") {
    CHECK(std::abs(q_ratio(0, 3.0)) == 0.0);
    for (double nu : {8.0, 100.0}) {
        const cplx limit = 1.0 - std::sqrt(1.0 - 4.0 / nu);
        const cplx q = q_ratio(2 * 2000, nu) / std::sqrt(nu / 2.0);
        CHECK(std::abs(q - limit) < 1e-3);
    }
    CHECK(std::abs(1.0 - std::sqrt(1.0 - 0.5) - 0.2928932) < 1e-7);
    for (double nu : {6.0, 8.0, 20.0, 100.0}) {
        const cplx limit = 1.0 - std::sqrt(1.0 - 4.0 / nu);
        double prev = 1e300;
        for (int n : {50, 200, 800, 2000}) {
            const double err = std::abs(q_ratio(2 * n, nu) / std::sqrt(nu / 2.0) - limit);
            CHECK(err < prev);
            prev = err;
        }
    }
}

TEST_CASE("finite-n Z converges to the limit") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    const CartesianPoint x{-1.5, 0.0, 0.0};
    const ComplexVec3 zl = eval_z_limit(p, x);
    double prev = 1e300;
    for (int n : {10, 50, 250, 1250}) {
        const double err = z_finite_n(p, n, x).distance(zl);
        CHECK(err < prev);
        prev = err;
    }
    const ComplexVec3 z1 = z_finite_n(p, 1, {0.3, -0.4, 1.2});
    const double r = std::sqrt(0.09 + 0.16 + 1.44);
    CHECK(std::abs(z1.x - cplx(0, 0.3 / r)) < 1e-15);
    CHECK(std::abs(z1.z - cplx(0, 1.2 / r)) < 1e-15);
    CHECK(std::abs(z_finite_n(p, 50, {0.3, -0.4, 0.0}).z) == 0.0);
}

TEST_CASE("gradient of log psi reconstructs Z") {
    const PhysParams p(1.0, 1.0, 0.5, 0.3);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    int tested = 0;
    while (tested < 100) {
        const CartesianPoint x{U(rng), U(rng), U(rng)};
        if (x.norm() < 0.2 || sigma_distance(p, x) < 0.1) continue;
        ++tested;
        const double h = 1e-4;
        const ComplexVec3 z = eval_z_limit(p, x);
        const cplx zc[3] = {z.x, z.y, z.z};
        for (int c = 0; c < 3; ++c) {
            Vec3 s{};
            s[c] = h;
            const cplx d = log_psi_difference(p, x - s, x + s) / (2 * h);
            const cplx approx = cplx(0, -1) * p.eps() * p.eps() * d;
            CHECK(std::abs(approx - zc[c]) < 1e-6 * (1.0 + std::abs(zc[c])));
        }
    }
}

TEST_CASE("log psi on the Kepler ellipse") {
    const PhysParams p(1.0, 1.0, 0.5, 1.0);
    for (int k = 0; k < 24; ++k) {
        const double v = kTwoPi * k / 24.0;
        const cplx lp = log_psi_limit(p, kepler_point(p, v));
        CHECK(lp.real() == doctest::Approx(0.5 * std::log(64.0)).epsilon(1e-12));
    }
    const PhysParams q(1.3, 0.8, 0.3, 0.2);
    const double expect = q.lambda() / (2 * q.eps() * q.eps()) * std::log(16.0 / (q.ecc() * q.ecc()));
    CHECK(log_psi_limit(q, kepler_point(q, 1.1)).real() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("complete elliptic integral E(m)") {
    CHECK(elliptic_e(0.0) == doctest::Approx(kPi / 2).epsilon(1e-15));
    CHECK(elliptic_e(1.0) == 1.0);
    CHECK(std::abs(elliptic_e(0.5) - 1.3506438810476755) < 1e-14);
    CHECK_THROWS_AS(elliptic_e(1.5), DomainError);
    for (double m : {-3.0, -0.7, 0.1, 0.6, 0.99}) {
        const double ref = integrate([m](double t) { return std::sqrt(1.0 - m * std::sin(t) * std::sin(t)); }, 0.0, kPi / 2);
        CHECK(std::abs(elliptic_e(m) - ref) < 1e-12);
    }
}
