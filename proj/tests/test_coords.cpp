#include <random>

#include "doctest.h"
#include "nelson/coords.hpp"

using namespace nelson;

TEST_CASE("forward map examples") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    const CartesianPoint peri = from_elliptic(p, {0.5, 0.0, 0.0});
    CHECK(peri.x == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(peri.y == doctest::Approx(0.0));
    const CartesianPoint q = from_elliptic(p, {0.5, kPi / 2, 0.0});
    CHECK(q.x == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(q.y == doctest::Approx(std::sqrt(0.75)).epsilon(1e-14));
    CHECK_THROWS_AS(from_elliptic(p, {-0.5, 0.0, 0.0}), DomainError);
    CHECK_THROWS_AS(from_elliptic(p, {1.2, 0.0, 0.0}), DomainError);
}

TEST_CASE("u = e is the Kepler ellipse centred at (-ae, 0)") {
    const PhysParams p(1.7, 0.9, 0.3, 0.1);
    for (int k = 0; k < 50; ++k) {
        const double v = kTwoPi * k / 50.0;
        const CartesianPoint c = from_elliptic(p, {p.ecc(), v, 0.0});
        const CartesianPoint k2 = kepler_point(p, v);
        CHECK((c - k2).norm() < 1e-12 * p.a());
        const double a = p.a(), e = p.ecc();
        const double lhs = (c.x + a * e) * (c.x + a * e) / (a * a) + c.y * c.y / (a * a * (1 - e * e));
        CHECK(lhs == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("second focus of the u-curves is -4aeu/(e+u)") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    const double a = p.a(), e = p.ecc();
    for (double u : {-0.4, -0.1, 0.2, 0.5, 0.8, 0.95}) {
        const double focus = -4.0 * a * e * u / (e + u);
        const double printed = -4.0 * a * e * u / (1.0 + e);
        double spread = 0.0, spread_printed = 0.0, first = 0.0, first_printed = 0.0;
        for (int k = 0; k < 64; ++k) {
            const CartesianPoint x = from_elliptic(p, {u, kTwoPi * k / 64.0, 0.0});
            const double r = std::hypot(x.x, x.y);
            const double sum = r + std::hypot(x.x - focus, x.y);
            const double sum_printed = r + std::hypot(x.x - printed, x.y);
            if (k == 0) {
                first = sum;
                first_printed = sum_printed;
                CHECK(sum == doctest::Approx(4.0 * a * e / (e + u)).epsilon(1e-12));
            }
            spread = std::max(spread, std::abs(sum - first));
            spread_printed = std::max(spread_printed, std::abs(sum_printed - first_printed));
        }
        CHECK(spread < 1e-12);
        if (std::abs(u - e) > 0.1 && std::abs(u - 1.0) > 0.1) CHECK(spread_printed > 1e-3);
    }
}

TEST_CASE("round trip on random points") {
    std::mt19937_64 rng(1);
    for (double e : {0.1, 0.5, 0.9}) {
        const PhysParams p(1.0, 1.0, e, 0.1);
        std::uniform_real_distribution<double> U(-e + 1e-3, 1.0 - 1e-3), V(0.0, kTwoPi), Z(-2.0, 2.0);
        for (int i = 0; i < 10000 / 3; ++i) {
            const EllipticCoords c{U(rng), V(rng), Z(rng)};
            const CartesianPoint x = from_elliptic(p, c);
            const EllipticCoords back = to_elliptic(p, x);
            const CartesianPoint x2 = from_elliptic(p, back);
            CHECK((x2 - x).norm() < 1e-10 * (1.0 + x.norm()));
            CHECK(back.u > -e);
            CHECK(back.u <= 1.0);
            CHECK(back.v >= 0.0);
            CHECK(back.v < kTwoPi);
        }
    }
}

TEST_CASE("Sigma segment is u = 1") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    const EllipticCoords c = to_elliptic(p, {-0.7, 0.0, 0.0});
    CHECK(c.u == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(to_elliptic(p, {0.0, 0.0, 1.0}), DomainError);
}

TEST_CASE("Jacobian and grad v against finite differences") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    const double h = 1e-6;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(-0.4, 0.9), V(0.0, kTwoPi);
    for (int i = 0; i < 200; ++i) {
        const double u = U(rng), v = V(rng);
        const auto j = elliptic_jacobian(p, u, v);
        const CartesianPoint du = (from_elliptic(p, {u + h, v, 0}) - from_elliptic(p, {u - h, v, 0})) / (2 * h);
        const CartesianPoint dv = (from_elliptic(p, {u, v + h, 0}) - from_elliptic(p, {u, v - h, 0})) / (2 * h);
        CHECK(j[0] == doctest::Approx(du.x).epsilon(1e-6));
        CHECK(j[1] == doctest::Approx(dv.x).epsilon(1e-6));
        CHECK(j[2] == doctest::Approx(du.y).epsilon(1e-6));
        CHECK(j[3] == doctest::Approx(dv.y).epsilon(1e-6));

        const CartesianPoint x = from_elliptic(p, {u, v, 0});
        const Vec3 g = grad_v(p, {u, v, 0});
        for (int c = 0; c < 2; ++c) {
            Vec3 s{};
            s[c] = h;
            double dvv = to_elliptic(p, x + s).v - to_elliptic(p, x - s).v;
            if (dvv > kPi) dvv -= kTwoPi;
            if (dvv < -kPi) dvv += kTwoPi;
            CHECK(g[c] == doctest::Approx(dvv / (2 * h)).epsilon(1e-5).scale(1.0));
        }
    }
}
