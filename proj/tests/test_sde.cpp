#include "doctest.h"

#include <sstream>

#include "json.hpp"

#include "nelson/coords.hpp"
#include "nelson/field.hpp"
#include "nelson/measure.hpp"
#include "nelson/rng.hpp"
#include "nelson/sde.hpp"

using namespace nelson;

namespace {

std::string dump(const TrajectoryEnsemble& ens) {
    std::ostringstream os;
    write_trajectories(os, ens, false, "test");
    return os.str();
}

}  // namespace

TEST_CASE("normal streams are reproducible, distinct and standard") {
    NormalStream a(42, 0), b(42, 0), c(42, 1), d(43, 0);
    bool differ_c = false, differ_d = false;
    for (int k = 0; k < 100; ++k) {
        const double x = a();
        CHECK(x == b());
        differ_c |= x != c();
        differ_d |= x != d();
    }
    CHECK(differ_c);
    CHECK(differ_d);
    NormalStream s(7, 3);
    double m = 0.0, m2 = 0.0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        const double x = s();
        m += x;
        m2 += x * x;
    }
    m /= n;
    CHECK(std::abs(m) < 5.0 / std::sqrt(n));
    CHECK(m2 / n == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("defaults and validation") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    CHECK(c.dt == doctest::Approx(1e-3));
    CHECK(c.drift_cap == doctest::Approx(100.0));
    c.validate();
    SimConfig bad = c;
    bad.dt = 0.01;  // dt * cap = 1 > a/2
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.n_paths = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.record_stride = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("ring start points") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 8;
    c.x0 = RingStart{3.0, 0.25};
    for (int i = 0; i < 8; ++i) {
        const CartesianPoint x = c.start_point(i);
        CHECK(std::hypot(x.x, x.y) == doctest::Approx(3.0));
        CHECK(x.z == 0.25);
        CHECK(std::atan2(x.y, x.x) == doctest::Approx(std::remainder(kTwoPi * i / 8, kTwoPi)));
    }
}

TEST_CASE("noise-free step at perihelion moves along the Kepler velocity") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    const CartesianPoint x = kepler_point(p, 0.0);
    const StepResult r = step(c, x, {});
    CHECK(r.x.x == doctest::Approx(x.x).epsilon(1e-12));
    CHECK(r.x.y == doctest::Approx(c.dt * std::sqrt(3.0)).epsilon(1e-10));
    CHECK(r.x.z == 0.0);
    CHECK(!r.capped);
}

TEST_CASE("drift cap bounds the displacement") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.drift_cap = 0.001;
    const Vec3 g{0.3, -1.2, 0.7};
    for (const CartesianPoint& x : {CartesianPoint{0.01, 0.02, 0.0}, CartesianPoint{2.0, 1.0, 0.5}, kepler_point(p, 2.0)}) {
        const StepResult r = step(c, x, g);
        CHECK(r.capped);
        CHECK((r.x - x).norm() <= 0.001 * c.dt + c.params.eps() * std::sqrt(c.dt) * g.norm() + 1e-15);
    }
}

TEST_CASE("origin proximity raises and truncates the path") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    try {
        (void)step(c, {1e-9, 0.0, 0.0}, {});
        FAIL("expected an origin error");
    } catch (const DomainError& e) {
        CHECK(e.kind() == DomainError::Kind::Origin);
    }
    c.x0 = CartesianPoint{1e-9, 0.0, 0.0};
    c.n_paths = 2;
    c.n_steps = 100;
    c.record_stride = 10;
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    REQUIRE(ens.paths.size() == 2);
    for (const auto& path : ens.paths) {
        CHECK(path.truncated);
        CHECK(!path.truncation_reason.empty());
    }
    CHECK(kepler_diagnostics(ens, p).truncated_paths == 2);
}

TEST_CASE("planar noise keeps z at zero") {
    const PhysParams p(1.0, 1.0, 0.5, 0.2);
    SimConfig c = SimConfig::defaults(p);
    c.planar = true;
    c.n_paths = 4;
    c.n_steps = 5000;
    c.record_stride = 50;
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    for (const auto& path : ens.paths)
        for (const auto& r : path.records) CHECK(r.x.z == 0.0);
}

TEST_CASE("same seed gives identical output, independent of thread count") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 6;
    c.n_steps = 3000;
    c.record_stride = 100;
    c.seed = 99;
    c.threads = 1;
    const std::string one = dump(simulate_ensemble(c));
    c.threads = 3;
    CHECK(dump(simulate_ensemble(c)) == one);
    CHECK(dump(simulate_ensemble(c)) == one);
    c.seed = 100;
    CHECK(dump(simulate_ensemble(c)) != one);
    // a single path replays the same records
    c.seed = 99;
    const PathResult r = simulate_path(c, 4);
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    REQUIRE(r.records.size() == ens.paths[4].records.size());
    CHECK(r.records.back().x.x == ens.paths[4].records.back().x.x);
}

TEST_CASE("record times strictly increase and points are finite") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 3;
    c.n_steps = 4000;
    c.record_stride = 7;
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    for (const auto& path : ens.paths) {
        for (std::size_t i = 1; i < path.records.size(); ++i) CHECK(path.records[i].t > path.records[i - 1].t);
        for (const auto& r : path.records) CHECK(r.x.finite());
    }
}

TEST_CASE("deterministic flow: Kepler period and equal areas") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.deterministic = true;
    c.dt = 1e-4;
    c.n_paths = 1;
    c.n_steps = static_cast<long>(2.2 * p.period() / c.dt);
    c.record_stride = 10;
    c.x0 = kepler_point(p, 0.0);
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    const KeplerReport rep = kepler_diagnostics(ens, p);
    REQUIRE(rep.mean_period.has_value());
    CHECK(std::abs(*rep.mean_period - p.period()) / p.period() < 1e-3);
    const auto& av = rep.paths[0].areal_velocity;
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 1; i + 1 < av.size(); ++i) {
        lo = std::min(lo, av[i]);
        hi = std::max(hi, av[i]);
    }
    // angular momentum of this orbit is lambda sqrt(1 - e^2)
    CHECK((hi - lo) / hi < 0.01);
    CHECK(hi == doctest::Approx(0.5 * p.lambda() * p.ecc_conj()).epsilon(0.01));
    // the orbit stays on the ellipse
    for (const auto& r : ens.paths[0].records) CHECK(std::abs(r.u - p.ecc()) < 1e-3);
}

TEST_CASE("deterministic flow from the ring converges to the ellipse") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.deterministic = true;
    c.n_paths = 8;
    c.n_steps = 30000;
    c.record_stride = 1000;
    const KeplerReport rep = kepler_diagnostics(simulate_ensemble(c), p);
    CHECK(rep.final_converged_fraction == 1.0);
    CHECK(rep.interior_starts == 0);
}

TEST_CASE("interior starts are reported separately") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 4;
    c.n_steps = 100;
    c.record_stride = 10;
    c.x0 = RingStart{0.3, 0.0};
    CHECK(kepler_diagnostics(simulate_ensemble(c), p).interior_starts == 4);
}

TEST_CASE("stationary z: mean zero and half-normal |z| against the z-width") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 48;
    c.n_steps = 60000;
    c.record_stride = 20;
    c.seed = 5;
    c.x0 = kepler_point(p, 0.0);
    const TrajectoryEnsemble ens = simulate_ensemble(c);
    ConvergenceCriteria crit;
    crit.burn_in = 10.0;
    const KeplerReport rep = kepler_diagnostics(ens, p, crit);

    double zs = 0.0, z2 = 0.0;
    long n = 0;
    for (const auto& path : ens.paths)
        for (const auto& r : path.records)
            if (r.t >= crit.burn_in) {
                zs += r.x.z;
                z2 += r.x.z * r.x.z;
                ++n;
            }
    // correlated samples: allow a generous multiple of the naive error
    CHECK(std::abs(zs / n) < 10.0 * std::sqrt(z2 / n / n));

    // Gaussian sd sigma_z/sqrt(2), averaged over the Kepler time law
    const double mean_sd = expect_on_ellipse(p, [&](double v) { return effective_widths(p, v).sigma_z; }) / std::sqrt(2.0);
    CHECK(rep.mean_abs_z_after_burn_in == doctest::Approx(std::sqrt(2.0 / kPi) * mean_sd).epsilon(0.15));
    CHECK(rep.cap_rejections_near_sigma == 0);
    CHECK(rep.truncated_paths == 0);
}

TEST_CASE("weak order: halving dt moves the terminal mean of u by less than the error bar") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 256;
    c.n_steps = 8000;
    c.record_stride = 8000;
    c.seed = 3;
    const KeplerReport a = kepler_diagnostics(simulate_ensemble(c), p);
    c.dt *= 0.5;
    c.n_steps *= 2;
    c.record_stride *= 2;
    const KeplerReport b = kepler_diagnostics(simulate_ensemble(c), p);
    const double err = std::hypot(a.mean_u_final_stderr, b.mean_u_final_stderr);
    CHECK(std::abs(a.mean_u_final - b.mean_u_final) < 2.0 * err);
}

TEST_CASE("trajectory CSV and JSONL layout") {
    const PhysParams p(1.0, 1.0, 0.5, 0.1);
    SimConfig c = SimConfig::defaults(p);
    c.n_paths = 2;
    c.n_steps = 20;
    c.record_stride = 10;
    TrajectoryEnsemble ens = simulate_ensemble(c);
    ens.paths[0].records[0].u = std::numeric_limits<double>::quiet_NaN();
    std::ostringstream csv, js;
    write_trajectories(csv, ens, false, "seed=0");
    write_trajectories(js, ens, true, "seed=0");
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# seed=0");
    std::getline(in, line);
    CHECK(line == "path,t,x,y,z,u,v,dist_sigma");
    int rows = 0;
    while (std::getline(in, line)) {
        if (rows == 0) CHECK(line.find(",nan,") != std::string::npos);
        ++rows;
    }
    CHECK(rows == static_cast<int>(ens.paths[0].records.size() + ens.paths[1].records.size()));

    std::istringstream jin(js.str());
    std::getline(jin, line);
    CHECK(line == "# seed=0");
    std::getline(jin, line);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("path").get<int>() == 0);
    CHECK(j.at("u").is_null());
    for (const char* k : {"t", "x", "y", "z", "v", "dist_sigma"}) CHECK(j.contains(k));
}
