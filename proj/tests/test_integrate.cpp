#include <doctest.h>

#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "test_helpers.hpp"

using namespace cyclebif;
using namespace cyclebif::testing;

namespace {

Field harmonic() {
    return [](double, const Vec& y, Vec& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    };
}

}  // namespace

TEST_CASE("zero field keeps the state constant") {
    Field zero = [](double, const Vec&, Vec& dy) { dy.setZero(); };
    Vec x0(2);
    x0 << 3.0, 4.0;
    Trajectory traj = integrate(zero, 0.0, x0, 1.0, tight_cfg());
    CHECK((traj.evaluate(0.5) - x0).norm() == doctest::Approx(0.0));
}

TEST_CASE("harmonic oscillator closes after one period") {
    Vec x0(2);
    x0 << 1.0, 0.0;
    Trajectory traj = integrate(harmonic(), 0.0, x0, kTwoPi, tight_cfg(1e-12));
    CHECK((traj.end_state() - x0).norm() < 1e-8);
    // dense output against the closed form
    for (double t : {0.3, 1.7, 4.4, 6.1}) {
        Vec y = traj.evaluate(t);
        CHECK(y[0] == doctest::Approx(std::cos(t)).epsilon(1e-9));
        CHECK(y[1] == doctest::Approx(-std::sin(t)).epsilon(1e-9));
    }
}

TEST_CASE("planar example closes after one period from (1,0)") {
    SystemDef sys = planar_system();
    Vec x0(2);
    x0 << 1.0, 0.0;
    Vec end = integrate_endpoint(forced_field(sys, 0.0), 0.0, x0, kTwoPi, tight_cfg(1e-12));
    CHECK((end - x0).norm() < 1e-8);
}

TEST_CASE("evaluating at mesh points reproduces stored endpoints exactly") {
    Vec x0(2);
    x0 << 1.0, 0.0;
    Trajectory traj = integrate(harmonic(), 0.0, x0, 3.0, tight_cfg(1e-10));
    auto mesh = traj.mesh();
    REQUIRE(mesh.size( ) >= 3);
    CHECK((traj.evaluate(mesh.front()) - traj.begin_state()).norm() == 0.0);
    CHECK((traj.evaluate(mesh.back()) - traj.end_state()).norm() == 0.0);
}

TEST_CASE("trajectory rejects out-of-span evaluation") {
    Vec x0(1);
    x0 << 1.0;
    Field decay = [](double, const Vec& y, Vec& dy) { dy = -y; };
    Trajectory traj = integrate(decay, 0.0, x0, 1.0, tight_cfg());
    CHECK_THROWS_AS(traj.evaluate(2.0), ConfigError);
    CHECK_THROWS_AS(traj.evaluate(-1.0), ConfigError);
}

TEST_CASE("sensitivity of a rotation equals the matrix exponential") {
    SystemDef sys = make_expression_system("rot", 2, {"x2", "-x1"}, {"0", "0"}, {}, kTwoPi);
    Vec x0(2);
    x0 << 0.3, -0.8;
    FlowResult fr = flow_with_sensitivity(sys, 0.0, 0.0, x0, kPi / 2, tight_cfg(1e-12));
    Mat a(2, 2);
    a << 0, 1, -1, 0;
    Mat expected = (a * (kPi / 2)).exp();
    CHECK((*fr.sensitivity - expected).norm() < 1e-8);
    // and the textbook values of that exponential
    CHECK((*fr.sensitivity)(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((*fr.sensitivity)(1, 0) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("sensitivity at t1 = t0 is the identity") {
    SystemDef sys = planar_system();
    Vec x0(2);
    x0 << 0.5, 0.5;
    FlowResult fr = flow_with_sensitivity(sys, 0.0, 0.0, x0, 0.0, tight_cfg());
    CHECK((*fr.sensitivity - Mat::Identity(2, 2)).norm() == 0.0);
    CHECK((fr.endpoint - x0).norm() == 0.0);
}

TEST_CASE("monodromy multipliers of the planar cycle") {
    SystemDef sys = planar_system();
    Vec x0(2);
    x0 << 1.0, 0.0;
    FlowResult fr = flow_with_sensitivity(sys, 0.0, 0.0, x0, kTwoPi, tight_cfg(1e-12));
    Eigen::EigenSolver<Mat> es(*fr.sensitivity);
    double m0 = std::abs(es.eigenvalues()[0]), m1 = std::abs(es.eigenvalues()[1]);
    if (m0 < m1) std::swap(m0, m1);
    CHECK(std::abs(m0 - 1.0) < 1e-6);
    double mu2 = std::exp(-4.0 * kPi);
    CHECK(std::abs(m1 - mu2) / mu2 < 1e-6);
}

TEST_CASE("sensitivity matches finite-difference flow perturbation") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    SystemDef planar = planar_system({0.5, -0.3}, {0.2, 0.1});
    SystemDef rot = make_expression_system("wob", 2, {"x2+x1*(1-x1^2-x2^2)", "-x1"},
                                           {"cos(t)", "sin(t)*x1"}, {}, kTwoPi);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const SystemDef& sys = (trial % 2 == 0) ? planar : rot;
        double eps = (trial % 3 == 0) ? 0.0 : 0.05;
        Vec x0(2);
        x0 << 0.8 + 0.3 * ud(rng), 0.3 * ud(rng);
        double span = 1.5;
        FlowResult fr = flow_with_sensitivity(sys, eps, 0.0, x0, span, tight_cfg(1e-12));
        Field field = forced_field(sys, eps);
        Mat fd(2, 2);
        for (int j = 0; j < 2; ++j) {
            Vec lo = x0, hi = x0;
            lo[j] -= h;
            hi[j] += h;
            fd.col(j) = (integrate_endpoint(field, 0.0, hi, span, tight_cfg(1e-12)) -
                         integrate_endpoint(field, 0.0, lo, span, tight_cfg(1e-12))) /
                        (2 * h);
        }
        CHECK((*fr.sensitivity - fd).norm() / fr.sensitivity->norm() < 1e-5);
    }
}

TEST_CASE("adjoint solution along the planar cycle is periodic") {
    SystemDef sys = planar_system();
    auto orbit = [](double t) {
        Vec x(2);
        x << std::cos(t), std::sin(t);
        return x;
    };
    Vec z0(2);
    z0 << 1.0, 1.0;
    Trajectory zt = integrate_adjoint(sys, orbit, 0.0, z0, kTwoPi, tight_cfg(1e-13));
    CHECK((zt.end_state() - z0).norm() < 1e-7);
    // closed form z0(t) = (1+i)e^{it}
    Vec mid = zt.evaluate(kPi / 2);
    CHECK(mid[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(mid[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("adjoint of a zero field is constant") {
    SystemDef sys = make_expression_system("null2", 2, {"0", "0"}, {"0", "0"}, {}, kTwoPi);
    auto orbit = [](double) { return Vec(Vec::Zero(2)); };
    Vec z0(2);
    z0 << 2.0, -1.0;
    Trajectory zt = integrate_adjoint(sys, orbit, 0.0, z0, 5.0, tight_cfg());
    CHECK((zt.end_state() - z0).norm() < 1e-12);
}

TEST_CASE("adjoint supports backward spans") {
    SystemDef sys = planar_system();
    auto orbit = [](double t) {
        Vec x(2);
        x << std::cos(t), std::sin(t);
        return x;
    };
    Vec zT(2);
    zT << 1.0, 1.0;
    Trajectory zt = integrate_adjoint(sys, orbit, kTwoPi, zT, 0.0, tight_cfg(1e-12));
    CHECK(zt.t_begin() == doctest::Approx(kTwoPi));
    CHECK(zt.t_end() == doctest::Approx(0.0));
    CHECK((zt.end_state() - zT).norm() < 1e-8);
    CHECK_NOTHROW(zt.evaluate(1.234));
}

TEST_CASE("variational-adjoint pairing is conserved") {
    // <y(t), z(t)> constant for any variational solution y and adjoint
    // solution z along the same orbit.
    SystemDef sys = planar_system();
    auto orbit = [](double t) {
        Vec x(2);
        x << std::cos(t), std::sin(t);
        return x;
    };
    Field var = [&sys, &orbit](double t, const Vec& y, Vec& dy) {
        Vec fx(2);
        Mat J(2, 2);
        sys.f_impl(orbit(t), fx, &J);
        dy = J * y;
    };
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vec y0(2), z0(2);
        y0 << ud(rng), ud(rng);
        z0 << ud(rng), ud(rng);
        Trajectory yt = integrate(var, 0.0, y0, kTwoPi, tight_cfg(1e-12));
        Trajectory zt = integrate_adjoint(sys, orbit, 0.0, z0, kTwoPi, tight_cfg(1e-12));
        double c0 = y0.dot(z0);
        for (int i = 0; i <= 32; ++i) {
            double t = kTwoPi * i / 32;
            CHECK(std::abs(yt.evaluate(t).dot(zt.evaluate(t)) - c0) < 1e-8);
        }
    }
}

TEST_CASE("quadrature examples") {
    Field zero = [](double, const Vec&, Vec& dy) { dy.setZero(); };
    Vec x0 = Vec::Zero(1);
    SUBCASE("integrand 1 over [0, T]") {
        auto one = [](double, const Vec&) { return 1.0; };
        FlowResult r = integrate_with_quadrature(zero, one, 0.0, x0, 3.75, tight_cfg());
        CHECK(std::abs(*r.quadrature - 3.75) < 1e-10);
    }
    SUBCASE("cos t over a full period vanishes") {
        auto c = [](double t, const Vec&) { return std::cos(t); };
        FlowResult r = integrate_with_quadrature(zero, c, 0.0, x0, kTwoPi, tight_cfg());
        CHECK(std::abs(*r.quadrature) < 1e-9);
    }
    SUBCASE("cos^2 t over a full period is pi") {
        auto c2 = [](double t, const Vec&) { return std::cos(t) * std::cos(t); };
        FlowResult r = integrate_with_quadrature(zero, c2, 0.0, x0, kTwoPi, tight_cfg());
        CHECK(std::abs(*r.quadrature - kPi) < 1e-9);
    }
    SUBCASE("zero-dimensional state") {
        auto c2 = [](double t, const Vec&) { return std::sin(t) * std::sin(t); };
        FlowResult r = integrate_with_quadrature(Field(), c2, 0.0, Vec(0), kTwoPi, tight_cfg());
        CHECK(std::abs(*r.quadrature - kPi) < 1e-9);
        CHECK(r.endpoint.size() == 0);
    }
    SUBCASE("t1 = t0 gives zero quadrature") {
        auto one = [](double, const Vec&) { return 1.0; };
        FlowResult r = integrate_with_quadrature(zero, one, 2.0, x0, 2.0, tight_cfg());
        CHECK(*r.quadrature == 0.0);
    }
}

TEST_CASE("blow-up is reported with the failure time") {
    Field quad = [](double, const Vec& y, Vec& dy) { dy[0] = y[0] * y[0]; };
    Vec x0(1);
    x0 << 1.0;
    // x' = x^2 from 1 blows up at t = 1
    try {
        integrate_endpoint(quad, 0.0, x0, 2.0, tight_cfg(1e-10));
        FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
        CHECK(e.t_fail > 0.9);
        CHECK(e.t_fail < 1.1);
    }
}

TEST_CASE("step exhaustion is an error") {
    IntegratorConfig cfg = tight_cfg(1e-12);
    cfg.max_steps = 5;
    Vec x0(2);
    x0 << 1.0, 0.0;
    CHECK_THROWS_AS(integrate_endpoint(harmonic(), 0.0, x0, 1000.0, cfg), IntegrationError);
}

TEST_CASE("halving tolerances reduces endpoint error") {
    Vec x0(2);
    x0 << 1.0, 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (double tol : {1e-6, 1e-8, 1e-10}) {
        Vec end = integrate_endpoint(harmonic(), 0.0, x0, kTwoPi, tight_cfg(tol));
        double err = (end - x0).norm();
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("dense output order on a fixed-step run is at least 4") {
    Vec x0(2);
    x0 << 1.0, 0.0;
    auto worst_interp_error = [&](double h) {
        IntegratorConfig cfg;
        cfg.fixed_step = h;
        Trajectory traj = integrate(harmonic(), 0.0, x0, 4.0, cfg);
        double worst = 0.0;
        for (int i = 0; i <= 400; ++i) {
            double t = 4.0 * i / 400.0;
            Vec y = traj.evaluate(t);
            worst = std::max(worst, std::hypot(y[0] - std::cos(t), y[1] + std::sin(t)));
        }
        return worst;
    };
    double e1 = worst_interp_error(0.2);
    double e2 = worst_interp_error(0.1);
    double order = std::log2(e1 / e2);
    CHECK(order >= 4.0);
}

TEST_CASE("time reversal returns to the start") {
    SystemDef sys = planar_system();
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> ud(-0.3, 0.3);
    Field f = forced_field(sys, 0.0);
    for (int trial = 0; trial < 5; ++trial) {
        Vec x0(2);
        x0 << 1.0 + ud(rng), ud(rng);
        Vec fwd = integrate_endpoint(f, 0.0, x0, 5.0, tight_cfg(1e-12));
        Vec back = integrate_endpoint(f, 5.0, fwd, 0.0, tight_cfg(1e-12));
        CHECK((back - x0).norm() < 1e-7);
    }
}

TEST_CASE("config validation") {
    IntegratorConfig cfg;
    cfg.abs_tol = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = IntegratorConfig{};
    cfg.max_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
