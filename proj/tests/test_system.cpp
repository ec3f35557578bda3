#include <doctest.h>

#include <random>

#include "test_helpers.hpp"

using namespace cyclebif;
using namespace cyclebif::testing;

TEST_CASE("planar field value and analytic jacobian at (1,0)") {
    SystemDef sys = planar_system();
    Vec x(2);
    x << 1.0, 0.0;
    FieldEval fe = eval_f(sys, x, true);
    CHECK(fe.value[0] == doctest::Approx(0.0));
    CHECK(fe.value[1] == doctest::Approx(1.0));
    REQUIRE(fe.jacobian.has_value());
    CHECK((*fe.jacobian)(0, 0) == doctest::Approx(-2.0));
    CHECK((*fe.jacobian)(0, 1) == doctest::Approx(-1.0));
    CHECK((*fe.jacobian)(1, 0) == doctest::Approx(3.0));
    CHECK((*fe.jacobian)(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("zero field evaluates to zero vector and zero jacobian") {
    SystemDef sys = make_expression_system("null2", 2, {"0", "0"}, {"0", "0"}, {}, kTwoPi);
    Vec x(2);
    x << 3.0, -4.0;
    FieldEval fe = eval_f(sys, x, true);
    CHECK(fe.value.norm() == 0.0);
    CHECK(fe.jacobian->norm() == 0.0);
}

TEST_CASE("forcing examples of the planar system") {
    Vec x(2);
    x << 1.0, 0.0;
    SUBCASE("a(t) = e^{it} alone") {
        SystemDef sys = planar_system({1.0, 0.0});
        FieldEval g0 = eval_g(sys, 0.0, x, 0.3);
        CHECK(g0.value[0] == doctest::Approx(1.0));
        CHECK(g0.value[1] == doctest::Approx(0.0).epsilon(1e-15));
        FieldEval gq = eval_g(sys, kPi / 2, x, 0.0);
        CHECK(gq.value[0] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(gq.value[1] == doctest::Approx(1.0));
    }
    SUBCASE("b(t) = 1 gives g = x") {
        SystemDef sys = planar_system({0, 0}, {1.0, 0.0});
        for (double t : {0.0, 1.3, 5.0}) {
            FieldEval g = eval_g(sys, t, x, 0.1, true);
            CHECK(g.value[0] == doctest::Approx(1.0));
            CHECK(g.value[1] == doctest::Approx(0.0));
            CHECK((*g.jacobian - Mat::Identity(2, 2)).norm() == doctest::Approx(0.0));
        }
    }
    SUBCASE("all coefficients zero gives g = 0") {
        SystemDef sys = planar_system();
        CHECK(eval_g(sys, 2.1, x, 0.5).value.norm() == 0.0);
    }
}

TEST_CASE("constant forcing is exactly periodic") {
    SystemDef sys = make_expression_system("drift", 2, {"x2", "-x1"}, {"1", "0"}, {}, kTwoPi);
    Vec x(2);
    x << 0.2, 0.4;
    Vec a = eval_g(sys, 0.7, x, 0.0).value;
    Vec b = eval_g(sys, 0.7 + kTwoPi, x, 0.0).value;
    CHECK((a - b).norm() == 0.0);
}

TEST_CASE("f must be autonomous") {
    CHECK_THROWS_WITH_AS(
        make_expression_system("bad", 2, {"x2+t", "-x1"}, {"0", "0"}, {}, kTwoPi),
        doctest::Contains("t"), ConfigError);
    CHECK_THROWS_AS(make_expression_system("bad2", 2, {"x2*eps", "-x1"}, {"0", "0"}, {}, kTwoPi),
                    ConfigError);
}

TEST_CASE("dimension and periodicity validation") {
    CHECK_THROWS_AS(make_expression_system("one", 1, {"x1"}, {"0"}, {}, kTwoPi), ConfigError);
    // declared period does not match the actual period of g
    CHECK_THROWS_WITH_AS(
        make_expression_system("aper", 2, {"x2", "-x1"}, {"sin(t)", "0"}, {}, 1.5 * kPi),
        doctest::Contains("periodic"), ConfigError);
}

TEST_CASE("parameters are visible to f and g") {
    SystemDef sys = make_expression_system("param", 2, {"mu*x2", "-mu*x1"},
                                           {"eps*cos(t)", "0"}, {{"mu", 2.5}}, kTwoPi);
    Vec x(2);
    x << 0.0, 1.0;
    CHECK(eval_f(sys, x).value[0] == doctest::Approx(2.5));
}

TEST_CASE("builtin registry") {
    auto names = builtin_names();
    REQUIRE(!names.empty());
    CHECK(std::find(names.begin(), names.end(), "paper_planar") != names.end());
    CHECK(builtin_parameter_help("paper_planar").find("Fourier") != std::string::npos);
    CHECK_THROWS_WITH_AS(expect_builtin("nosuch"), doctest::Contains("paper_planar"), ConfigError);
}

TEST_CASE("expression jacobians match finite differences on random points") {
    SystemDef sys = make_expression_system(
        "mix", 2, {"(1-(x1^2+x2^2))*x1-(x1^2+x2^2)*x2", "(1-(x1^2+x2^2))*x2+(x1^2+x2^2)*x1"},
        {"cos(t)+eps*x1", "sin(t)*x2"}, {}, kTwoPi);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(-1.5, 1.5);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        Vec x(2);
        x << ud(rng), ud(rng);
        FieldEval fe = eval_f(sys, x, true);
        Mat fd(2, 2);
        for (int j = 0; j < 2; ++j) {
            Vec lo = x, hi = x;
            lo[j] -= h;
            hi[j] += h;
            fd.col(j) = (eval_f(sys, hi).value - eval_f(sys, lo).value) / (2 * h);
        }
        double scale = std::max(1.0, fe.jacobian->norm());
        CHECK((*fe.jacobian - fd).norm() / scale < 1e-5);
    }
}

TEST_CASE("autonomy of f under the shared slot layout") {
    // Same point, g evaluated at wildly different times: f cannot see t.
    SystemDef sys = planar_system({1.0, 1.0}, {0.3, -0.2}, {0.1, 0.0});
    Vec x(2);
    x << 0.7, -0.4;
    Vec f1 = eval_f(sys, x).value;
    eval_g(sys, 123.456, x, 0.2);
    Vec f2 = eval_f(sys, x).value;
    CHECK((f1 - f2).norm() == 0.0);
}

TEST_CASE("fourier series sup norm") {
    FourierSeries a = series({{1, {1.0, 0.0}}});
    CHECK(a.sup_norm() == doctest::Approx(1.0));
    FourierSeries two = series({{1, {1.0, 0.0}}, {-1, {1.0, 0.0}}});  // 2 cos t
    CHECK(two.sup_norm() == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(series({}).sup_norm() == 0.0);
}
