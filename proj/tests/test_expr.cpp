#include <doctest.h>

#include <random>

#include "cyclebif/expr.hpp"

using namespace cyclebif;

namespace {
const std::map<std::string, int> kNoVars;
const std::map<std::string, int> kXy{{"x1", 0}, {"x2", 1}};

double eval0(const std::string& text) {
    return parse_expression(text, kNoVars).eval({});
}
}  // namespace

TEST_CASE("literal arithmetic and precedence") {
    CHECK(eval0("2*3+1") == doctest::Approx(7.0));
    CHECK(eval0("1+2*3") == doctest::Approx(7.0));
    CHECK(eval0("2^3^2") == doctest::Approx(512.0));   // right associative
    CHECK(eval0("-2^2") == doctest::Approx(-4.0));     // ^ binds tighter than unary minus
    CHECK(eval0("(1+2)*3") == doctest::Approx(9.0));
    CHECK(eval0("7/2/2") == doctest::Approx(1.75));
    CHECK(eval0("2--3") == doctest::Approx(5.0));
    CHECK(eval0("sin(0)+cos(0)") == doctest::Approx(1.0));
    CHECK(eval0("sqrt(abs(-9))") == doctest::Approx(3.0));
}

TEST_CASE("planar example component parses and evaluates") {
    Expr f1 = parse_expression("(1-(x1^2+x2^2))*x1-(x1^2+x2^2)*x2", kXy);
    double slots[2] = {1.0, 0.0};
    CHECK(f1.eval(slots) == doctest::Approx(0.0));
    slots[0] = 0.5;
    slots[1] = -0.25;
    double s = 0.5 * 0.5 + 0.25 * 0.25;
    CHECK(f1.eval(slots) == doctest::Approx((1 - s) * 0.5 - s * (-0.25)));
}

TEST_CASE("syntax error carries byte offset") {
    try {
        parse_expression("x1+*2", kXy);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset == 3);
    }
}

TEST_CASE("undeclared identifier is named") {
    try {
        parse_expression("x1+omega", kXy);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("omega") != std::string::npos);
    }
}

TEST_CASE("empty and malformed input") {
    CHECK_THROWS_AS(parse_expression("", kNoVars), ParseError);
    CHECK_THROWS_AS(parse_expression("(1+2", kNoVars), ParseError);
    CHECK_THROWS_AS(parse_expression("sin()", kNoVars), ParseError);
    CHECK_THROWS_AS(parse_expression("foo(1)", kNoVars), ParseError);
    CHECK_THROWS_AS(parse_expression("1 2", kNoVars), ParseError);
}

TEST_CASE("domain errors name the offending subexpression") {
    Expr e = parse_expression("1+log(x1)", kXy);
    double slots[2] = {-2.0, 0.0};
    try {
        e.eval(slots);
        FAIL("expected DomainError");
    } catch (const DomainError& err) {
        CHECK(err.subexpression.find("log") != std::string::npos);
    }
    Expr r = parse_expression("sqrt(x2-1)", kXy);
    CHECK_THROWS_AS(r.eval(slots), DomainError);
}

TEST_CASE("dual derivatives match central finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    const std::vector<std::string> exprs = {
        "sin(x1)*cos(x2)+x1*x2",
        "exp(x1/4)-x2^3+2*x1",
        "x1^2*x2 - x2/(1+x1^2)",
        "tan(x1/3)+sqrt(x2^2+1)",
        "abs(x1)*x2 + 1/(2+sin(x2))",
    };
    for (const auto& text : exprs) {
        Expr e = parse_expression(text, kXy);
        for (int trial = 0; trial < 20; ++trial) {
            double p[2] = {ud(rng), ud(rng)};
            if (std::abs(p[0]) < 1e-3) p[0] = 0.5;  // keep abs() away from its kink
            for (int seed = 0; seed < 2; ++seed) {
                const double h = 1e-6;
                double lo[2] = {p[0], p[1]}, hi[2] = {p[0], p[1]};
                lo[seed] -= h;
                hi[seed] += h;
                double fd = (e.eval(hi) - e.eval(lo)) / (2 * h);
                double ad = e.eval_dual(p, seed).d;
                CHECK(ad == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

namespace {

// Random expression trees for the round-trip property.
std::string random_expr(std::mt19937_64& rng, int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 6);
    std::uniform_real_distribution<double> lit(0.1, 3.0);
    switch (pick(rng)) {
        case 0: return std::to_string(lit(rng));
        case 1: return rng() % 2 ? "x1" : "x2";
        case 2: return "(" + random_expr(rng, depth - 1) + "+" + random_expr(rng, depth - 1) + ")";
        case 3: return "(" + random_expr(rng, depth - 1) + "-" + random_expr(rng, depth - 1) + ")";
        case 4: return "(" + random_expr(rng, depth - 1) + "*" + random_expr(rng, depth - 1) + ")";
        case 5: return "-" + random_expr(rng, depth - 1);
        default: return "sin(" + random_expr(rng, depth - 1) + ")";
    }
}

}  // namespace

TEST_CASE("pretty-print round trip preserves evaluation") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    for (int i = 0; i < 40; ++i) {
        std::string text = random_expr(rng, 4);
        Expr a = parse_expression(text, kXy);
        Expr b = parse_expression(a.to_string(), kXy);
        for (int j = 0; j < 5; ++j) {
            double p[2] = {ud(rng), ud(rng)};
            CHECK(a.eval(p) == doctest::Approx(b.eval(p)).epsilon(1e-14));
        }
    }
}

TEST_CASE("deterministic evaluation") {
    Expr e = parse_expression("sin(x1)*exp(x2)-x1^3/7", kXy);
    double p[2] = {0.37, -1.11};
    double v1 = e.eval(p), v2 = e.eval(p);
    CHECK(v1 == v2);  // bitwise
}
