#include <doctest.h>

#include <cmath>
#include <map>

#include "gridcouple/errors.hpp"
#include "gridcouple/expression.hpp"

using namespace gridcouple::expr;

namespace {

struct Env {
    std::vector<std::string> names;
    std::vector<double> values;

    double eval(const std::string& text) {
        const auto e = Expression::parse(text);
        const BoundExpression b(
            e,
            [&](const std::string& name, SourceLocation where) -> std::size_t {
                for (std::size_t i = 0; i < names.size(); ++i) {
                    if (names[i] == name) return i;
                }
                throw ParseError("unknown " + name, where);
            },
            [](const std::string& name, SourceLocation where) -> BoundExpression::FunctionSpec {
                if (name == "sq") return {[](std::span<const double> a) { return a[0] * a[0]; }, 1};
                if (name == "hyp") return {[](std::span<const double> a) { return std::hypot(a[0], a[1]); }, 2};
                throw ParseError("no function " + name, where);
            });
        return b.evaluate(values);
    }
};

SourceLocation error_at(const std::string& text, SourceLocation origin = {}) {
    try {
        (void)Expression::parse(text, origin);
    } catch (const ParseError& e) {
        return e.where();
    }
    FAIL("expected a parse error for: " << text);
    return {};
}

}  // namespace

TEST_CASE("arithmetic precedence and associativity") {
    Env env;
    CHECK(env.eval("1 + 2 * 3") == 7.0);
    CHECK(env.eval("(1 + 2) * 3") == 9.0);
    CHECK(env.eval("8 - 3 - 2") == 3.0);
    CHECK(env.eval("8 / 4 / 2") == 1.0);
    CHECK(env.eval("2 ^ 3 ^ 2") == 512.0);
    CHECK(env.eval("-2 ^ 2") == -4.0);
    CHECK(env.eval("2 * -3") == -6.0);
    CHECK(env.eval("--3") == 3.0);
    CHECK(env.eval("+4") == 4.0);
    CHECK(env.eval("1.5e3 / .5") == 3000.0);
}

TEST_CASE("references and calls") {
    Env env{{"mg.V_bus", "R_DC", "dc.x_DC1"}, {160.0, 4.0, 21.0}};
    CHECK(env.eval("mg.V_bus / R_DC") == 40.0);
    CHECK(env.eval("sq(R_DC) + 1") == 17.0);
    CHECK(env.eval("hyp(3, R_DC)") == 5.0);
    CHECK(env.eval("hyp(sq(1), 0) * -dc.x_DC1") == -21.0);
    CHECK_THROWS_AS(env.eval("sq(1, 2)"), ParseError);
    CHECK_THROWS_AS(env.eval("hyp(1)"), ParseError);
    CHECK_THROWS_AS(env.eval("mg.I_O"), ParseError);
    CHECK_THROWS_AS(env.eval("nope(1)"), ParseError);
}

TEST_CASE("references() and functions() list distinct names in order") {
    const auto e = Expression::parse("f(b.x, a) + a * b.x - g(c)");
    CHECK(e.references() == std::vector<std::string>{"b.x", "a", "c"});
    CHECK(e.functions() == std::vector<std::string>{"f", "g"});
}

TEST_CASE("parse errors carry line and column") {
    auto w = error_at("1 + * 2");
    CHECK(w.line == 1);
    CHECK(w.column == 5);

    w = error_at("(1 + 2");
    CHECK(w.column == 7);

    w = error_at("a.", {4, 10});
    CHECK(w.line == 4);
    CHECK(w.column == 12);

    w = error_at("1 +\n  $", {2, 1});
    CHECK(w.line == 3);
    CHECK(w.column == 3);

    CHECK_THROWS_AS((void)Expression::parse(""), ParseError);
    CHECK_THROWS_AS((void)Expression::parse("1 2"), ParseError);
    CHECK_THROWS_AS((void)Expression::parse("f(1,"), ParseError);
    CHECK_THROWS_WITH_AS((void)Expression::parse("3 # 4", {7, 20}), doctest::Contains("line 7, column 22"),
                         ParseError);
}

TEST_CASE("parse errors are configuration errors") {
    CHECK_THROWS_AS((void)Expression::parse(")"), gridcouple::ConfigError);
}
