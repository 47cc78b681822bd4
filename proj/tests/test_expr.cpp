#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vtsmp/expr.hpp"

using namespace vtsmp;

namespace {

const VariableSet kVars = VariableSet::standard(1, 1);

double eval(const Expr& e, double x, double u) {
    const std::vector<double> xs{x};
    const std::vector<double> us{u};
    return e.eval(xs, us);
}

Expr parse(const char* s) { return parse_expression(s, kVars); }

}  // namespace

TEST(Parse, SumOfStateAndControl) {
    const Expr e = parse("x + u");
    EXPECT_EQ(e.op(), Op::Add);
    EXPECT_EQ(e.node().args[0].op(), Op::Var);
    EXPECT_EQ(e.node().args[0].node().var.kind, VarKind::State);
    EXPECT_EQ(e.node().args[1].node().var.kind, VarKind::Control);
}

TEST(Parse, BareControl) {
    const Expr e = parse("u");
    ASSERT_EQ(e.op(), Op::Var);
    EXPECT_EQ(e.node().var.kind, VarKind::Control);
}

TEST(Parse, TrailingOperatorReportsOffset) {
    try {
        parse("x*u +");
        FAIL() << "expected a syntax error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 6u);
    }
}

TEST(Parse, RejectsUnknownNames) {
    EXPECT_THROW(parse("y + 1"), ParseError);
    EXPECT_THROW(parse("foo(x)"), ParseError);
    EXPECT_THROW(parse("(x + 1"), ParseError);
    EXPECT_THROW(parse(""), ParseError);
}

TEST(Parse, PrecedenceAndAssociativity) {
    EXPECT_DOUBLE_EQ(eval(parse("1 + 2*3"), 0, 0), 7.0);
    EXPECT_DOUBLE_EQ(eval(parse("2^3^2"), 0, 0), 512.0);
    EXPECT_DOUBLE_EQ(eval(parse("-2^2"), 0, 0), -4.0);
    EXPECT_DOUBLE_EQ(eval(parse("8/4/2"), 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(eval(parse("1e-1 * x"), 5.0, 0), 0.5);
}

TEST(Parse, IndexedNamesInHigherDimensions) {
    const VariableSet v = VariableSet::standard(2, 2);
    const Expr e = parse_expression("x1*u2 - x2", v);
    const std::vector<double> x{3.0, 1.0};
    const std::vector<double> u{0.0, 2.0};
    EXPECT_DOUBLE_EQ(e.eval(x, u), 5.0);
}

TEST(Eval, ExampleCoefficients) {
    EXPECT_DOUBLE_EQ(eval(parse("x+u"), 1.0, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(eval(parse("u"), 0.5, 2.0), 2.0);
}

TEST(Eval, DomainErrorNamesSubexpression) {
    const Expr e = parse("1 + 1/x");
    try {
        eval(e, 0.0, 1.0);
        FAIL() << "expected a domain error";
    } catch (const DomainError& err) {
        EXPECT_NE(err.subexpression().find('/'), std::string::npos);
    }
    EXPECT_THROW(eval(parse("log(x)"), -1.0, 0.0), DomainError);
    EXPECT_THROW(eval(parse("sqrt(x)"), -1.0, 0.0), DomainError);
}

TEST(Eval, ProgramMatchesTree) {
    for (const char* s : {"x", "u", "2.5", "x*x + sin(u) - exp(-x)/(1+u^2)", "sqrt(1 + x^2) * log(2 + u)"}) {
        const Expr e = parse(s);
        const Program prog(e);
        for (double x : {-0.7, 0.0, 1.3}) {
            const std::vector<double> xs{x};
            const std::vector<double> us{0.4};
            EXPECT_DOUBLE_EQ(prog(xs, us), e.eval(xs, us)) << s;
        }
    }
}

TEST(Differentiate, Polynomials) {
    const Expr d = differentiate(parse("x + u"), "x", kVars);
    ASSERT_TRUE(d.is_constant());
    EXPECT_EQ(d.constant_value(), 1.0);

    const Expr d2 = differentiate(parse("x*x"), "x", kVars, 2);
    ASSERT_TRUE(d2.is_constant());
    EXPECT_EQ(d2.constant_value(), 2.0);

    EXPECT_TRUE(differentiate(parse("u^2"), "x", kVars).is_constant(0.0));
}

TEST(Differentiate, MatchesCentralDifferences) {
    const double h = 1e-5;
    for (const char* s : {"exp(x)*u", "sin(x)*cos(u*x)", "x^3 - 2*x*u", "log(1 + x^2)", "sqrt(2 + x)/(1 + u)",
                          "x^u", "-(x - u)^2"}) {
        const Expr e = parse(s);
        const Expr d = differentiate(e, "x", kVars);
        const Expr du = differentiate(e, "u", kVars);
        const double x = 0.3;
        const double u = 1.0;
        const double fd = (eval(e, x + h, u) - eval(e, x - h, u)) / (2 * h);
        const double fdu = (eval(e, x, u + h) - eval(e, x, u - h)) / (2 * h);
        EXPECT_NEAR(eval(d, x, u), fd, 1e-8 * std::max(1.0, std::abs(fd))) << s;
        EXPECT_NEAR(eval(du, x, u), fdu, 1e-8 * std::max(1.0, std::abs(fdu))) << s;
        const Expr d2 = differentiate(e, "x", kVars, 2);
        const double fd2 = (eval(d, x + h, u) - eval(d, x - h, u)) / (2 * h);
        EXPECT_NEAR(eval(d2, x, u), fd2, 1e-7 * std::max(1.0, std::abs(fd2))) << s;
    }
}

TEST(Simplify, Identities) {
    EXPECT_EQ(simplify(parse("x + 0")).to_string(), "x");
    EXPECT_EQ(simplify(parse("1*x")).to_string(), "x");
    EXPECT_TRUE(simplify(parse("0*exp(x)")).is_constant(0.0));
    EXPECT_TRUE(simplify(parse("2*3 + 1")).is_constant(7.0));
}

TEST(RoundTrip, PrintedFormParsesToSameValues) {
    for (const char* s : {"x + u", "-(x*u) + 2^(-x)", "exp(x)*u - 1/(x + 3)", "x - (u - x)", "(x^2)^3"}) {
        const Expr e = parse(s);
        const Expr back = parse(e.to_string().c_str());
        for (double x : {0.1, 1.7}) {
            EXPECT_DOUBLE_EQ(eval(back, x, 0.6), eval(e, x, 0.6)) << s << " -> " << e.to_string();
        }
    }
}

TEST(Dependencies, StateAndControl) {
    EXPECT_TRUE(parse("u^2 + 1").independent_of_state());
    EXPECT_FALSE(parse("x*u").independent_of_state());
    EXPECT_FALSE(parse("x").depends_on(VarKind::Control));
}
