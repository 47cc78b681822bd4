#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vtsmp/problem.hpp"
#include "vtsmp/problem_io.hpp"

using namespace vtsmp;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

// Central differences of a scalar-valued coefficient in x.
Vector fd_gradient(const CoefficientExpr& c, int entry, const Vector& x, const Vector& u) {
    const double h = 1e-6;
    Vector g(x.size());
    for (int a = 0; a < x.size(); ++a) {
        Vector xp = x;
        Vector xm = x;
        xp(a) += h;
        xm(a) -= h;
        const Matrix fp = c.eval_matrix(xp, u);
        const Matrix fm = c.eval_matrix(xm, u);
        g(a) = (fp.data()[entry] - fm.data()[entry]) / (2 * h);
    }
    return g;
}

}  // namespace

TEST(Registry, Example1) {
    const ProblemSpec s = load_problem("example1");
    EXPECT_EQ(s.m, 1);
    EXPECT_EQ(s.d, 1);
    EXPECT_EQ(s.T, 1.0);
    EXPECT_EQ(s.alpha, 1.0);
    EXPECT_EQ(s.x0(0), 0.0);
    EXPECT_TRUE(s.deterministic());
    EXPECT_DOUBLE_EQ(s.b.eval_scalar(v1(1.0), v1(1.0)), 2.0);
    EXPECT_DOUBLE_EQ(s.f.eval_scalar(v1(0.3), v1(2.0)), 2.0);
    EXPECT_DOUBLE_EQ(s.g.eval_scalar(v1(0.3), v1(2.0)), 0.0);
    // l = phi_x b for phi = x
    EXPECT_DOUBLE_EQ(s.l.eval_scalar(v1(1.0), v1(2.0)), 3.0);
    ASSERT_EQ(s.U.points().size(), 2u);
    EXPECT_EQ(s.U.points()[0](0), 1.0);
    EXPECT_EQ(s.U.points()[1](0), 2.0);
}

TEST(Registry, Example2) {
    const ProblemSpec s = load_problem("example2");
    EXPECT_EQ(s.x0(0), 0.5);
    EXPECT_FALSE(s.deterministic());
    EXPECT_DOUBLE_EQ(s.sigma.eval_scalar(v1(0.5), v1(2.0)), 2.0);
    EXPECT_DOUBLE_EQ(s.b.eval_scalar(v1(0.5), v1(2.0)), 1.0);
    EXPECT_DOUBLE_EQ(s.l.eval_scalar(v1(7.0), v1(2.0)), 1.0);
}

TEST(Registry, UnknownNameIsRejected) { EXPECT_THROW(load_problem("nosuch"), ValidationError); }

TEST(Registry, EveryProblemBuilds) {
    for (const auto& name : registry_names()) {
        const ProblemSpec s = load_problem(name);
        EXPECT_EQ(s.name, name);
        EXPECT_TRUE(s.candidate.has_value()) << name;
    }
}

TEST(Validation, AlphaNotAbovePhiAtStart) {
    ProblemDefinition def = registry_problem("example1");
    def.alpha = 0.0;
    EXPECT_THROW(build_problem(def), ValidationError);
}

TEST(Validation, ShapeAndDomainErrors) {
    ProblemDefinition def = registry_problem("example1");
    def.b = {"x+u", "1"};
    EXPECT_THROW(build_problem(def), ValidationError);

    def = registry_problem("example1");
    def.phi = "x*u";
    EXPECT_THROW(build_problem(def), ValidationError);

    def = registry_problem("example1");
    def.candidate = std::vector<double>{3.0};
    EXPECT_THROW(build_problem(def), ValidationError);
}

TEST(Derivatives, MatchFiniteDifferencesOnRegistry) {
    for (const auto& name : registry_names()) {
        const ProblemSpec s = load_problem(name);
        Vector x = Vector::LinSpaced(s.m, 0.3, 0.7);
        const Vector u = s.U.evaluation_points().back();
        // b_x row (i, a)
        const Matrix bx = s.b_x.eval_matrix(x, u);
        for (int i = 0; i < s.m; ++i) {
            const Vector g = fd_gradient(s.b, i, x, u);
            for (int a = 0; a < s.m; ++a) EXPECT_NEAR(bx(i, a), g(a), 1e-6) << name;
        }
        for (const auto* pair : {&s.f, &s.g, &s.phi, &s.l}) {
            const CoefficientExpr* grad = pair == &s.f ? &s.f_x : pair == &s.g ? &s.g_x : pair == &s.phi ? &s.phi_x : &s.l_x;
            const CoefficientExpr* hess =
                pair == &s.f ? &s.f_xx : pair == &s.g ? &s.g_xx : pair == &s.phi ? &s.phi_xx : &s.l_xx;
            const Vector g = fd_gradient(*pair, 0, x, u);
            const Vector gx = grad->eval_vector(x, u);
            for (int a = 0; a < s.m; ++a) EXPECT_NEAR(gx(a), g(a), 1e-6) << name;
            const Matrix H = hess->eval_matrix(x, u);
            for (int a = 0; a < s.m; ++a) {
                const Vector row = fd_gradient(*grad, a, x, u);
                for (int c = 0; c < s.m; ++c) EXPECT_NEAR(H(a, c), row(c), 1e-5) << name;
            }
        }
    }
}

TEST(Derivatives, LocalDerivativesOfOscillator) {
    const ProblemSpec s = load_problem("oscillator-2d");
    const Vector x = (Vector(2) << 0.4, -0.2).finished();
    const Vector u = v1(2.0);
    const LocalDerivatives ld = local_derivatives(s, x, u);
    EXPECT_NEAR(ld.b(1), -0.4 + 0.04 + 2.0, 1e-12);
    EXPECT_EQ(ld.b_x(0, 1), 1.0);
    EXPECT_EQ(ld.b_x(1, 0), -1.0);
    EXPECT_NEAR(ld.b_x(1, 1), -0.2, 1e-12);
    // sigma(1,1) = 0.1 u + 0.05 x1
    EXPECT_NEAR(ld.sigma(1, 1), 0.22, 1e-12);
    EXPECT_NEAR(ld.sigma_x[1](1, 0), 0.05, 1e-12);
    EXPECT_EQ(ld.sigma_x[0](1, 0), 0.0);
    // l = phi_x' b + 1/2 sum_j sigma^j' phi_xx sigma^j with phi = x1 + 0.1 x2^2
    const double b1 = x(1);
    const double b2 = -x(0) - 0.2 * x(1) + u(0);
    const double s22 = 0.1 * u(0) + 0.05 * x(0);
    const double l = b1 + 0.2 * x(1) * b2 + 0.5 * 0.2 * s22 * s22;
    EXPECT_NEAR(s.l.eval_scalar(x, u), l, 1e-12);
}

TEST(ProblemFile, ParsesAndMatchesRegistry) {
    const auto text = R"(# example 1 as a file
[problem]
m = 1
d = 1
k = 1
T = 1
alpha = 1
x0 = 0
seed = 42

[coefficients]
b = x + u
sigma = 0
f = u
phi = x

[control]
kind = finite
points = 1, 2
candidate = 1
)";
    const auto path = std::filesystem::temp_directory_path() / "vtsmp_problem_test.ini";
    {
        std::ofstream out(path);
        out << text;
    }
    const ProblemSpec s = load_problem(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(s.seed.value(), 42u);
    EXPECT_TRUE(s.deterministic());
    EXPECT_DOUBLE_EQ(s.b.eval_scalar(v1(1.0), v1(1.0)), 2.0);
    EXPECT_DOUBLE_EQ(s.g.eval_scalar(v1(1.0), v1(1.0)), 0.0);
    EXPECT_EQ(s.candidate->coeff(0), 1.0);
}

TEST(ProblemFile, RejectsUnknownAndDuplicateKeys) {
    EXPECT_THROW(parse_problem_text("[problem]\nalpha = 1\nalpha = 2\n"), ValidationError);
    EXPECT_THROW(parse_problem_text("[problem]\nbeta = 1\n"), ValidationError);
    EXPECT_THROW(parse_problem_text("[extras]\n"), ValidationError);
    EXPECT_THROW(parse_problem_text("alpha = 1\n"), ValidationError);
}

TEST(ProblemFile, BoxDomain) {
    const ProblemDefinition def = parse_problem_text(
        "[problem]\nT = 1\nalpha = 1\nx0 = 0\n[coefficients]\nb = u\nsigma = 0\nf = u^2\nphi = x\n"
        "[control]\nkind = box\nlower = 0\nupper = 2\n");
    EXPECT_EQ(def.U.kind(), ControlDomain::Kind::Box);
    EXPECT_TRUE(def.U.contains(v1(1.5)));
    EXPECT_FALSE(def.U.contains(v1(2.5)));
    EXPECT_EQ(def.U.evaluation_points(5).size(), 5u);
}

TEST(Coefficient, ArityMismatch) {
    const VariableSet v = VariableSet::standard(1, 1);
    EXPECT_THROW(parse_coefficient("x, u", 1, 1, v), std::invalid_argument);
    const CoefficientExpr c = parse_coefficient("[x, u; 1, 2]", 2, 2, v);
    const Matrix m = c.eval_matrix(v1(3.0), v1(4.0));
    EXPECT_EQ(m(0, 1), 4.0);
    EXPECT_EQ(m(1, 0), 1.0);
}
