#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "vtsmp/adjoint.hpp"
#include "vtsmp/problem_io.hpp"
#include "vtsmp/terminal.hpp"

using namespace vtsmp;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

struct Solved {
    ProblemSpec spec;
    double tau = 0.0;
    AdjointPath path;
    AdjointSolution first, first0;
    SecondOrderAdjoint second, second0;
};

Solved solve(const std::string& name, int N, int M, Backend backend, int degree = kRegressionDegree) {
    Solved s;
    s.spec = load_problem(name);
    const TimeGrid grid(s.spec.T, N);
    const auto c = ControlProcess::constant(grid, *s.spec.candidate);
    const auto ens = simulate_ensemble(s.spec, c, grid, M, 3);
    s.tau = hitting_time(mean_curve_only(s.spec, ens), s.spec.alpha, s.spec.T).tau;
    s.path = make_adjoint_path(s.spec, ens, c, s.tau);
    s.first = solve_first_adjoint(s.spec, s.path, AdjointKind::Cost, backend, degree);
    s.second = solve_second_adjoint(s.spec, s.path, s.first, AdjointKind::Cost, backend, degree);
    s.first0 = solve_first_adjoint(s.spec, s.path, AdjointKind::Constraint, backend, degree);
    s.second0 = solve_second_adjoint(s.spec, s.path, s.first0, AdjointKind::Constraint, backend, degree);
    return s;
}

}  // namespace

TEST(AdjointPathTest, EndsExactlyAtTau) {
    const Solved s = solve("example1", 1000, 1, Backend::Ode);
    EXPECT_EQ(s.path.t.back(), s.tau);
    EXPECT_NEAR(s.path.X.back()(0, 0), 1.0, 1e-6);
    EXPECT_EQ(s.path.node_at(0.3), 300);
}

TEST(FirstAdjoint, Example1Constraint) {
    const Solved s = solve("example1", 10000, 1, Backend::Ode);
    // -p0' = p0 + 1, p0(tau) = 0
    EXPECT_NEAR(s.first0.p.front()(0, 0), std::exp(s.tau) - 1.0, 1e-8);
    EXPECT_NEAR(s.first0.p.front()(0, 0), 1.0, 1e-3);
    EXPECT_EQ(s.first0.p.back()(0, 0), 0.0);
    for (int n = 0; n < s.path.nodes(); n += 777) {
        EXPECT_NEAR(s.first0.p[static_cast<std::size_t>(n)](0, 0), std::exp(s.tau - s.path.t[static_cast<std::size_t>(n)]) - 1.0,
                    1e-8);
        EXPECT_EQ(s.first0.K[static_cast<std::size_t>(n)](0, 0), 0.0);
    }
}

TEST(FirstAdjoint, Example1CostVanishes) {
    const Solved s = solve("example1", 1000, 1, Backend::Ode);
    for (const auto& p : s.first.p) EXPECT_EQ(p.cwiseAbs().maxCoeff(), 0.0);
    for (const auto& P : s.second.P) EXPECT_EQ(P.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FirstAdjoint, Example2AllZero) {
    for (Backend b : {Backend::Ode, Backend::Regression}) {
        const Solved s = solve("example2", 100, 4000, b);
        for (std::size_t n = 0; n < s.path.t.size(); ++n) {
            EXPECT_NEAR(s.first.p[n].cwiseAbs().maxCoeff(), 0.0, 1e-12);
            EXPECT_NEAR(s.first0.p[n].cwiseAbs().maxCoeff(), 0.0, 1e-12);
            EXPECT_NEAR(s.first0.K[n].cwiseAbs().maxCoeff(), 0.0, 1e-12);
            EXPECT_NEAR(s.second0.P[n].cwiseAbs().maxCoeff(), 0.0, 1e-12);
        }
    }
}

TEST(SecondAdjoint, LqLyapunov) {
    const Solved s = solve("lq-linear", 1000, 500, Backend::Ode);
    const double a = 0.5;
    EXPECT_EQ(s.second.method, "affine");
    const double t = s.tau - 0.2;
    const int n = s.path.node_at(t);
    const double tn = s.path.t[static_cast<std::size_t>(n)];
    const double exact = std::exp(2 * a * (s.tau - tn)) * (1 + 1 / (2 * a)) - 1 / (2 * a);
    EXPECT_NEAR(s.second.P[static_cast<std::size_t>(n)](0, 0), exact, 1e-8);
    EXPECT_EQ(s.second.P.back()(0, 0), 1.0);
    for (const auto& Q : s.second.Q) EXPECT_EQ(Q.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FirstAdjoint, LqAffineAgreesWithRegression) {
    const Solved ode = solve("lq-linear", 100, 20000, Backend::Ode);
    const auto reg = solve_first_adjoint(ode.spec, ode.path, AdjointKind::Cost, Backend::Regression, 2);
    double worst = 0.0;
    for (std::size_t n = 0; n < ode.path.t.size(); ++n) {
        worst = std::max(worst, std::sqrt((reg.p[n] - ode.first.p[n]).squaredNorm() / ode.path.paths));
    }
    EXPECT_LT(worst, 0.05);
    // terminal condition p(tau) = g_x(X(tau)) = X(tau) holds exactly
    EXPECT_EQ((reg.p.back() - ode.path.X.back()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FirstAdjoint, DeterministicNonAffineUsesPathwiseSweep) {
    ProblemDefinition def = registry_problem("example1");
    def.b = {"sin(x) + u"};
    def.f = "x^3";
    const ProblemSpec spec = build_problem(def);
    const TimeGrid grid(1.0, 4000);
    const auto c = ControlProcess::constant(grid, v1(1.0));
    const auto ens = simulate_ensemble(spec, c, grid, 1, 1);
    const double tau = hitting_time(mean_curve_only(spec, ens), spec.alpha, spec.T).tau;
    const AdjointPath path = make_adjoint_path(spec, ens, c, tau);
    const auto sol = solve_first_adjoint(spec, path, AdjointKind::Cost, Backend::Ode);
    EXPECT_EQ(sol.method, "pathwise");
    // p(0) = int_0^tau exp(int_0^s cos X) 3 X(s)^2 ds, by the trapezoid rule on the path
    double integral = 0.0;
    double phase = 0.0;
    for (int n = 0; n + 1 < path.nodes(); ++n) {
        const auto sn = static_cast<std::size_t>(n);
        const double x0 = path.X[sn](0, 0);
        const double x1 = path.X[sn + 1](0, 0);
        const double next_phase = phase + 0.5 * path.dt[sn] * (std::cos(x0) + std::cos(x1));
        integral += 0.5 * path.dt[sn] * (std::exp(phase) * 3 * x0 * x0 + std::exp(next_phase) * 3 * x1 * x1);
        phase = next_phase;
    }
    EXPECT_NEAR(sol.p.front()(0, 0), integral, 1e-5);
}

TEST(Backends, StochasticNonAffineNeedsRegression) {
    ProblemDefinition def = registry_problem("example2");
    def.sigma = {"0.3*u*x"};
    def.x0 = {0.5};
    const ProblemSpec spec = build_problem(def);
    const TimeGrid grid(1.0, 20);
    const auto c = ControlProcess::constant(grid, v1(1.0));
    const auto ens = simulate_ensemble(spec, c, grid, 500, 1);
    const AdjointPath path = make_adjoint_path(spec, ens, c, 0.4);
    EXPECT_THROW(solve_first_adjoint(spec, path, AdjointKind::Constraint, Backend::Ode), BackendError);
    EXPECT_NO_THROW(solve_first_adjoint(spec, path, AdjointKind::Constraint, Backend::Regression));
}

TEST(Hamiltonian, Example1Values) {
    const ProblemSpec s = load_problem("example1");
    const Matrix K0 = Matrix::Zero(1, 1);
    const auto h = hamiltonian(s, v1(1.0), v1(2.0), v1(0.0), K0, AdjointKind::Cost);
    EXPECT_EQ(h.value, 2.0);
    const auto h0 = hamiltonian(s, v1(1.0), v1(2.0), v1(1.0), K0, AdjointKind::Constraint);
    EXPECT_EQ(h0.value, 6.0);
}

TEST(Hamiltonian, DecompositionIsExact) {
    const ProblemSpec s = load_problem("oscillator-2d");
    const Vector x = (Vector(2) << 0.3, -0.7).finished();
    const Vector p = (Vector(2) << 1.5, -0.25).finished();
    Matrix K(2, 2);
    K << 0.1, -0.2, 0.3, 0.05;
    for (AdjointKind which : {AdjointKind::Cost, AdjointKind::Constraint}) {
        const auto h = hamiltonian(s, x, v1(2.0), p, K, which);
        EXPECT_EQ(h.value, h.running + h.drift + h.diffusion);
    }
    const auto zero = hamiltonian(s, x, v1(2.0), Vector::Zero(2), Matrix::Zero(2, 2), AdjointKind::Cost);
    EXPECT_DOUBLE_EQ(zero.value, s.f.eval_scalar(x, v1(2.0)));
}

TEST(Kernel, Example1) {
    const Solved s = solve("example1", 10000, 1, Backend::Ode);
    const KernelEstimate k = k_tau(s.spec, s.path, s.first0, s.second0, 0.3, v1(2.0));
    EXPECT_NEAR(k.full.mean, 2.0 * std::exp(-0.3), 1e-3);
    EXPECT_NEAR(k.driverless.mean, 1.0, 1e-12);
    const KernelEstimate at_tau = k_tau(s.spec, s.path, s.first0, s.second0, s.tau, v1(2.0));
    EXPECT_NEAR(at_tau.full.mean, 1.0, 1e-12);
    const KernelEstimate same = k_tau(s.spec, s.path, s.first0, s.second0, 0.3, v1(1.0));
    EXPECT_EQ(same.full.mean, 0.0);
}

TEST(Kernel, Example2Vanishes) {
    const Solved s = solve("example2", 100, 5000, Backend::Ode);
    for (double t : {0.1, 0.25, 0.4}) {
        const KernelEstimate k = k_tau(s.spec, s.path, s.first0, s.second0, t, v1(2.0));
        EXPECT_NEAR(k.full.mean, 0.0, 3.0 * k.full.se + 1e-12);
    }
}

TEST(Kernel, ZeroForCandidateValueOnStochasticProblem) {
    const Solved s = solve("oscillator-2d", 50, 2000, Backend::Regression);
    for (int n = 0; n < s.path.nodes(); n += 7) {
        for (double v : k_tau_paths(s.spec, s.path, s.first0, s.second0, n, v1(1.0))) EXPECT_EQ(v, 0.0);
    }
}

TEST(RTerm, Examples) {
    const Solved s1 = solve("example1", 1000, 1, Backend::Ode);
    EXPECT_NEAR(r_tau(s1.spec, s1.path).mean, 1.0, 1e-12);
    const Solved s2 = solve("example2", 100, 2000, Backend::Ode);
    EXPECT_NEAR(r_tau(s2.spec, s2.path).mean, 1.0, 1e-12);

    ProblemDefinition def = registry_problem("example2");
    def.f = "0";
    const ProblemSpec zero = build_problem(def);
    EXPECT_EQ(r_tau(zero, s2.path).mean, 0.0);
}

TEST(RTerm, FullVariantReducesToLimitAtZero) {
    const Solved s = solve("lq-linear", 200, 1000, Backend::Ode);
    const Matrix y = Matrix::Zero(s.path.paths, 1);
    const Estimate lim = r_tau(s.spec, s.path);
    const Estimate full = r_tau(s.spec, s.path, &y, &y);
    EXPECT_DOUBLE_EQ(lim.mean, full.mean);
    // f + g_x b + 1/2 g_xx sigma^2 with f = g = x^2/2, b = x/2 + 1, sigma = 0.3
    double acc = 0.0;
    for (int r = 0; r < s.path.paths; ++r) {
        const double x = s.path.X.back()(r, 0);
        acc += 0.5 * x * x + x * (0.5 * x + 1.0) + 0.5 * 0.09;
    }
    EXPECT_NEAR(lim.mean, acc / s.path.paths, 1e-10);
}

TEST(Output, AdjointCsvHeaders) {
    const Solved s = solve("oscillator-2d", 20, 300, Backend::Regression);
    std::ostringstream a;
    write_first_adjoint_csv(s.first, 2, 2, a);
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "t,p_1,p_2,K_11,K_12,K_21,K_22");
    std::ostringstream b;
    write_second_adjoint_csv(s.second, 2, b);
    EXPECT_EQ(b.str().substr(0, b.str().find('\n')), "t,P_11,P_12,P_21,P_22");
}

TEST(SecondAdjoint, RegressionIsSymmetric) {
    const Solved s = solve("oscillator-2d", 40, 3000, Backend::Regression);
    for (const auto* sol : {&s.second, &s.second0}) {
        for (int n = 0; n < s.path.nodes(); ++n) {
            for (int r = 0; r < s.path.paths; r += 97) {
                const Matrix P = sol->P_at(n, r, 2);
                EXPECT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-3);
            }
        }
    }
}
