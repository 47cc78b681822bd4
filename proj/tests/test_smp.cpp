#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "vtsmp/problem_io.hpp"
#include "vtsmp/smp.hpp"

using namespace vtsmp;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

struct Scan {
    ProblemSpec spec;
    AdjointPath path;
    AdjointSolution first, first0;
    SecondOrderAdjoint second, second0;
    SMPReport report;
};

Scan scan(ProblemSpec spec, int N, int M, Backend backend, int tau_points) {
    Scan s;
    s.spec = std::move(spec);
    const TimeGrid grid(s.spec.T, N);
    const auto c = ControlProcess::constant(grid, *s.spec.candidate);
    const auto ens = simulate_ensemble(s.spec, c, grid, M, 5);
    const auto est = hitting_time(mean_curve_only(s.spec, ens), s.spec.alpha, s.spec.T);
    s.path = make_adjoint_path(s.spec, ens, c, est.tau);
    s.first = solve_first_adjoint(s.spec, s.path, AdjointKind::Cost, backend);
    s.second = solve_second_adjoint(s.spec, s.path, s.first, AdjointKind::Cost, backend);
    s.first0 = solve_first_adjoint(s.spec, s.path, AdjointKind::Constraint, backend);
    s.second0 = solve_second_adjoint(s.spec, s.path, s.first0, AdjointKind::Constraint, backend);
    SMPInputs in;
    in.path = &s.path;
    in.first = &s.first;
    in.second = &s.second;
    in.first0 = &s.first0;
    in.second0 = &s.second0;
    in.kind = est.kind;
    in.h_at_tau = constraint_rate(s.spec, ens, c).at(est.tau);
    s.report = check_smp(s.spec, in, tau_points);
    return s;
}

}  // namespace

TEST(Cost, Example1Controls) {
    const ProblemSpec s = load_problem("example1");
    const TimeGrid grid(1.0, 1000);
    for (double u : {1.0, 2.0}) {
        const auto c = ControlProcess::constant(grid, v1(u));
        const auto ens = simulate_ensemble(s, c, grid, 1, 1);
        const double tau = hitting_time(mean_curve_only(s, ens), 1.0, 1.0).tau;
        const Estimate J = cost_functional(s, c, ens, tau);
        EXPECT_NEAR(J.mean, u == 1.0 ? std::log(2.0) : 2.0 * std::log(1.5), 5e-3);
        EXPECT_EQ(J.se, 0.0);
    }
}

TEST(Cost, Example2) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 100);
    const auto c = ControlProcess::constant(grid, v1(1.0));
    const auto ens = simulate_ensemble(s, c, grid, 50000, 5);
    const double tau = hitting_time(mean_curve_only(s, ens), 1.0, 1.0).tau;
    EXPECT_NEAR(cost_functional(s, c, ens, tau).mean, 0.5, 0.01);
}

TEST(Cost, PartialStepAndTerminalCost) {
    // f = x, g = x^2 along X = t: J = tau^2/2 + tau^2
    ProblemDefinition def = registry_problem("example1");
    def.b = {"1"};
    def.f = "x";
    def.g = "x^2";
    const ProblemSpec s = build_problem(def);
    const TimeGrid grid(1.0, 10);
    const auto c = ControlProcess::constant(grid, v1(1.0));
    const auto ens = simulate_ensemble(s, c, grid, 1, 1);
    const double tau = 0.37;
    EXPECT_NEAR(cost_functional(s, c, ens, tau).mean, 1.5 * tau * tau, 1e-12);
}

TEST(SMP, Example1Values) {
    const Scan s = scan(load_problem("example1"), 10000, 1, Backend::Ode, 64);
    EXPECT_TRUE(s.report.pass);
    EXPECT_EQ(s.report.variants.size(), 1u);
    EXPECT_NEAR(s.report.R.mean, 1.0, 1e-12);
    for (const auto& cell : s.report.cells) {
        const double u = s.report.controls[static_cast<std::size_t>(cell.control)](0);
        const double expected = u == 1.0 ? 0.0 : 1.0 + std::exp(std::log(2.0) - cell.tau) / 2.0;
        EXPECT_NEAR(cell.with_term.mean, expected, 1e-3) << cell.tau;
    }
}

TEST(SMP, Example2Values) {
    const Scan s = scan(load_problem("example2"), 100, 5000, Backend::Ode, 16);
    EXPECT_TRUE(s.report.pass);
    for (const auto& cell : s.report.cells) {
        const double u = s.report.controls[static_cast<std::size_t>(cell.control)](0);
        EXPECT_NEAR(cell.with_term.mean, u - 1.0, 1e-12);
    }
}

TEST(SMP, CandidateValueGivesZero) {
    const Scan s = scan(load_problem("nonlinear-test"), 100, 2000, Backend::Regression, 8);
    for (const auto& cell : s.report.cells) {
        if (s.report.controls[static_cast<std::size_t>(cell.control)](0) == 1.0) {
            EXPECT_EQ(cell.with_term.mean, 0.0);
        }
    }
}

TEST(SMP, NonOptimalCandidateFails) {
    // u = 2 reaches the threshold sooner but costs more per unit time than u = 1
    ProblemDefinition def = registry_problem("example1");
    def.candidate = std::vector<double>{2.0};
    const Scan s = scan(build_problem(def), 10000, 1, Backend::Ode, 16);
    EXPECT_FALSE(s.report.pass);
    EXPECT_LT(s.report.variants.front().min_lhs, 0.0);
}

TEST(SMP, CaseIiiDropsTheTerm) {
    ProblemDefinition def = registry_problem("example1");
    def.alpha = 3.0;
    const Scan s = scan(build_problem(def), 1000, 1, Backend::Ode, 8);
    EXPECT_EQ(s.report.kind, TerminalCase::NoCrossing);
    ASSERT_EQ(s.report.variants.size(), 1u);
    EXPECT_EQ(s.report.variants.front().name, "without_term");
    // H(u) - H(ubar) = (u - ubar)(1 + p) with p = 0 when g = 0 and f_x = 0
    for (const auto& cell : s.report.cells) {
        const double u = s.report.controls[static_cast<std::size_t>(cell.control)](0);
        EXPECT_NEAR(cell.without_term.mean, u - 1.0, 1e-12);
    }
}

TEST(SMP, CaseIiReportsBothVariants) {
    ProblemDefinition def = registry_problem("example1");
    def.alpha = std::exp(1.0) - 1.0;
    const Scan s = scan(build_problem(def), 1000, 1, Backend::Ode, 8);
    EXPECT_EQ(s.report.kind, TerminalCase::AtHorizon);
    ASSERT_EQ(s.report.variants.size(), 2u);
    EXPECT_EQ(s.report.variants[0].name, "with_term");
    EXPECT_EQ(s.report.variants[1].name, "without_term");
}

TEST(SMP, CsvHeader) {
    const Scan s = scan(load_problem("example1"), 1000, 1, Backend::Ode, 4);
    std::ostringstream out;
    write_smp_csv(s.report, out);
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "tau,u,lhs,se");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 4 * 2);
}

TEST(BruteForce, Example1ConfirmsConstantOne) {
    const ProblemSpec s = load_problem("example1");
    const BruteForceResult r = brute_force_search(s, TimeGrid(1.0, 1000), 10, 1, 1);
    EXPECT_EQ(r.table.size(), 1024u);
    EXPECT_EQ(r.best_index, 0u);
    for (int idx : r.best) EXPECT_EQ(r.points[static_cast<std::size_t>(idx)](0), 1.0);
    EXPECT_NEAR(r.best_J.mean, std::log(2.0), 5e-3);
    EXPECT_TRUE(r.has_candidate);
    EXPECT_EQ(r.margin, 0.0);
}

TEST(BruteForce, TableMatchesDirectSimulation) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 40);
    const BruteForceResult r = brute_force_search(s, grid, 4, 3000, 2);
    ASSERT_EQ(r.table.size(), 16u);
    for (std::uint64_t index : {3ull, 10ull}) {
        const auto digits = r.decode(index);
        std::vector<Vector> values;
        for (int d : digits) values.push_back(r.points[static_cast<std::size_t>(d)]);
        const auto c = ControlProcess::piecewise(grid, values);
        const auto ens = simulate_ensemble(s, c, grid, 3000, 2);
        const double tau = hitting_time(mean_curve_only(s, ens), s.alpha, s.T).tau;
        const auto& row = r.table[static_cast<std::size_t>(index)];
        EXPECT_EQ(row.index, index);
        EXPECT_NEAR(row.tau, tau, 1e-12);
        EXPECT_NEAR(row.J.mean, cost_functional(s, c, ens, tau).mean, 1e-12);
    }
    EXPECT_EQ(r.decode(1), (std::vector<int>{0, 0, 0, 1}));
}

TEST(BruteForce, BudgetIsEnforced) {
    const ProblemSpec s = load_problem("example1");
    EXPECT_THROW(brute_force_search(s, TimeGrid(1.0, 100), 21, 1, 1), std::length_error);
}

TEST(BruteForce, Example2SelectsConstantOne) {
    const ProblemSpec s = load_problem("example2");
    const BruteForceResult r = brute_force_search(s, TimeGrid(1.0, 80), 8, 10000, 3);
    for (int idx : r.best) EXPECT_EQ(r.points[static_cast<std::size_t>(idx)](0), 1.0);
    EXPECT_NEAR(r.best_J.mean, 0.5, 0.02);
}
