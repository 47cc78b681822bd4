#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "vtsmp/parallel.hpp"
#include "vtsmp/problem_io.hpp"
#include "vtsmp/rng.hpp"
#include "vtsmp/simulate.hpp"

using namespace vtsmp;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

bool same_states(const PathEnsemble& a, const PathEnsemble& b) {
    if (a.paths() != b.paths()) return false;
    for (int p = 0; p < a.paths(); ++p) {
        for (int i = 0; i <= a.grid().N(); ++i) {
            const auto sa = a.state(p, i);
            const auto sb = b.state(p, i);
            for (std::size_t k = 0; k < sa.size(); ++k) {
                if (sa[k] != sb[k]) return false;
            }
        }
    }
    return true;
}

}  // namespace

TEST(Philox, KnownAnswer) {
    const auto r = philox4x32({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(r[0], 0x6627e8d5u);
    EXPECT_EQ(r[1], 0xe169c58du);
    EXPECT_EQ(r[2], 0xbc57ac4cu);
    EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, NormalsHaveUnitVariance) {
    double s = 0.0;
    double s2 = 0.0;
    const int n = 50000;
    for (int p = 0; p < n; ++p) {
        const auto z = philox_normals(9, static_cast<std::uint64_t>(p), 3, 0);
        for (double v : z) {
            s += v;
            s2 += v * v;
        }
    }
    const double mean = s / (4.0 * n);
    const double var = s2 / (4.0 * n) - mean * mean;
    EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(4.0 * n));
    EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Philox, PartialBlockKeepsLeadingValues) {
    const auto all = philox_normals(1, 2, 3, 0, 4);
    const auto one = philox_normals(1, 2, 3, 0, 1);
    EXPECT_EQ(all[0], one[0]);
    EXPECT_EQ(all[1], one[1]);
}

TEST(TimeGridTest, NodesAndSnapping) {
    const TimeGrid g(1.0, 10);
    EXPECT_DOUBLE_EQ(g.dt(), 0.1);
    EXPECT_EQ(g.t(10), 1.0);
    EXPECT_EQ(g.nearest_node(0.34), 3);
    EXPECT_EQ(g.node_below(0.39), 3);
    EXPECT_EQ(g.node_below(0.3), 3);
    EXPECT_THROW(TimeGrid(1.0, 1), ValidationError);
}

TEST(Simulate, Example1FollowsExactSolution) {
    const ProblemSpec s = load_problem("example1");
    const TimeGrid grid(1.0, 100000);
    const auto ens = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 50, 1);
    EXPECT_EQ(ens.paths(), 1);
    const int i = grid.nearest_node(std::log(2.0));
    EXPECT_NEAR(ens.state(0, i)[0], std::exp(grid.t(i)) - 1.0, 2e-5);
    for (int k : {0, 1000, 50000, 100000}) EXPECT_NEAR(ens.state(0, k)[0], std::exp(grid.t(k)) - 1.0, 1e-9);
}

TEST(Simulate, Example2MeanWithinClt) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 100);
    const auto ens = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 100000, 3);
    const Estimate half = estimate_expectation(ens, s.phi, 50);
    EXPECT_NEAR(half.mean, 1.0, 3.0 * half.se);
    EXPECT_NEAR(half.se, 1.0 / std::sqrt(2.0 * 100000), 1e-4);
    const Estimate quarter = estimate_expectation(ens, s.phi, 25);
    EXPECT_NEAR(quarter.mean, 0.75, 3.0 * quarter.se);
}

TEST(Simulate, StartsAtInitialState) {
    const ProblemSpec s = load_problem("oscillator-2d");
    const TimeGrid grid(s.T, 20);
    const auto ens = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 100, 2);
    for (int p = 0; p < ens.paths(); ++p) {
        EXPECT_EQ(ens.state(p, 0)[0], s.x0(0));
        EXPECT_EQ(ens.state(p, 0)[1], s.x0(1));
    }
}

TEST(Estimate, DegenerateEnsembles) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 10);
    const auto one = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 1, 3);
    EXPECT_TRUE(std::isnan(estimate_expectation(one, s.phi, 5).se));

    const auto many = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 500, 3);
    const Estimate c = many.estimate(5, [](std::span<const double>) { return 1.0; });
    EXPECT_EQ(c.mean, 1.0);
    EXPECT_EQ(c.se, 0.0);
    EXPECT_THROW(estimate_expectation(many, s.b, 20), ValidationError);
}

TEST(Spike, SnapsToWholeSteps) {
    const ProblemSpec s = load_problem("example1");
    const TimeGrid grid(1.0, 100);
    const auto base = ControlProcess::constant(grid, v1(1.0));
    const auto c = with_spike(s, base, v1(2.0), 0.3, 0.05);
    ASSERT_TRUE(c.spike().has_value());
    EXPECT_EQ(c.spike()->first_step, 30);
    EXPECT_EQ(c.spike()->end_step, 35);
    EXPECT_NEAR(c.spike()->eps, 0.05, 1e-12);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(c.at(i)[0], (i >= 30 && i < 35) ? 2.0 : 1.0) << i;
    EXPECT_EQ(base.at(32)[0], 1.0);
    EXPECT_EQ(c.without_spike().at(32)[0], 1.0);
}

TEST(Spike, RoundsOffGridRequests) {
    const ProblemSpec s = load_problem("example1");
    const TimeGrid grid(1.0, 100);
    const auto base = ControlProcess::constant(grid, v1(1.0));
    const auto c = with_spike(s, base, v1(2.0), 0.304, 0.0001);
    EXPECT_EQ(c.spike()->first_step, 30);
    EXPECT_EQ(c.spike()->end_step, 31);
    EXPECT_NEAR(c.spike()->tau, 0.3, 1e-12);
    EXPECT_NEAR(c.spike()->tau_requested, 0.304, 1e-12);
}

TEST(Spike, ClampedAtHorizon) {
    const ProblemSpec s = load_problem("example1");
    const TimeGrid grid(1.0, 100);
    const auto c = with_spike(s, ControlProcess::constant(grid, v1(1.0)), v1(2.0), 0.99, 0.05);
    EXPECT_TRUE(c.spike()->clamped);
    EXPECT_EQ(c.spike()->end_step, 100);
    EXPECT_NEAR(c.spike()->tau + c.spike()->eps, 1.0, 1e-12);
}

TEST(Spike, InvalidRequests) {
    const ProblemSpec s = load_problem("example1");
    const TimeGrid grid(1.0, 100);
    const auto base = ControlProcess::constant(grid, v1(1.0));
    EXPECT_THROW(with_spike(s, base, v1(3.0), 0.3, 0.05), ValidationError);
    EXPECT_THROW(with_spike(s, base, v1(2.0), 1.0, 0.05), ValidationError);
    EXPECT_THROW(with_spike(s, base, v1(2.0), 0.3, 0.0), ValidationError);
}

TEST(Spike, DegenerateSpikeLeavesEnsembleUnchanged) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 50);
    const auto base = ControlProcess::constant(grid, v1(1.0));
    const auto spiked = with_spike(s, base, v1(1.0), 0.3, 0.1);
    EXPECT_TRUE(same_states(simulate_ensemble(s, base, grid, 300, 4), simulate_ensemble(s, spiked, grid, 300, 4)));
}

TEST(Simulate, CommonRandomNumbers) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 50);
    const auto base = ControlProcess::constant(grid, v1(1.0));
    const auto spiked = with_spike(s, base, v1(2.0), 0.3, 0.1);
    const auto a = simulate_ensemble(s, base, grid, 200, 4);
    const auto b = simulate_ensemble(s, spiked, grid, 200, 4);
    // X = 1/2 + t + int u dW, so the difference is the extra unit of noise on the spike
    for (int p = 0; p < 200; ++p) {
        double extra = 0.0;
        double dw = 0.0;
        for (int i = 15; i < 20; ++i) {
            a.increment(p, i, &dw);
            extra += dw;
        }
        EXPECT_NEAR(b.state(p, 50)[0] - a.state(p, 50)[0], extra, 1e-12);
    }
}

TEST(Simulate, IndependentOfWorkerCount) {
    const ProblemSpec s = load_problem("oscillator-2d");
    const TimeGrid grid(s.T, 40);
    const auto c = ControlProcess::constant(grid, v1(1.0));
    const auto a = simulate_ensemble(s, c, grid, 3000, 8, 1);
    const auto b = simulate_ensemble(s, c, grid, 3000, 8, 4);
    EXPECT_TRUE(same_states(a, b));
    const auto ea = a.estimate(40, [](std::span<const double> x) { return x[0]; });
    set_default_workers(3);
    const auto eb = b.estimate(40, [](std::span<const double> x) { return x[0]; });
    set_default_workers(1);
    EXPECT_EQ(ea.mean, eb.mean);
    EXPECT_EQ(ea.se, eb.se);
}

TEST(Simulate, EulerMeanOfLinearDecay) {
    // dX = -X dt + 0.5 dW: the scheme's mean is exactly (1 - dt)^N, whose gap to
    // e^-1 halves with the step.
    ProblemDefinition def = registry_problem("example2");
    def.b = {"-x"};
    def.sigma = {"0.5"};
    def.x0 = {1.0};
    def.alpha = 2.0;
    const ProblemSpec s = build_problem(def);
    double prev = INFINITY;
    for (int N : {10, 20, 40}) {
        const TimeGrid grid(1.0, N);
        const auto ens = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 20000, 6);
        const Estimate e = estimate_expectation(ens, s.phi, N);
        const double scheme = std::pow(1.0 - 1.0 / N, N);
        EXPECT_NEAR(e.mean, scheme, 4.0 * e.se) << N;
        const double bias = std::abs(scheme - std::exp(-1.0));
        EXPECT_LT(bias, prev);
        prev = bias;
    }
}

TEST(Simulate, InvalidPathsAreCounted) {
    ProblemDefinition def = registry_problem("example2");
    def.b = {"log(x - 0.9)"};
    def.alpha = 10.0;
    def.x0 = {1.0};
    const ProblemSpec s = build_problem(def);
    const TimeGrid grid(1.0, 50);
    EXPECT_THROW(simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 500, 2), std::runtime_error);
}

TEST(Simulate, CsvDump) {
    const ProblemSpec s = load_problem("example2");
    const TimeGrid grid(1.0, 4);
    const auto ens = simulate_ensemble(s, ControlProcess::constant(grid, v1(1.0)), grid, 2, 1);
    std::ostringstream out;
    write_ensemble_csv(ens, out);
    const std::string text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "path,step,t,x_1");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 2 * 5);
}
