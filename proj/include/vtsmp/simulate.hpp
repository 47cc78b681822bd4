#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "vtsmp/problem.hpp"

namespace vtsmp {

/// Uniform grid t_i = i*T/N, i = 0..N.
class TimeGrid {
public:
    TimeGrid(double T, int N);

    double T() const { return T_; }
    int N() const { return N_; }
    double dt() const { return dt_; }
    double t(int i) const { return i == N_ ? T_ : i * dt_; }
    /// Index of the node closest to t, clamped to [0, N].
    int nearest_node(double t) const;
    /// Largest i with t_i <= t (up to rounding), clamped to [0, N].
    int node_below(double t) const;

private:
    double T_;
    int N_;
    double dt_;
};

/// The spike actually applied after snapping to the grid.
struct SpikeInfo {
    std::vector<double> u;
    double tau_requested = 0.0;
    double eps_requested = 0.0;
    int first_step = 0;  // spike active on steps [first_step, end_step)
    int end_step = 0;
    double tau = 0.0;  // snapped window [tau, tau + eps]
    double eps = 0.0;
    bool clamped = false;  // window was cut at T
};

/// Piecewise-constant control: one value per grid interval [t_i, t_{i+1}).
class ControlProcess {
public:
    static ControlProcess constant(const TimeGrid& grid, const Vector& u);
    /// values[j] holds on the j-th of values.size() equal-length sub-intervals of
    /// [0, T]; step i uses values[floor(i * n / N)].
    static ControlProcess piecewise(const TimeGrid& grid, const std::vector<Vector>& values);

    const TimeGrid& grid() const { return grid_; }
    int dim() const { return k_; }

    /// Effective control on step i, spike included.
    std::span<const double> at(int step) const {
        if (spike_ && step >= spike_->first_step && step < spike_->end_step) return spike_->u;
        return base(step);
    }
    std::span<const double> base(int step) const {
        return {values_.data() + static_cast<std::size_t>(step) * static_cast<std::size_t>(k_),
                static_cast<std::size_t>(k_)};
    }
    Vector at_vector(int step) const;
    bool in_spike(int step) const { return spike_ && step >= spike_->first_step && step < spike_->end_step; }

    const std::optional<SpikeInfo>& spike() const { return spike_; }
    ControlProcess without_spike() const;

    /// Throws ValidationError unless every value used lies in U.
    void check_in(const ControlDomain& U) const;

private:
    friend ControlProcess with_spike(const ProblemSpec&, const ControlProcess&, const Vector&, double, double);
    ControlProcess(const TimeGrid& grid, int k) : grid_(grid), k_(k) {}

    TimeGrid grid_;
    int k_ = 1;
    std::vector<double> values_;  // N x k, row-major
    std::optional<SpikeInfo> spike_;
};

/// Overlays u on [tau, tau + eps]. tau is rounded to the nearest node, the width
/// to a whole number of steps (at least one), and the window is cut at T.
ControlProcess with_spike(const ProblemSpec& spec, const ControlProcess& base, const Vector& u, double tau,
                          double eps);

/// Mean with its standard error. se is NaN for a single stochastic path.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

class PathEnsemble {
public:
    PathEnsemble(const TimeGrid& grid, int paths, int m, int d, std::uint64_t seed, bool deterministic);

    const TimeGrid& grid() const { return grid_; }
    int paths() const { return M_; }
    int m() const { return m_; }
    int d() const { return d_; }
    std::uint64_t seed() const { return seed_; }
    /// Zero diffusion: a single path stands for the whole ensemble.
    bool deterministic() const { return deterministic_; }

    std::span<const double> state(int path, int step) const {
        return {states_.data() + offset(path, step), static_cast<std::size_t>(m_)};
    }
    std::span<double> state(int path, int step) {
        return {states_.data() + offset(path, step), static_cast<std::size_t>(m_)};
    }
    /// Brownian increment of (path, step), regenerated from the counter-based stream.
    void increment(int path, int step, double* out) const;

    bool valid(int path) const { return valid_[static_cast<std::size_t>(path)] != 0; }
    void set_invalid(int path) { valid_[static_cast<std::size_t>(path)] = 0; }
    int valid_count() const;

    /// Mean and SE over valid paths of fn(state at step).
    Estimate estimate(int step, const std::function<double(std::span<const double>)>& fn) const;

private:
    std::size_t offset(int path, int step) const {
        return (static_cast<std::size_t>(path) * static_cast<std::size_t>(grid_.N() + 1) + static_cast<std::size_t>(step)) *
               static_cast<std::size_t>(m_);
    }

    TimeGrid grid_;
    int M_;
    int m_;
    int d_;
    std::uint64_t seed_;
    bool deterministic_;
    std::vector<double> states_;
    std::vector<unsigned char> valid_;
};

/// Scratch space for the step functions; one per thread.
struct StepWorkspace {
    explicit StepWorkspace(const ProblemSpec& spec);
    std::vector<double> b, sigma, k1, k2, k3, k4, tmp;
};

/// X + b dt + sigma dW.
void euler_step(const ProblemSpec& spec, std::span<const double> x, std::span<const double> u, double dt,
                const double* dW, double* out, StepWorkspace& ws);
/// Classical Runge-Kutta step of dX = b dt with u frozen.
void rk4_step(const ProblemSpec& spec, std::span<const double> x, std::span<const double> u, double dt, double* out,
              StepWorkspace& ws);

/// Euler-Maruyama paths, or a single RK4 path when the diffusion is identically
/// zero. Paths hitting a domain error are flagged invalid; more than 0.1% invalid
/// throws.
PathEnsemble simulate_ensemble(const ProblemSpec& spec, const ControlProcess& control, const TimeGrid& grid,
                               int paths, std::uint64_t seed, int workers = 0);

/// Mean of functional(X(t_step)) with SE. Deterministic ensembles report SE 0.
Estimate estimate_expectation(const PathEnsemble& ensemble, const CoefficientExpr& functional, int step);

/// CSV with header path,step,t,x_1..x_m.
void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& out);

}  // namespace vtsmp
