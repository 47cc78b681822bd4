#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vtsmp/adjoint.hpp"
#include "vtsmp/simulate.hpp"
#include "vtsmp/terminal.hpp"

namespace vtsmp {

/// y1, y2 on the full grid for every path, driven by the same increments as the
/// base ensemble.
class VariationalPair {
public:
    VariationalPair(const TimeGrid& grid, int paths, int m, SpikeInfo spike);

    const TimeGrid& grid() const { return grid_; }
    int paths() const { return M_; }
    int m() const { return m_; }
    const SpikeInfo& spike() const { return spike_; }

    std::span<double> y1(int path, int step) { return {y1_.data() + offset(path, step), static_cast<std::size_t>(m_)}; }
    std::span<double> y2(int path, int step) { return {y2_.data() + offset(path, step), static_cast<std::size_t>(m_)}; }
    std::span<const double> y1(int path, int step) const {
        return {y1_.data() + offset(path, step), static_cast<std::size_t>(m_)};
    }
    std::span<const double> y2(int path, int step) const {
        return {y2_.data() + offset(path, step), static_cast<std::size_t>(m_)};
    }

    /// Values at time t (paths x m), interpolated linearly between nodes.
    Matrix y1_at(double t) const;
    Matrix y2_at(double t) const;

private:
    std::size_t offset(int path, int step) const {
        return (static_cast<std::size_t>(path) * static_cast<std::size_t>(grid_.N() + 1) + static_cast<std::size_t>(step)) *
               static_cast<std::size_t>(m_);
    }
    Matrix interpolate(const std::vector<double>& y, double t) const;

    TimeGrid grid_;
    int M_;
    int m_;
    SpikeInfo spike_;
    std::vector<double> y1_;
    std::vector<double> y2_;
};

/// Integrates the first- and second-order variational equations along the
/// base ensemble. `spiked` carries the spike; its base must be the control the
/// ensemble was simulated with. Zero-diffusion problems use RK4 on (X, y1, y2).
VariationalPair solve_variational(const ProblemSpec& spec, const PathEnsemble& base, const ControlProcess& spiked,
                                  int workers = 0);

/// Normalized sup-in-time moments for one spike width.
struct MomentRow {
    double eps = 0.0;  // width actually applied
    double remainder = 0.0;  // eps^-2 sup E|X^eps - X - y1 - y2|^2
    double y1_sq = 0.0;      // eps^-1 sup E|y1|^2
    double y2_sq = 0.0;      // eps^-2 sup E|y2|^2
    double y1_4 = 0.0;       // eps^-2 sup E|y1|^4
    double y2_4 = 0.0;       // eps^-4 sup E|y2|^4

    std::vector<double> ratios() const { return {remainder, y1_sq, y2_sq, y1_4, y2_4}; }
};

std::vector<std::string> moment_names();

/// One row per width, all under the same seed.
std::vector<MomentRow> moment_check(const ProblemSpec& spec, const ControlProcess& base, const Vector& u, double tau,
                                    const std::vector<double>& ladder, int paths, std::uint64_t seed, int workers = 0);

/// ratio(eps/2) <= 1.5 max(ratio(eps), 1e-8) for every consecutive pair of rows.
bool moments_bounded(const std::vector<MomentRow>& rows);

struct RateEntry {
    double eps_requested = 0.0;
    double eps = 0.0;
    double tau_eps = 0.0;
    double slope = 0.0;
    double slope_se = 0.0;
    std::string branch;  // "rate" when the spiked curve crosses before T, "zero" otherwise
};

struct RateEstimate {
    double tau_bar = 0.0;
    TerminalCase kind = TerminalCase::Interior;
    double h_at_tau = 0.0;
    std::vector<RateEntry> ladder;
    double limit = 0.0;  // intercept of the least-squares line slope ~ eps
    double limit_se = 0.0;
    bool shrinking = true;  // |tau_bar - tau_eps| decreases along the ladder
    int rate_branch = 0;
    int zero_branch = 0;
};

/// Empirical (tau_bar - tau^eps) / eps along a decreasing ladder, common random
/// numbers throughout. Case (iii) reports a limit of exactly 0.
RateEstimate tau_rate_empirical(const ProblemSpec& spec, const ControlProcess& base, const Vector& u, double tau,
                                const std::vector<double>& ladder, int paths, std::uint64_t seed, int workers = 0);

/// E[k(tau)] / h(tau_bar); `driverless` uses the kernel with p0 = K0 = P0 = 0.
Estimate tau_rate_theoretical(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first0,
                              const SecondOrderAdjoint& second0, double tau, const Vector& u, double h_at_tau_bar,
                              bool driverless = false);

/// CSV: epsilon,tau_eps,slope,branch.
void write_rate_csv(const RateEstimate& rate, std::ostream& out);

}  // namespace vtsmp
