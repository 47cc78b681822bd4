#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "vtsmp/adjoint.hpp"
#include "vtsmp/terminal.hpp"

namespace vtsmp {

/// J = E[int_0^tau f(X, u) dt + g(X(tau))], trapezoidal in time with a partial
/// last step.
Estimate cost_functional(const ProblemSpec& spec, const ControlProcess& control, const PathEnsemble& ensemble,
                         double tau);

/// Per-path costs behind cost_functional.
std::vector<double> path_costs(const ProblemSpec& spec, const ControlProcess& control, const PathEnsemble& ensemble,
                               double tau);

struct SMPCell {
    double tau = 0.0;
    int node = 0;
    int control = 0;  // index into SMPReport::controls
    Estimate with_term;
    Estimate without_term;
    double violation_with = 0.0;  // fraction of paths below -tol
    double violation_without = 0.0;
    double tol_with = 0.0;
    double tol_without = 0.0;
};

struct SMPVariant {
    std::string name;  // "with_term" or "without_term"
    double min_lhs = 0.0;
    double argmin_tau = 0.0;
    Vector argmin_u;
    double tol_at_min = 0.0;
    double max_violation = 0.0;
    bool pass = false;
};

struct SMPReport {
    TerminalCase kind = TerminalCase::Interior;
    double tau_bar = 0.0;
    double h_at_tau = 0.0;
    Estimate R;
    std::vector<double> taus;
    std::vector<Vector> controls;
    std::vector<SMPCell> cells;
    std::vector<SMPVariant> variants;
    bool pass = false;  // every reported variant passes
};

/// Inputs for the maximum-principle scan. first0/second0 may be null in case (iii).
struct SMPInputs {
    const AdjointPath* path = nullptr;
    const AdjointSolution* first = nullptr;
    const SecondOrderAdjoint* second = nullptr;
    const AdjointSolution* first0 = nullptr;
    const SecondOrderAdjoint* second0 = nullptr;
    TerminalCase kind = TerminalCase::Interior;
    double h_at_tau = 0.0;
};

/// Scans LHS(tau, u) = H(X,u) - H(X,ubar) [+ k/h R] + 1/2 tr[dsigma' P dsigma]
/// over `tau_points` equally spaced times in [0, tau_bar] and the evaluation
/// points of U. A cell passes when its mean is >= -(1e-6 + 3 SE) and at most
/// 0.1% of paths fall below that band.
SMPReport check_smp(const ProblemSpec& spec, const SMPInputs& in, int tau_points);

/// CSV: tau,u,lhs,se (the with-term variant when present).
void write_smp_csv(const SMPReport& report, std::ostream& out);

struct BruteForceRow {
    std::uint64_t index = 0;  // enumeration index; digit j (base |U|) is interval j
    double tau = 0.0;
    Estimate J;
};

struct BruteForceResult {
    int intervals = 0;
    std::vector<Vector> points;  // control values enumerated per interval
    std::vector<int> best;       // point index per interval
    std::uint64_t best_index = 0;
    Estimate best_J;
    double best_tau = 0.0;
    bool has_candidate = false;
    Estimate candidate_J;
    double margin = 0.0;  // best J - candidate J (paired)
    double margin_se = 0.0;
    std::vector<BruteForceRow> table;

    std::vector<int> decode(std::uint64_t index) const;
};

inline constexpr std::uint64_t kBruteForceBudget = std::uint64_t{1} << 20;

/// Exhaustive search over controls constant on `intervals` equal pieces of
/// [0, T], all under the same noise. Ties keep the first control enumerated.
BruteForceResult brute_force_search(const ProblemSpec& spec, const TimeGrid& grid, int intervals, int paths,
                                    std::uint64_t seed, int workers = 0);

/// CSV: index,controls,tau,J,se.
void write_brute_force_csv(const BruteForceResult& result, std::ostream& out);

}  // namespace vtsmp
