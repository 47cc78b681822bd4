#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "vtsmp/simulate.hpp"

namespace vtsmp {

/// Below this |h| (curve units per time) the terminal-time rate is unreliable.
inline constexpr double kHMin = 1e-6;

/// h(t_i) = E[l(X(t_i), u(t_i))] with SE, at every node. The control used at
/// t_i is the one of the step starting there (the last node reuses step N-1).
struct ConstraintRate {
    std::vector<double> t;
    std::vector<double> h;
    std::vector<double> se;

    /// Linear interpolation in t.
    double at(double time) const;
};

ConstraintRate constraint_rate(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control);

/// Sample mean of phi(X(t_i)) next to phi(x0) + trapezoidal integral of h.
struct MeanCurve {
    std::vector<double> t;
    std::vector<double> mean;
    std::vector<double> se;
    std::vector<double> integrated_mean;
    std::vector<double> integrated_se;
};

MeanCurve mean_constraint_curve(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control);
/// Curve without the integrated-rate column (left empty).
MeanCurve mean_curve_only(const ProblemSpec& spec, const PathEnsemble& ensemble);

enum class TerminalCase { Interior, AtHorizon, NoCrossing };

/// "i", "ii" or "iii".
std::string case_label(TerminalCase c);

struct TerminalTimeEstimate {
    double tau = 0.0;
    TerminalCase kind = TerminalCase::NoCrossing;
    double se = 0.0;           // crossing SE in time units
    double curve_value = 0.0;  // mean curve at tau
    double margin = 0.0;       // |curve(T) - alpha|
    double delta = 0.0;        // curve tolerance used for the boundary decision
    double se_at_T = 0.0;
    bool graze = false;
};

/// First time the curve reaches alpha, by node scan and linear interpolation.
TerminalTimeEstimate hitting_time(const MeanCurve& curve, double alpha, double T);

struct CaseDiagnostics {
    TerminalCase kind = TerminalCase::NoCrossing;
    double margin = 0.0;
    double se = 0.0;
    double h_at_tau = 0.0;
    bool graze = false;
};

/// Throws std::domain_error when |h(tau)| < kHMin in cases (i)/(ii): the
/// terminal-time sensitivity divides by h(tau).
CaseDiagnostics classify_case(const TerminalTimeEstimate& estimate, const ConstraintRate& rate);

/// CSV with header t,mean,se,lemma1_mean.
void write_curve_csv(const MeanCurve& curve, std::ostream& out);

}  // namespace vtsmp
