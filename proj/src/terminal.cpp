#include "vtsmp/terminal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "vtsmp/parallel.hpp"

namespace vtsmp {

double ConstraintRate::at(double time) const {
    if (t.empty()) return 0.0;
    if (time <= t.front()) return h.front();
    if (time >= t.back()) return h.back();
    const auto it = std::upper_bound(t.begin(), t.end(), time);
    const auto i = static_cast<std::size_t>(it - t.begin());
    const double w = (time - t[i - 1]) / (t[i] - t[i - 1]);
    return (1.0 - w) * h[i - 1] + w * h[i];
}

ConstraintRate constraint_rate(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control) {
    const int N = ensemble.grid().N();
    ConstraintRate r;
    r.t.resize(static_cast<std::size_t>(N + 1));
    r.h.resize(r.t.size());
    r.se.resize(r.t.size());
    for (int i = 0; i <= N; ++i) {
        const auto u = control.at(std::min(i, N - 1));
        const Estimate e =
            ensemble.estimate(i, [&](std::span<const double> x) { return spec.l.eval_scalar(x, u); });
        if (!std::isfinite(e.mean)) throw std::domain_error("constraint rate is not finite at t = " + std::to_string(ensemble.grid().t(i)));
        r.t[static_cast<std::size_t>(i)] = ensemble.grid().t(i);
        r.h[static_cast<std::size_t>(i)] = e.mean;
        r.se[static_cast<std::size_t>(i)] = std::isfinite(e.se) ? e.se : 0.0;
    }
    return r;
}

MeanCurve mean_curve_only(const ProblemSpec& spec, const PathEnsemble& ensemble) {
    const int N = ensemble.grid().N();
    MeanCurve c;
    for (int i = 0; i <= N; ++i) {
        const Estimate e =
            ensemble.estimate(i, [&](std::span<const double> x) { return spec.phi.eval_scalar(x, {}); });
        c.t.push_back(ensemble.grid().t(i));
        c.mean.push_back(e.mean);
        c.se.push_back(std::isfinite(e.se) ? e.se : 0.0);
    }
    return c;
}

MeanCurve mean_constraint_curve(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control) {
    MeanCurve c = mean_curve_only(spec, ensemble);
    const int N = ensemble.grid().N();
    const double dt = ensemble.grid().dt();
    const double phi0 = spec.phi.eval_scalar(std::span<const double>(spec.x0.data(), static_cast<std::size_t>(spec.m)), {});

    // Integrate the per-path trapezoid sums so the SE accounts for the
    // correlation of h across nodes.
    const int M = ensemble.paths();
    const std::size_t nodes = static_cast<std::size_t>(N + 1);
    const std::size_t nchunks = chunk_count(static_cast<std::size_t>(M));
    std::vector<double> sum(nchunks * nodes, 0.0);
    std::vector<double> sumsq(nchunks * nodes, 0.0);
    std::vector<double> count(nchunks, 0.0);
    for_each_chunk(static_cast<std::size_t>(M), [&](std::size_t ch, std::size_t lo, std::size_t hi) {
        double* s = sum.data() + ch * nodes;
        double* s2 = sumsq.data() + ch * nodes;
        for (std::size_t pp = lo; pp < hi; ++pp) {
            const int p = static_cast<int>(pp);
            if (!ensemble.valid(p)) continue;
            count[ch] += 1.0;
            double integral = 0.0;
            double prev = spec.l.eval_scalar(ensemble.state(p, 0), control.at(0));
            for (int i = 1; i <= N; ++i) {
                // l is piecewise in u: both ends of step i-1 use u_{i-1}
                const double right = spec.l.eval_scalar(ensemble.state(p, i), control.at(i - 1));
                integral += 0.5 * dt * (prev + right);
                s[i] += integral;
                s2[i] += integral * integral;
                if (i == N) break;
                const auto ua = control.at(i - 1);
                const auto ub = control.at(i);
                prev = std::equal(ua.begin(), ua.end(), ub.begin()) ? right
                                                                    : spec.l.eval_scalar(ensemble.state(p, i), ub);
            }
        }
    });
    double n = 0.0;
    for (double v : count) n += v;
    c.integrated_mean.assign(nodes, phi0);
    c.integrated_se.assign(nodes, 0.0);
    for (std::size_t i = 1; i < nodes; ++i) {
        double s = 0.0;
        double s2 = 0.0;
        for (std::size_t ch = 0; ch < nchunks; ++ch) {
            s += sum[ch * nodes + i];
            s2 += sumsq[ch * nodes + i];
        }
        const double mean = s / n;
        c.integrated_mean[i] = phi0 + mean;
        if (!ensemble.deterministic() && n > 1.0) {
            const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
            c.integrated_se[i] = std::sqrt(var / n);
        }
    }
    return c;
}

std::string case_label(TerminalCase c) {
    switch (c) {
        case TerminalCase::Interior: return "i";
        case TerminalCase::AtHorizon: return "ii";
        case TerminalCase::NoCrossing: return "iii";
    }
    return "?";
}

TerminalTimeEstimate hitting_time(const MeanCurve& curve, double alpha, double T) {
    const std::size_t n = curve.mean.size();
    if (n < 2) throw std::invalid_argument("curve needs at least two nodes");
    for (double v : curve.mean) {
        if (!std::isfinite(v)) throw std::domain_error("mean curve has non-finite values");
    }
    TerminalTimeEstimate est;
    est.se_at_T = curve.se.back();
    est.delta = std::max(3.0 * est.se_at_T, 1e-9 * std::abs(alpha));
    est.margin = std::abs(curve.mean.back() - alpha);
    const double dt_node = curve.t[1] - curve.t[0];

    std::size_t hit = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (curve.mean[i] >= alpha) {
            hit = i;
            break;
        }
    }

    if (hit == n) {
        est.tau = T;
        est.curve_value = curve.mean.back();
        est.kind = curve.mean.back() >= alpha - est.delta ? TerminalCase::AtHorizon : TerminalCase::NoCrossing;
        return est;
    }
    if (hit == 0) {
        est.tau = curve.t[0];
        est.curve_value = curve.mean[0];
        est.kind = TerminalCase::Interior;
        return est;
    }
    const double y0 = curve.mean[hit - 1];
    const double y1 = curve.mean[hit];
    const double t0 = curve.t[hit - 1];
    const double t1 = curve.t[hit];
    const double w = (alpha - y0) / (y1 - y0);
    est.tau = t0 + w * (t1 - t0);
    est.curve_value = alpha;
    const double slope = (y1 - y0) / (t1 - t0);
    const double se_cross = (1.0 - w) * curve.se[hit - 1] + w * curve.se[hit];
    est.se = se_cross / slope;

    bool falls_back = false;
    for (std::size_t i = hit + 1; i < n; ++i) {
        if (curve.mean[i] < alpha - est.delta) {
            falls_back = true;
            break;
        }
    }
    est.graze = slope < kHMin || falls_back;
    est.kind = T - est.tau <= dt_node * (1.0 + 1e-9) ? TerminalCase::AtHorizon : TerminalCase::Interior;
    return est;
}

CaseDiagnostics classify_case(const TerminalTimeEstimate& estimate, const ConstraintRate& rate) {
    CaseDiagnostics d;
    d.kind = estimate.kind;
    d.margin = estimate.margin;
    d.se = estimate.se_at_T;
    d.graze = estimate.graze;
    d.h_at_tau = rate.at(estimate.tau);
    if (d.kind != TerminalCase::NoCrossing && !(std::abs(d.h_at_tau) >= kHMin)) {
        throw std::domain_error("terminal-time rate hypothesis violated: |h(tau)| = " + std::to_string(std::abs(d.h_at_tau)) +
                                " < h_min");
    }
    return d;
}

void write_curve_csv(const MeanCurve& curve, std::ostream& out) {
    out << "t,mean,se,lemma1_mean\n";
    char buf[128];
    for (std::size_t i = 0; i < curve.t.size(); ++i) {
        const double l1 = i < curve.integrated_mean.size() ? curve.integrated_mean[i] : std::nan("");
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", curve.t[i], curve.mean[i], curve.se[i], l1);
        out << buf;
    }
}

}  // namespace vtsmp
