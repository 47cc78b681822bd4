#include "vtsmp/smp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "vtsmp/parallel.hpp"
#include "vtsmp/rng.hpp"

namespace vtsmp {

namespace {

std::size_t sz(int n) { return static_cast<std::size_t>(n); }

}  // namespace

std::vector<double> path_costs(const ProblemSpec& spec, const ControlProcess& control, const PathEnsemble& ensemble,
                               double tau) {
    const TimeGrid& grid = ensemble.grid();
    const int n = grid.node_below(tau);
    const double dt = grid.dt();
    const bool on_node = std::abs(grid.t(n) - tau) <= 1e-12 * std::max(1.0, grid.T());
    const double frac = on_node ? 0.0 : (tau - grid.t(n)) / dt;
    std::vector<double> J(sz(ensemble.paths()), std::numeric_limits<double>::quiet_NaN());
    const std::vector<double> none(sz(spec.k), 0.0);
    for_each_chunk(sz(ensemble.paths()), [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> xt(sz(spec.m));
        for (std::size_t pp = lo; pp < hi; ++pp) {
            const int p = static_cast<int>(pp);
            if (!ensemble.valid(p)) continue;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const auto u = control.at(i);
                acc += 0.5 * dt * (spec.f.eval_scalar(ensemble.state(p, i), u) + spec.f.eval_scalar(ensemble.state(p, i + 1), u));
            }
            const auto xn = ensemble.state(p, n);
            if (on_node) {
                std::copy(xn.begin(), xn.end(), xt.begin());
            } else {
                const auto x1 = ensemble.state(p, n + 1);
                for (int a = 0; a < spec.m; ++a) xt[sz(a)] = xn[sz(a)] + frac * (x1[sz(a)] - xn[sz(a)]);
                const auto u = control.at(n);
                acc += 0.5 * (tau - grid.t(n)) * (spec.f.eval_scalar(xn, u) + spec.f.eval_scalar(xt, u));
            }
            acc += spec.g.eval_scalar(xt, none);
            J[pp] = acc;
        }
    });
    J.erase(std::remove_if(J.begin(), J.end(), [](double v) { return std::isnan(v); }), J.end());
    return J;
}

Estimate cost_functional(const ProblemSpec& spec, const ControlProcess& control, const PathEnsemble& ensemble,
                         double tau) {
    return mean_and_se(path_costs(spec, control, ensemble, tau), ensemble.deterministic());
}

// ---------------------------------------------------------------------------

SMPReport check_smp(const ProblemSpec& spec, const SMPInputs& in, int tau_points) {
    if (in.path == nullptr || in.first == nullptr || in.second == nullptr) {
        throw std::invalid_argument("maximum-principle scan needs the cost adjoints");
    }
    if (tau_points < 1) throw std::invalid_argument("tau grid needs at least one point");
    const AdjointPath& path = *in.path;
    const bool with_term = in.kind != TerminalCase::NoCrossing;
    const bool without_term = in.kind != TerminalCase::Interior;
    if (with_term) {
        if (in.first0 == nullptr || in.second0 == nullptr) {
            throw std::invalid_argument("cases (i)/(ii) need the constraint adjoints");
        }
        if (!(std::abs(in.h_at_tau) >= kHMin)) {
            throw std::domain_error("terminal-time rate hypothesis violated: |h(tau)| < h_min");
        }
    }

    SMPReport rep;
    rep.kind = in.kind;
    rep.tau_bar = path.t.back();
    rep.h_at_tau = in.h_at_tau;
    rep.R = with_term ? r_tau(spec, path) : Estimate{};
    rep.controls = spec.U.evaluation_points(32);
    for (int i = 0; i < tau_points; ++i) {
        rep.taus.push_back(tau_points == 1 ? rep.tau_bar : rep.tau_bar * i / (tau_points - 1));
    }

    const int m = spec.m;
    const int d = spec.d;
    const int M = path.paths;
    std::vector<double> base(sz(M));
    std::vector<double> full(sz(M));
    for (double tau : rep.taus) {
        const int node = path.node_at(tau);
        const Vector& ubar = path.u[sz(node)];
        for (std::size_t c = 0; c < rep.controls.size(); ++c) {
            const Vector& u = rep.controls[c];
            std::vector<double> k;
            if (with_term) k = k_tau_paths(spec, path, *in.first0, *in.second0, node, u);
            for (int r = 0; r < M; ++r) {
                const Vector x = path.X[sz(node)].row(r).transpose();
                const Vector p = in.first->p_at(node, r);
                const Matrix K = in.first->K_at(node, r, m, d);
                const Matrix ds = spec.sigma.eval_matrix(x, u) - spec.sigma.eval_matrix(x, ubar);
                const double v = hamiltonian(spec, x, u, p, K, AdjointKind::Cost).value -
                                 hamiltonian(spec, x, ubar, p, K, AdjointKind::Cost).value +
                                 0.5 * (ds.transpose() * in.second->P_at(node, r, m) * ds).trace();
                base[sz(r)] = v;
                if (with_term) full[sz(r)] = v + k[sz(r)] / in.h_at_tau * rep.R.mean;
            }
            SMPCell cell;
            cell.tau = tau;
            cell.node = node;
            cell.control = static_cast<int>(c);
            auto fill = [&](const std::vector<double>& vals, Estimate& est, double& tol, double& viol) {
                est = mean_and_se(vals, path.deterministic);
                const double se = std::isfinite(est.se) ? est.se : 0.0;
                tol = 1e-6 + 3.0 * se;
                const auto below = std::count_if(vals.begin(), vals.end(), [&](double v) { return v < -tol; });
                viol = static_cast<double>(below) / static_cast<double>(vals.size());
            };
            if (with_term) fill(full, cell.with_term, cell.tol_with, cell.violation_with);
            if (without_term) fill(base, cell.without_term, cell.tol_without, cell.violation_without);
            rep.cells.push_back(cell);
        }
    }

    auto summarize = [&](bool use_with) {
        SMPVariant v;
        v.name = use_with ? "with_term" : "without_term";
        v.min_lhs = std::numeric_limits<double>::infinity();
        v.pass = true;
        for (const auto& cell : rep.cells) {
            const Estimate& e = use_with ? cell.with_term : cell.without_term;
            const double tol = use_with ? cell.tol_with : cell.tol_without;
            const double viol = use_with ? cell.violation_with : cell.violation_without;
            if (e.mean < v.min_lhs) {
                v.min_lhs = e.mean;
                v.argmin_tau = cell.tau;
                v.argmin_u = rep.controls[sz(cell.control)];
                v.tol_at_min = tol;
            }
            v.max_violation = std::max(v.max_violation, viol);
            if (e.mean < -tol || viol > 1e-3) v.pass = false;
        }
        return v;
    };
    if (with_term) rep.variants.push_back(summarize(true));
    if (without_term) rep.variants.push_back(summarize(false));
    // case (ii): the two inequalities are alternatives
    rep.pass = false;
    for (const auto& v : rep.variants) rep.pass = rep.pass || v.pass;
    if (rep.variants.size() == 1) rep.pass = rep.variants.front().pass;
    return rep;
}

void write_smp_csv(const SMPReport& report, std::ostream& out) {
    const bool with = report.kind != TerminalCase::NoCrossing;
    out << "tau,u,lhs,se\n";
    char buf[128];
    for (const auto& cell : report.cells) {
        const Estimate& e = with ? cell.with_term : cell.without_term;
        std::snprintf(buf, sizeof buf, "%.17g,", cell.tau);
        out << buf;
        const Vector& u = report.controls[sz(cell.control)];
        for (Eigen::Index a = 0; a < u.size(); ++a) {
            std::snprintf(buf, sizeof buf, "%s%.17g", a == 0 ? "" : " ", u(a));
            out << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", e.mean, e.se);
        out << buf;
    }
}

// ---------------------------------------------------------------------------

std::vector<int> BruteForceResult::decode(std::uint64_t index) const {
    const auto base = static_cast<std::uint64_t>(points.size());
    std::vector<int> digits(sz(intervals));
    for (int j = intervals - 1; j >= 0; --j) {
        digits[sz(j)] = static_cast<int>(index % base);
        index /= base;
    }
    return digits;
}

namespace {

// Depth-first enumeration; states up to the current interval are shared by
// every control with the same prefix.
class Enumerator {
public:
    Enumerator(const ProblemSpec& spec, const TimeGrid& grid, int intervals, int paths, std::uint64_t seed, int workers,
               BruteForceResult& result)
        : spec_(spec),
          grid_(grid),
          n_(intervals),
          M_(spec.deterministic() ? 1 : paths),
          seed_(seed),
          workers_(workers),
          res_(result),
          det_(spec.deterministic()) {
        const int N = grid.N();
        first_step_.resize(sz(n_ + 1));
        for (int j = 0; j <= n_; ++j) {
            // smallest step s with floor(s n / N) >= j
            first_step_[sz(j)] = static_cast<int>((static_cast<long long>(j) * N + n_ - 1) / n_);
        }
        X_.assign(sz(N + 1) * sz(M_) * sz(spec.m), 0.0);
        F_.assign(sz(N + 1) * sz(M_), 0.0);
        curve_.t.resize(sz(N + 1));
        curve_.mean.resize(sz(N + 1));
        curve_.se.resize(sz(N + 1));
        for (int i = 0; i <= N; ++i) curve_.t[sz(i)] = grid.t(i);
        for (int p = 0; p < M_; ++p) {
            std::copy(spec.x0.data(), spec.x0.data() + spec.m, x(0, p));
        }
        set_curve(0);
        digits_.assign(sz(n_), 0);
        if (spec.candidate) {
            for (std::size_t c = 0; c < res_.points.size(); ++c) {
                if (res_.points[c] == *spec.candidate) candidate_digit_ = static_cast<int>(c);
            }
        }
    }

    void run() { descend(0, 0); }

private:
    double* x(int node, int path) { return X_.data() + (sz(node) * sz(M_) + sz(path)) * sz(spec_.m); }

    void set_curve(int node) {
        const std::size_t nch = chunk_count(sz(M_));
        std::vector<double> s(nch, 0.0), s2(nch, 0.0);
        const std::vector<double> none(sz(spec_.k), 0.0);
        for_each_chunk(
            sz(M_),
            [&](std::size_t c, std::size_t lo, std::size_t hi) {
                for (std::size_t p = lo; p < hi; ++p) {
                    const double v =
                        spec_.phi.eval_scalar(std::span<const double>(x(node, static_cast<int>(p)), sz(spec_.m)), none);
                    s[c] += v;
                    s2[c] += v * v;
                }
            },
            workers_);
        double a = 0.0, b = 0.0;
        for (std::size_t c = 0; c < nch; ++c) {
            a += s[c];
            b += s2[c];
        }
        const double mean = a / M_;
        curve_.mean[sz(node)] = mean;
        curve_.se[sz(node)] =
            (det_ || M_ < 2) ? 0.0 : std::sqrt(std::max(0.0, (b - M_ * mean * mean) / (M_ - 1.0)) / M_);
    }

    void propagate(int j, const Vector& u) {
        const int lo_step = first_step_[sz(j)];
        const int hi_step = first_step_[sz(j + 1)];
        const double dt = grid_.dt();
        const std::span<const double> us(u.data(), sz(spec_.k));
        for_each_chunk(
            sz(M_),
            [&](std::size_t, std::size_t lo, std::size_t hi) {
                StepWorkspace ws(spec_);
                std::vector<double> dW(sz(spec_.d));
                for (std::size_t pp = lo; pp < hi; ++pp) {
                    const int p = static_cast<int>(pp);
                    for (int i = lo_step; i < hi_step; ++i) {
                        std::span<const double> cur(x(i, p), sz(spec_.m));
                        if (det_) {
                            rk4_step(spec_, cur, us, dt, x(i + 1, p), ws);
                        } else {
                            brownian_increment(seed_, static_cast<std::uint64_t>(p), i, spec_.d, std::sqrt(dt), dW.data());
                            euler_step(spec_, cur, us, dt, dW.data(), x(i + 1, p), ws);
                        }
                        const double f0 = spec_.f.eval_scalar(cur, us);
                        const double f1 = spec_.f.eval_scalar(std::span<const double>(x(i + 1, p), sz(spec_.m)), us);
                        F_[sz(i + 1) * sz(M_) + pp] = F_[sz(i) * sz(M_) + pp] + 0.5 * dt * (f0 + f1);
                    }
                }
            },
            workers_);
        for (int i = lo_step + 1; i <= hi_step; ++i) set_curve(i);
    }

    void descend(int j, std::uint64_t prefix) {
        const auto base = static_cast<std::uint64_t>(res_.points.size());
        if (j == n_) {
            leaf(prefix);
            return;
        }
        for (std::size_t c = 0; c < res_.points.size(); ++c) {
            digits_[sz(j)] = static_cast<int>(c);
            propagate(j, res_.points[c]);
            descend(j + 1, prefix * base + c);
        }
    }

    void leaf(std::uint64_t index) {
        const TerminalTimeEstimate est = hitting_time(curve_, spec_.alpha, grid_.T());
        const double tau = est.tau;
        const int n = grid_.node_below(tau);
        const bool on_node = std::abs(grid_.t(n) - tau) <= 1e-12 * std::max(1.0, grid_.T());
        const double frac = on_node ? 0.0 : (tau - grid_.t(n)) / grid_.dt();
        const int interval = on_node ? 0 : std::min(n_ - 1, static_cast<int>(static_cast<long long>(n) * n_ / grid_.N()));
        const Vector& un = res_.points[sz(digits_[sz(interval)])];
        const std::span<const double> us(un.data(), sz(spec_.k));
        const std::vector<double> none(sz(spec_.k), 0.0);
        std::vector<double> J(sz(M_));
        for_each_chunk(
            sz(M_),
            [&](std::size_t, std::size_t lo, std::size_t hi) {
                std::vector<double> xt(sz(spec_.m));
                for (std::size_t pp = lo; pp < hi; ++pp) {
                    const int p = static_cast<int>(pp);
                    double acc = F_[sz(n) * sz(M_) + pp];
                    const double* xn = x(n, p);
                    if (on_node) {
                        std::copy(xn, xn + spec_.m, xt.begin());
                    } else {
                        const double* x1 = x(n + 1, p);
                        for (int a = 0; a < spec_.m; ++a) xt[sz(a)] = xn[a] + frac * (x1[a] - xn[a]);
                        acc += 0.5 * (tau - grid_.t(n)) *
                               (spec_.f.eval_scalar(std::span<const double>(xn, sz(spec_.m)), us) + spec_.f.eval_scalar(xt, us));
                    }
                    J[pp] = acc + spec_.g.eval_scalar(xt, none);
                }
            },
            workers_);
        BruteForceRow row;
        row.index = index;
        row.tau = tau;
        row.J = mean_and_se(J, det_);
        res_.table.push_back(row);
        if (res_.table.size() == 1 || row.J.mean < res_.best_J.mean) {
            res_.best_J = row.J;
            res_.best_index = index;
            res_.best_tau = tau;
            best_paths_ = J;
        }
        if (candidate_digit_ >= 0 &&
            std::all_of(digits_.begin(), digits_.end(), [&](int dgt) { return dgt == candidate_digit_; })) {
            candidate_paths_ = J;
            res_.has_candidate = true;
            res_.candidate_J = row.J;
        }
    }

public:
    const std::vector<double>& best_paths() const { return best_paths_; }
    const std::vector<double>& candidate_paths() const { return candidate_paths_; }

private:
    const ProblemSpec& spec_;
    const TimeGrid& grid_;
    int n_;
    int M_;
    std::uint64_t seed_;
    int workers_;
    BruteForceResult& res_;
    bool det_;
    std::vector<int> first_step_;
    std::vector<double> X_;
    std::vector<double> F_;
    MeanCurve curve_;
    std::vector<int> digits_;
    int candidate_digit_ = -1;
    std::vector<double> best_paths_;
    std::vector<double> candidate_paths_;
};

}  // namespace

BruteForceResult brute_force_search(const ProblemSpec& spec, const TimeGrid& grid, int intervals, int paths,
                                    std::uint64_t seed, int workers) {
    if (intervals < 1) throw std::invalid_argument("brute force needs at least one interval");
    if (intervals > grid.N()) throw std::invalid_argument("more intervals than grid steps");
    BruteForceResult res;
    res.intervals = intervals;
    res.points = spec.U.evaluation_points(32);
    double combos = 1.0;
    for (int j = 0; j < intervals; ++j) combos *= static_cast<double>(res.points.size());
    if (combos > static_cast<double>(kBruteForceBudget)) {
        throw std::length_error("brute force budget exceeded: " + std::to_string(res.points.size()) + "^" +
                                std::to_string(intervals) + " controls > 2^20");
    }
    Enumerator e(spec, grid, intervals, paths, seed, workers, res);
    e.run();
    res.best = res.decode(res.best_index);
    if (res.has_candidate) {
        std::vector<double> diff(e.best_paths().size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = e.best_paths()[i] - e.candidate_paths()[i];
        const Estimate m = mean_and_se(diff, spec.deterministic());
        res.margin = m.mean;
        res.margin_se = std::isfinite(m.se) ? m.se : 0.0;
    }
    return res;
}

void write_brute_force_csv(const BruteForceResult& result, std::ostream& out) {
    out << "index,controls,tau,J,se\n";
    char buf[128];
    for (const auto& row : result.table) {
        out << row.index << ',';
        const auto digits = result.decode(row.index);
        for (std::size_t j = 0; j < digits.size(); ++j) {
            const Vector& u = result.points[sz(digits[j])];
            for (Eigen::Index a = 0; a < u.size(); ++a) {
                std::snprintf(buf, sizeof buf, "%s%.17g", (j == 0 && a == 0) ? "" : " ", u(a));
                out << buf;
            }
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", row.tau, row.J.mean, row.J.se);
        out << buf;
    }
}

}  // namespace vtsmp
