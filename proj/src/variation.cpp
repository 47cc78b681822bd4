#include "vtsmp/variation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vtsmp/parallel.hpp"
#include "vtsmp/rng.hpp"

namespace vtsmp {

namespace {

using Buf = std::vector<double>;

std::size_t sz(int n) { return static_cast<std::size_t>(n); }

// Drift and diffusion with their x-derivatives, in the flat layouts of ProblemSpec.
struct Flat {
    Buf b, bx, bxx, s, sx, sxx;
    explicit Flat(const ProblemSpec& spec)
        : b(sz(spec.m)),
          bx(sz(spec.m * spec.m)),
          bxx(sz(spec.m * spec.m * spec.m)),
          s(sz(spec.m * spec.d)),
          sx(sz(spec.m * spec.d * spec.m)),
          sxx(sz(spec.m * spec.d * spec.m * spec.m)) {}

    void fill(const ProblemSpec& spec, std::span<const double> x, std::span<const double> u, bool with_diffusion) {
        spec.b.eval(x, u, b);
        spec.b_x.eval(x, u, bx);
        spec.b_xx.eval(x, u, bxx);
        if (with_diffusion) {
            spec.sigma.eval(x, u, s);
            spec.sigma_x.eval(x, u, sx);
            spec.sigma_xx.eval(x, u, sxx);
        }
    }
};

// Advances X, X^eps, y1 and y2 of one path through the grid.
class Propagator {
public:
    Propagator(const ProblemSpec& spec, const ControlProcess& spiked, std::uint64_t seed)
        : spec_(spec),
          spiked_(spiked),
          seed_(seed),
          det_(spec.deterministic()),
          m_(spec.m),
          d_(spec.d),
          D_(spec),
          E_(spec),
          ws_(spec),
          xbar_(sz(m_)),
          xeps_(sz(m_)),
          y1_(sz(m_)),
          y2_(sz(m_)),
          dW_(sz(d_)),
          tmp_(sz(m_)) {
        for (auto& v : k_) v.assign(sz(3 * m_), 0.0);
        z_.assign(sz(3 * m_), 0.0);
        stage_.assign(sz(3 * m_), 0.0);
        n1_.assign(sz(m_), 0.0);
        n2_.assign(sz(m_), 0.0);
    }

    void reset() {
        std::copy(spec_.x0.data(), spec_.x0.data() + m_, xbar_.begin());
        std::copy(spec_.x0.data(), spec_.x0.data() + m_, xeps_.begin());
        std::fill(y1_.begin(), y1_.end(), 0.0);
        std::fill(y2_.begin(), y2_.end(), 0.0);
    }

    void step(int path, int i) {
        const double dt = spiked_.grid().dt();
        const auto u = spiked_.base(i);
        const auto ue = spiked_.at(i);
        const bool spike = spiked_.in_spike(i);
        if (det_) {
            step_rk4(u, ue, spike, dt);
            rk4_step(spec_, xeps_, ue, dt, tmp_.data(), ws_);
            xeps_.swap(tmp_);
            return;
        }
        brownian_increment(seed_, static_cast<std::uint64_t>(path), i, d_, std::sqrt(dt), dW_.data());
        D_.fill(spec_, xbar_, u, true);
        if (spike) E_.fill(spec_, xbar_, ue, true);
        Buf& n1 = n1_;
        Buf& n2 = n2_;
        for (int r = 0; r < m_; ++r) {
            double a1 = 0.0;  // drift of y1
            double a2 = 0.0;  // drift of y2
            for (int a = 0; a < m_; ++a) {
                a1 += D_.bx[sz(r * m_ + a)] * y1_[sz(a)];
                a2 += D_.bx[sz(r * m_ + a)] * y2_[sz(a)];
                for (int c = 0; c < m_; ++c) a2 += 0.5 * D_.bxx[sz((r * m_ + a) * m_ + c)] * y1_[sz(a)] * y1_[sz(c)];
                if (spike) a2 += (E_.bx[sz(r * m_ + a)] - D_.bx[sz(r * m_ + a)]) * y1_[sz(a)];
            }
            if (spike) a1 += E_.b[sz(r)] - D_.b[sz(r)];
            double v1 = y1_[sz(r)] + a1 * dt;
            double v2 = y2_[sz(r)] + a2 * dt;
            for (int j = 0; j < d_; ++j) {
                const int row = r * d_ + j;
                double s1 = 0.0;
                double s2 = 0.0;
                for (int a = 0; a < m_; ++a) {
                    s1 += D_.sx[sz(row * m_ + a)] * y1_[sz(a)];
                    s2 += D_.sx[sz(row * m_ + a)] * y2_[sz(a)];
                    for (int c = 0; c < m_; ++c) {
                        s2 += 0.5 * D_.sxx[sz((row * m_ + a) * m_ + c)] * y1_[sz(a)] * y1_[sz(c)];
                    }
                    if (spike) s2 += (E_.sx[sz(row * m_ + a)] - D_.sx[sz(row * m_ + a)]) * y1_[sz(a)];
                }
                if (spike) s1 += E_.s[sz(row)] - D_.s[sz(row)];
                v1 += s1 * dW_[sz(j)];
                v2 += s2 * dW_[sz(j)];
            }
            n1[sz(r)] = v1;
            n2[sz(r)] = v2;
        }
        y1_.swap(n1);
        y2_.swap(n2);
        euler_step(spec_, xbar_, u, dt, dW_.data(), tmp_.data(), ws_);
        xbar_.swap(tmp_);
        euler_step(spec_, xeps_, ue, dt, dW_.data(), tmp_.data(), ws_);
        xeps_.swap(tmp_);
    }

    const Buf& xbar() const { return xbar_; }
    const Buf& xeps() const { return xeps_; }
    const Buf& y1() const { return y1_; }
    const Buf& y2() const { return y2_; }

private:
    // d/dt (X, y1, y2) for a zero-diffusion problem
    void rhs(const Buf& z, std::span<const double> u, std::span<const double> ue, bool spike, Buf& out) {
        std::span<const double> x(z.data(), sz(m_));
        D_.fill(spec_, x, u, false);
        if (spike) E_.fill(spec_, x, ue, false);
        const double* y1 = z.data() + m_;
        for (int r = 0; r < m_; ++r) {
            double a1 = spike ? E_.b[sz(r)] - D_.b[sz(r)] : 0.0;
            double a2 = 0.0;
            for (int a = 0; a < m_; ++a) {
                a1 += D_.bx[sz(r * m_ + a)] * y1[a];
                a2 += D_.bx[sz(r * m_ + a)] * z[sz(2 * m_ + a)];
                for (int c = 0; c < m_; ++c) a2 += 0.5 * D_.bxx[sz((r * m_ + a) * m_ + c)] * y1[a] * y1[c];
                if (spike) a2 += (E_.bx[sz(r * m_ + a)] - D_.bx[sz(r * m_ + a)]) * y1[a];
            }
            out[sz(r)] = D_.b[sz(r)];
            out[sz(m_ + r)] = a1;
            out[sz(2 * m_ + r)] = a2;
        }
    }

    void step_rk4(std::span<const double> u, std::span<const double> ue, bool spike, double dt) {
        const int n = 3 * m_;
        for (int r = 0; r < m_; ++r) {
            z_[sz(r)] = xbar_[sz(r)];
            z_[sz(m_ + r)] = y1_[sz(r)];
            z_[sz(2 * m_ + r)] = y2_[sz(r)];
        }
        Buf& stage = stage_;
        rhs(z_, u, ue, spike, k_[0]);
        for (int r = 0; r < n; ++r) stage[sz(r)] = z_[sz(r)] + 0.5 * dt * k_[0][sz(r)];
        rhs(stage, u, ue, spike, k_[1]);
        for (int r = 0; r < n; ++r) stage[sz(r)] = z_[sz(r)] + 0.5 * dt * k_[1][sz(r)];
        rhs(stage, u, ue, spike, k_[2]);
        for (int r = 0; r < n; ++r) stage[sz(r)] = z_[sz(r)] + dt * k_[2][sz(r)];
        rhs(stage, u, ue, spike, k_[3]);
        for (int r = 0; r < n; ++r) {
            z_[sz(r)] += dt / 6.0 * (k_[0][sz(r)] + 2.0 * k_[1][sz(r)] + 2.0 * k_[2][sz(r)] + k_[3][sz(r)]);
        }
        for (int r = 0; r < m_; ++r) {
            xbar_[sz(r)] = z_[sz(r)];
            y1_[sz(r)] = z_[sz(m_ + r)];
            y2_[sz(r)] = z_[sz(2 * m_ + r)];
        }
    }

    const ProblemSpec& spec_;
    const ControlProcess& spiked_;
    std::uint64_t seed_;
    bool det_;
    int m_;
    int d_;
    Flat D_;
    Flat E_;
    StepWorkspace ws_;
    Buf xbar_, xeps_, y1_, y2_, dW_, tmp_, z_, stage_;
    Buf n1_, n2_;
    Buf k_[4];
};

double sq_norm(const Buf& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

}  // namespace

VariationalPair::VariationalPair(const TimeGrid& grid, int paths, int m, SpikeInfo spike)
    : grid_(grid), M_(paths), m_(m), spike_(std::move(spike)) {
    const std::size_t n = sz(paths) * sz(grid.N() + 1) * sz(m);
    y1_.assign(n, 0.0);
    y2_.assign(n, 0.0);
}

Matrix VariationalPair::interpolate(const std::vector<double>& y, double t) const {
    const int i = std::min(grid_.node_below(t), grid_.N() - 1);
    const double w = std::clamp((t - grid_.t(i)) / grid_.dt(), 0.0, 1.0);
    Matrix out(M_, m_);
    for (int p = 0; p < M_; ++p) {
        for (int a = 0; a < m_; ++a) {
            out(p, a) = (1.0 - w) * y[offset(p, i) + sz(a)] + w * y[offset(p, i + 1) + sz(a)];
        }
    }
    return out;
}

Matrix VariationalPair::y1_at(double t) const { return interpolate(y1_, t); }
Matrix VariationalPair::y2_at(double t) const { return interpolate(y2_, t); }

VariationalPair solve_variational(const ProblemSpec& spec, const PathEnsemble& base, const ControlProcess& spiked,
                                  int workers) {
    if (!spiked.spike()) throw std::invalid_argument("control carries no spike");
    const TimeGrid& grid = base.grid();
    if (spiked.grid().N() != grid.N()) throw std::invalid_argument("spiked control is on a different grid");
    VariationalPair pair(grid, base.paths(), spec.m, *spiked.spike());
    for_each_chunk(
        sz(base.paths()),
        [&](std::size_t, std::size_t lo, std::size_t hi) {
            Propagator prop(spec, spiked, base.seed());
            for (std::size_t pp = lo; pp < hi; ++pp) {
                const int p = static_cast<int>(pp);
                prop.reset();
                for (int i = 0; i < grid.N(); ++i) {
                    prop.step(p, i);
                    std::copy(prop.y1().begin(), prop.y1().end(), pair.y1(p, i + 1).begin());
                    std::copy(prop.y2().begin(), prop.y2().end(), pair.y2(p, i + 1).begin());
                }
            }
        },
        workers);
    return pair;
}

std::vector<std::string> moment_names() {
    return {"remainder_sq_over_eps2", "y1_sq_over_eps", "y2_sq_over_eps2", "y1_4_over_eps2", "y2_4_over_eps4"};
}

std::vector<MomentRow> moment_check(const ProblemSpec& spec, const ControlProcess& base, const Vector& u, double tau,
                                    const std::vector<double>& ladder, int paths, std::uint64_t seed, int workers) {
    const TimeGrid& grid = base.grid();
    const int M = spec.deterministic() ? 1 : paths;
    const int nodes = grid.N() + 1;
    std::vector<MomentRow> rows;
    for (double eps : ladder) {
        const ControlProcess spiked = with_spike(spec, base, u, tau, eps);
        const std::size_t nch = chunk_count(sz(M));
        // per chunk, per node: 5 sums
        std::vector<double> sums(nch * sz(nodes) * 5, 0.0);
        for_each_chunk(
            sz(M),
            [&](std::size_t ch, std::size_t lo, std::size_t hi) {
                Propagator prop(spec, spiked, seed);
                Buf rem(sz(spec.m));
                double* s = sums.data() + ch * sz(nodes) * 5;
                for (std::size_t pp = lo; pp < hi; ++pp) {
                    prop.reset();
                    for (int i = 0; i < grid.N(); ++i) {
                        prop.step(static_cast<int>(pp), i);
                        for (int a = 0; a < spec.m; ++a) {
                            rem[sz(a)] = prop.xeps()[sz(a)] - prop.xbar()[sz(a)] - prop.y1()[sz(a)] - prop.y2()[sz(a)];
                        }
                        const double y1s = sq_norm(prop.y1());
                        const double y2s = sq_norm(prop.y2());
                        double* row = s + sz(i + 1) * 5;
                        row[0] += sq_norm(rem);
                        row[1] += y1s;
                        row[2] += y2s;
                        row[3] += y1s * y1s;
                        row[4] += y2s * y2s;
                    }
                }
            },
            workers);
        double sup[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < nodes; ++i) {
            for (int q = 0; q < 5; ++q) {
                double total = 0.0;
                for (std::size_t ch = 0; ch < nch; ++ch) total += sums[(ch * sz(nodes) + sz(i)) * 5 + sz(q)];
                sup[q] = std::max(sup[q], total / M);
            }
        }
        MomentRow r;
        r.eps = spiked.spike()->eps;
        const double e = r.eps;
        r.remainder = sup[0] / (e * e);
        r.y1_sq = sup[1] / e;
        r.y2_sq = sup[2] / (e * e);
        r.y1_4 = sup[3] / (e * e);
        r.y2_4 = sup[4] / (e * e * e * e);
        rows.push_back(r);
    }
    return rows;
}

bool moments_bounded(const std::vector<MomentRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto prev = rows[i - 1].ratios();
        const auto cur = rows[i].ratios();
        for (std::size_t q = 0; q < prev.size(); ++q) {
            if (!(cur[q] <= 1.5 * std::max(prev[q], 1e-8))) return false;
        }
    }
    return true;
}

RateEstimate tau_rate_empirical(const ProblemSpec& spec, const ControlProcess& base, const Vector& u, double tau,
                                const std::vector<double>& ladder, int paths, std::uint64_t seed, int workers) {
    for (std::size_t i = 1; i < ladder.size(); ++i) {
        if (!(ladder[i] < ladder[i - 1])) throw std::invalid_argument("epsilon ladder must be decreasing");
    }
    const TimeGrid& grid = base.grid();
    const ControlProcess ubar = base.without_spike();
    const PathEnsemble ens = simulate_ensemble(spec, ubar, grid, paths, seed, workers);
    const MeanCurve curve = mean_curve_only(spec, ens);
    const TerminalTimeEstimate est = hitting_time(curve, spec.alpha, grid.T());
    RateEstimate out;
    out.tau_bar = est.tau;
    out.kind = est.kind;
    const ConstraintRate rate = constraint_rate(spec, ens, ubar);
    out.h_at_tau = rate.at(est.tau);
    if (est.kind == TerminalCase::NoCrossing) return out;  // limit 0, no ladder
    classify_case(est, rate);

    for (double eps : ladder) {
        const ControlProcess spiked = with_spike(spec, ubar, u, tau, eps);
        const PathEnsemble se = simulate_ensemble(spec, spiked, grid, paths, seed, workers);
        const TerminalTimeEstimate te = hitting_time(mean_curve_only(spec, se), spec.alpha, grid.T());
        RateEntry e;
        e.eps_requested = eps;
        e.eps = spiked.spike()->eps;
        e.tau_eps = te.tau;
        e.slope = (est.tau - te.tau) / e.eps;
        e.slope_se = std::sqrt(est.se * est.se + te.se * te.se) / e.eps;
        e.branch = te.kind == TerminalCase::Interior ? "rate" : "zero";
        (e.branch == "rate" ? out.rate_branch : out.zero_branch) += 1;
        out.ladder.push_back(e);
    }

    const std::size_t n = out.ladder.size();
    if (n == 1) {
        out.limit = out.ladder[0].slope;
        out.limit_se = out.ladder[0].slope_se;
    } else if (n > 1) {
        // least squares slope = a + b eps; a = sum w_i slope_i
        double mx = 0.0;
        for (const auto& e : out.ladder) mx += e.eps;
        mx /= static_cast<double>(n);
        double sxx = 0.0;
        for (const auto& e : out.ladder) sxx += (e.eps - mx) * (e.eps - mx);
        double var = 0.0;
        for (const auto& e : out.ladder) {
            const double w = 1.0 / static_cast<double>(n) - mx * (e.eps - mx) / sxx;
            out.limit += w * e.slope;
            var += w * w * e.slope_se * e.slope_se;
        }
        out.limit_se = std::sqrt(var);
    }
    for (std::size_t i = 1; i < n; ++i) {
        const double prev = std::abs(est.tau - out.ladder[i - 1].tau_eps);
        const double cur = std::abs(est.tau - out.ladder[i].tau_eps);
        if (cur > prev + 1e-12) out.shrinking = false;
    }
    return out;
}

Estimate tau_rate_theoretical(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first0,
                              const SecondOrderAdjoint& second0, double tau, const Vector& u, double h_at_tau_bar,
                              bool driverless) {
    if (!(std::abs(h_at_tau_bar) >= kHMin)) {
        throw std::domain_error("terminal-time rate hypothesis violated: |h(tau)| < h_min");
    }
    const KernelEstimate k = k_tau(spec, path, first0, second0, tau, u);
    const Estimate& e = driverless ? k.driverless : k.full;
    return {e.mean / h_at_tau_bar, e.se / std::abs(h_at_tau_bar)};
}

void write_rate_csv(const RateEstimate& rate, std::ostream& out) {
    out << "epsilon,tau_eps,slope,branch\n";
    char buf[96];
    for (const auto& e : rate.ladder) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", e.eps, e.tau_eps, e.slope);
        out << buf << e.branch << '\n';
    }
}

}  // namespace vtsmp
