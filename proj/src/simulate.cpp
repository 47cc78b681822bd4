#include "vtsmp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "vtsmp/parallel.hpp"
#include "vtsmp/rng.hpp"

namespace vtsmp {

TimeGrid::TimeGrid(double T, int N) : T_(T), N_(N), dt_(T / N) {
    if (!(T > 0.0) || !std::isfinite(T)) throw ValidationError("horizon T must be positive");
    if (N < 2) throw ValidationError("grid needs N >= 2 steps");
}

int TimeGrid::nearest_node(double t) const {
    const double i = std::nearbyint(t / dt_);
    return static_cast<int>(std::clamp(i, 0.0, static_cast<double>(N_)));
}

int TimeGrid::node_below(double t) const {
    const double i = std::floor(t / dt_ + 1e-9);
    return static_cast<int>(std::clamp(i, 0.0, static_cast<double>(N_)));
}

// ---------------------------------------------------------------------------

ControlProcess ControlProcess::constant(const TimeGrid& grid, const Vector& u) {
    ControlProcess c(grid, static_cast<int>(u.size()));
    c.values_.resize(static_cast<std::size_t>(grid.N()) * static_cast<std::size_t>(c.k_));
    for (int i = 0; i < grid.N(); ++i) {
        std::copy(u.data(), u.data() + c.k_, c.values_.begin() + static_cast<std::ptrdiff_t>(i) * c.k_);
    }
    return c;
}

ControlProcess ControlProcess::piecewise(const TimeGrid& grid, const std::vector<Vector>& values) {
    if (values.empty()) throw ValidationError("piecewise control needs at least one value");
    const int n = static_cast<int>(values.size());
    ControlProcess c(grid, static_cast<int>(values.front().size()));
    c.values_.resize(static_cast<std::size_t>(grid.N()) * static_cast<std::size_t>(c.k_));
    for (int i = 0; i < grid.N(); ++i) {
        const auto j = static_cast<std::size_t>(static_cast<long long>(i) * n / grid.N());
        if (values[j].size() != c.k_) throw ValidationError("control values have inconsistent dimension");
        std::copy(values[j].data(), values[j].data() + c.k_, c.values_.begin() + static_cast<std::ptrdiff_t>(i) * c.k_);
    }
    return c;
}

Vector ControlProcess::at_vector(int step) const {
    const auto s = at(step);
    return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

ControlProcess ControlProcess::without_spike() const {
    ControlProcess c = *this;
    c.spike_.reset();
    return c;
}

void ControlProcess::check_in(const ControlDomain& U) const {
    if (U.dim() != k_) throw ValidationError("control dimension does not match the problem");
    Vector u(k_);
    const double* last = nullptr;
    for (int i = 0; i < grid_.N(); ++i) {
        const double* v = values_.data() + static_cast<std::ptrdiff_t>(i) * k_;
        if (last != nullptr && std::equal(v, v + k_, last)) continue;
        last = v;
        u = Eigen::Map<const Vector>(v, k_);
        if (!U.contains(u)) throw ValidationError("control value outside U");
    }
    if (spike_ && !U.contains(Eigen::Map<const Vector>(spike_->u.data(), k_))) {
        throw ValidationError("spike value outside U");
    }
}

ControlProcess with_spike(const ProblemSpec& spec, const ControlProcess& base, const Vector& u, double tau,
                          double eps) {
    const TimeGrid& grid = base.grid();
    if (u.size() != spec.k || !spec.U.contains(u)) throw ValidationError("spike value outside U");
    if (!(tau >= 0.0) || !(tau < grid.T())) throw ValidationError("spike start must satisfy 0 <= tau < T");
    if (!(eps > 0.0)) throw ValidationError("spike width must be positive");

    SpikeInfo s;
    s.u.assign(u.data(), u.data() + u.size());
    s.tau_requested = tau;
    s.eps_requested = eps;
    s.first_step = std::min(grid.nearest_node(tau), grid.N() - 1);
    const int width = std::max(1, static_cast<int>(std::nearbyint(eps / grid.dt())));
    s.end_step = s.first_step + width;
    if (s.end_step > grid.N()) {
        s.end_step = grid.N();
        s.clamped = true;
    }
    s.tau = grid.t(s.first_step);
    s.eps = grid.t(s.end_step) - s.tau;

    ControlProcess c = base;
    c.spike_ = std::move(s);
    return c;
}

// ---------------------------------------------------------------------------

PathEnsemble::PathEnsemble(const TimeGrid& grid, int paths, int m, int d, std::uint64_t seed, bool deterministic)
    : grid_(grid), M_(paths), m_(m), d_(d), seed_(seed), deterministic_(deterministic) {
    if (paths < 1) throw ValidationError("path count must be at least 1");
    states_.assign(static_cast<std::size_t>(paths) * static_cast<std::size_t>(grid.N() + 1) * static_cast<std::size_t>(m),
                   0.0);
    valid_.assign(static_cast<std::size_t>(paths), 1);
}

void PathEnsemble::increment(int path, int step, double* out) const {
    if (deterministic_) {
        std::fill(out, out + d_, 0.0);
        return;
    }
    brownian_increment(seed_, static_cast<std::uint64_t>(path), step, d_, std::sqrt(grid_.dt()), out);
}

int PathEnsemble::valid_count() const {
    return static_cast<int>(std::count(valid_.begin(), valid_.end(), static_cast<unsigned char>(1)));
}

Estimate PathEnsemble::estimate(int step, const std::function<double(std::span<const double>)>& fn) const {
    const std::size_t M = static_cast<std::size_t>(M_);
    // Welford per chunk, merged in chunk order (Chan et al.).
    struct Moments {
        double n = 0.0;
        double mean = 0.0;
        double m2 = 0.0;
    };
    std::vector<Moments> parts(chunk_count(M));
    for_each_chunk(M, [&](std::size_t c, std::size_t lo, std::size_t hi) {
        Moments w;
        for (std::size_t p = lo; p < hi; ++p) {
            if (!valid_[p]) continue;
            const double v = fn(state(static_cast<int>(p), step));
            w.n += 1.0;
            const double dv = v - w.mean;
            w.mean += dv / w.n;
            w.m2 += dv * (v - w.mean);
        }
        parts[c] = w;
    });
    Moments all;
    for (const auto& w : parts) {
        if (w.n == 0.0) continue;
        const double n = all.n + w.n;
        const double dv = w.mean - all.mean;
        all.mean += dv * w.n / n;
        all.m2 += w.m2 + dv * dv * all.n * w.n / n;
        all.n = n;
    }
    Estimate e;
    e.mean = all.n > 0.0 ? all.mean : std::numeric_limits<double>::quiet_NaN();
    if (deterministic_) {
        e.se = 0.0;
    } else if (all.n < 2.0) {
        e.se = std::numeric_limits<double>::quiet_NaN();
    } else {
        e.se = std::sqrt(all.m2 / (all.n - 1.0) / all.n);
    }
    return e;
}

// ---------------------------------------------------------------------------

StepWorkspace::StepWorkspace(const ProblemSpec& spec)
    : b(static_cast<std::size_t>(spec.m)),
      sigma(static_cast<std::size_t>(spec.m * spec.d)),
      k1(static_cast<std::size_t>(spec.m)),
      k2(static_cast<std::size_t>(spec.m)),
      k3(static_cast<std::size_t>(spec.m)),
      k4(static_cast<std::size_t>(spec.m)),
      tmp(static_cast<std::size_t>(spec.m)) {}

void euler_step(const ProblemSpec& spec, std::span<const double> x, std::span<const double> u, double dt,
                const double* dW, double* out, StepWorkspace& ws) {
    const int m = spec.m;
    const int d = spec.d;
    spec.b.eval(x, u, ws.b);
    spec.sigma.eval(x, u, ws.sigma);
    for (int i = 0; i < m; ++i) {
        double v = x[static_cast<std::size_t>(i)] + ws.b[static_cast<std::size_t>(i)] * dt;
        for (int j = 0; j < d; ++j) v += ws.sigma[static_cast<std::size_t>(i * d + j)] * dW[j];
        out[i] = v;
    }
}

void rk4_step(const ProblemSpec& spec, std::span<const double> x, std::span<const double> u, double dt, double* out,
              StepWorkspace& ws) {
    const auto m = static_cast<std::size_t>(spec.m);
    spec.b.eval(x, u, ws.k1);
    for (std::size_t i = 0; i < m; ++i) ws.tmp[i] = x[i] + 0.5 * dt * ws.k1[i];
    spec.b.eval(ws.tmp, u, ws.k2);
    for (std::size_t i = 0; i < m; ++i) ws.tmp[i] = x[i] + 0.5 * dt * ws.k2[i];
    spec.b.eval(ws.tmp, u, ws.k3);
    for (std::size_t i = 0; i < m; ++i) ws.tmp[i] = x[i] + dt * ws.k3[i];
    spec.b.eval(ws.tmp, u, ws.k4);
    for (std::size_t i = 0; i < m; ++i) out[i] = x[i] + dt / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
}

PathEnsemble simulate_ensemble(const ProblemSpec& spec, const ControlProcess& control, const TimeGrid& grid,
                               int paths, std::uint64_t seed, int workers) {
    if (control.grid().N() != grid.N() || control.grid().T() != grid.T()) {
        throw ValidationError("control is not defined on the simulation grid");
    }
    control.check_in(spec.U);
    const bool det = spec.deterministic();
    PathEnsemble ens(grid, det ? 1 : paths, spec.m, spec.d, seed, det);
    const int N = grid.N();
    const double dt = grid.dt();

    for_each_chunk(
        static_cast<std::size_t>(ens.paths()),
        [&](std::size_t, std::size_t lo, std::size_t hi) {
            StepWorkspace ws(spec);
            std::vector<double> dW(static_cast<std::size_t>(spec.d));
            for (std::size_t pp = lo; pp < hi; ++pp) {
                const int p = static_cast<int>(pp);
                auto x0 = ens.state(p, 0);
                std::copy(spec.x0.data(), spec.x0.data() + spec.m, x0.begin());
                try {
                    for (int i = 0; i < N; ++i) {
                        auto cur = std::as_const(ens).state(p, i);
                        double* next = ens.state(p, i + 1).data();
                        if (det) {
                            rk4_step(spec, cur, control.at(i), dt, next, ws);
                        } else {
                            ens.increment(p, i, dW.data());
                            euler_step(spec, cur, control.at(i), dt, dW.data(), next, ws);
                        }
                        for (int a = 0; a < spec.m; ++a) {
                            if (!std::isfinite(next[a])) throw DomainError("non-finite state");
                        }
                    }
                } catch (const DomainError&) {
                    ens.set_invalid(p);
                    for (int i = 0; i <= N; ++i) {
                        auto s = ens.state(p, i);
                        std::fill(s.begin(), s.end(), std::numeric_limits<double>::quiet_NaN());
                    }
                }
            }
        },
        workers);

    const int bad = ens.paths() - ens.valid_count();
    if (static_cast<double>(bad) > 0.001 * ens.paths()) {
        throw std::runtime_error("simulation failed: " + std::to_string(bad) + " of " + std::to_string(ens.paths()) +
                                 " paths left the coefficient domain");
    }
    return ens;
}

Estimate estimate_expectation(const PathEnsemble& ensemble, const CoefficientExpr& functional, int step) {
    if (functional.rows() != 1 || functional.cols() != 1) throw ValidationError("functional must be scalar");
    if (functional.entry(0).depends_on(VarKind::Control)) throw ValidationError("functional must not depend on u");
    if (step < 0 || step > ensemble.grid().N()) throw ValidationError("time is not a grid node");
    return ensemble.estimate(step, [&](std::span<const double> x) { return functional.eval_scalar(x, {}); });
}

void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& out) {
    out << "path,step,t";
    for (int a = 0; a < ensemble.m(); ++a) out << ",x_" << (a + 1);
    out << '\n';
    char buf[32];
    for (int p = 0; p < ensemble.paths(); ++p) {
        for (int i = 0; i <= ensemble.grid().N(); ++i) {
            out << p << ',' << i;
            std::snprintf(buf, sizeof buf, ",%.17g", ensemble.grid().t(i));
            out << buf;
            for (double v : ensemble.state(p, i)) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                out << buf;
            }
            out << '\n';
        }
    }
}

}  // namespace vtsmp
