#include "vtsmp/adjoint.hpp"

#include <cmath>
#include <cstdio>

#include "vtsmp/regression.hpp"

namespace vtsmp {

namespace {

const CoefficientExpr& running_x(const ProblemSpec& s, AdjointKind w) { return w == AdjointKind::Cost ? s.f_x : s.l_x; }
const CoefficientExpr& running_xx(const ProblemSpec& s, AdjointKind w) {
    return w == AdjointKind::Cost ? s.f_xx : s.l_xx;
}

Vector row_of(const Matrix& M, int r) { return M.row(r).transpose(); }

// K stored row-major as m*d entries
Matrix unpack(const Matrix& store, int path, int rows, int cols) {
    Matrix out(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) out(i, j) = store(path, i * cols + j);
    }
    return out;
}

void pack(const Matrix& value, Matrix& store, int path) {
    const int cols = static_cast<int>(value.cols());
    for (int i = 0; i < value.rows(); ++i) {
        for (int j = 0; j < cols; ++j) store(path, i * cols + j) = value(i, j);
    }
}

// -dp = D1 dt - K dW
Vector first_driver(const ProblemSpec& spec, AdjointKind which, const LocalDerivatives& ld, const Vector& x,
                    const Vector& u, const Vector& p, const Matrix& K) {
    Vector out = ld.b_x.transpose() * p + running_x(spec, which).eval_vector(x, u);
    for (int j = 0; j < spec.d; ++j) out += ld.sigma_x[static_cast<std::size_t>(j)].transpose() * K.col(j);
    return out;
}

Matrix hessian_H(const ProblemSpec& spec, AdjointKind which, const LocalDerivatives& ld, const Vector& x,
                 const Vector& u, const Vector& p, const Matrix& K) {
    Matrix out = running_xx(spec, which).eval_matrix(x, u);
    for (int i = 0; i < spec.m; ++i) {
        out += p(i) * ld.b_xx[static_cast<std::size_t>(i)];
        for (int j = 0; j < spec.d; ++j) {
            out += K(i, j) * ld.sigma_xx[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        }
    }
    return out;
}

// -dP = D2 dt - sum_j Q_j dW_j
Matrix second_driver(const ProblemSpec& spec, AdjointKind which, const LocalDerivatives& ld, const Vector& x,
                     const Vector& u, const Matrix& P, const std::vector<Matrix>& Q, const Vector& p, const Matrix& K) {
    Matrix out = ld.b_x.transpose() * P + P * ld.b_x + hessian_H(spec, which, ld, x, u, p, K);
    for (int j = 0; j < spec.d; ++j) {
        const Matrix& sx = ld.sigma_x[static_cast<std::size_t>(j)];
        out += sx.transpose() * P * sx;
        if (!Q.empty()) out += sx.transpose() * Q[static_cast<std::size_t>(j)] + Q[static_cast<std::size_t>(j)] * sx;
    }
    return out;
}

Vector first_terminal(const ProblemSpec& spec, AdjointKind which, const Vector& x) {
    if (which == AdjointKind::Constraint) return Vector::Zero(spec.m);
    return spec.g_x.eval_vector(x, Vector::Zero(spec.k));
}

Matrix second_terminal(const ProblemSpec& spec, AdjointKind which, const Vector& x) {
    if (which == AdjointKind::Constraint) return Matrix::Zero(spec.m, spec.m);
    return spec.g_xx.eval_matrix(x, Vector::Zero(spec.k));
}

struct AffineCoefficients {
    Matrix F;  // b_x
    Vector G;  // b(0, u)
    Matrix C;  // running_xx
    Vector e;  // running_x(0, u)
    Matrix S;  // sigma(u)
};

AffineCoefficients affine_at(const ProblemSpec& spec, AdjointKind which, const Vector& u) {
    const Vector& x0 = spec.x0;
    AffineCoefficients c;
    c.F = spec.b_x.eval_matrix(x0, u);
    c.G = spec.b.eval_vector(x0, u) - c.F * x0;
    c.C = running_xx(spec, which).eval_matrix(x0, u);
    c.e = running_x(spec, which).eval_vector(x0, u) - c.C * x0;
    c.S = spec.sigma.eval_matrix(x0, u);
    return c;
}

// One backward RK4 step of length h for dA/ds = F'A + AF + C, dB/ds = F'B + AG + e.
void affine_rk4(const AffineCoefficients& c, double h, Matrix& A, Vector& B) {
    auto fA = [&](const Matrix& a) -> Matrix { return c.F.transpose() * a + a * c.F + c.C; };
    auto fB = [&](const Matrix& a, const Vector& b) -> Vector { return c.F.transpose() * b + a * c.G + c.e; };
    const Matrix a1 = fA(A);
    const Vector b1 = fB(A, B);
    const Matrix A2 = A + 0.5 * h * a1;
    const Vector B2 = B + 0.5 * h * b1;
    const Matrix a2 = fA(A2);
    const Vector b2 = fB(A2, B2);
    const Matrix A3 = A + 0.5 * h * a2;
    const Vector B3 = B + 0.5 * h * b2;
    const Matrix a3 = fA(A3);
    const Vector b3 = fB(A3, B3);
    const Matrix A4 = A + h * a3;
    const Vector B4 = B + h * b3;
    const Matrix a4 = fA(A4);
    const Vector b4 = fB(A4, B4);
    A += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    B += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
}

// A(t_i), B(t_i) at every node of the path.
void affine_fields(const ProblemSpec& spec, const AdjointPath& path, AdjointKind which, std::vector<Matrix>& A,
                   std::vector<Vector>& B) {
    const int n = path.nodes();
    A.assign(static_cast<std::size_t>(n), Matrix::Zero(spec.m, spec.m));
    B.assign(static_cast<std::size_t>(n), Vector::Zero(spec.m));
    if (which == AdjointKind::Cost) {
        const Matrix Gamma = spec.g_xx.eval_matrix(spec.x0, Vector::Zero(spec.k));
        A.back() = Gamma;
        B.back() = spec.g_x.eval_vector(spec.x0, Vector::Zero(spec.k)) - Gamma * spec.x0;
    }
    for (int i = n - 2; i >= 0; --i) {
        const auto c = affine_at(spec, which, path.u[static_cast<std::size_t>(i)]);
        Matrix a = A[static_cast<std::size_t>(i + 1)];
        Vector b = B[static_cast<std::size_t>(i + 1)];
        affine_rk4(c, path.dt[static_cast<std::size_t>(i)], a, b);
        A[static_cast<std::size_t>(i)] = a;
        B[static_cast<std::size_t>(i)] = b;
    }
}

void check_backend(const ProblemSpec& spec, const AdjointPath& path, AdjointKind which, Backend backend) {
    if (backend == Backend::Ode && !affine_structure(spec, which) && !path.deterministic) {
        throw BackendError(
            "ode backend needs zero diffusion or an affine problem (sigma_x = 0, b affine, quadratic costs); "
            "use the regression backend");
    }
}

}  // namespace

int AdjointPath::node_at(double time) const {
    int idx = 0;
    const double tol = 1e-12 * std::max(1.0, std::abs(t.back()));
    for (int i = 0; i < nodes(); ++i) {
        if (t[static_cast<std::size_t>(i)] <= time + tol) idx = i;
    }
    return idx;
}

AdjointPath make_adjoint_path(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control,
                              double tau) {
    const TimeGrid& grid = ensemble.grid();
    if (!(tau >= 0.0) || tau > grid.T() * (1.0 + 1e-12)) throw std::invalid_argument("terminal time outside [0, T]");
    AdjointPath path;
    path.m = spec.m;
    path.d = spec.d;
    path.deterministic = ensemble.deterministic();

    std::vector<int> live;
    for (int p = 0; p < ensemble.paths(); ++p) {
        if (ensemble.valid(p)) live.push_back(p);
    }
    path.paths = static_cast<int>(live.size());
    const int M = path.paths;

    const int n = grid.node_below(tau);
    const double tol = 1e-12 * std::max(1.0, grid.T());
    const bool on_node = std::abs(grid.t(n) - tau) <= tol;
    const int N = grid.N();

    auto node_states = [&](int step) {
        Matrix X(M, spec.m);
        for (int r = 0; r < M; ++r) {
            const auto s = ensemble.state(live[static_cast<std::size_t>(r)], step);
            for (int a = 0; a < spec.m; ++a) X(r, a) = s[static_cast<std::size_t>(a)];
        }
        return X;
    };
    auto increments = [&](int step, double scale) {
        Matrix W(M, spec.d);
        std::vector<double> buf(static_cast<std::size_t>(spec.d));
        for (int r = 0; r < M; ++r) {
            ensemble.increment(live[static_cast<std::size_t>(r)], step, buf.data());
            for (int j = 0; j < spec.d; ++j) W(r, j) = scale * buf[static_cast<std::size_t>(j)];
        }
        return W;
    };

    for (int i = 0; i <= n; ++i) {
        path.t.push_back(on_node && i == n ? tau : grid.t(i));
        path.X.push_back(node_states(i));
        path.u.push_back(control.at_vector(std::min(i, N - 1)));
    }
    for (int i = 0; i < n; ++i) {
        path.dt.push_back(grid.dt());
        path.dW.push_back(increments(i, 1.0));
        path.dW_var.push_back(grid.dt());
    }
    if (!on_node) {
        const double frac = (tau - grid.t(n)) / grid.dt();
        Matrix X = path.X.back() + frac * (node_states(n + 1) - path.X.back());
        path.t.push_back(tau);
        path.X.push_back(std::move(X));
        path.u.push_back(control.at_vector(n));
        path.dt.push_back(tau - grid.t(n));
        path.dW.push_back(increments(n, frac));
        path.dW_var.push_back(frac * frac * grid.dt());
    }
    return path;
}

std::string backend_label(Backend b) { return b == Backend::Ode ? "ode" : "regression"; }

Matrix AdjointSolution::K_at(int node, int path, int m, int d) const {
    return unpack(K[static_cast<std::size_t>(node)], path, m, d);
}

Matrix SecondOrderAdjoint::P_at(int node, int path, int m) const {
    return unpack(P[static_cast<std::size_t>(node)], path, m, m);
}

bool affine_structure(const ProblemSpec& spec, AdjointKind which) {
    return spec.sigma_x.is_zero() && spec.b_x.independent_of_state() && running_xx(spec, which).independent_of_state() &&
           (which == AdjointKind::Constraint || spec.g_xx.independent_of_state());
}

AdjointSolution solve_first_adjoint(const ProblemSpec& spec, const AdjointPath& path, AdjointKind which,
                                    Backend backend, int degree) {
    check_backend(spec, path, which, backend);
    const int n = path.nodes();
    const int M = path.paths;
    const int m = spec.m;
    const int d = spec.d;
    AdjointSolution sol;
    sol.which = which;
    sol.backend = backend;
    sol.t = path.t;
    sol.p.assign(static_cast<std::size_t>(n), Matrix::Zero(M, m));
    sol.K.assign(static_cast<std::size_t>(n), Matrix::Zero(M, m * d));

    if (backend == Backend::Ode && affine_structure(spec, which)) {
        sol.method = "affine";
        std::vector<Matrix> A;
        std::vector<Vector> B;
        affine_fields(spec, path, which, A, B);
        for (int i = 0; i < n; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            sol.p[ii] = (path.X[ii] * A[ii].transpose()).rowwise() + B[ii].transpose();
            const Matrix S = spec.sigma.eval_matrix(spec.x0, path.u[ii]);
            const Matrix KS = A[ii] * S;
            for (int r = 0; r < M; ++r) pack(KS, sol.K[ii], r);
        }
        return sol;
    }

    const Matrix zeroK = Matrix::Zero(m, d);
    if (backend == Backend::Ode) {
        sol.method = "pathwise";
        for (int r = 0; r < M; ++r) {
            Vector p = first_terminal(spec, which, row_of(path.X.back(), r));
            sol.p.back().row(r) = p.transpose();
            for (int i = n - 2; i >= 0; --i) {
                const auto ii = static_cast<std::size_t>(i);
                const Vector& u = path.u[ii];
                const Vector x1 = row_of(path.X[ii + 1], r);
                const Vector x0 = row_of(path.X[ii], r);
                const double h = path.dt[ii];
                const Vector k1 = first_driver(spec, which, local_derivatives(spec, x1, u), x1, u, p, zeroK);
                const Vector pred = p + h * k1;
                const Vector k2 = first_driver(spec, which, local_derivatives(spec, x0, u), x0, u, pred, zeroK);
                p += 0.5 * h * (k1 + k2);
                sol.p[ii].row(r) = p.transpose();
            }
        }
        return sol;
    }

    sol.method = "regression";
    for (int r = 0; r < M; ++r) sol.p.back().row(r) = first_terminal(spec, which, row_of(path.X.back(), r)).transpose();
    for (int i = n - 2; i >= 0; --i) {
        const auto ii = static_cast<std::size_t>(i);
        const Matrix& next = sol.p[ii + 1];
        const Matrix& W = path.dW[ii];
        Matrix Z(M, m * d);
        for (int r = 0; r < M; ++r) {
            for (int a = 0; a < m; ++a) {
                for (int j = 0; j < d; ++j) Z(r, a * d + j) = next(r, a) * W(r, j) / path.dW_var[ii];
            }
        }
        sol.K[ii] = conditional_expectation(path.X[ii], Z, degree);
        Matrix target(M, m);
        const Vector& u = path.u[ii];
        const double h = path.dt[ii];
        for (int r = 0; r < M; ++r) {
            const Vector x = row_of(path.X[ii], r);
            const Vector p = row_of(next, r);
            const Matrix K = unpack(sol.K[ii], r, m, d);
            target.row(r) = (p + h * first_driver(spec, which, local_derivatives(spec, x, u), x, u, p, K)).transpose();
        }
        sol.p[ii] = conditional_expectation(path.X[ii], target, degree);
    }
    if (n >= 2) sol.K.back() = sol.K[static_cast<std::size_t>(n - 2)];
    return sol;
}

SecondOrderAdjoint solve_second_adjoint(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first,
                                        AdjointKind which, Backend backend, int degree) {
    check_backend(spec, path, which, backend);
    if (first.which != which || first.t.size() != path.t.size()) {
        throw std::invalid_argument("first-order adjoint does not match the requested system");
    }
    const int n = path.nodes();
    const int M = path.paths;
    const int m = spec.m;
    const int d = spec.d;
    SecondOrderAdjoint sol;
    sol.which = which;
    sol.backend = backend;
    sol.t = path.t;
    sol.P.assign(static_cast<std::size_t>(n), Matrix::Zero(M, m * m));
    sol.Q.assign(static_cast<std::size_t>(n), Matrix::Zero(M, d * m * m));

    if (backend == Backend::Ode && affine_structure(spec, which)) {
        // H_xx reduces to the constant running Hessian, so P solves the same
        // matrix equation as the linear part of p.
        sol.method = "affine";
        std::vector<Matrix> A;
        std::vector<Vector> B;
        affine_fields(spec, path, which, A, B);
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < M; ++r) pack(A[static_cast<std::size_t>(i)], sol.P[static_cast<std::size_t>(i)], r);
        }
        return sol;
    }

    const Matrix zeroK = Matrix::Zero(m, d);
    const std::vector<Matrix> noQ;
    if (backend == Backend::Ode) {
        sol.method = "pathwise";
        for (int r = 0; r < M; ++r) {
            Matrix P = second_terminal(spec, which, row_of(path.X.back(), r));
            pack(P, sol.P.back(), r);
            for (int i = n - 2; i >= 0; --i) {
                const auto ii = static_cast<std::size_t>(i);
                const Vector& u = path.u[ii];
                const Vector x1 = row_of(path.X[ii + 1], r);
                const Vector x0 = row_of(path.X[ii], r);
                const Vector p1 = first.p_at(i + 1, r);
                const Vector p0 = first.p_at(i, r);
                const double h = path.dt[ii];
                const Matrix k1 = second_driver(spec, which, local_derivatives(spec, x1, u), x1, u, P, noQ, p1, zeroK);
                const Matrix pred = P + h * k1;
                const Matrix k2 = second_driver(spec, which, local_derivatives(spec, x0, u), x0, u, pred, noQ, p0, zeroK);
                P += 0.5 * h * (k1 + k2);
                pack(P, sol.P[ii], r);
            }
        }
        return sol;
    }

    sol.method = "regression";
    for (int r = 0; r < M; ++r) pack(second_terminal(spec, which, row_of(path.X.back(), r)), sol.P.back(), r);
    for (int i = n - 2; i >= 0; --i) {
        const auto ii = static_cast<std::size_t>(i);
        const Matrix& next = sol.P[ii + 1];
        const Matrix& W = path.dW[ii];
        Matrix Z(M, d * m * m);
        for (int r = 0; r < M; ++r) {
            for (int j = 0; j < d; ++j) {
                for (int e = 0; e < m * m; ++e) Z(r, j * m * m + e) = next(r, e) * W(r, j) / path.dW_var[ii];
            }
        }
        sol.Q[ii] = conditional_expectation(path.X[ii], Z, degree);
        Matrix target(M, m * m);
        const Vector& u = path.u[ii];
        const double h = path.dt[ii];
        std::vector<Matrix> Q(static_cast<std::size_t>(d));
        for (int r = 0; r < M; ++r) {
            const Vector x = row_of(path.X[ii], r);
            const Matrix P = unpack(next, r, m, m);
            for (int j = 0; j < d; ++j) {
                Matrix q(m, m);
                for (int a = 0; a < m; ++a) {
                    for (int c = 0; c < m; ++c) q(a, c) = sol.Q[ii](r, j * m * m + a * m + c);
                }
                Q[static_cast<std::size_t>(j)] = q;
            }
            const Matrix D = second_driver(spec, which, local_derivatives(spec, x, u), x, u, P, Q, first.p_at(i, r),
                                           first.K_at(i, r, m, d));
            pack(P + h * D, target, r);
        }
        sol.P[ii] = conditional_expectation(path.X[ii], target, degree);
    }
    if (n >= 2) sol.Q.back() = sol.Q[static_cast<std::size_t>(n - 2)];
    return sol;
}

HamiltonianEval hamiltonian(const ProblemSpec& spec, const Vector& x, const Vector& u, const Vector& p, const Matrix& K,
                            AdjointKind which) {
    if (x.size() != spec.m || u.size() != spec.k || p.size() != spec.m || K.rows() != spec.m || K.cols() != spec.d) {
        throw std::invalid_argument("hamiltonian arguments have inconsistent shapes");
    }
    HamiltonianEval h;
    h.running = (which == AdjointKind::Cost ? spec.f : spec.l).eval_scalar(x, u);
    h.drift = p.dot(spec.b.eval_vector(x, u));
    const Matrix sigma = spec.sigma.eval_matrix(x, u);
    h.diffusion = 0.0;
    for (int j = 0; j < spec.d; ++j) h.diffusion += K.col(j).dot(sigma.col(j));
    h.value = h.running + h.drift + h.diffusion;
    return h;
}

std::vector<double> k_tau_paths(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first0,
                                const SecondOrderAdjoint& second0, int node, const Vector& u, bool driverless) {
    const int m = spec.m;
    const int d = spec.d;
    const Vector& ubar = path.u[static_cast<std::size_t>(node)];
    std::vector<double> out(static_cast<std::size_t>(path.paths));
    const Vector zp = Vector::Zero(m);
    const Matrix zK = Matrix::Zero(m, d);
    for (int r = 0; r < path.paths; ++r) {
        const Vector x = row_of(path.X[static_cast<std::size_t>(node)], r);
        const Vector p = driverless ? zp : first0.p_at(node, r);
        const Matrix K = driverless ? zK : first0.K_at(node, r, m, d);
        const double dH = hamiltonian(spec, x, u, p, K, AdjointKind::Constraint).value -
                          hamiltonian(spec, x, ubar, p, K, AdjointKind::Constraint).value;
        double trace = 0.0;
        if (!driverless) {
            const Matrix ds = spec.sigma.eval_matrix(x, u) - spec.sigma.eval_matrix(x, ubar);
            trace = 0.5 * (ds.transpose() * second0.P_at(node, r, m) * ds).trace();
        }
        out[static_cast<std::size_t>(r)] = dH + trace;
    }
    return out;
}

Estimate mean_and_se(const std::vector<double>& values, bool exact) {
    Estimate e;
    const double n = static_cast<double>(values.size());
    double s = 0.0;
    for (double v : values) s += v;
    e.mean = s / n;
    if (exact) return e;
    if (values.size() < 2) {
        e.se = std::nan("");
        return e;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.se = std::sqrt(ss / (n - 1.0) / n);
    return e;
}

KernelEstimate k_tau(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first0,
                     const SecondOrderAdjoint& second0, double tau, const Vector& u) {
    KernelEstimate k;
    k.node = path.node_at(tau);
    k.full = mean_and_se(k_tau_paths(spec, path, first0, second0, k.node, u, false), path.deterministic);
    k.driverless = mean_and_se(k_tau_paths(spec, path, first0, second0, k.node, u, true), path.deterministic);
    return k;
}

Estimate r_tau(const ProblemSpec& spec, const AdjointPath& path, const Matrix* y1, const Matrix* y2) {
    const auto last = static_cast<std::size_t>(path.nodes() - 1);
    const Vector& ubar = path.u[last];
    const Vector none = Vector::Zero(spec.k);
    std::vector<double> vals(static_cast<std::size_t>(path.paths));
    for (int r = 0; r < path.paths; ++r) {
        const Vector x = row_of(path.X[last], r);
        const LocalDerivatives ld = local_derivatives(spec, x, ubar);
        Vector z = x;
        Vector B = ld.b;
        Matrix A = ld.sigma * ld.sigma.transpose();
        if (y1 != nullptr && y2 != nullptr) {
            const Vector a = row_of(*y1, r);
            const Vector b2 = row_of(*y2, r);
            z = x + a + b2;
            B += ld.b_x * (a + b2);
            for (int i = 0; i < spec.m; ++i) B(i) += 0.5 * a.dot(ld.b_xx[static_cast<std::size_t>(i)] * a);
            for (int j = 0; j < spec.d; ++j) {
                const Vector v = ld.sigma_x[static_cast<std::size_t>(j)] * a;
                A += v * v.transpose();
            }
        }
        vals[static_cast<std::size_t>(r)] = spec.f.eval_scalar(z, ubar) + spec.g_x.eval_vector(z, none).dot(B) +
                                            0.5 * (spec.g_xx.eval_matrix(z, none) * A).trace();
    }
    return mean_and_se(vals, path.deterministic);
}

void write_first_adjoint_csv(const AdjointSolution& sol, int m, int d, std::ostream& out) {
    out << "t";
    for (int a = 0; a < m; ++a) out << ",p_" << (a + 1);
    for (int a = 0; a < m; ++a) {
        for (int j = 0; j < d; ++j) out << ",K_" << (a + 1) << (j + 1);
    }
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < sol.t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", sol.t[i]);
        out << buf;
        const Eigen::RowVectorXd pm = sol.p[i].colwise().mean();
        const Eigen::RowVectorXd km = sol.K[i].colwise().mean();
        for (Eigen::Index c = 0; c < pm.size(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", pm(c));
            out << buf;
        }
        for (Eigen::Index c = 0; c < km.size(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", km(c));
            out << buf;
        }
        out << '\n';
    }
}

void write_second_adjoint_csv(const SecondOrderAdjoint& sol, int m, std::ostream& out) {
    out << "t";
    for (int a = 0; a < m; ++a) {
        for (int c = 0; c < m; ++c) out << ",P_" << (a + 1) << (c + 1);
    }
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < sol.t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", sol.t[i]);
        out << buf;
        const Eigen::RowVectorXd pm = sol.P[i].colwise().mean();
        for (Eigen::Index c = 0; c < pm.size(); ++c) {
            std::snprintf(buf, sizeof buf, ",%.17g", pm(c));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace vtsmp
