#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtsmp/simulate.hpp"

namespace vtsmp {

/// Candidate trajectory on [0, tau]: grid nodes up to tau, with tau appended
/// when it falls strictly between nodes (state interpolated linearly per path).
struct AdjointPath {
    std::vector<double> t;       // nodes, t.back() == tau
    std::vector<Matrix> X;       // per node, paths x m
    std::vector<Vector> u;       // per node: control of the interval starting there
    std::vector<double> dt;      // per interval
    std::vector<Matrix> dW;      // per interval, paths x d
    std::vector<double> dW_var;  // per interval, variance of one component of dW
    int paths = 1;
    int m = 1;
    int d = 1;
    bool deterministic = false;

    int nodes() const { return static_cast<int>(t.size()); }
    /// Largest node index with t <= time.
    int node_at(double time) const;
};

AdjointPath make_adjoint_path(const ProblemSpec& spec, const PathEnsemble& ensemble, const ControlProcess& control,
                              double tau);

enum class AdjointKind { Cost, Constraint };
enum class Backend { Ode, Regression };

std::string backend_label(Backend b);

class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// (p, K) per node. p[i] is paths x m, K[i] is paths x (m*d) with column i*d + j.
struct AdjointSolution {
    AdjointKind which = AdjointKind::Cost;
    Backend backend = Backend::Ode;
    std::string method;  // "affine", "pathwise" or "regression"
    std::vector<double> t;
    std::vector<Matrix> p;
    std::vector<Matrix> K;

    Vector p_at(int node, int path) const { return p[static_cast<std::size_t>(node)].row(path).transpose(); }
    Matrix K_at(int node, int path, int m, int d) const;
};

/// (P, Q) per node. P[i] is paths x (m*m) row-major; Q[i] is paths x (d*m*m).
struct SecondOrderAdjoint {
    AdjointKind which = AdjointKind::Cost;
    Backend backend = Backend::Ode;
    std::string method;
    std::vector<double> t;
    std::vector<Matrix> P;
    std::vector<Matrix> Q;

    Matrix P_at(int node, int path, int m) const;
};

/// Regression degree used when none is given.
inline constexpr int kRegressionDegree = 3;

/// True when sigma_x = 0, b is affine in x and the running data (f or l) and g
/// are at most quadratic in x: then p = A X + B, K = A sigma and P, Q are
/// deterministic.
bool affine_structure(const ProblemSpec& spec, AdjointKind which);

/// Ode backend: the affine closed form when available, otherwise a backward
/// Heun sweep along the path of a zero-diffusion problem. Regression backend:
/// backward least-squares projection of the discrete BSDE.
AdjointSolution solve_first_adjoint(const ProblemSpec& spec, const AdjointPath& path, AdjointKind which,
                                    Backend backend, int degree = kRegressionDegree);

SecondOrderAdjoint solve_second_adjoint(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first,
                                        AdjointKind which, Backend backend, int degree = kRegressionDegree);

struct HamiltonianEval {
    double value = 0.0;
    double running = 0.0;    // f or l
    double drift = 0.0;      // <p, b>
    double diffusion = 0.0;  // sum_j <K_j, sigma^j>
};

/// H = f + <p,b> + sum_j <K_j, sigma^j> (Cost), with l in place of f (Constraint).
/// K is m x d.
HamiltonianEval hamiltonian(const ProblemSpec& spec, const Vector& x, const Vector& u, const Vector& p, const Matrix& K,
                            AdjointKind which);

/// k(tau) per path, for a spike to u at adjoint node `node`:
///   H0(X,u) - H0(X,ubar) + 1/2 tr[(sigma(X,u) - sigma(X,ubar))' P0 (...)].
/// `driverless` replaces (p0, K0, P0) by zero.
std::vector<double> k_tau_paths(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first0,
                                const SecondOrderAdjoint& second0, int node, const Vector& u, bool driverless = false);

struct KernelEstimate {
    Estimate full;
    Estimate driverless;
    int node = 0;
};

KernelEstimate k_tau(const ProblemSpec& spec, const AdjointPath& path, const AdjointSolution& first0,
                     const SecondOrderAdjoint& second0, double tau, const Vector& u);

/// E[f + g_x' b + 1/2 tr(sigma' g_xx sigma)] at the last node. With y1 and y2
/// (paths x m, at the last node) the first- and second-order corrections are
/// kept: the argument becomes X + y1 + y2, b is expanded to second order and
/// the bracket gains (sigma_x y1)(sigma_x y1)'.
Estimate r_tau(const ProblemSpec& spec, const AdjointPath& path, const Matrix* y1 = nullptr,
               const Matrix* y2 = nullptr);

/// Mean over paths. Header t,p_1..p_m,K_11..K_md.
void write_first_adjoint_csv(const AdjointSolution& sol, int m, int d, std::ostream& out);
/// Header t,P_11..P_mm.
void write_second_adjoint_csv(const SecondOrderAdjoint& sol, int m, std::ostream& out);

Estimate mean_and_se(const std::vector<double>& values, bool exact = false);

}  // namespace vtsmp
