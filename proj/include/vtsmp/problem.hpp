#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vtsmp/expr.hpp"

namespace vtsmp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class ControlDomain {
public:
    enum class Kind { Finite, Box };

    static ControlDomain finite(std::vector<Vector> points);
    static ControlDomain box(Vector lower, Vector upper);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    const std::vector<Vector>& points() const { return points_; }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }

    bool contains(const Vector& u, double tol = 1e-12) const;

    /// Points used for scans: every point of a finite domain, or a lattice with
    /// `per_axis` nodes per axis for a box.
    std::vector<Vector> evaluation_points(int per_axis = 32) const;

private:
    Kind kind_ = Kind::Finite;
    int dim_ = 0;
    std::vector<Vector> points_;
    Vector lower_;
    Vector upper_;
};

/// A rows x cols array of expressions over (x, u), stored row-major.
class CoefficientExpr {
public:
    CoefficientExpr() = default;
    CoefficientExpr(int rows, int cols, std::vector<Expr> entries);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    const Expr& entry(int r, int c = 0) const { return entries_[static_cast<std::size_t>(r * cols_ + c)]; }
    const std::vector<Expr>& entries() const { return entries_; }

    /// Writes rows*cols values, row-major.
    void eval(std::span<const double> x, std::span<const double> u, std::span<double> out) const;
    double eval_scalar(std::span<const double> x, std::span<const double> u) const;
    double eval_scalar(const Vector& x, const Vector& u) const {
        return eval_scalar(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                           std::span<const double>(u.data(), static_cast<std::size_t>(u.size())));
    }
    Matrix eval_matrix(const Vector& x, const Vector& u) const;
    Vector eval_vector(const Vector& x, const Vector& u) const;

    bool is_zero() const;
    bool independent_of_state() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Expr> entries_;
    std::vector<Program> programs_;
};

/// Parses a coefficient of the given shape. Entries are separated by ',' within
/// a row and rows by ';'; surrounding brackets are optional.
CoefficientExpr parse_coefficient(std::string_view source, int rows, int cols, const VariableSet& vars);

/// Textual problem description, before symbolic processing.
struct ProblemDefinition {
    std::string name;
    int m = 1;
    int d = 1;
    int k = 1;
    std::vector<double> x0;
    double T = 1.0;
    double alpha = 1.0;
    ControlDomain U;
    std::vector<std::string> b;      // m entries
    std::vector<std::string> sigma;  // m*d entries, row-major
    std::string f;
    std::string g;
    std::string phi;
    std::optional<std::vector<double>> candidate;
    std::optional<std::uint64_t> seed;
};

/// Fully materialized control problem. Derivative layouts:
///   b_x      m x m        (i, a)            = d b_i / d x_a
///   b_xx     (m*m) x m    (i*m + a, c)      = d2 b_i / d x_a d x_c
///   sigma    m x d        (i, j)
///   sigma_x  (m*d) x m    (i*d + j, a)
///   sigma_xx (m*d*m) x m  ((i*d + j)*m + a, c)
///   r_x      m x 1, r_xx m x m for the scalar functions r = f, g, phi, l
/// where l = phi_x' b + 1/2 sum_j sigma^j' phi_xx sigma^j is the constraint-rate integrand.
struct ProblemSpec {
    std::string name;
    int m = 1;
    int d = 1;
    int k = 1;
    Vector x0;
    double T = 1.0;
    double alpha = 1.0;
    ControlDomain U;
    VariableSet vars;
    std::optional<Vector> candidate;
    std::optional<std::uint64_t> seed;

    CoefficientExpr b, b_x, b_xx;
    CoefficientExpr sigma, sigma_x, sigma_xx;
    CoefficientExpr f, f_x, f_xx;
    CoefficientExpr g, g_x, g_xx;
    CoefficientExpr phi, phi_x, phi_xx;
    CoefficientExpr l, l_x, l_xx;

    /// Zero diffusion: every path coincides with the ODE solution.
    bool deterministic() const { return sigma.is_zero(); }
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Builds the symbolic derivative bundle and validates alpha > phi(x0).
ProblemSpec build_problem(const ProblemDefinition& def);

/// Sensitivity pieces evaluated at one point, shaped for the adjoint drivers.
struct LocalDerivatives {
    Vector b;                     // m
    Matrix b_x;                   // m x m
    std::vector<Matrix> b_xx;     // m entries, each m x m (Hessian of b_i)
    Matrix sigma;                 // m x d
    std::vector<Matrix> sigma_x;  // d entries, each m x m: (i, a) = d sigma_ij / d x_a
    std::vector<std::vector<Matrix>> sigma_xx;  // [j][i] Hessian of sigma_ij
};

LocalDerivatives local_derivatives(const ProblemSpec& spec, const Vector& x, const Vector& u);

}  // namespace vtsmp
