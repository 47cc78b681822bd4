#pragma once

#include <vector>

#include "vtsmp/problem.hpp"

namespace vtsmp {

/// Monomials of total degree <= degree in the standardized state
/// (x - mean) / sd. Falls back to the constant alone when the sample has no
/// spread, e.g. at t = 0.
class PolynomialBasis {
public:
    PolynomialBasis(int dim, int degree);

    /// Fits the standardization to the rows of X.
    void fit_scaling(const Matrix& X);

    int size() const { return constant_only_ ? 1 : static_cast<int>(exponents_.size()); }
    int degree() const { return degree_; }
    bool constant_only() const { return constant_only_; }

    void eval(const double* x, double* out) const;
    /// Design matrix, one row per row of X.
    Matrix design(const Matrix& X) const;

private:
    int dim_;
    int degree_;
    std::vector<std::vector<int>> exponents_;
    Vector mean_;
    Vector scale_;
    bool constant_only_ = false;
};

/// Least-squares estimate of E[Y | X] evaluated at the sample points. Rows are
/// samples. Normal equations carry a ridge term; too few samples for the basis
/// throws std::runtime_error.
Matrix conditional_expectation(const Matrix& X, const Matrix& Y, int degree, double ridge = 1e-10);

}  // namespace vtsmp
