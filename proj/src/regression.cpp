#include "vtsmp/regression.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace vtsmp {

PolynomialBasis::PolynomialBasis(int dim, int degree) : dim_(dim), degree_(degree) {
    if (dim < 1 || degree < 0) throw std::invalid_argument("basis needs dim >= 1 and degree >= 0");
    std::vector<int> e(static_cast<std::size_t>(dim), 0);
    // graded order: all monomials of total degree 0, then 1, ...
    for (int total = 0; total <= degree; ++total) {
        std::function<void(int, int)> rec = [&](int axis, int left) {
            if (axis == dim - 1) {
                e[static_cast<std::size_t>(axis)] = left;
                exponents_.push_back(e);
                return;
            }
            for (int k = left; k >= 0; --k) {
                e[static_cast<std::size_t>(axis)] = k;
                rec(axis + 1, left - k);
            }
        };
        rec(0, total);
    }
    mean_ = Vector::Zero(dim);
    scale_ = Vector::Ones(dim);
}

void PolynomialBasis::fit_scaling(const Matrix& X) {
    const double n = static_cast<double>(X.rows());
    mean_ = X.colwise().mean().transpose();
    constant_only_ = true;
    for (int a = 0; a < dim_; ++a) {
        const double var = (X.col(a).array() - mean_(a)).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd > 1e-12 * std::max(1.0, std::abs(mean_(a)))) {
            scale_(a) = 1.0 / sd;
            constant_only_ = false;
        } else {
            scale_(a) = 0.0;  // axis carries no information
        }
    }
}

void PolynomialBasis::eval(const double* x, double* out) const {
    if (constant_only_) {
        out[0] = 1.0;
        return;
    }
    double z[16];
    for (int a = 0; a < dim_ && a < 16; ++a) z[a] = (x[a] - mean_(a)) * scale_(a);
    for (std::size_t b = 0; b < exponents_.size(); ++b) {
        double v = 1.0;
        for (int a = 0; a < dim_; ++a) {
            for (int k = 0; k < exponents_[b][static_cast<std::size_t>(a)]; ++k) v *= z[a];
        }
        out[b] = v;
    }
}

Matrix PolynomialBasis::design(const Matrix& X) const {
    Matrix B(X.rows(), size());
    std::vector<double> row(static_cast<std::size_t>(size()));
    Vector x(dim_);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        x = X.row(r).transpose();
        eval(x.data(), row.data());
        for (int c = 0; c < size(); ++c) B(r, c) = row[static_cast<std::size_t>(c)];
    }
    return B;
}

Matrix conditional_expectation(const Matrix& X, const Matrix& Y, int degree, double ridge) {
    if (X.rows() != Y.rows()) throw std::invalid_argument("regression inputs have different sample counts");
    if (X.cols() > 16) throw std::invalid_argument("regression basis supports at most 16 state dimensions");
    PolynomialBasis basis(static_cast<int>(X.cols()), degree);
    basis.fit_scaling(X);
    const Eigen::Index M = X.rows();
    if (basis.constant_only()) {
        const Eigen::RowVectorXd mean = Y.colwise().mean();
        return mean.replicate(M, 1);
    }
    if (M < basis.size()) throw std::runtime_error("regression is rank deficient: fewer samples than basis functions");
    const Matrix B = basis.design(X);
    const double inv = 1.0 / static_cast<double>(M);
    Matrix G = (B.transpose() * B) * inv;
    G.diagonal().array() += ridge;
    const Matrix rhs = (B.transpose() * Y) * inv;
    Eigen::LDLT<Matrix> ldlt(G);
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("regression normal equations could not be factored");
    const Matrix coef = ldlt.solve(rhs);
    return B * coef;
}

}  // namespace vtsmp
