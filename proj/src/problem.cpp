#include "vtsmp/problem.hpp"

#include <cmath>
#include <functional>
#include <tuple>

namespace vtsmp {

// ---------------------------------------------------------------------------
// ControlDomain

ControlDomain ControlDomain::finite(std::vector<Vector> points) {
    if (points.empty()) throw ValidationError("finite control domain needs at least one point");
    ControlDomain dom;
    dom.kind_ = Kind::Finite;
    dom.dim_ = static_cast<int>(points.front().size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != dom.dim_) throw ValidationError("control points have inconsistent dimension");
        for (std::size_t j = 0; j < i; ++j) {
            if (points[i] == points[j]) throw ValidationError("control points must be distinct");
        }
    }
    dom.points_ = std::move(points);
    return dom;
}

ControlDomain ControlDomain::box(Vector lower, Vector upper) {
    if (lower.size() != upper.size() || lower.size() == 0) throw ValidationError("box bounds have mismatched size");
    if ((lower.array() > upper.array()).any()) throw ValidationError("box requires lower <= upper");
    ControlDomain dom;
    dom.kind_ = Kind::Box;
    dom.dim_ = static_cast<int>(lower.size());
    dom.lower_ = std::move(lower);
    dom.upper_ = std::move(upper);
    return dom;
}

bool ControlDomain::contains(const Vector& u, double tol) const {
    if (u.size() != dim_) return false;
    if (kind_ == Kind::Box) {
        return ((u.array() >= lower_.array() - tol) && (u.array() <= upper_.array() + tol)).all();
    }
    for (const auto& p : points_) {
        if ((p - u).cwiseAbs().maxCoeff() <= tol) return true;
    }
    return false;
}

std::vector<Vector> ControlDomain::evaluation_points(int per_axis) const {
    if (kind_ == Kind::Finite) return points_;
    if (per_axis < 1) throw std::invalid_argument("lattice needs at least one node per axis");
    std::vector<Vector> out;
    std::vector<int> idx(static_cast<std::size_t>(dim_), 0);
    for (;;) {
        Vector u(dim_);
        for (int a = 0; a < dim_; ++a) {
            const double w = per_axis == 1 ? 0.5 : static_cast<double>(idx[a]) / (per_axis - 1);
            u[a] = lower_[a] + w * (upper_[a] - lower_[a]);
        }
        out.push_back(u);
        int a = 0;
        while (a < dim_ && ++idx[a] == per_axis) {
            idx[a] = 0;
            ++a;
        }
        if (a == dim_) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CoefficientExpr

CoefficientExpr::CoefficientExpr(int rows, int cols, std::vector<Expr> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (static_cast<int>(entries_.size()) != rows * cols) {
        throw std::invalid_argument("coefficient shape does not match entry count");
    }
    programs_.reserve(entries_.size());
    for (const auto& e : entries_) programs_.emplace_back(e);
}

void CoefficientExpr::eval(std::span<const double> x, std::span<const double> u, std::span<double> out) const {
    for (std::size_t i = 0; i < programs_.size(); ++i) out[i] = programs_[i](x, u);
}

double CoefficientExpr::eval_scalar(std::span<const double> x, std::span<const double> u) const {
    return programs_.front()(x, u);
}

Matrix CoefficientExpr::eval_matrix(const Vector& x, const Vector& u) const {
    Matrix out(rows_, cols_);
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    const std::span<const double> us(u.data(), static_cast<std::size_t>(u.size()));
    for (int r = 0; r < rows_; ++r) {
        for (int c = 0; c < cols_; ++c) out(r, c) = programs_[static_cast<std::size_t>(r * cols_ + c)](xs, us);
    }
    return out;
}

Vector CoefficientExpr::eval_vector(const Vector& x, const Vector& u) const {
    Vector out(rows_ * cols_);
    eval({x.data(), static_cast<std::size_t>(x.size())}, {u.data(), static_cast<std::size_t>(u.size())},
         {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

bool CoefficientExpr::is_zero() const {
    for (const auto& e : entries_) {
        if (!e.is_constant(0.0)) return false;
    }
    return true;
}

bool CoefficientExpr::independent_of_state() const {
    for (const auto& e : entries_) {
        if (!e.independent_of_state()) return false;
    }
    return true;
}

namespace {

// Splits on `sep` at parenthesis depth zero, tracking the offset of each piece.
std::vector<std::pair<std::string_view, std::size_t>> split_top(std::string_view s, char sep, std::size_t base) {
    std::vector<std::pair<std::string_view, std::size_t>> out;
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '(') ++depth;
        if (s[i] == ')') --depth;
        if (s[i] == sep && depth == 0) {
            out.emplace_back(s.substr(start, i - start), base + start);
            start = i + 1;
        }
    }
    out.emplace_back(s.substr(start), base + start);
    return out;
}

}  // namespace

CoefficientExpr parse_coefficient(std::string_view source, int rows, int cols, const VariableSet& vars) {
    std::string_view body = source;
    std::size_t base = 0;
    const auto first = body.find_first_not_of(" \t");
    const auto last = body.find_last_not_of(" \t");
    if (first != std::string_view::npos && body[first] == '[' && body[last] == ']') {
        base = first + 1;
        body = body.substr(first + 1, last - first - 1);
    }
    const auto row_parts = split_top(body, ';', base);
    if (static_cast<int>(row_parts.size()) != rows) {
        throw std::invalid_argument("arity mismatch: expected " + std::to_string(rows) + " rows, got " +
                                    std::to_string(row_parts.size()));
    }
    std::vector<Expr> entries;
    for (const auto& [row, row_base] : row_parts) {
        const auto cells = split_top(row, ',', row_base);
        if (static_cast<int>(cells.size()) != cols) {
            throw std::invalid_argument("arity mismatch: expected " + std::to_string(cols) + " columns, got " +
                                        std::to_string(cells.size()));
        }
        for (const auto& [cell, cell_base] : cells) {
            try {
                entries.push_back(parse_expression(cell, vars));
            } catch (const ParseError& e) {
                // Re-anchor the position to the full source text.
                throw ParseError(std::string(e.what()).substr(0, std::string(e.what()).rfind(" at offset")),
                                 e.offset() + cell_base);
            }
        }
    }
    return CoefficientExpr(rows, cols, std::move(entries));
}

// ---------------------------------------------------------------------------
// ProblemSpec

namespace {

CoefficientExpr gradient(const Expr& e, const VariableSet& vars, int m) {
    std::vector<Expr> out;
    for (int a = 0; a < m; ++a) out.push_back(differentiate(e, vars.state(a)));
    return CoefficientExpr(m, 1, std::move(out));
}

CoefficientExpr hessian(const Expr& e, const VariableSet& vars, int m) {
    std::vector<Expr> out;
    for (int a = 0; a < m; ++a) {
        const Expr da = differentiate(e, vars.state(a));
        for (int c = 0; c < m; ++c) out.push_back(differentiate(da, vars.state(c)));
    }
    return CoefficientExpr(m, m, std::move(out));
}

// For an n-entry array, first and second state derivatives stacked entrywise.
std::pair<CoefficientExpr, CoefficientExpr> jacobians(const std::vector<Expr>& entries, const VariableSet& vars,
                                                       int m) {
    std::vector<Expr> first;
    std::vector<Expr> second;
    for (const auto& e : entries) {
        for (int a = 0; a < m; ++a) {
            const Expr da = differentiate(e, vars.state(a));
            first.push_back(da);
            for (int c = 0; c < m; ++c) second.push_back(differentiate(da, vars.state(c)));
        }
    }
    const int n = static_cast<int>(entries.size());
    return {CoefficientExpr(n, m, std::move(first)), CoefficientExpr(n * m, m, std::move(second))};
}

Expr parse_scalar(const std::string& text, const VariableSet& vars, const char* what) {
    try {
        return parse_expression(text, vars);
    } catch (const ParseError& e) {
        throw ValidationError(std::string(what) + ": " + e.what());
    }
}

void check_finite(const CoefficientExpr& c, const Vector& x, const Vector& u, const char* what) {
    Matrix v;
    try {
        v = c.eval_matrix(x, u);
    } catch (const DomainError& e) {
        throw ValidationError(std::string(what) + " not evaluable at x0: " + e.what());
    }
    if (!v.allFinite()) throw ValidationError(std::string(what) + " is not finite at x0");
}

}  // namespace

ProblemSpec build_problem(const ProblemDefinition& def) {
    if (def.m < 1 || def.d < 1 || def.k < 1) throw ValidationError("dimensions must be positive");
    if (static_cast<int>(def.x0.size()) != def.m) throw ValidationError("x0 dimension mismatch");
    if (static_cast<int>(def.b.size()) != def.m) throw ValidationError("b must have m entries");
    if (static_cast<int>(def.sigma.size()) != def.m * def.d) throw ValidationError("sigma must have m*d entries");
    if (def.U.dim() != def.k) throw ValidationError("control domain dimension mismatch");
    if (!(def.T > 0.0) || !std::isfinite(def.T)) throw ValidationError("horizon T must be positive");

    ProblemSpec spec;
    spec.name = def.name;
    spec.m = def.m;
    spec.d = def.d;
    spec.k = def.k;
    spec.x0 = Eigen::Map<const Vector>(def.x0.data(), def.m);
    spec.T = def.T;
    spec.alpha = def.alpha;
    spec.U = def.U;
    spec.seed = def.seed;
    spec.vars = VariableSet::standard(def.m, def.k);
    const auto& vars = spec.vars;
    const int m = def.m;

    std::vector<Expr> b;
    for (const auto& s : def.b) b.push_back(simplify(parse_scalar(s, vars, "b")));
    std::vector<Expr> sigma;
    for (const auto& s : def.sigma) sigma.push_back(simplify(parse_scalar(s, vars, "sigma")));
    const Expr f = simplify(parse_scalar(def.f, vars, "f"));
    const Expr g = simplify(parse_scalar(def.g, vars, "g"));
    const Expr phi = simplify(parse_scalar(def.phi, vars, "phi"));
    if (g.depends_on(VarKind::Control)) throw ValidationError("g must be a function of x only");
    if (phi.depends_on(VarKind::Control)) throw ValidationError("phi must be a function of x only");

    spec.b = CoefficientExpr(m, 1, b);
    std::tie(spec.b_x, spec.b_xx) = jacobians(b, vars, m);
    spec.sigma = CoefficientExpr(m, def.d, sigma);
    std::tie(spec.sigma_x, spec.sigma_xx) = jacobians(sigma, vars, m);
    spec.f = CoefficientExpr(1, 1, {f});
    spec.f_x = gradient(f, vars, m);
    spec.f_xx = hessian(f, vars, m);
    spec.g = CoefficientExpr(1, 1, {g});
    spec.g_x = gradient(g, vars, m);
    spec.g_xx = hessian(g, vars, m);
    spec.phi = CoefficientExpr(1, 1, {phi});
    spec.phi_x = gradient(phi, vars, m);
    spec.phi_xx = hessian(phi, vars, m);

    // l = phi_x' b + 1/2 sum_j sigma^j' phi_xx sigma^j
    Expr l = Expr::constant(0.0);
    for (int a = 0; a < m; ++a) l = l + spec.phi_x.entry(a) * b[static_cast<std::size_t>(a)];
    Expr quad = Expr::constant(0.0);
    for (int j = 0; j < def.d; ++j) {
        for (int a = 0; a < m; ++a) {
            for (int c = 0; c < m; ++c) {
                quad = quad + sigma[static_cast<std::size_t>(a * def.d + j)] * spec.phi_xx.entry(a, c) *
                                  sigma[static_cast<std::size_t>(c * def.d + j)];
            }
        }
    }
    l = simplify(l + Expr::constant(0.5) * quad);
    spec.l = CoefficientExpr(1, 1, {l});
    spec.l_x = gradient(l, vars, m);
    spec.l_xx = hessian(l, vars, m);

    if (def.candidate) {
        if (static_cast<int>(def.candidate->size()) != def.k) throw ValidationError("candidate control dimension");
        Vector c = Eigen::Map<const Vector>(def.candidate->data(), def.k);
        if (!def.U.contains(c)) throw ValidationError("candidate control is not in U");
        spec.candidate = c;
    }

    const double phi0 = spec.phi.eval_scalar(spec.x0, Vector::Zero(def.k));
    if (!(spec.alpha > phi0)) {
        throw ValidationError("trivial problem: alpha must exceed phi(x0) = " + std::to_string(phi0));
    }

    const CoefficientExpr* bundle[] = {&spec.b,   &spec.b_x,  &spec.b_xx,  &spec.sigma, &spec.sigma_x,
                                       &spec.sigma_xx, &spec.f, &spec.f_x, &spec.f_xx,  &spec.g,
                                       &spec.g_x, &spec.g_xx, &spec.phi,  &spec.phi_x, &spec.phi_xx,
                                       &spec.l,   &spec.l_x,  &spec.l_xx};
    for (const auto& u : spec.U.evaluation_points(3)) {
        for (const auto* c : bundle) check_finite(*c, spec.x0, u, "coefficient");
    }
    return spec;
}

LocalDerivatives local_derivatives(const ProblemSpec& spec, const Vector& x, const Vector& u) {
    const int m = spec.m;
    const int d = spec.d;
    LocalDerivatives out;
    out.b = spec.b.eval_vector(x, u);
    out.b_x = spec.b_x.eval_matrix(x, u);
    const Matrix bxx = spec.b_xx.eval_matrix(x, u);
    out.b_xx.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) out.b_xx[static_cast<std::size_t>(i)] = bxx.middleRows(i * m, m);
    out.sigma = spec.sigma.eval_matrix(x, u);
    const Matrix sx = spec.sigma_x.eval_matrix(x, u);
    const Matrix sxx = spec.sigma_xx.eval_matrix(x, u);
    out.sigma_x.assign(static_cast<std::size_t>(d), Matrix::Zero(m, m));
    out.sigma_xx.assign(static_cast<std::size_t>(d), std::vector<Matrix>(static_cast<std::size_t>(m)));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) {
            out.sigma_x[static_cast<std::size_t>(j)].row(i) = sx.row(i * d + j);
            out.sigma_xx[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = sxx.middleRows((i * d + j) * m, m);
        }
    }
    return out;
}

}  // namespace vtsmp
