#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vtsmp {

/// Node kinds of the coefficient expression language.
enum class Op {
    Const,
    Var,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
};

enum class VarKind { State, Control };

/// A declared variable: state component x_i or control component u_i (0-based index).
struct Variable {
    VarKind kind = VarKind::State;
    int index = 0;
    std::string name;

    friend bool operator==(const Variable& a, const Variable& b) {
        return a.kind == b.kind && a.index == b.index;
    }
};

/// Names that may appear in an expression. With m == 1 the state may be written
/// as `x` as well as `x1`; likewise `u` for k == 1.
class VariableSet {
public:
    VariableSet() = default;
    static VariableSet standard(int state_dim, int control_dim);

    void add(Variable v);
    const Variable* find(std::string_view name) const;
    const Variable& state(int i) const;
    const Variable& control(int i) const;
    int state_dim() const { return state_dim_; }
    int control_dim() const { return control_dim_; }

private:
    std::vector<Variable> vars_;
    int state_dim_ = 0;
    int control_dim_ = 0;
};

struct Node;

/// Immutable expression tree. Copies share structure.
class Expr {
public:
    Expr() = default;  // empty; only valid as a placeholder
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    static Expr constant(double v);
    static Expr variable(const Variable& v);
    static Expr unary(Op op, Expr a);
    static Expr binary(Op op, Expr a, Expr b);

    const Node& node() const { return *node_; }
    Op op() const;
    bool is_constant() const { return op() == Op::Const; }
    bool is_constant(double v) const;
    double constant_value() const;

    bool depends_on(VarKind kind) const;
    bool independent_of_state() const { return !depends_on(VarKind::State); }

    double eval(std::span<const double> x, std::span<const double> u) const;
    std::string to_string() const;

    friend bool structurally_equal(const Expr& a, const Expr& b);

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    Op op = Op::Const;
    double value = 0.0;
    Variable var;
    std::array<Expr, 2> args;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    /// 1-based character position where parsing failed.
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Raised when evaluation leaves the domain of an operator (log of a non-positive
/// number, division by zero, ...). `subexpression()` is the offending node.
class DomainError : public std::runtime_error {
public:
    explicit DomainError(std::string subexpr)
        : std::runtime_error("domain error in '" + subexpr + "'"), subexpr_(std::move(subexpr)) {}
    const std::string& subexpression() const { return subexpr_; }

private:
    std::string subexpr_;
};

Expr parse_expression(std::string_view source, const VariableSet& vars);

/// Algebraic clean-up: constant folding and the usual identities (x+0, 1*x, ...).
Expr simplify(const Expr& e);

/// Symbolic partial derivative of the given order (1 or 2), simplified.
Expr differentiate(const Expr& e, const Variable& wrt, int order = 1);
Expr differentiate(const Expr& e, std::string_view wrt, const VariableSet& vars, int order = 1);

/// Flat postfix form of an Expr for fast repeated evaluation.
class Program {
public:
    Program() = default;
    explicit Program(const Expr& e);

    double operator()(std::span<const double> x, std::span<const double> u) const;
    bool is_constant() const { return code_.size() == 1 && code_[0].op == Op::Const; }

private:
    struct Instr {
        Op op;
        VarKind kind;
        int index;
        double value;
        int source;  // index into sources_ for error reports
    };
    void emit(const Expr& e);

    std::vector<Instr> code_;
    std::vector<Expr> sources_;
    std::size_t max_depth_ = 0;
};

}  // namespace vtsmp
