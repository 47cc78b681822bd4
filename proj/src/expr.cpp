#include "vtsmp/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace vtsmp {

// ---------------------------------------------------------------------------
// VariableSet

VariableSet VariableSet::standard(int state_dim, int control_dim) {
    VariableSet set;
    for (int i = 0; i < state_dim; ++i) {
        set.add({VarKind::State, i, "x" + std::to_string(i + 1)});
    }
    for (int i = 0; i < control_dim; ++i) {
        set.add({VarKind::Control, i, "u" + std::to_string(i + 1)});
    }
    if (state_dim == 1) set.add({VarKind::State, 0, "x"});
    if (control_dim == 1) set.add({VarKind::Control, 0, "u"});
    return set;
}

void VariableSet::add(Variable v) {
    if (v.kind == VarKind::State) {
        state_dim_ = std::max(state_dim_, v.index + 1);
    } else {
        control_dim_ = std::max(control_dim_, v.index + 1);
    }
    vars_.push_back(std::move(v));
}

const Variable* VariableSet::find(std::string_view name) const {
    for (const auto& v : vars_) {
        if (v.name == name) return &v;
    }
    return nullptr;
}

const Variable& VariableSet::state(int i) const {
    for (const auto& v : vars_) {
        if (v.kind == VarKind::State && v.index == i) return v;
    }
    throw std::out_of_range("no state variable " + std::to_string(i));
}

const Variable& VariableSet::control(int i) const {
    for (const auto& v : vars_) {
        if (v.kind == VarKind::Control && v.index == i) return v;
    }
    throw std::out_of_range("no control variable " + std::to_string(i));
}

// ---------------------------------------------------------------------------
// Expr construction

namespace {

std::shared_ptr<const Node> make_node(Op op, double value = 0.0, Variable var = {}, Expr a = Expr(nullptr),
                                      Expr b = Expr(nullptr)) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = value;
    n->var = std::move(var);
    n->args = {std::move(a), std::move(b)};
    return n;
}

bool is_unary(Op op) {
    return op == Op::Neg || op == Op::Exp || op == Op::Log || op == Op::Sin || op == Op::Cos || op == Op::Sqrt;
}

const char* function_name(Op op) {
    switch (op) {
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Sqrt: return "sqrt";
        default: return "";
    }
}

}  // namespace

Expr Expr::constant(double v) { return Expr(make_node(Op::Const, v)); }

Expr Expr::variable(const Variable& v) { return Expr(make_node(Op::Var, 0.0, v)); }

Expr Expr::unary(Op op, Expr a) {
    if (!is_unary(op)) throw std::invalid_argument("not a unary operator");
    return Expr(make_node(op, 0.0, {}, std::move(a)));
}

Expr Expr::binary(Op op, Expr a, Expr b) {
    if (op != Op::Add && op != Op::Sub && op != Op::Mul && op != Op::Div && op != Op::Pow) {
        throw std::invalid_argument("not a binary operator");
    }
    return Expr(make_node(op, 0.0, {}, std::move(a), std::move(b)));
}

Op Expr::op() const { return node_->op; }

bool Expr::is_constant(double v) const { return op() == Op::Const && node_->value == v; }

double Expr::constant_value() const {
    if (op() != Op::Const) throw std::logic_error("expression is not a constant");
    return node_->value;
}

bool Expr::depends_on(VarKind kind) const {
    const Node& n = *node_;
    switch (n.op) {
        case Op::Const: return false;
        case Op::Var: return n.var.kind == kind;
        default:
            if (is_unary(n.op)) return n.args[0].depends_on(kind);
            return n.args[0].depends_on(kind) || n.args[1].depends_on(kind);
    }
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::binary(Op::Add, a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::binary(Op::Sub, a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::binary(Op::Mul, a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::binary(Op::Div, a, b); }
Expr operator-(const Expr& a) { return Expr::unary(Op::Neg, a); }

bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    const Node& x = *a.node_;
    const Node& y = *b.node_;
    if (x.op != y.op) return false;
    switch (x.op) {
        case Op::Const: return x.value == y.value;
        case Op::Var: return x.var == y.var;
        default:
            if (is_unary(x.op)) return structurally_equal(x.args[0], y.args[0]);
            return structurally_equal(x.args[0], y.args[0]) && structurally_equal(x.args[1], y.args[1]);
    }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double apply(Op op, double a, double b, const Expr& at) {
    switch (op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div:
            if (b == 0.0) throw DomainError(at.to_string());
            return a / b;
        case Op::Pow: {
            if (a < 0.0 && b != std::floor(b)) throw DomainError(at.to_string());
            if (a == 0.0 && b < 0.0) throw DomainError(at.to_string());
            return std::pow(a, b);
        }
        case Op::Neg: return -a;
        case Op::Exp: return std::exp(a);
        case Op::Log:
            if (!(a > 0.0)) throw DomainError(at.to_string());
            return std::log(a);
        case Op::Sin: return std::sin(a);
        case Op::Cos: return std::cos(a);
        case Op::Sqrt:
            if (a < 0.0) throw DomainError(at.to_string());
            return std::sqrt(a);
        default: throw std::logic_error("apply: bad operator");
    }
}

}  // namespace

double Expr::eval(std::span<const double> x, std::span<const double> u) const {
    const Node& n = *node_;
    switch (n.op) {
        case Op::Const: return n.value;
        case Op::Var: {
            const auto& src = n.var.kind == VarKind::State ? x : u;
            if (n.var.index >= static_cast<int>(src.size())) {
                throw std::invalid_argument("variable '" + n.var.name + "' out of range");
            }
            return src[n.var.index];
        }
        default: {
            const double a = n.args[0].eval(x, u);
            const double b = is_unary(n.op) ? 0.0 : n.args[1].eval(x, u);
            return apply(n.op, a, b, *this);
        }
    }
}

// ---------------------------------------------------------------------------
// Printing

namespace {

int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        case Op::Const: return e.constant_value() < 0.0 ? 3 : 5;
        default: return 5;
    }
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    // Prefer the shortest representation that round-trips.
    for (int prec = 1; prec <= 17; ++prec) {
        char tmp[40];
        std::snprintf(tmp, sizeof tmp, "%.*g", prec, v);
        if (std::strtod(tmp, nullptr) == v) return tmp;
    }
    return buf;
}

void print(const Expr& e, std::string& out);

void print_child(const Expr& child, bool parens, std::string& out) {
    if (parens) out += '(';
    print(child, out);
    if (parens) out += ')';
}

void print(const Expr& e, std::string& out) {
    const Node& n = e.node();
    switch (n.op) {
        case Op::Const: out += format_number(n.value); return;
        case Op::Var: out += n.var.name; return;
        case Op::Neg:
            out += '-';
            print_child(n.args[0], precedence(n.args[0]) < 3, out);
            return;
        case Op::Exp:
        case Op::Log:
        case Op::Sin:
        case Op::Cos:
        case Op::Sqrt:
            out += function_name(n.op);
            out += '(';
            print(n.args[0], out);
            out += ')';
            return;
        case Op::Pow:
            print_child(n.args[0], precedence(n.args[0]) <= 4, out);
            out += '^';
            print_child(n.args[1], precedence(n.args[1]) < 3, out);
            return;
        default: {
            const int p = precedence(e);
            const char* sym = n.op == Op::Add ? " + " : n.op == Op::Sub ? " - " : n.op == Op::Mul ? " * " : " / ";
            print_child(n.args[0], precedence(n.args[0]) < p, out);
            out += sym;
            print_child(n.args[1], precedence(n.args[1]) <= p, out);
            return;
        }
    }
}

}  // namespace

std::string Expr::to_string() const {
    std::string out;
    print(*this, out);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | '+' unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' args ')' | '(' expr ')'

namespace {

class Parser {
public:
    Parser(std::string_view src, const VariableSet& vars) : src_(src), vars_(vars) {}

    Expr parse() {
        Expr e = expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError("syntax error: " + msg, pos_ + 1); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= src_.size()) fail(std::string("expected '") + c + "' but reached end of input");
            fail(std::string("expected '") + c + "'");
        }
    }

    Expr expr() {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = lhs + term();
            } else if (accept('-')) {
                lhs = lhs - term();
            } else {
                return lhs;
            }
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = lhs * unary();
            } else if (accept('/')) {
                lhs = lhs / unary();
            } else {
                return lhs;
            }
        }
    }

    Expr unary() {
        if (accept('-')) {
            Expr operand = unary();
            if (operand.is_constant()) return Expr::constant(-operand.constant_value());
            return -operand;
        }
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) return Expr::binary(Op::Pow, base, unary());
        return base;
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
        fail("unexpected '" + std::string(1, c) + "'");
    }

    Expr number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t look = pos_ + 1;
            if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
            if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
                pos_ = look;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
        }
        const std::string text(src_.substr(start, pos_ - start));
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end != text.c_str() + text.size()) {
            pos_ = start;
            fail("malformed number '" + text + "'");
        }
        return Expr::constant(v);
    }

    Expr name() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
            ++pos_;
        }
        const std::string_view id = src_.substr(start, pos_ - start);
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '(') {
            ++pos_;
            if (id == "pow") {
                Expr a = expr();
                expect(',');
                Expr b = expr();
                expect(')');
                return Expr::binary(Op::Pow, a, b);
            }
            Op op;
            if (id == "exp") {
                op = Op::Exp;
            } else if (id == "log") {
                op = Op::Log;
            } else if (id == "sin") {
                op = Op::Sin;
            } else if (id == "cos") {
                op = Op::Cos;
            } else if (id == "sqrt") {
                op = Op::Sqrt;
            } else {
                pos_ = start;
                fail("unknown function '" + std::string(id) + "'");
            }
            Expr a = expr();
            expect(')');
            return Expr::unary(op, a);
        }
        if (const Variable* v = vars_.find(id)) return Expr::variable(*v);
        pos_ = start;
        throw ParseError("unknown identifier '" + std::string(id) + "'", start + 1);
    }

    std::string_view src_;
    const VariableSet& vars_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expression(std::string_view source, const VariableSet& vars) { return Parser(source, vars).parse(); }

// ---------------------------------------------------------------------------
// Simplification

namespace {

bool foldable(double v) { return std::isfinite(v); }

Expr simplify_node(const Expr& e) {
    const Node& n = e.node();
    if (n.op == Op::Const || n.op == Op::Var) return e;

    if (is_unary(n.op)) {
        Expr a = simplify_node(n.args[0]);
        if (a.is_constant()) {
            try {
                const double v = apply(n.op, a.constant_value(), 0.0, e);
                if (foldable(v)) return Expr::constant(v);
            } catch (const DomainError&) {
            }
        }
        if (n.op == Op::Neg && a.op() == Op::Neg) return a.node().args[0];
        return Expr::unary(n.op, a);
    }

    Expr a = simplify_node(n.args[0]);
    Expr b = simplify_node(n.args[1]);
    if (a.is_constant() && b.is_constant()) {
        try {
            const double v = apply(n.op, a.constant_value(), b.constant_value(), e);
            if (foldable(v)) return Expr::constant(v);
        } catch (const DomainError&) {
        }
    }
    switch (n.op) {
        case Op::Add:
            if (a.is_constant(0.0)) return b;
            if (b.is_constant(0.0)) return a;
            if (b.op() == Op::Neg) return simplify_node(a - b.node().args[0]);
            if (structurally_equal(a, b)) return simplify_node(Expr::constant(2.0) * a);
            break;
        case Op::Sub:
            if (b.is_constant(0.0)) return a;
            if (a.is_constant(0.0)) return simplify_node(-b);
            if (structurally_equal(a, b)) return Expr::constant(0.0);
            break;
        case Op::Mul:
            if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
            if (a.is_constant(1.0)) return b;
            if (b.is_constant(1.0)) return a;
            if (a.is_constant(-1.0)) return simplify_node(-b);
            if (b.is_constant(-1.0)) return simplify_node(-a);
            // Gather constants on the left: c1 * (c2 * y) -> (c1 c2) * y.
            if (b.is_constant() && !a.is_constant()) return simplify_node(b * a);
            if (a.is_constant() && b.op() == Op::Mul && b.node().args[0].is_constant()) {
                return simplify_node(Expr::constant(a.constant_value() * b.node().args[0].constant_value()) *
                                     b.node().args[1]);
            }
            break;
        case Op::Div:
            if (a.is_constant(0.0)) return Expr::constant(0.0);
            if (b.is_constant(1.0)) return a;
            break;
        case Op::Pow:
            if (b.is_constant(0.0)) return Expr::constant(1.0);
            if (b.is_constant(1.0)) return a;
            break;
        default: break;
    }
    return Expr::binary(n.op, a, b);
}

}  // namespace

Expr simplify(const Expr& e) {
    // Rules can expose new opportunities; iterate to a fixed point.
    Expr cur = simplify_node(e);
    for (int i = 0; i < 8; ++i) {
        Expr next = simplify_node(cur);
        if (structurally_equal(next, cur)) break;
        cur = next;
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

Expr derive(const Expr& e, const Variable& wrt) {
    const Node& n = e.node();
    const Expr zero = Expr::constant(0.0);
    const Expr one = Expr::constant(1.0);
    switch (n.op) {
        case Op::Const: return zero;
        case Op::Var: return n.var == wrt ? one : zero;
        case Op::Add: return derive(n.args[0], wrt) + derive(n.args[1], wrt);
        case Op::Sub: return derive(n.args[0], wrt) - derive(n.args[1], wrt);
        case Op::Mul: {
            const Expr& a = n.args[0];
            const Expr& b = n.args[1];
            return derive(a, wrt) * b + a * derive(b, wrt);
        }
        case Op::Div: {
            const Expr& a = n.args[0];
            const Expr& b = n.args[1];
            return (derive(a, wrt) * b - a * derive(b, wrt)) / (b * b);
        }
        case Op::Pow: {
            const Expr& a = n.args[0];
            const Expr& b = n.args[1];
            const Expr db = simplify(derive(b, wrt));
            if (db.is_constant(0.0)) {
                return b * Expr::binary(Op::Pow, a, b - one) * derive(a, wrt);
            }
            return e * (db * Expr::unary(Op::Log, a) + b * derive(a, wrt) / a);
        }
        case Op::Neg: return -derive(n.args[0], wrt);
        case Op::Exp: return e * derive(n.args[0], wrt);
        case Op::Log: return derive(n.args[0], wrt) / n.args[0];
        case Op::Sin: return Expr::unary(Op::Cos, n.args[0]) * derive(n.args[0], wrt);
        case Op::Cos: return -(Expr::unary(Op::Sin, n.args[0]) * derive(n.args[0], wrt));
        case Op::Sqrt: return derive(n.args[0], wrt) / (Expr::constant(2.0) * e);
    }
    throw std::logic_error("derive: bad operator");
}

}  // namespace

Expr differentiate(const Expr& e, const Variable& wrt, int order) {
    if (order != 1 && order != 2) throw std::invalid_argument("derivative order must be 1 or 2");
    Expr d = simplify(derive(e, wrt));
    if (order == 2) d = simplify(derive(d, wrt));
    return d;
}

Expr differentiate(const Expr& e, std::string_view wrt, const VariableSet& vars, int order) {
    const Variable* v = vars.find(wrt);
    if (v == nullptr) throw std::invalid_argument("unknown variable '" + std::string(wrt) + "'");
    return differentiate(e, *v, order);
}

// ---------------------------------------------------------------------------
// Program

Program::Program(const Expr& e) {
    emit(e);
    std::size_t depth = 0;
    for (const auto& ins : code_) {
        if (ins.op == Op::Const || ins.op == Op::Var) {
            ++depth;
        } else if (!is_unary(ins.op)) {
            --depth;
        }
        max_depth_ = std::max(max_depth_, depth);
    }
}

void Program::emit(const Expr& e) {
    const Node& n = e.node();
    if (n.op != Op::Const && n.op != Op::Var) {
        emit(n.args[0]);
        if (!is_unary(n.op)) emit(n.args[1]);
    }
    sources_.push_back(e);
    code_.push_back({n.op, n.var.kind, n.var.index, n.value, static_cast<int>(sources_.size()) - 1});
}

double Program::operator()(std::span<const double> x, std::span<const double> u) const {
    if (code_.size() == 1) {
        const Instr& ins = code_[0];
        if (ins.op == Op::Const) return ins.value;
        const auto& src = ins.kind == VarKind::State ? x : u;
        if (ins.index >= static_cast<int>(src.size())) throw std::invalid_argument("variable out of range");
        return src[ins.index];
    }
    constexpr std::size_t kInline = 32;
    std::array<double, kInline> inline_stack{};
    std::vector<double> heap_stack;
    double* stack = inline_stack.data();
    if (max_depth_ > kInline) {
        heap_stack.resize(max_depth_);
        stack = heap_stack.data();
    }
    std::size_t top = 0;
    for (const auto& ins : code_) {
        switch (ins.op) {
            case Op::Const: stack[top++] = ins.value; break;
            case Op::Var: {
                const auto& src = ins.kind == VarKind::State ? x : u;
                if (ins.index >= static_cast<int>(src.size())) throw std::invalid_argument("variable out of range");
                stack[top++] = src[ins.index];
                break;
            }
            case Op::Add: --top; stack[top - 1] += stack[top]; break;
            case Op::Sub: --top; stack[top - 1] -= stack[top]; break;
            case Op::Mul: --top; stack[top - 1] *= stack[top]; break;
            default:
                if (is_unary(ins.op)) {
                    stack[top - 1] = apply(ins.op, stack[top - 1], 0.0, sources_[ins.source]);
                } else {
                    --top;
                    stack[top - 1] = apply(ins.op, stack[top - 1], stack[top], sources_[ins.source]);
                }
        }
    }
    return stack[0];
}

}  // namespace vtsmp
