#include "hypofk/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

namespace hypofk {

namespace {

const Node kZeroNode{};

const Node& node_of(const std::shared_ptr<const Node>& p) { return p ? *p : kZeroNode; }

const char* unary_name(UnaryOp op) {
    switch (op) {
        case UnaryOp::Neg: return "-";
        case UnaryOp::Sin: return "sin";
        case UnaryOp::Cos: return "cos";
        case UnaryOp::Exp: return "exp";
        case UnaryOp::Log: return "log";
        case UnaryOp::Sqrt: return "sqrt";
        case UnaryOp::Cosh: return "cosh";
        case UnaryOp::Sinh: return "sinh";
        case UnaryOp::Tanh: return "tanh";
        case UnaryOp::Abs: return "abs";
        case UnaryOp::Step: return "step";
        case UnaryOp::Bump: return "bump";
    }
    return "?";
}

// Truncated Taylor series arithmetic for the profile derivatives.
using Jet = std::vector<double>;

Jet jet_recip(const Jet& a) {
    Jet b(a.size(), 0.0);
    b[0] = 1.0 / a[0];
    for (std::size_t k = 1; k < a.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 1; j <= k; ++j) s += a[j] * b[k - j];
        b[k] = -s / a[0];
    }
    return b;
}

Jet jet_mul(const Jet& a, const Jet& b) {
    Jet c(a.size(), 0.0);
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t j = 0; j <= k; ++j) c[k] += a[j] * b[k - j];
    return c;
}

Jet jet_exp(const Jet& a) {
    Jet e(a.size(), 0.0);
    e[0] = std::exp(a[0]);
    for (std::size_t k = 1; k < a.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 1; j <= k; ++j) s += static_cast<double>(j) * a[j] * e[k - j];
        e[k] = s / static_cast<double>(k);
    }
    return e;
}

// exp(-1/p(u)) expanded around u0 where p has the given Taylor coefficients.
// Returns all zeros when exp(-1/p) underflows.
Jet jet_flat_exp(Jet p) {
    constexpr double kUnderflow = 1.0 / 700.0;
    if (p[0] < kUnderflow) return Jet(p.size(), 0.0);
    Jet r = jet_recip(p);
    for (double& v : r) v = -v;
    return jet_exp(r);
}

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

double step0(double r) {
    if (r <= 0.0) return 0.0;
    if (r >= 1.0) return 1.0;
    const double a = r < 1.0 / 700.0 ? 0.0 : std::exp(-1.0 / r);
    const double b = (1.0 - r) < 1.0 / 700.0 ? 0.0 : std::exp(-1.0 / (1.0 - r));
    return a / (a + b);
}

double bump0(double u) {
    const double v = 1.0 - u * u;
    if (v < 1.0 / 700.0) return 0.0;
    return std::exp(-1.0 / v);
}

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

}  // namespace

double profile_derivative(UnaryOp op, int k, double u) {
    if (k == 0) return op == UnaryOp::Step ? step0(u) : bump0(u);
    const std::size_t len = static_cast<std::size_t>(k) + 1;
    if (op == UnaryOp::Bump) {
        if (std::abs(u) >= 1.0) return 0.0;
        Jet p(len, 0.0);
        p[0] = 1.0 - u * u;
        if (len > 1) p[1] = -2.0 * u;
        if (len > 2) p[2] = -1.0;
        return factorial(k) * jet_flat_exp(p)[k];
    }
    if (u <= 0.0 || u >= 1.0) return 0.0;
    Jet pa(len, 0.0), pb(len, 0.0);
    pa[0] = u;
    pa[1] = 1.0;
    pb[0] = 1.0 - u;
    pb[1] = -1.0;
    const Jet a = jet_flat_exp(pa);
    const Jet b = jet_flat_exp(pb);
    Jet sum(len);
    for (std::size_t i = 0; i < len; ++i) sum[i] = a[i] + b[i];
    if (sum[0] == 0.0) return 0.0;
    return factorial(k) * jet_mul(a, jet_recip(sum))[k];
}

namespace {

double apply_unary_value(UnaryOp op, int order, double v, const Node* node);
double apply_binary_value(BinaryOp op, double l, double r, const Node* node);

[[noreturn]] void domain_fail(const Node* node, const char* what) {
    std::string where = node ? to_string(Expr(std::shared_ptr<const Node>(std::shared_ptr<const Node>{}, node)))
                             : std::string("?");
    throw DomainError(std::string(what) + " in '" + where + "'");
}

double apply_unary_value(UnaryOp op, int order, double v, const Node* node) {
    switch (op) {
        case UnaryOp::Neg: return -v;
        case UnaryOp::Sin: return std::sin(v);
        case UnaryOp::Cos: return std::cos(v);
        case UnaryOp::Exp: return std::exp(v);
        case UnaryOp::Log:
            if (!(v > 0.0)) domain_fail(node, "log of non-positive value");
            return std::log(v);
        case UnaryOp::Sqrt:
            if (!(v >= 0.0)) domain_fail(node, "sqrt of negative value");
            return std::sqrt(v);
        case UnaryOp::Cosh: return std::cosh(v);
        case UnaryOp::Sinh: return std::sinh(v);
        case UnaryOp::Tanh: return std::tanh(v);
        case UnaryOp::Abs: return std::abs(v);
        case UnaryOp::Step:
        case UnaryOp::Bump: return profile_derivative(op, order, v);
    }
    return v;
}

double apply_binary_value(BinaryOp op, double l, double r, const Node* node) {
    switch (op) {
        case BinaryOp::Add: return l + r;
        case BinaryOp::Sub: return l - r;
        case BinaryOp::Mul: return l * r;
        case BinaryOp::Div:
            if (r == 0.0) domain_fail(node, "division by zero");
            return l / r;
        case BinaryOp::Pow:
            if (l < 0.0 && !is_integer(r)) domain_fail(node, "non-integer power of negative base");
            if (l == 0.0 && r < 0.0) domain_fail(node, "division by zero");
            return std::pow(l, r);
    }
    return 0.0;
}

}  // namespace

// ---------------------------------------------------------------- Expr

Expr::Expr() = default;

Expr Expr::constant(double v) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Constant;
    n->value = v;
    return Expr(std::move(n));
}

Expr Expr::var(int index) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Var;
    n->index = index;
    return Expr(std::move(n));
}

Expr Expr::time() {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Time;
    return Expr(std::move(n));
}

NodeKind Expr::kind() const { return node_of(node_).kind; }
double Expr::value() const { return node_of(node_).value; }
int Expr::index() const { return node_of(node_).index; }
UnaryOp Expr::unary_op() const { return node_of(node_).uop; }
int Expr::order() const { return node_of(node_).order; }
BinaryOp Expr::binary_op() const { return node_of(node_).bop; }
const Expr& Expr::child() const { return node_of(node_).a; }
const Expr& Expr::left() const { return node_of(node_).a; }
const Expr& Expr::right() const { return node_of(node_).b; }

bool operator==(const Expr& a, const Expr& b) {
    if (a.node_ == b.node_) return true;
    if (a.kind() != b.kind()) return false;
    switch (a.kind()) {
        case NodeKind::Constant: return a.value() == b.value();
        case NodeKind::Var: return a.index() == b.index();
        case NodeKind::Time: return true;
        case NodeKind::Unary:
            return a.unary_op() == b.unary_op() && a.order() == b.order() && a.child() == b.child();
        case NodeKind::Binary:
            return a.binary_op() == b.binary_op() && a.left() == b.left() && a.right() == b.right();
    }
    return false;
}

Expr make_unary(UnaryOp op, Expr child, int order) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Unary;
    n->uop = op;
    n->order = order;
    n->a = std::move(child);
    return Expr(std::move(n));
}

Expr make_binary(BinaryOp op, Expr left, Expr right) {
    auto n = std::make_shared<Node>();
    n->kind = NodeKind::Binary;
    n->bop = op;
    n->a = std::move(left);
    n->b = std::move(right);
    return Expr(std::move(n));
}

// ---------------------------------------------------------------- simplifying builders

Expr operator-(const Expr& a) {
    if (a.is_constant()) return Expr::constant(-a.value());
    if (a.kind() == NodeKind::Unary && a.unary_op() == UnaryOp::Neg) return a.child();
    return make_unary(UnaryOp::Neg, a);
}

Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (b.kind() == NodeKind::Unary && b.unary_op() == UnaryOp::Neg) return a - b.child();
    if (a == b) return Expr::constant(2.0) * a;
    return make_binary(BinaryOp::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
    if (b.is_zero()) return a;
    if (a.is_zero()) return -b;
    if (a == b) return Expr::constant(0.0);
    if (b.kind() == NodeKind::Unary && b.unary_op() == UnaryOp::Neg) return a + b.child();
    return make_binary(BinaryOp::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
    if (a.is_zero() || b.is_zero()) return Expr::constant(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (a.is_constant() && a.value() == -1.0) return -b;
    if (b.is_constant() && b.value() == -1.0) return -a;
    if (a.kind() == NodeKind::Unary && a.unary_op() == UnaryOp::Neg) return -(a.child() * b);
    if (b.kind() == NodeKind::Unary && b.unary_op() == UnaryOp::Neg) return -(a * b.child());
    // c1 * (c2 * u) -> (c1*c2) * u
    if (a.is_constant() && b.kind() == NodeKind::Binary && b.binary_op() == BinaryOp::Mul &&
        b.left().is_constant())
        return Expr::constant(a.value() * b.left().value()) * b.right();
    if (b.is_constant()) return b * a;
    return make_binary(BinaryOp::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant() && b.value() != 0.0) return Expr::constant(a.value() / b.value());
    if (a.is_zero()) return Expr::constant(0.0);
    if (b.is_one()) return a;
    if (b.is_constant() && b.value() == -1.0) return -a;
    if (a.kind() == NodeKind::Unary && a.unary_op() == UnaryOp::Neg) return -(a.child() / b);
    return make_binary(BinaryOp::Div, a, b);
}

Expr ipow(const Expr& base, int k) {
    if (k == 0) return Expr::constant(1.0);
    if (base.is_constant()) return Expr::constant(std::pow(base.value(), k));
    if (std::abs(k) > 8) return make_binary(BinaryOp::Pow, base, Expr::constant(k));
    Expr out = base;
    for (int i = 1; i < std::abs(k); ++i) out = out * base;
    return k > 0 ? out : Expr::constant(1.0) / out;
}

Expr pow(const Expr& base, const Expr& exponent) {
    if (exponent.is_constant()) {
        const double c = exponent.value();
        if (c == 0.0) return Expr::constant(1.0);
        if (c == 1.0) return base;
        if (is_integer(c) && std::abs(c) <= 8) return ipow(base, static_cast<int>(c));
        if (base.is_constant() && base.value() > 0.0) return Expr::constant(std::pow(base.value(), c));
    }
    return make_binary(BinaryOp::Pow, base, exponent);
}

Expr apply(UnaryOp op, const Expr& arg, int order) {
    if (op == UnaryOp::Neg) return -arg;
    if (arg.is_constant()) {
        const double v = arg.value();
        const bool defined = !((op == UnaryOp::Log && !(v > 0.0)) || (op == UnaryOp::Sqrt && v < 0.0));
        if (defined) {
            const double r = apply_unary_value(op, order, v, nullptr);
            if (std::isfinite(r)) return Expr::constant(r);
        }
    }
    return make_unary(op, arg, order);
}

// ---------------------------------------------------------------- differentiation

namespace {

template <class Leaf>
Expr differentiate(const Expr& e, const Leaf& leaf) {
    switch (e.kind()) {
        case NodeKind::Constant:
        case NodeKind::Var:
        case NodeKind::Time: return leaf(e);
        case NodeKind::Unary: {
            const Expr& u = e.child();
            const Expr du = differentiate(u, leaf);
            if (du.is_zero()) return Expr::constant(0.0);
            switch (e.unary_op()) {
                case UnaryOp::Neg: return -du;
                case UnaryOp::Sin: return apply(UnaryOp::Cos, u) * du;
                case UnaryOp::Cos: return -(apply(UnaryOp::Sin, u) * du);
                case UnaryOp::Exp: return e * du;
                case UnaryOp::Log: return du / u;
                case UnaryOp::Sqrt: return du / (Expr::constant(2.0) * e);
                case UnaryOp::Cosh: return apply(UnaryOp::Sinh, u) * du;
                case UnaryOp::Sinh: return apply(UnaryOp::Cosh, u) * du;
                case UnaryOp::Tanh: {
                    const Expr c = apply(UnaryOp::Cosh, u);
                    return du / (c * c);
                }
                case UnaryOp::Abs: return du * u / e;
                case UnaryOp::Step:
                case UnaryOp::Bump: return apply(e.unary_op(), u, e.order() + 1) * du;
            }
            break;
        }
        case NodeKind::Binary: {
            const Expr& u = e.left();
            const Expr& v = e.right();
            const Expr du = differentiate(u, leaf);
            const Expr dv = differentiate(v, leaf);
            switch (e.binary_op()) {
                case BinaryOp::Add: return du + dv;
                case BinaryOp::Sub: return du - dv;
                case BinaryOp::Mul: return du * v + u * dv;
                case BinaryOp::Div:
                    if (dv.is_zero()) return du / v;
                    if (du.is_zero()) return -(u * dv) / (v * v);
                    return (du * v - u * dv) / (v * v);
                case BinaryOp::Pow:
                    if (v.is_constant()) {
                        const double c = v.value();
                        Expr lowered = is_integer(c - 1.0) && std::abs(c - 1.0) <= 8
                                           ? ipow(u, static_cast<int>(c - 1.0))
                                           : make_binary(BinaryOp::Pow, u, Expr::constant(c - 1.0));
                        return Expr::constant(c) * lowered * du;
                    }
                    return e * (dv * apply(UnaryOp::Log, u) + v * du / u);
            }
            break;
        }
    }
    return Expr::constant(0.0);
}

}  // namespace

Expr diff(const Expr& e, int index) {
    return differentiate(e, [index](const Expr& leaf) {
        return Expr::constant(leaf.kind() == NodeKind::Var && leaf.index() == index ? 1.0 : 0.0);
    });
}

Expr diff_t(const Expr& e) {
    return differentiate(e, [](const Expr& leaf) {
        return Expr::constant(leaf.kind() == NodeKind::Time ? 1.0 : 0.0);
    });
}

int max_var_index(const Expr& e) {
    switch (e.kind()) {
        case NodeKind::Var: return e.index();
        case NodeKind::Unary: return max_var_index(e.child());
        case NodeKind::Binary: return std::max(max_var_index(e.left()), max_var_index(e.right()));
        default: return 0;
    }
}

bool depends_on_time(const Expr& e) {
    switch (e.kind()) {
        case NodeKind::Time: return true;
        case NodeKind::Unary: return depends_on_time(e.child());
        case NodeKind::Binary: return depends_on_time(e.left()) || depends_on_time(e.right());
        default: return false;
    }
}

std::size_t node_count(const Expr& e) {
    switch (e.kind()) {
        case NodeKind::Unary: return 1 + node_count(e.child());
        case NodeKind::Binary: return 1 + node_count(e.left()) + node_count(e.right());
        default: return 1;
    }
}

// ---------------------------------------------------------------- evaluation

double eval(const Expr& e, std::span<const double> x, double t) {
    switch (e.kind()) {
        case NodeKind::Constant: return e.value();
        case NodeKind::Var:
            if (e.index() < 1 || static_cast<std::size_t>(e.index()) > x.size())
                throw DomainError("variable x" + std::to_string(e.index()) + " not bound");
            return x[static_cast<std::size_t>(e.index() - 1)];
        case NodeKind::Time: return t;
        case NodeKind::Unary:
            return apply_unary_value(e.unary_op(), e.order(), eval(e.child(), x, t), e.raw());
        case NodeKind::Binary: {
            const double l = eval(e.left(), x, t);
            if (e.binary_op() == BinaryOp::Mul && l == 0.0) return 0.0;
            return apply_binary_value(e.binary_op(), l, eval(e.right(), x, t), e.raw());
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------- printing

namespace {

enum Prec { kAdd = 1, kMul = 2, kNeg = 3, kPow = 4, kAtom = 5 };

std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

struct Printed {
    std::string text;
    int prec;
};

Printed print(const Expr& e) {
    switch (e.kind()) {
        case NodeKind::Constant: {
            if (e.value() < 0.0 || (e.value() == 0.0 && std::signbit(e.value())))
                return {"-" + format_number(-e.value()), kNeg};
            return {format_number(e.value()), kAtom};
        }
        case NodeKind::Var: return {"x" + std::to_string(e.index()), kAtom};
        case NodeKind::Time: return {"t", kAtom};
        case NodeKind::Unary: {
            const Printed c = print(e.child());
            if (e.unary_op() == UnaryOp::Neg) {
                // A negated constant would reparse as a negative literal.
                if (c.prec < kNeg || e.child().is_constant()) return {"-(" + c.text + ")", kNeg};
                return {"-" + c.text, kNeg};
            }
            std::string name = unary_name(e.unary_op());
            if (e.order() > 0) name += "_d" + std::to_string(e.order());
            return {name + "(" + c.text + ")", kAtom};
        }
        case NodeKind::Binary: {
            const Printed l = print(e.left());
            const Printed r = print(e.right());
            if (e.binary_op() == BinaryOp::Pow) {
                auto wrap = [](const Printed& p) { return p.prec == kAtom ? p.text : "(" + p.text + ")"; };
                return {wrap(l) + "^" + wrap(r), kPow};
            }
            const int p = (e.binary_op() == BinaryOp::Add || e.binary_op() == BinaryOp::Sub) ? kAdd : kMul;
            const char* op = e.binary_op() == BinaryOp::Add   ? "+"
                             : e.binary_op() == BinaryOp::Sub ? "-"
                             : e.binary_op() == BinaryOp::Mul ? "*"
                                                              : "/";
            std::string lt = l.prec < p ? "(" + l.text + ")" : l.text;
            std::string rt = (r.prec <= p || r.prec == kNeg) ? "(" + r.text + ")" : r.text;
            return {lt + op + rt, p};
        }
    }
    return {"0", kAtom};
}

}  // namespace

std::string to_string(const Expr& e) { return print(e).text; }

// ---------------------------------------------------------------- parsing

namespace {

class Parser {
public:
    Parser(std::string_view src, int n) : src_(src), n_(n) {}

    Expr parse_all() {
        Expr e = expr();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError("unexpected '" + std::string(1, src_[pos_]) + "'", pos_);
        return e;
    }

    // Entry points shared with the predicate parser.
    Expr expr() {
        Expr e = term();
        for (;;) {
            skip_ws();
            if (accept('+')) e = make_binary(BinaryOp::Add, e, term());
            else if (peek() == '-') {
                ++pos_;
                e = make_binary(BinaryOp::Sub, e, term());
            } else return e;
        }
    }

    std::size_t pos() const { return pos_; }
    void set_pos(std::size_t p) { pos_ = p; }
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }
    bool accept(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool accept(std::string_view s) {
        skip_ws();
        if (src_.substr(pos_, s.size()) == s) {
            pos_ += s.size();
            return true;
        }
        return false;
    }
    std::string_view source() const { return src_; }

private:
    Expr term() {
        Expr e = factor();
        for (;;) {
            if (accept('*')) e = make_binary(BinaryOp::Mul, e, factor());
            else if (accept('/')) e = make_binary(BinaryOp::Div, e, factor());
            else return e;
        }
    }

    Expr factor() {
        if (accept('-')) {
            Expr f = factor();
            if (f.is_constant()) return Expr::constant(-f.value());
            return make_unary(UnaryOp::Neg, f);
        }
        Expr b = base();
        if (accept('^')) {
            Expr ex = base();
            if (ex.kind() == NodeKind::Unary && ex.unary_op() == UnaryOp::Neg && ex.child().is_constant())
                ex = Expr::constant(-ex.child().value());
            if (ex.is_constant() && is_integer(ex.value()) && std::abs(ex.value()) <= 8) {
                const int k = static_cast<int>(ex.value());
                if (k == 0) return Expr::constant(1.0);
                Expr out = b;
                for (int i = 1; i < std::abs(k); ++i) out = make_binary(BinaryOp::Mul, out, b);
                return k > 0 ? out : make_binary(BinaryOp::Div, Expr::constant(1.0), out);
            }
            return make_binary(BinaryOp::Pow, b, ex);
        }
        return b;
    }

    Expr base() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
    }

    Expr number() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
            ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t q = pos_ + 1;
            if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
            if (q < src_.size() && std::isdigit(static_cast<unsigned char>(src_[q]))) {
                pos_ = q;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
        }
        double v = 0.0;
        const char* first = src_.data() + start;
        const char* last = src_.data() + pos_;
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last) throw ParseError("malformed number", start);
        return Expr::constant(v);
    }

    Expr identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string_view id = src_.substr(start, pos_ - start);
        if (id == "t") return Expr::time();
        if (id == "pi") return Expr::constant(std::numbers::pi);
        if (id.size() > 1 && id[0] == 'x' &&
            std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            int index = 0;
            std::from_chars(id.data() + 1, id.data() + id.size(), index);
            if (index < 1 || index > n_) throw ParseError("variable index out of range: " + std::string(id), start);
            return Expr::var(index);
        }
        UnaryOp op{};
        int order = 0;
        if (!lookup_function(id, op, order)) throw ParseError("unknown identifier '" + std::string(id) + "'", start);
        if (!accept('(')) throw ParseError("expected '(' after " + std::string(id), pos_);
        Expr arg = expr();
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        return make_unary(op, arg, order);
    }

    static bool lookup_function(std::string_view id, UnaryOp& op, int& order) {
        static constexpr std::array<std::pair<std::string_view, UnaryOp>, 11> table{{
            {"sin", UnaryOp::Sin}, {"cos", UnaryOp::Cos}, {"exp", UnaryOp::Exp}, {"log", UnaryOp::Log},
            {"sqrt", UnaryOp::Sqrt}, {"cosh", UnaryOp::Cosh}, {"sinh", UnaryOp::Sinh},
            {"tanh", UnaryOp::Tanh}, {"abs", UnaryOp::Abs}, {"step", UnaryOp::Step}, {"bump", UnaryOp::Bump},
        }};
        std::string_view name = id;
        order = 0;
        if (const auto cut = id.find("_d"); cut != std::string_view::npos) {
            name = id.substr(0, cut);
            const std::string_view digits = id.substr(cut + 2);
            if (name != "step" && name != "bump") return false;
            auto res = std::from_chars(digits.data(), digits.data() + digits.size(), order);
            if (res.ec != std::errc() || res.ptr != digits.data() + digits.size() || order < 0) return false;
        }
        for (const auto& [n, o] : table)
            if (n == name) {
                op = o;
                return true;
            }
        return false;
    }

    std::string_view src_;
    int n_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view source, int n) { return Parser(source, n).parse_all(); }

// ---------------------------------------------------------------- Program

Program::Program(const Expr& e) : source_(e) {
    emit(e);
    std::size_t depth = 0;
    for (const Instr& in : code_) {
        switch (in.code) {
            case Code::Const:
            case Code::Var:
            case Code::Time: ++depth; break;
            case Code::Add:
            case Code::Sub:
            case Code::Mul:
            case Code::Div:
            case Code::Pow: --depth; break;
            default: break;
        }
        stack_depth_ = std::max(stack_depth_, depth);
    }
    if (e.is_constant()) {
        constant_ = true;
        constant_value_ = e.value();
    } else if (e.kind() == NodeKind::Var) {
        var_ = e.index() - 1;
    }
}

void Program::emit(const Expr& e) {
    switch (e.kind()) {
        case NodeKind::Constant: code_.push_back({Code::Const, UnaryOp::Neg, 0, e.value(), e.raw()}); return;
        case NodeKind::Var: code_.push_back({Code::Var, UnaryOp::Neg, e.index() - 1, 0.0, e.raw()}); return;
        case NodeKind::Time: code_.push_back({Code::Time, UnaryOp::Neg, 0, 0.0, e.raw()}); return;
        case NodeKind::Unary:
            emit(e.child());
            code_.push_back({Code::Unary, e.unary_op(), e.order(), 0.0, e.raw()});
            return;
        case NodeKind::Binary: {
            emit(e.left());
            std::size_t jump = 0;
            const bool guarded = e.binary_op() == BinaryOp::Mul;
            if (guarded) {
                jump = code_.size();
                code_.push_back({Code::JumpIfZero, UnaryOp::Neg, 0, 0.0, e.raw()});
            }
            emit(e.right());
            Code c = Code::Add;
            switch (e.binary_op()) {
                case BinaryOp::Add: c = Code::Add; break;
                case BinaryOp::Sub: c = Code::Sub; break;
                case BinaryOp::Mul: c = Code::Mul; break;
                case BinaryOp::Div: c = Code::Div; break;
                case BinaryOp::Pow: c = Code::Pow; break;
            }
            code_.push_back({c, UnaryOp::Neg, 0, 0.0, e.raw()});
            if (guarded) code_[jump].arg = static_cast<int>(code_.size());
            return;
        }
    }
}

void Program::fail(const Instr& in, const char* what) const { domain_fail(in.node, what); }

double Program::run(const double* x, double t) const {
    constexpr std::size_t kInline = 32;
    double inline_stack[kInline];
    inline_stack[0] = 0.0;
    std::vector<double> heap;
    double* st = inline_stack;
    if (stack_depth_ > kInline) {
        heap.resize(stack_depth_);
        st = heap.data();
    }
    std::size_t sp = 0;
    const std::size_t n = code_.size();
    for (std::size_t pc = 0; pc < n; ++pc) {
        const Instr& in = code_[pc];
        switch (in.code) {
            case Code::Const: st[sp++] = in.value; break;
            case Code::Var: st[sp++] = x[in.arg]; break;
            case Code::Time: st[sp++] = t; break;
            case Code::Unary: st[sp - 1] = apply_unary_value(in.uop, in.arg, st[sp - 1], in.node); break;
            case Code::JumpIfZero:
                if (st[sp - 1] == 0.0) pc = static_cast<std::size_t>(in.arg) - 1;
                break;
            case Code::Add: --sp; st[sp - 1] += st[sp]; break;
            case Code::Sub: --sp; st[sp - 1] -= st[sp]; break;
            case Code::Mul: --sp; st[sp - 1] *= st[sp]; break;
            case Code::Div:
                --sp;
                if (st[sp] == 0.0) fail(in, "division by zero");
                st[sp - 1] /= st[sp];
                break;
            case Code::Pow:
                --sp;
                st[sp - 1] = apply_binary_value(BinaryOp::Pow, st[sp - 1], st[sp], in.node);
                break;
        }
    }
    return st[0];
}

}  // namespace hypofk
