#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hypofk {

/// Raised when the expression source does not conform to the grammar.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::size_t position)
        : std::runtime_error(message + " at position " + std::to_string(position)),
          position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Raised when a partial function (log, sqrt, division, pow) is evaluated
/// outside its domain.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NodeKind { Constant, Var, Time, Unary, Binary };

enum class UnaryOp {
    Neg, Sin, Cos, Exp, Log, Sqrt, Cosh, Sinh, Tanh, Abs,
    // Smooth compactly supported profiles, carried with a derivative order.
    // step(r): 0 for r <= 0, 1 for r >= 1, exp(-1/r)/(exp(-1/r)+exp(-1/(1-r))) between.
    // bump(u): exp(-1/(1-u^2)) for |u| < 1, 0 otherwise.
    Step, Bump
};

enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct Node;

/// Immutable scalar expression over x1..xn and t. Copies share structure.
class Expr {
public:
    Expr();  // the constant 0
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    static Expr constant(double v);
    static Expr var(int index);
    static Expr time();

    NodeKind kind() const;
    double value() const;       // Constant only
    int index() const;          // Var only (1-based)
    UnaryOp unary_op() const;   // Unary only
    int order() const;          // derivative order of Step/Bump
    BinaryOp binary_op() const; // Binary only
    const Expr& child() const;  // Unary only
    const Expr& left() const;   // Binary only
    const Expr& right() const;  // Binary only

    bool is_constant() const { return kind() == NodeKind::Constant; }
    bool is_zero() const { return is_constant() && value() == 0.0; }
    bool is_one() const { return is_constant() && value() == 1.0; }

    const Node* raw() const { return node_.get(); }

    friend bool operator==(const Expr& a, const Expr& b);

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    NodeKind kind = NodeKind::Constant;
    double value = 0.0;
    int index = 0;
    UnaryOp uop = UnaryOp::Neg;
    int order = 0;
    BinaryOp bop = BinaryOp::Add;
    Expr a;
    Expr b;
};

// Raw constructors: no simplification. Used by the parser.
Expr make_unary(UnaryOp op, Expr child, int order = 0);
Expr make_binary(BinaryOp op, Expr left, Expr right);

// Simplifying constructors: constant folding and 0/1 identities only.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);
Expr apply(UnaryOp op, const Expr& arg, int order = 0);
/// base^k for integer k; expanded as repeated multiplication when |k| <= 8.
Expr ipow(const Expr& base, int k);

inline Expr operator+(const Expr& a, double b) { return a + Expr::constant(b); }
inline Expr operator+(double a, const Expr& b) { return Expr::constant(a) + b; }
inline Expr operator-(const Expr& a, double b) { return a - Expr::constant(b); }
inline Expr operator-(double a, const Expr& b) { return Expr::constant(a) - b; }
inline Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
inline Expr operator*(const Expr& a, double b) { return a * Expr::constant(b); }
inline Expr operator/(const Expr& a, double b) { return a / Expr::constant(b); }
inline Expr operator/(double a, const Expr& b) { return Expr::constant(a) / b; }

/// Parses `source` in the expression grammar; variables must lie in x1..xn.
Expr parse_expr(std::string_view source, int n);

/// Prints an expression that parses back to the same tree.
std::string to_string(const Expr& e);

/// Evaluates at (x, t). Throws DomainError naming the offending subexpression.
double eval(const Expr& e, std::span<const double> x, double t = 0.0);

/// Exact symbolic partial derivative with respect to x_index (1-based).
Expr diff(const Expr& e, int index);
/// Exact symbolic partial derivative with respect to t.
Expr diff_t(const Expr& e);

int max_var_index(const Expr& e);
bool depends_on_time(const Expr& e);
std::size_t node_count(const Expr& e);

/// k-th derivative of the Step or Bump profile at u.
double profile_derivative(UnaryOp op, int k, double u);

/// Flat postfix form of an Expr for evaluation in inner loops.
class Program {
public:
    Program() = default;
    explicit Program(const Expr& e);

    double operator()(const double* x, double t) const {
        if (constant_) return constant_value_;
        if (var_ >= 0) return x[var_];
        return run(x, t);
    }
    double operator()(std::span<const double> x, double t = 0.0) const { return (*this)(x.data(), t); }

    bool is_constant() const { return constant_; }
    /// Value of a constant program (valid when is_constant()).
    double constant_value() const { return constant_value_; }
    const Expr& source() const { return source_; }

private:
    enum class Code : unsigned char { Const, Var, Time, Unary, Add, Sub, Mul, Div, Pow, JumpIfZero };
    struct Instr {
        Code code;
        UnaryOp uop;
        int arg;        // variable index (0-based), derivative order, or jump target
        double value;
        const Node* node;
    };
    double run(const double* x, double t) const;
    void emit(const Expr& e);
    [[noreturn]] void fail(const Instr& in, const char* what) const;

    Expr source_;
    std::vector<Instr> code_;
    std::size_t stack_depth_ = 0;
    bool constant_ = false;
    double constant_value_ = 0.0;
    int var_ = -1;  // 0-based index when the program is a single variable
};

}  // namespace hypofk
