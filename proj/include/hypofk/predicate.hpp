#pragma once

#include "hypofk/expr.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hypofk {

enum class CmpOp { Lt, Le, Gt, Ge };

/// One face x_axis = bound of an axis-aligned box domain; `upper` marks
/// constraints of the form x_axis < bound.
struct BoxFace {
    int axis;  // 1-based
    double bound;
    bool upper;
    bool strict = true;  // < / > rather than <= / >=

    bool admits(double v) const {
        return upper ? (strict ? v < bound : v <= bound) : (strict ? v > bound : v >= bound);
    }
};

/// Conjunction/disjunction tree of comparisons; represents the domain Λ.
class Predicate {
public:
    enum class Kind { True, Compare, And, Or };

    /// The whole space.
    Predicate();
    static Predicate compare(Expr lhs, CmpOp op, Expr rhs);
    static Predicate conjunction(std::vector<Predicate> terms);
    static Predicate disjunction(std::vector<Predicate> terms);

    Kind kind() const { return kind_; }
    const Expr& lhs() const { return lhs_; }
    const Expr& rhs() const { return rhs_; }
    CmpOp op() const { return op_; }
    const std::vector<Predicate>& terms() const { return *terms_; }

    bool operator()(std::span<const double> x, double t = 0.0) const;

    /// True when only strict comparisons occur (the set is then open).
    bool is_open() const;
    int max_var_index() const;

    /// Faces of the box when the predicate is a conjunction of comparisons
    /// between a single coordinate and a constant.
    std::optional<std::vector<BoxFace>> box_faces() const;

private:
    Kind kind_ = Kind::True;
    Expr lhs_, rhs_;
    CmpOp op_ = CmpOp::Lt;
    std::shared_ptr<const std::vector<Predicate>> terms_;
};

/// pred := conj ('||' conj)*; conj := atom ('&&' atom)*;
/// atom := 'true' | expr cmp expr | '(' pred ')'; cmp := < <= > >=.
Predicate parse_predicate(std::string_view source, int n);
std::string to_string(const Predicate& p);

/// Predicate with every comparison compiled for inner-loop evaluation.
class CompiledPredicate {
public:
    CompiledPredicate() = default;
    explicit CompiledPredicate(const Predicate& p);
    bool operator()(const double* x, double t) const;

private:
    struct Item {
        Predicate::Kind kind;
        CmpOp op;
        Program lhs, rhs;
        std::vector<CompiledPredicate> terms;
    };
    std::shared_ptr<const Item> item_;
};

}  // namespace hypofk
