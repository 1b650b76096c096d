#include "hypofk/predicate.hpp"

#include <algorithm>
#include <cctype>

namespace hypofk {

namespace {

bool compare(double l, CmpOp op, double r) {
    switch (op) {
        case CmpOp::Lt: return l < r;
        case CmpOp::Le: return l <= r;
        case CmpOp::Gt: return l > r;
        case CmpOp::Ge: return l >= r;
    }
    return false;
}

const char* cmp_text(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return " < ";
        case CmpOp::Le: return " <= ";
        case CmpOp::Gt: return " > ";
        case CmpOp::Ge: return " >= ";
    }
    return " ? ";
}

}  // namespace

Predicate::Predicate() = default;

Predicate Predicate::compare(Expr lhs, CmpOp op, Expr rhs) {
    Predicate p;
    p.kind_ = Kind::Compare;
    p.lhs_ = std::move(lhs);
    p.rhs_ = std::move(rhs);
    p.op_ = op;
    return p;
}

Predicate Predicate::conjunction(std::vector<Predicate> terms) {
    if (terms.empty()) return Predicate();
    if (terms.size() == 1) return terms.front();
    Predicate p;
    p.kind_ = Kind::And;
    p.terms_ = std::make_shared<const std::vector<Predicate>>(std::move(terms));
    return p;
}

Predicate Predicate::disjunction(std::vector<Predicate> terms) {
    if (terms.size() == 1) return terms.front();
    Predicate p;
    p.kind_ = Kind::Or;
    p.terms_ = std::make_shared<const std::vector<Predicate>>(std::move(terms));
    return p;
}

bool Predicate::operator()(std::span<const double> x, double t) const {
    switch (kind_) {
        case Kind::True: return true;
        case Kind::Compare: return hypofk::compare(eval(lhs_, x, t), op_, eval(rhs_, x, t));
        case Kind::And:
            return std::all_of(terms_->begin(), terms_->end(), [&](const Predicate& p) { return p(x, t); });
        case Kind::Or:
            return std::any_of(terms_->begin(), terms_->end(), [&](const Predicate& p) { return p(x, t); });
    }
    return false;
}

bool Predicate::is_open() const {
    switch (kind_) {
        case Kind::True: return true;
        case Kind::Compare: return op_ == CmpOp::Lt || op_ == CmpOp::Gt;
        default: return std::all_of(terms_->begin(), terms_->end(), [](const Predicate& p) { return p.is_open(); });
    }
}

int Predicate::max_var_index() const {
    switch (kind_) {
        case Kind::True: return 0;
        case Kind::Compare: return std::max(hypofk::max_var_index(lhs_), hypofk::max_var_index(rhs_));
        default: {
            int m = 0;
            for (const auto& p : *terms_) m = std::max(m, p.max_var_index());
            return m;
        }
    }
}

std::optional<std::vector<BoxFace>> Predicate::box_faces() const {
    std::vector<BoxFace> faces;
    auto add = [&faces](const Predicate& p) {
        if (p.kind() != Kind::Compare) return false;
        const Expr& l = p.lhs();
        const Expr& r = p.rhs();
        const bool less = p.op() == CmpOp::Lt || p.op() == CmpOp::Le;
        const bool strict = p.op() == CmpOp::Lt || p.op() == CmpOp::Gt;
        if (l.kind() == NodeKind::Var && r.is_constant()) {
            faces.push_back({l.index(), r.value(), less, strict});
            return true;
        }
        if (r.kind() == NodeKind::Var && l.is_constant()) {
            faces.push_back({r.index(), l.value(), !less, strict});
            return true;
        }
        return false;
    };
    if (kind_ == Kind::Compare) {
        if (!add(*this)) return std::nullopt;
    } else if (kind_ == Kind::And) {
        for (const auto& p : *terms_)
            if (!add(p)) return std::nullopt;
    } else {
        return std::nullopt;
    }
    return faces;
}

std::string to_string(const Predicate& p) {
    switch (p.kind()) {
        case Predicate::Kind::True: return "true";
        case Predicate::Kind::Compare: return to_string(p.lhs()) + cmp_text(p.op()) + to_string(p.rhs());
        default: {
            const char* joiner = p.kind() == Predicate::Kind::And ? " && " : " || ";
            std::string out;
            for (std::size_t i = 0; i < p.terms().size(); ++i) {
                const auto& sub = p.terms()[i];
                std::string s = to_string(sub);
                if (sub.kind() == Predicate::Kind::And || sub.kind() == Predicate::Kind::Or) s = "(" + s + ")";
                out += (i ? joiner : "") + s;
            }
            return out;
        }
    }
}

namespace {

// Splits on top-level operators so that comparison operands reuse parse_expr.
class PredicateParser {
public:
    PredicateParser(std::string_view src, int n) : src_(src), n_(n) {}

    Predicate parse() {
        Predicate p = disjunction();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError("unexpected trailing input in predicate", pos_);
        return p;
    }

private:
    Predicate disjunction() {
        std::vector<Predicate> terms{conjunction()};
        while (accept("||") || accept_word("or")) terms.push_back(conjunction());
        return Predicate::disjunction(std::move(terms));
    }

    Predicate conjunction() {
        std::vector<Predicate> terms{atom()};
        while (accept("&&") || accept_word("and")) terms.push_back(atom());
        return Predicate::conjunction(std::move(terms));
    }

    Predicate atom() {
        skip_ws();
        if (accept_word("true")) return Predicate();
        if (pos_ < src_.size() && src_[pos_] == '(') {
            // Either a parenthesised predicate or the start of an expression.
            const std::size_t close = matching_paren(pos_);
            const std::string_view inner = src_.substr(pos_ + 1, close - pos_ - 1);
            if (contains_comparison(inner)) {
                ++pos_;
                Predicate p = disjunction();
                skip_ws();
                if (pos_ >= src_.size() || src_[pos_] != ')') throw ParseError("expected ')'", pos_);
                ++pos_;
                return p;
            }
        }
        const std::size_t lhs_start = pos_;
        const std::size_t op_at = find_top_level_cmp(pos_);
        if (op_at == std::string_view::npos) throw ParseError("expected comparison", pos_);
        Expr lhs = sub_expr(lhs_start, op_at);
        CmpOp op{};
        std::size_t op_len = 1;
        if (src_.substr(op_at, 2) == "<=") op = CmpOp::Le, op_len = 2;
        else if (src_.substr(op_at, 2) == ">=") op = CmpOp::Ge, op_len = 2;
        else if (src_[op_at] == '<') op = CmpOp::Lt;
        else op = CmpOp::Gt;
        const std::size_t rhs_start = op_at + op_len;
        const std::size_t rhs_end = find_term_end(rhs_start);
        Expr rhs = sub_expr(rhs_start, rhs_end);
        pos_ = rhs_end;
        return Predicate::compare(std::move(lhs), op, std::move(rhs));
    }

    Expr sub_expr(std::size_t begin, std::size_t end) {
        try {
            return parse_expr(src_.substr(begin, end - begin), n_);
        } catch (const ParseError& e) {
            throw ParseError(std::string(e.what()) + " (in predicate)", begin + e.position());
        }
    }

    std::size_t matching_paren(std::size_t open) const {
        int depth = 0;
        for (std::size_t i = open; i < src_.size(); ++i) {
            if (src_[i] == '(') ++depth;
            else if (src_[i] == ')' && --depth == 0) return i;
        }
        throw ParseError("unbalanced '('", open);
    }

    static bool contains_comparison(std::string_view s) {
        return s.find_first_of("<>") != std::string_view::npos || s.find("&&") != std::string_view::npos ||
               s.find("||") != std::string_view::npos;
    }

    std::size_t find_top_level_cmp(std::size_t from) const {
        int depth = 0;
        for (std::size_t i = from; i < src_.size(); ++i) {
            const char c = src_[i];
            if (c == '(') ++depth;
            else if (c == ')') {
                if (--depth < 0) return std::string_view::npos;
            } else if (depth == 0 && (c == '<' || c == '>')) return i;
            else if (depth == 0 && (src_.substr(i, 2) == "&&" || src_.substr(i, 2) == "||"))
                return std::string_view::npos;
        }
        return std::string_view::npos;
    }

    std::size_t find_term_end(std::size_t from) const {
        int depth = 0;
        for (std::size_t i = from; i < src_.size(); ++i) {
            const char c = src_[i];
            if (c == '(') ++depth;
            else if (c == ')') {
                if (depth == 0) return i;
                --depth;
            } else if (depth == 0 && (src_.substr(i, 2) == "&&" || src_.substr(i, 2) == "||")) return i;
            else if (depth == 0 && (word_at(i, "and") || word_at(i, "or"))) return i;
        }
        return src_.size();
    }

    bool word_at(std::size_t i, std::string_view w) const {
        if (src_.substr(i, w.size()) != w) return false;
        const bool left_ok = i == 0 || std::isspace(static_cast<unsigned char>(src_[i - 1]));
        const std::size_t j = i + w.size();
        const bool right_ok = j >= src_.size() || std::isspace(static_cast<unsigned char>(src_[j])) || src_[j] == '(';
        return left_ok && right_ok;
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(std::string_view s) {
        skip_ws();
        if (src_.substr(pos_, s.size()) == s) {
            pos_ += s.size();
            return true;
        }
        return false;
    }

    bool accept_word(std::string_view w) {
        skip_ws();
        if (word_at(pos_, w)) {
            pos_ += w.size();
            return true;
        }
        return false;
    }

    std::string_view src_;
    int n_;
    std::size_t pos_ = 0;
};

}  // namespace

Predicate parse_predicate(std::string_view source, int n) { return PredicateParser(source, n).parse(); }

CompiledPredicate::CompiledPredicate(const Predicate& p) {
    auto item = std::make_shared<Item>();
    item->kind = p.kind();
    item->op = p.op();
    if (p.kind() == Predicate::Kind::Compare) {
        item->lhs = Program(p.lhs());
        item->rhs = Program(p.rhs());
    } else if (p.kind() != Predicate::Kind::True) {
        for (const auto& sub : p.terms()) item->terms.emplace_back(sub);
    }
    item_ = std::move(item);
}

bool CompiledPredicate::operator()(const double* x, double t) const {
    if (!item_) return true;
    const Item& it = *item_;
    switch (it.kind) {
        case Predicate::Kind::True: return true;
        case Predicate::Kind::Compare: return compare(it.lhs(x, t), it.op, it.rhs(x, t));
        case Predicate::Kind::And:
            for (const auto& sub : it.terms)
                if (!sub(x, t)) return false;
            return true;
        case Predicate::Kind::Or:
            for (const auto& sub : it.terms)
                if (sub(x, t)) return true;
            return false;
    }
    return false;
}

}  // namespace hypofk
