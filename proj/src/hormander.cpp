#include "hypofk/hormander.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>

namespace hypofk {

VectorField lie_bracket(const VectorField& v, const VectorField& w) {
    if (v.dimension() != w.dimension()) throw std::invalid_argument("lie_bracket: dimension mismatch");
    VectorField out;
    out.coeffs.resize(v.coeffs.size());
    for (std::size_t i = 0; i < v.coeffs.size(); ++i) {
        Expr c;
        for (std::size_t j = 0; j < v.coeffs.size(); ++j) {
            const int var = static_cast<int>(j) + 1;
            c = c + v.coeffs[j] * diff(w.coeffs[i], var) - w.coeffs[j] * diff(v.coeffs[i], var);
        }
        out.coeffs[i] = c;
    }
    return out;
}

namespace {

std::size_t field_size(const VectorField& f) {
    std::size_t s = 0;
    for (const auto& c : f.coeffs) s += node_count(c);
    return s;
}

bool contains(const std::vector<BracketEntry>& entries, const VectorField& f) {
    return std::any_of(entries.begin(), entries.end(), [&](const BracketEntry& e) { return e.field == f; });
}

}  // namespace

BracketBasis generate_basis(const DiffusionSpec& spec, int depth, const BasisOptions& options) {
    if (depth < 0) throw std::invalid_argument("generate_basis: depth must be non-negative");
    BracketBasis basis;
    basis.dimension = spec.n;
    basis.depth = depth;
    auto& entries = basis.entries;

    auto push = [&](VectorField f, std::string word, int level, int l, int r) {
        if (f.is_zero() || contains(entries, f)) return;
        if (static_cast<int>(entries.size()) >= options.max_fields) {
            basis.truncated = true;
            return;
        }
        entries.push_back({std::move(f), std::move(word), level, l, r});
    };

    const VectorField u0 = make_U(spec, 0);
    for (int q = 1; q <= spec.d; ++q) push(make_U(spec, q), "U" + std::to_string(q), 0, -1, -1);
    for (int q = 1; q <= spec.d; ++q)
        push(lie_bracket(make_U(spec, q), u0), "[U" + std::to_string(q) + ",U0]", 0, -1, -1);

    std::size_t previous_begin = 0;
    for (int level = 1; level <= depth && !basis.truncated; ++level) {
        const std::size_t current_end = entries.size();
        for (std::size_t i = 0; i < current_end && !basis.truncated; ++i) {
            for (std::size_t j = std::max(i + 1, previous_begin); j < current_end && !basis.truncated; ++j) {
                if (field_size(entries[i].field) + field_size(entries[j].field) > options.max_nodes) continue;
                VectorField b = lie_bracket(entries[i].field, entries[j].field);
                if (field_size(b) > options.max_nodes) continue;
                push(std::move(b), "[" + entries[i].word + "," + entries[j].word + "]", level, static_cast<int>(i),
                     static_cast<int>(j));
            }
        }
        previous_begin = current_end;
        if (entries.size() == current_end) break;  // closed under brackets
    }
    return basis;
}

RankReport rank_at(const BracketBasis& basis, std::span<const double> x, double tol) {
    RankReport report;
    report.point.assign(x.begin(), x.end());
    report.depth = basis.depth;
    const int rows = static_cast<int>(basis.entries.size());
    const int n = basis.dimension;
    if (rows == 0) return report;
    Eigen::MatrixXd m(rows, n);
    for (int r = 0; r < rows; ++r) {
        const auto v = basis.entries[static_cast<std::size_t>(r)].field.at(x);
        for (int c = 0; c < n; ++c) m(r, c) = v[static_cast<std::size_t>(c)];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    report.singular_values.assign(s.data(), s.data() + s.size());
    const double top = report.singular_values.empty() ? 0.0 : report.singular_values.front();
    for (double v : report.singular_values)
        if (top > 0.0 && v > tol * top) ++report.rank;
    report.satisfied = report.rank == n;
    return report;
}

}  // namespace hypofk
