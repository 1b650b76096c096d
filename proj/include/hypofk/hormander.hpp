#pragma once

#include "hypofk/fields.hpp"

#include <span>
#include <string>
#include <vector>

namespace hypofk {

/// [V, W]_i = Σ_j (v_j ∂_j w_i - w_j ∂_j v_i).
VectorField lie_bracket(const VectorField& v, const VectorField& w);

struct BracketEntry {
    VectorField field;
    std::string word;   // e.g. "[U1,U0]" or "[[U1,U0],U1]"
    int depth = 0;      // 0 for seeds
    int left = -1;      // parent indices into the basis, -1 for seeds
    int right = -1;
};

/// Seeds {U_q} ∪ {[U_q, U_0]} plus iterated brackets among list members,
/// duplicate-free under structural equality. Zero fields are dropped.
struct BracketBasis {
    int dimension = 0;
    int depth = 0;
    bool truncated = false;   // generation stopped at max_fields
    std::vector<BracketEntry> entries;
};

struct BasisOptions {
    int max_fields = 256;
    // Brackets whose coefficient trees exceed this many nodes are skipped.
    std::size_t max_nodes = 200000;
};

BracketBasis generate_basis(const DiffusionSpec& spec, int depth, const BasisOptions& options = {});

/// Default bracket depth n + 2.
inline int default_depth(const DiffusionSpec& spec) { return spec.n + 2; }
inline constexpr double kDefaultRankTolerance = 1e-9;

struct RankReport {
    std::vector<double> point;
    int depth = 0;
    std::vector<double> singular_values;   // descending
    int rank = 0;
    bool satisfied = false;   // rank == n; conclusive only when true
};

/// Numerical rank of the basis evaluated at x: #{s_i > tol * s_1}.
RankReport rank_at(const BracketBasis& basis, std::span<const double> x, double tol = kDefaultRankTolerance);

}  // namespace hypofk
