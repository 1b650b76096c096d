#pragma once

#include "hypofk/hormander.hpp"
#include "hypofk/verify.hpp"

#include <vector>

namespace hypofk {

/// Marked points x1 (the driving point) .. xn of an SLE(κ)-type diffusion.
struct SLEConfig {
    double kappa = 2.0;
    std::vector<double> launch;    // x1..xn, pairwise distinct
    std::vector<double> weights;   // Δ2..Δn (empty means all zero)
    Expr b1;                       // drift of the driving point, default 0
    double collision_guard = 1e-4;

    int n() const { return static_cast<int>(launch.size()); }
    /// Δ_i for i = 2..n (zero when no weights were given).
    double weight(int i) const;
    void validate() const;
};

/// σ = (√κ, 0, .., 0)ᵀ, b = (b1, 2/(x2-x1), .., 2/(xn-x1)); the domain is
/// min pairwise gap > δ_c and every coordinate is marked as singular.
DiffusionSpec sle_spec(const SLEConfig& cfg);

/// g = -Σ_{i>=2} 2Δ_i/(x_i-x1)², h = 0, ψ = f.
ObservableSpec covariant_observable(const SLEConfig& cfg, const Expr& f);

/// max over points of |(κ/2)∂11 f + Σ 2/(x_i-x1) ∂_i f + b1 ∂1 f - Σ 2Δ_i/(x_i-x1)² f|.
/// Throws DomainError for points with coinciding coordinates.
ResidualReport bpz_residual(const SLEConfig& cfg, const Expr& f, const std::vector<std::vector<double>>& points,
                            double tol);

/// Hörmander rank of the SLE spec at each point. Throws DomainError for
/// points with coinciding coordinates.
std::vector<RankReport> sle_hormander_report(const SLEConfig& cfg, const std::vector<std::vector<double>>& points,
                                             int depth, double tol = kDefaultRankTolerance);

}  // namespace hypofk
