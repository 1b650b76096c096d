#pragma once

#include "hypofk/expr.hpp"
#include "hypofk/predicate.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypofk {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time-homogeneous SDE dX = sigma(X) dB + b(X) dt on the domain Λ.
struct DiffusionSpec {
    int n = 1;                 // spatial dimension
    int d = 1;                 // noise dimension
    std::vector<Expr> sigma;   // n x d, row-major
    std::vector<Expr> drift;   // n
    Predicate domain;          // Λ
    // Coordinates whose pairwise collisions make the drift singular (SLE-type
    // specs). Paths stop with a collision cause when two of them come closer
    // than the configured guard.
    std::vector<int> singular_coordinates;
    // Closed region the process never leaves (slowed-down specs). An Euler
    // step that would end outside it is rejected and the state is held.
    std::optional<Predicate> confinement;

    const Expr& sigma_at(int i, int q) const { return sigma[static_cast<std::size_t>((i - 1) * d + (q - 1))]; }

    /// Throws ConfigError on shape mismatches, out-of-range variables or
    /// time-dependent coefficients.
    void validate() const;
};

DiffusionSpec make_spec(int n, int d, std::vector<Expr> sigma, std::vector<Expr> drift, Predicate domain = {});
/// Convenience constructor from expression strings in the exprlang grammar.
DiffusionSpec make_spec(int n, int d, const std::vector<std::string>& sigma, const std::vector<std::string>& drift,
                        const std::string& domain = "true");

/// Σ c_i(x) ∂_i.
struct VectorField {
    std::vector<Expr> coeffs;

    int dimension() const { return static_cast<int>(coeffs.size()); }
    /// The first-order derivative Σ c_i ∂_i f.
    Expr apply(const Expr& f) const;
    bool is_zero() const;
    std::vector<double> at(std::span<const double> x) const;

    friend bool operator==(const VectorField& a, const VectorField& b) { return a.coeffs == b.coeffs; }
};

/// a = σσᵀ as an n x n row-major matrix of expressions.
std::vector<Expr> diffusion_matrix(const DiffusionSpec& spec);

/// U_q = Σ_i σ_{i,q} ∂_i for q >= 1; U_0 = Σ_i b_i ∂_i - ½ Σ_q Σ_i (U_q σ_{i,q}) ∂_i.
VectorField make_U(const DiffusionSpec& spec, int q);

/// G f = ½ Σ a_ij ∂_ij f + Σ b_i ∂_i f.
Expr apply_G(const DiffusionSpec& spec, const Expr& f);

/// G* f = ½ Σ ∂_ij (a_ij f) - Σ ∂_i (b_i f).
Expr apply_G_dual(const DiffusionSpec& spec, const Expr& f);

/// Max over points of |G f - (½ Σ_q U_q(U_q f) + U_0 f)|.
double check_generator_identity(const DiffusionSpec& spec, const Expr& f,
                                const std::vector<std::vector<double>>& points);

/// Smallest eigenvalue of a(x) over the sample points.
double min_diffusion_eigenvalue(const DiffusionSpec& spec, const std::vector<std::vector<double>>& points);

}  // namespace hypofk
