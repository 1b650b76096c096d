#pragma once

#include "hypofk/expr.hpp"

#include <cstdint>
#include <vector>

namespace hypofk {

/// The (g, h) pair of a martingale observable together with boundary data ψ
/// on the cylinder boundary. g depends on space only; h and ψ on space and time.
struct ObservableSpec {
    Expr g;                       // order-zero rate
    Expr h;                       // source
    Expr psi;                     // boundary / terminal data
    std::vector<double> weights;  // conformal weights Δ_2..Δ_n for SLE observables
};

/// Throws ConfigError when g depends on t or variables exceed x_n.
void validate_observable(const ObservableSpec& obs, int n);

/// Output contract of every Monte Carlo estimator.
struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t n_paths = 0;
    std::uint64_t n_censored_by_cap = 0;
    std::uint64_t n_collisions = 0;   // paths stopped by the collision guard (kept, stopped state)
    std::uint64_t seed = 0;
};

}  // namespace hypofk
