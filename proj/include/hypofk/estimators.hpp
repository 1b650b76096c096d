#pragma once

#include "hypofk/paths.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypofk {

/// A Monte Carlo sample was non-finite or no usable path remained.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& message, std::uint64_t path_index)
        : std::runtime_error(message), path_index_(path_index) {}
    std::uint64_t path_index() const noexcept { return path_index_; }

private:
    std::uint64_t path_index_;
};

struct EstimatorOptions {
    unsigned threads = 0;        // 0 = all available cores
    // Pair path 2k with the sign-flipped noise of path 2k+1; the standard
    // error is then computed from the n/2 pair averages.
    bool antithetic = false;
};

/// Mean of γ_{t,τ} ψ(X_τ, τ) + H_{t,τ} over paths launched at (x, t), τ = τ_∂Λ ∧ T.
/// Paths stopped by the step cap are excluded and counted.
MCEstimate solve_parabolic(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x, double t,
                           const PathConfig& cfg, std::uint64_t n_paths, const EstimatorOptions& options = {});

/// Which criterion of the X-harmonic Feynman-Kac theorem the user asserts.
enum class HarmonicCriterion { None, A, B, C };

struct HarmonicOptions : EstimatorOptions {
    HarmonicCriterion criterion = HarmonicCriterion::None;
    double alpha = 0.0;          // moment exponent of criterion (c); recorded, never verified
    // Box over which sup g is estimated; defaults to the domain box when the
    // domain is one, else to x ± 1.
    std::optional<std::vector<double>> sample_lower, sample_upper;
    std::size_t sup_samples = 4096;
    bool stabilization_test = true;
};

/// Checks that the running mean settles and that the exponential growth of γ
/// along long paths stays below the decay rate of the exit-time tail.
struct StabilizationReport {
    bool performed = false;
    bool cauchy_pass = true;
    std::vector<std::uint64_t> checkpoints;
    std::vector<double> running_means;
    double max_normalized_gap = 0.0;  // max |m_k - m_n| / (s sqrt(1/k - 1/n))
    bool tail_pass = true;
    double tail_threshold_time = 0.0; // median exit time
    std::uint64_t tail_paths = 0;
    double tail_decay_rate = 0.0;     // λ̂: 1 / mean(τ - t0 | τ > t0)
    double tail_decay_se = 0.0;
    double tail_growth_rate = 0.0;    // ĉ: Σ log γ / Σ τ over tail paths
    bool divergent() const { return !(cauchy_pass && tail_pass); }
};

struct HarmonicEstimate {
    MCEstimate estimate;
    double sup_g = 0.0;          // sampled maximum of g plus a 10% margin
    bool unreliable = false;     // more than 1% of paths hit the step cap
    bool divergent = false;      // stabilization test failed
    StabilizationReport stabilization;
    std::vector<std::string> warnings;
};

/// Mean of γ_τ ψ(X_τ) + H_τ over paths with no time horizon.
HarmonicEstimate solve_harmonic(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x,
                                const PathConfig& cfg, std::uint64_t n_paths, const HarmonicOptions& options = {});

/// Fraction of paths launched at (x, t) with τ_∂Λ > T.
MCEstimate survival_probability(const DiffusionSpec& spec, std::span<const double> x, double t, double T,
                                const PathConfig& cfg, std::uint64_t n_paths, const EstimatorOptions& options = {});

/// Axis-aligned box partitioned into equal cells.
struct DensityGrid {
    std::vector<double> lower, upper;
    std::vector<int> cells;      // per axis

    int dimension() const { return static_cast<int>(lower.size()); }
    std::size_t cell_count() const;
    double cell_volume() const;
    /// Flat cell index of x, or nothing when x lies outside the closed box.
    std::optional<std::size_t> locate(std::span<const double> x) const;
    std::vector<double> cell_center(std::size_t cell) const;
    void validate() const;
};

struct DensityEstimate {
    DensityGrid grid;
    std::vector<double> times;
    std::vector<std::vector<std::uint64_t>> counts;   // [slice][cell]
    std::vector<std::uint64_t> outside;               // surviving paths off the grid, per slice
    std::uint64_t n_launched = 0;
    std::vector<std::vector<double>> bandwidth;       // [slice][axis], 1.06 σ̂ N^{-1/5}

    /// Surviving mass on the grid: Σ counts / n_launched.
    double mass(std::size_t slice) const;
    /// Binomial standard error of mass(slice).
    double mass_std_error(std::size_t slice) const;
    /// Histogram density counts / (n_launched · cell volume).
    double density(std::size_t slice, std::size_t cell) const;
    double density_std_error(std::size_t slice, std::size_t cell) const;
    /// Gaussian-kernel smoothing of the histogram at the cell centres.
    std::vector<double> smoothed(std::size_t slice) const;
};

/// Histogram of surviving positions at each requested time.
DensityEstimate transition_density(const DiffusionSpec& spec, std::span<const double> w, const std::vector<double>& times,
                                   const DensityGrid& grid, const PathConfig& cfg, std::uint64_t n_paths,
                                   const EstimatorOptions& options = {});

/// a ∇f / f + b at (x, t).
std::vector<double> h_transform_drift(const DiffusionSpec& spec, const Expr& f, std::span<const double> x, double t);

}  // namespace hypofk
