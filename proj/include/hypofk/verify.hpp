#pragma once

#include "hypofk/estimators.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypofk {

/// A test function is not compactly supported inside the quadrature region.
class SupportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SpaceTimePoint {
    std::vector<double> x;
    double t = 0.0;
};

enum class ResidualMode { StrongSymbolic, StrongGrid, Weak };

const char* to_string(ResidualMode mode);

struct ResidualReport {
    ResidualMode mode = ResidualMode::StrongSymbolic;
    std::vector<double> values;     // pointwise residuals (strong) or the single integral (weak)
    double residual = 0.0;          // max |value| (strong) or |integral| (weak)
    double tolerance = 0.0;
    bool pass = false;
    // Weak mode only: error budget components; tolerance = 3 (mc + quadrature +
    // interpolation) unless overridden.
    double mc_error = 0.0;
    double quadrature_error = 0.0;
    double interpolation_error = 0.0;
};

/// max over points of |G f + ∂_t f + g f + h|, evaluated symbolically.
ResidualReport strong_residual(const DiffusionSpec& spec, const ObservableSpec& obs, const Expr& f,
                               const std::vector<SpaceTimePoint>& points, double tol);

/// Values of a function on a tensor grid of space nodes × time nodes. Nodes
/// include the box endpoints; axis 0 varies fastest, time slowest.
struct GriddedField {
    std::vector<double> lower, upper;   // space box
    std::vector<int> nodes;             // per space axis
    double t0 = 0.0, t1 = 1.0;
    int time_nodes = 1;
    std::vector<double> values;
    std::vector<double> std_errors;     // optional Monte Carlo standard errors, same layout

    int dimension() const { return static_cast<int>(lower.size()); }
    std::size_t space_count() const;
    std::size_t size() const { return space_count() * static_cast<std::size_t>(time_nodes); }
    std::vector<double> space_node(std::size_t flat) const;
    double time_node(int k) const;
    void validate() const;
};

/// Grid with values of a closed-form f.
GriddedField sample_field(const Expr& f, std::vector<double> lower, std::vector<double> upper, std::vector<int> nodes,
                          double t0, double t1, int time_nodes);

/// Field of solve_parabolic estimates, one independent seed per node
/// (cfg.seed + node index), so node errors are independent.
GriddedField solve_parabolic_field(const DiffusionSpec& spec, const ObservableSpec& obs, std::vector<double> lower,
                                   std::vector<double> upper, std::vector<int> nodes, double t0, double t1,
                                   int time_nodes, const PathConfig& cfg, std::uint64_t n_paths,
                                   const EstimatorOptions& options = {});

/// Finite-difference version of strong_residual at interior grid nodes.
ResidualReport strong_residual_grid(const DiffusionSpec& spec, const ObservableSpec& obs, const GriddedField& f,
                                    double tol);

/// Tensor product of bump profiles exp(-1/(1-u^2)) in every space axis and
/// in t; supported on the box center ± radius.
Expr bump_test_function(const std::vector<double>& center, const std::vector<double>& radius, double t_center,
                        double t_radius);

/// Support box of one tensor-product bump test function.
struct BumpSpec {
    std::vector<double> center, radius;
    double t_center = 0.0, t_radius = 1.0;
};

Expr bump_test_function(const BumpSpec& bump);

/// `count` bumps with seeded random centres and radii (15-30% of each side)
/// whose supports lie strictly inside the grid's space-time box.
std::vector<BumpSpec> random_bumps(const GriddedField& grid, int count, std::uint64_t seed);

struct WeakOptions {
    // When positive, replaces the computed budget 3 (mc + quadrature + interpolation).
    double tolerance_override = 0.0;
    // Quadrature sub-intervals per field cell and axis (even); 0 picks about
    // 1024 intervals per axis, capped at 4e6 quadrature points in total.
    int refine = 0;
};

/// Composite-Simpson value of ∫∫ f (G*φ - ∂_t φ + g φ) + h φ dx dt. The field
/// is interpolated by tensor-product cubics onto a quadrature grid `refine`
/// times finer than the field grid, because test-function derivatives need
/// far finer resolution than the smooth field. The budget combines the
/// propagated Monte Carlo error of the field nodes, the quadrature error
/// (difference to half-resolution Simpson) and the interpolation error
/// (difference to cubics through every other field node). Needs an odd number
/// (>= 7) of field nodes per axis. Throws SupportError when φ does not vanish
/// on the grid boundary or is non-zero outside Λ.
ResidualReport weak_residual(const DiffusionSpec& spec, const ObservableSpec& obs, const GriddedField& f,
                             const Expr& phi, const WeakOptions& options = {});

/// |∫(Gφ)ψ - ∫φ(G*ψ)| by composite Simpson on a box with `nodes` per axis.
double duality_gap(const DiffusionSpec& spec, const Expr& phi, const Expr& psi, const std::vector<double>& lower,
                   const std::vector<double>& upper, int nodes);

struct DriftTestReport {
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> mean_increments;
    std::vector<double> std_errors;
    std::vector<double> z_scores;
    std::vector<std::uint64_t> survivors;   // paths alive at the pair start
    double confidence = 0.99;
    double critical_value = 0.0;            // two-sided normal quantile
    bool pass = false;
};

struct DriftTestOptions {
    double confidence = 0.99;
    std::uint64_t min_survivors = 100;
    unsigned threads = 0;
};

/// For each probe pair (a, b): mean of M_{b∧ζ} - M_a over the paths still
/// running at a, with M_t = γ_t f(X_t, t) + H_t and ζ the stop time (exit or
/// collision guard), from a fixed launch point at t = 0.
DriftTestReport martingale_drift_test(const DiffusionSpec& spec, const ObservableSpec& obs, const Expr& f,
                                      std::span<const double> x0, const std::vector<std::pair<double, double>>& pairs,
                                      const PathConfig& cfg, std::uint64_t n_paths,
                                      const DriftTestOptions& options = {});

struct KSResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value
/// (floored at 1e-16). Both samples need at least 50 values.
KSResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// ks_two_sample on each coordinate of two samples of points.
std::vector<KSResult> ks_per_coordinate(const std::vector<std::vector<double>>& a,
                                        const std::vector<std::vector<double>>& b);

struct TimeChangeTestReport {
    double s = 0.0;
    std::uint64_t n_paths = 0;
    std::uint64_t stalled = 0;            // X paths whose clock stalled before s
    std::vector<KSResult> per_coordinate;
    double min_p_value() const;
};

/// Compares the law of the slowed-down process X̂_s with that of the
/// time-changed X_{β(s)} by per-coordinate KS tests. Path i of X̂ uses stream
/// i, path i of X uses stream n_paths + i, both under cfg.seed.
TimeChangeTestReport time_change_ks_test(const DiffusionSpec& spec, const CutoffSpec& cut, std::span<const double> x0,
                                         double s, const PathConfig& cfg, std::uint64_t n_paths, unsigned threads = 0);

enum class OracleKind { Laplace, MomentK, ExpC, Survival, Fs };

struct OracleParams {
    double s = 1.0;     // Laplace / f_s parameter
    double x = 0.0;     // launch point in (-1, 1)
    int k = 1;          // moment order
    double C = 0.0;     // exponential-moment rate
    double u = 0.0;     // remaining time T - t for survival
};

struct OracleValue {
    double value = 0.0;
    bool divergent = false;   // expC with C >= π²/8
};

/// Closed forms for Brownian motion on (-1, 1).
OracleValue oracle_interval_bm(OracleKind kind, const OracleParams& params);

double oracle_laplace(double s, double x = 0.0);       // E_x[e^{-sτ}]
double oracle_fs(double s, double x = 0.0);            // E_x[∫_0^τ e^{-st} dt]
double oracle_moment(int k);                           // E_0[τ^k]
OracleValue oracle_expC(double C);                     // E_0[e^{Cτ}]
double oracle_survival(double x, double u);            // P_x[τ > u]
/// Taylor coefficient a_{2k} of 1/cosh.
double sech_coefficient(int k);

}  // namespace hypofk
