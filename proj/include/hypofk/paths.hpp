#pragma once

#include "hypofk/fields.hpp"
#include "hypofk/observable.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace hypofk {

struct PathConfig {
    double dt = 1e-3;
    double horizon = std::numeric_limits<double>::infinity();  // T
    std::uint64_t seed = 1;
    double collision_guard = 1e-4;
    std::uint64_t max_steps = 10'000'000;
    // Brownian-bridge crossing test between grid points; axis-aligned box
    // domains only.
    bool bridge_correction = false;

    /// Throws ConfigError unless dt > 0, T > 0 and max_steps * dt >= T.
    void validate() const;
};

enum class StopCause { Exit, Horizon, StepCap, Collision };

const char* to_string(StopCause cause);

struct PathSample {
    double exit_time = 0.0;           // τ
    std::vector<double> exit_state;   // X_τ
    double gamma = 1.0;               // γ_τ
    double log_gamma = 0.0;
    double H = 0.0;                   // H_τ
    bool censored = false;            // stopped by T, the step cap or a collision
    StopCause cause = StopCause::Exit;
    std::uint64_t steps = 0;
};

/// State after each completed step, passed to step observers.
struct StepView {
    std::uint64_t step;          // 0 is the launch state
    double t;
    std::span<const double> x;
    double log_gamma;
    double H;
    bool inside;                 // false for the final out-of-domain state
};

using StepObserver = std::function<void(const StepView&)>;

/// Euler-Maruyama simulator for one (spec, observable, config) triple. The
/// noise of a path is keyed by (seed, stream) only.
class PathEngine {
public:
    PathEngine(const DiffusionSpec& spec, const ObservableSpec& obs, const PathConfig& cfg);

    /// `sign` = -1 negates every Brownian increment (antithetic partner).
    PathSample run(std::span<const double> x0, double t0, std::uint64_t stream, double sign = 1.0,
                   const StepObserver* observer = nullptr) const;

    const DiffusionSpec& spec() const { return spec_; }
    const PathConfig& config() const { return cfg_; }

    bool inside(std::span<const double> x) const { return contains(x.data(), 0.0); }
    double eval_g(std::span<const double> x) const { return g_(x.data(), 0.0); }
    double eval_psi(std::span<const double> x, double t) const { return psi_(x.data(), t); }

private:
    bool contains(const double* x, double t) const;

    DiffusionSpec spec_;
    PathConfig cfg_;
    std::vector<Program> sigma_;
    std::vector<Program> drift_;
    CompiledPredicate domain_;
    std::optional<CompiledPredicate> confinement_;
    Program g_, h_, psi_;
    bool sigma_constant_ = false;
    bool h_zero_ = false;
    bool g_zero_ = false;
    std::vector<BoxFace> faces_;             // bridge-corrected faces
    std::optional<std::vector<BoxFace>> box_; // domain as a box, when it is one
    std::uint64_t counters_per_step_ = 0;
};

PathSample simulate_path(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x0, double t0,
                         const PathConfig& cfg, std::uint64_t path_index);

/// A simulated trajectory with every grid state kept.
struct RecordedPath {
    PathSample sample;
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    std::vector<double> log_gamma;
    std::vector<double> H;
};

RecordedPath simulate_recorded_path(const DiffusionSpec& spec, const ObservableSpec& obs,
                                    std::span<const double> x0, double t0, const PathConfig& cfg,
                                    std::uint64_t path_index);

/// One record per step: t, x1..xn, gamma, H.
void write_path_csv(std::ostream& out, const RecordedPath& path);

struct MultiplicativityDeviation {
    double gamma = 0.0;   // |γ_{0,τ} - γ_{0,t} γ_{t,τ}|
    double H = 0.0;       // |H_{0,τ} - (H_{0,t} + γ_{0,t} H_{t,τ})|
};

/// Splits the recorded trajectory at the grid time closest to `split` and
/// recomposes γ and H from the two pieces.
MultiplicativityDeviation gamma_multiplicativity_check(const RecordedPath& path, const ObservableSpec& obs,
                                                       double split);

/// Smooth cutoff ϑ on a box or ball Θ: 1 on the margin-interior, 0 off Θ.
struct CutoffSpec {
    enum class Shape { Box, Ball };
    Shape shape = Shape::Box;
    std::vector<double> lower, upper;   // box
    std::vector<double> center;         // ball
    double radius = 0.0;
    double margin = 0.1;

    static CutoffSpec box(std::vector<double> lower, std::vector<double> upper, double margin);
    static CutoffSpec ball(std::vector<double> center, double radius, double margin);

    int dimension() const { return static_cast<int>(shape == Shape::Box ? lower.size() : center.size()); }
    void validate() const;
    Expr theta() const;
    /// True for points of the closure of Θ.
    bool in_closure(std::span<const double> x, double slack = 1e-12) const;
    /// The closure of Θ as a predicate.
    Predicate closure_predicate() const;
    /// Grid of points covering the closure of Θ including its boundary.
    std::vector<std::vector<double>> closure_samples(int per_axis = 9) const;
};

/// σ̂ = ϑσ, b̂ = ϑ²b on all of ℝⁿ, confined to the closure of Θ.
DiffusionSpec make_slowed_spec(const DiffusionSpec& spec, const CutoffSpec& cut);

struct TimeChangedPath {
    std::vector<double> s;                   // uniform grid
    std::vector<double> beta;                // β(s)
    std::vector<std::vector<double>> z;      // Z_s = X_{β(s)}
    bool stalled = false;                    // ϑ reached 0; later samples frozen
    std::size_t stall_index = 0;             // first frozen s index when stalled
};

/// Inverse clock β(s) = ∫ϑ(Z)² of the recorded X path, resampled on s_j = j*ds.
TimeChangedPath time_change(const RecordedPath& path, const CutoffSpec& cut, double ds, std::size_t count);

struct ProbeEstimate {
    std::vector<double> start;
    double probability = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of P_w[|X_τ - x| < δ and τ < δ] for each approach point w.
std::vector<ProbeEstimate> x_regularity_probe(const DiffusionSpec& spec, std::span<const double> boundary_point,
                                              double delta, const std::vector<std::vector<double>>& approach,
                                              const PathConfig& cfg, std::uint64_t n_paths, unsigned threads = 0);

}  // namespace hypofk
