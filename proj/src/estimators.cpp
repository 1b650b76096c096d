#include "hypofk/estimators.hpp"

#include "hypofk/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hypofk {

namespace {

struct Block {
    RunningStats stats;
    std::uint64_t capped = 0;
    std::uint64_t collisions = 0;
};

Block merge_blocks(const Block& a, const Block& b) {
    return {RunningStats::merge(a.stats, b.stats), a.capped + b.capped, a.collisions + b.collisions};
}

double contribution(const PathEngine& engine, const PathSample& s, std::uint64_t index) {
    const double v = s.gamma * engine.eval_psi(s.exit_state, s.exit_time) + s.H;
    if (!std::isfinite(v)) throw NumericalError("non-finite sample at path " + std::to_string(index), index);
    return v;
}

MCEstimate finish(const Block& total, std::uint64_t n_paths, std::uint64_t seed) {
    if (total.stats.n == 0.0) throw NumericalError("every path was censored by the step cap", 0);
    MCEstimate e;
    e.mean = total.stats.mean;
    e.std_error = total.stats.std_error();
    e.n_paths = n_paths;
    e.n_censored_by_cap = total.capped;
    e.n_collisions = total.collisions;
    e.seed = seed;
    return e;
}

}  // namespace

MCEstimate solve_parabolic(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x, double t,
                           const PathConfig& cfg, std::uint64_t n_paths, const EstimatorOptions& options) {
    if (n_paths == 0) throw ConfigError("n_paths must be positive");
    if (options.antithetic && n_paths % 2 != 0) throw ConfigError("antithetic sampling needs an even n_paths");
    const PathEngine engine(spec, obs, cfg);
    const std::uint64_t units = options.antithetic ? n_paths / 2 : n_paths;
    auto blocks = run_blocks<Block>(units, options.threads, [&](std::size_t begin, std::size_t end) {
        Block b;
        for (std::size_t i = begin; i < end; ++i) {
            if (options.antithetic) {
                const PathSample p = engine.run(x, t, i, 1.0);
                const PathSample q = engine.run(x, t, i, -1.0);
                b.collisions += (p.cause == StopCause::Collision) + (q.cause == StopCause::Collision);
                if (p.cause == StopCause::StepCap || q.cause == StopCause::StepCap) {
                    b.capped += (p.cause == StopCause::StepCap) + (q.cause == StopCause::StepCap);
                    continue;
                }
                b.stats.add(0.5 * (contribution(engine, p, 2 * i) + contribution(engine, q, 2 * i + 1)));
            } else {
                const PathSample p = engine.run(x, t, i);
                if (p.cause == StopCause::Collision) ++b.collisions;
                if (p.cause == StopCause::StepCap) {
                    ++b.capped;
                    continue;
                }
                b.stats.add(contribution(engine, p, i));
            }
        }
        return b;
    });
    return finish(tree_reduce(std::move(blocks), merge_blocks), n_paths, cfg.seed);
}

namespace {

double sampled_sup_g(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x,
                     const HarmonicOptions& options) {
    const int n = spec.n;
    std::vector<double> lo(static_cast<std::size_t>(n)), hi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        lo[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - 1.0;
        hi[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + 1.0;
    }
    if (options.sample_lower && options.sample_upper) {
        lo = *options.sample_lower;
        hi = *options.sample_upper;
        if (lo.size() != hi.size() || static_cast<int>(lo.size()) != n)
            throw ConfigError("sup-g sampling box has the wrong dimension");
    } else if (auto faces = spec.domain.box_faces()) {
        for (const auto& f : *faces) (f.upper ? hi : lo)[static_cast<std::size_t>(f.axis - 1)] = f.bound;
    }
    const int per_axis = std::max(2, static_cast<int>(std::floor(std::pow(static_cast<double>(options.sup_samples), 1.0 / n))));
    const Program g(obs.g);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    std::vector<double> p(static_cast<std::size_t>(n));
    for (;;) {
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            // Cell midpoints, so open domains are sampled strictly inside.
            p[k] = lo[k] + (hi[k] - lo[k]) * (idx[k] + 0.5) / per_axis;
        }
        if (spec.domain(p)) {
            try {
                best = std::max(best, g(p.data(), 0.0));
            } catch (const DomainError&) {
            }
        }
        int i = 0;
        while (i < n && ++idx[static_cast<std::size_t>(i)] == per_axis) idx[static_cast<std::size_t>(i++)] = 0;
        if (i == n) break;
    }
    if (!std::isfinite(best)) return best;
    return best + 0.1 * std::abs(best);
}

StabilizationReport stabilization_test(const std::vector<double>& values, const std::vector<double>& tau,
                                       const std::vector<double>& log_gamma) {
    StabilizationReport r;
    const std::size_t n = values.size();
    if (n < 64) return r;
    r.performed = true;

    RunningStats all;
    for (double v : values) all.add(v);
    const double s = std::sqrt(all.variance());
    RunningStats prefix;
    std::size_t next = 0;
    for (std::size_t denom : {16u, 8u, 4u, 2u}) {
        const std::size_t k = n / denom;
        while (next < k) prefix.add(values[next++]);
        r.checkpoints.push_back(k);
        r.running_means.push_back(prefix.mean);
        const double scale = s * std::sqrt(1.0 / static_cast<double>(k) - 1.0 / static_cast<double>(n));
        const double gap = std::abs(prefix.mean - all.mean);
        const double normalized = scale > 0.0 ? gap / scale : (gap > 0.0 ? INFINITY : 0.0);
        r.max_normalized_gap = std::max(r.max_normalized_gap, normalized);
    }
    r.checkpoints.push_back(n);
    r.running_means.push_back(all.mean);
    r.cauchy_pass = r.max_normalized_gap <= 4.0;

    std::vector<double> sorted = tau;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
    const double t0 = sorted[n / 2];
    r.tail_threshold_time = t0;
    double excess = 0.0, lg = 0.0, tsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (tau[i] > t0) {
            ++r.tail_paths;
            excess += tau[i] - t0;
            lg += log_gamma[i];
            tsum += tau[i];
        }
    if (r.tail_paths >= 32 && excess > 0.0 && tsum > 0.0) {
        const double m = static_cast<double>(r.tail_paths);
        r.tail_decay_rate = m / excess;
        r.tail_decay_se = r.tail_decay_rate / std::sqrt(m);
        r.tail_growth_rate = lg / tsum;
        r.tail_pass = r.tail_growth_rate < r.tail_decay_rate - 3.0 * r.tail_decay_se;
    }
    return r;
}

struct HarmonicBlock {
    Block block;
    std::vector<double> values, tau, log_gamma;
};

}  // namespace

HarmonicEstimate solve_harmonic(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x,
                                const PathConfig& cfg, std::uint64_t n_paths, const HarmonicOptions& options) {
    if (n_paths == 0) throw ConfigError("n_paths must be positive");
    if (options.antithetic) throw ConfigError("antithetic sampling is only offered for parabolic solves");
    PathConfig local = cfg;
    local.horizon = std::numeric_limits<double>::infinity();
    const PathEngine engine(spec, obs, local);

    HarmonicEstimate out;
    out.sup_g = sampled_sup_g(spec, obs, x, options);
    if (out.sup_g >= 0.0 && options.criterion != HarmonicCriterion::C)
        out.warnings.push_back("sup g >= 0 and criterion (c) is not asserted: the expectation may be infinite");
    if (options.criterion == HarmonicCriterion::C)
        out.warnings.push_back("criterion (c) moment exponent alpha = " + std::to_string(options.alpha) +
                               " is asserted, not verified");

    auto blocks = run_blocks<HarmonicBlock>(n_paths, options.threads, [&](std::size_t begin, std::size_t end) {
        HarmonicBlock hb;
        for (std::size_t i = begin; i < end; ++i) {
            const PathSample p = engine.run(x, 0.0, i);
            if (p.cause == StopCause::Collision) ++hb.block.collisions;
            if (p.cause == StopCause::StepCap) {
                ++hb.block.capped;
                continue;
            }
            const double v = contribution(engine, p, i);
            hb.block.stats.add(v);
            hb.values.push_back(v);
            hb.tau.push_back(p.exit_time);
            hb.log_gamma.push_back(p.log_gamma);
        }
        return hb;
    });
    std::vector<Block> stats;
    std::vector<double> values, tau, log_gamma;
    for (auto& hb : blocks) {
        stats.push_back(hb.block);
        values.insert(values.end(), hb.values.begin(), hb.values.end());
        tau.insert(tau.end(), hb.tau.begin(), hb.tau.end());
        log_gamma.insert(log_gamma.end(), hb.log_gamma.begin(), hb.log_gamma.end());
    }
    out.estimate = finish(tree_reduce(std::move(stats), merge_blocks), n_paths, cfg.seed);
    if (static_cast<double>(out.estimate.n_censored_by_cap) > 0.01 * static_cast<double>(n_paths)) {
        out.unreliable = true;
        out.warnings.push_back("more than 1% of paths hit the step cap");
    }
    if (options.stabilization_test) {
        out.stabilization = stabilization_test(values, tau, log_gamma);
        out.divergent = out.stabilization.divergent();
        if (out.divergent) out.warnings.push_back("stabilization test failed: the estimator appears divergent");
    }
    return out;
}

MCEstimate survival_probability(const DiffusionSpec& spec, std::span<const double> x, double t, double T,
                                const PathConfig& cfg, std::uint64_t n_paths, const EstimatorOptions& options) {
    if (n_paths == 0) throw ConfigError("n_paths must be positive");
    if (t > T) throw ConfigError("launch time exceeds the horizon");
    if (T - t <= 0.0) {
        // No time left: every path survives.
        Block total;
        for (std::uint64_t i = 0; i < n_paths; ++i) total.stats.add(1.0);
        return finish(total, n_paths, cfg.seed);
    }
    PathConfig local = cfg;
    local.horizon = T;
    local.max_steps = std::max(local.max_steps, static_cast<std::uint64_t>(std::ceil((T - t) / cfg.dt)) + 1);
    const PathEngine engine(spec, ObservableSpec{}, local);
    auto blocks = run_blocks<Block>(n_paths, options.threads, [&](std::size_t begin, std::size_t end) {
        Block b;
        for (std::size_t i = begin; i < end; ++i) {
            const PathSample p = engine.run(x, t, i);
            if (p.cause == StopCause::Collision) ++b.collisions;
            b.stats.add(p.cause == StopCause::Horizon ? 1.0 : 0.0);
        }
        return b;
    });
    return finish(tree_reduce(std::move(blocks), merge_blocks), n_paths, cfg.seed);
}

void DensityGrid::validate() const {
    if (lower.empty() || lower.size() != upper.size() || cells.size() != lower.size())
        throw ConfigError("density grid bounds and cell counts must have equal, non-zero length");
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (!(upper[i] > lower[i])) throw ConfigError("density grid upper bounds must exceed lower bounds");
        if (cells[i] < 1) throw ConfigError("density grid needs at least one cell per axis");
    }
}

std::size_t DensityGrid::cell_count() const {
    std::size_t c = 1;
    for (int k : cells) c *= static_cast<std::size_t>(k);
    return c;
}

double DensityGrid::cell_volume() const {
    double v = 1.0;
    for (std::size_t i = 0; i < lower.size(); ++i) v *= (upper[i] - lower[i]) / cells[i];
    return v;
}

std::optional<std::size_t> DensityGrid::locate(std::span<const double> x) const {
    std::size_t flat = 0, stride = 1;
    for (std::size_t i = 0; i < lower.size(); ++i) {
        if (!(x[i] >= lower[i] && x[i] <= upper[i])) return std::nullopt;
        int c = static_cast<int>((x[i] - lower[i]) / (upper[i] - lower[i]) * cells[i]);
        c = std::clamp(c, 0, cells[i] - 1);
        flat += static_cast<std::size_t>(c) * stride;
        stride *= static_cast<std::size_t>(cells[i]);
    }
    return flat;
}

std::vector<double> DensityGrid::cell_center(std::size_t cell) const {
    std::vector<double> c(lower.size());
    for (std::size_t i = 0; i < lower.size(); ++i) {
        const auto k = cell % static_cast<std::size_t>(cells[i]);
        cell /= static_cast<std::size_t>(cells[i]);
        c[i] = lower[i] + (static_cast<double>(k) + 0.5) * (upper[i] - lower[i]) / cells[i];
    }
    return c;
}

double DensityEstimate::mass(std::size_t slice) const {
    std::uint64_t total = 0;
    for (auto c : counts[slice]) total += c;
    return static_cast<double>(total) / static_cast<double>(n_launched);
}

double DensityEstimate::mass_std_error(std::size_t slice) const {
    const double p = mass(slice);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n_launched));
}

double DensityEstimate::density(std::size_t slice, std::size_t cell) const {
    return static_cast<double>(counts[slice][cell]) / (static_cast<double>(n_launched) * grid.cell_volume());
}

double DensityEstimate::density_std_error(std::size_t slice, std::size_t cell) const {
    const double p = static_cast<double>(counts[slice][cell]) / static_cast<double>(n_launched);
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n_launched)) / grid.cell_volume();
}

std::vector<double> DensityEstimate::smoothed(std::size_t slice) const {
    const std::size_t cells = grid.cell_count();
    const auto& bw = bandwidth[slice];
    std::vector<double> out(cells, 0.0);
    std::vector<std::vector<double>> centers(cells);
    for (std::size_t c = 0; c < cells; ++c) centers[c] = grid.cell_center(c);
    double norm = 1.0;
    for (double b : bw) norm *= b * std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t c = 0; c < cells; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cells; ++k) {
            if (counts[slice][k] == 0) continue;
            double e = 0.0;
            for (std::size_t i = 0; i < bw.size(); ++i) {
                const double u = (centers[c][i] - centers[k][i]) / bw[i];
                e += u * u;
            }
            acc += static_cast<double>(counts[slice][k]) * std::exp(-0.5 * e);
        }
        out[c] = norm > 0.0 ? acc / (norm * static_cast<double>(n_launched)) : 0.0;
    }
    return out;
}

namespace {

struct DensityBlock {
    std::vector<std::vector<std::uint64_t>> counts;
    std::vector<std::uint64_t> outside;
    std::vector<std::vector<RunningStats>> moments;   // [slice][axis]
};

}  // namespace

DensityEstimate transition_density(const DiffusionSpec& spec, std::span<const double> w, const std::vector<double>& times,
                                   const DensityGrid& grid, const PathConfig& cfg, std::uint64_t n_paths,
                                   const EstimatorOptions& options) {
    grid.validate();
    if (grid.dimension() != spec.n) throw ConfigError("density grid dimension does not match the spec");
    if (times.empty()) throw ConfigError("transition_density needs at least one time");
    if (!std::is_sorted(times.begin(), times.end()) || times.front() < 0.0)
        throw ConfigError("density times must be non-negative and ascending");
    if (n_paths == 0) throw ConfigError("n_paths must be positive");
    PathConfig local = cfg;
    local.horizon = std::max(times.back(), cfg.dt);
    local.max_steps = std::max(local.max_steps, static_cast<std::uint64_t>(std::ceil(local.horizon / cfg.dt)) + 1);
    const PathEngine engine(spec, ObservableSpec{}, local);
    const std::size_t slices = times.size();
    const std::size_t cells = grid.cell_count();
    const auto n = static_cast<std::size_t>(spec.n);
    const double eps = 1e-9 * cfg.dt;

    auto blocks = run_blocks<DensityBlock>(n_paths, options.threads, [&](std::size_t begin, std::size_t end) {
        DensityBlock b;
        b.counts.assign(slices, std::vector<std::uint64_t>(cells, 0));
        b.outside.assign(slices, 0);
        b.moments.assign(slices, std::vector<RunningStats>(n));
        for (std::size_t i = begin; i < end; ++i) {
            std::size_t next = 0;
            const StepObserver observer = [&](const StepView& v) {
                while (next < slices && v.t >= times[next] - eps) {
                    if (v.inside) {
                        for (std::size_t a = 0; a < n; ++a) b.moments[next][a].add(v.x[a]);
                        if (auto cell = grid.locate(v.x))
                            ++b.counts[next][*cell];
                        else
                            ++b.outside[next];
                    }
                    ++next;
                }
            };
            engine.run(w, 0.0, i, 1.0, &observer);
        }
        return b;
    });
    DensityBlock total = tree_reduce(std::move(blocks), [&](const DensityBlock& a, const DensityBlock& c) {
        DensityBlock r = a;
        for (std::size_t s = 0; s < slices; ++s) {
            for (std::size_t k = 0; k < cells; ++k) r.counts[s][k] += c.counts[s][k];
            r.outside[s] += c.outside[s];
            for (std::size_t a2 = 0; a2 < n; ++a2) r.moments[s][a2] = RunningStats::merge(a.moments[s][a2], c.moments[s][a2]);
        }
        return r;
    });

    DensityEstimate out;
    out.grid = grid;
    out.times = times;
    out.counts = std::move(total.counts);
    out.outside = std::move(total.outside);
    out.n_launched = n_paths;
    out.bandwidth.assign(slices, std::vector<double>(n, 0.0));
    for (std::size_t s = 0; s < slices; ++s)
        for (std::size_t a = 0; a < n; ++a) {
            const auto& m = total.moments[s][a];
            if (m.n > 1.0) out.bandwidth[s][a] = 1.06 * std::sqrt(m.variance()) * std::pow(m.n, -0.2);
        }
    return out;
}

std::vector<double> h_transform_drift(const DiffusionSpec& spec, const Expr& f, std::span<const double> x, double t) {
    const double fv = eval(f, x, t);
    if (fv == 0.0) throw DomainError("h-transform function vanishes at the evaluation point");
    const auto a = diffusion_matrix(spec);
    const auto n = static_cast<std::size_t>(spec.n);
    std::vector<double> grad(n);
    for (std::size_t j = 0; j < n; ++j) grad[j] = eval(diff(f, static_cast<int>(j) + 1), x, t);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = eval(spec.drift[i], x, t);
        for (std::size_t j = 0; j < n; ++j) v += eval(a[i * n + j], x, t) * grad[j] / fv;
        out[i] = v;
    }
    return out;
}

}  // namespace hypofk
