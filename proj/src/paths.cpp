#include "hypofk/paths.hpp"

#include "hypofk/parallel.hpp"
#include "hypofk/rng.hpp"

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace hypofk {

void PathConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
    if (!(horizon > 0.0)) throw ConfigError("horizon T must be positive");
    if (max_steps == 0) throw ConfigError("max_steps must be positive");
    if (std::isfinite(horizon) && static_cast<double>(max_steps) * dt < horizon * (1.0 - 1e-12))
        throw ConfigError("max_steps * dt must be at least the horizon T");
    if (!(collision_guard >= 0.0)) throw ConfigError("collision_guard must be non-negative");
}

const char* to_string(StopCause cause) {
    switch (cause) {
        case StopCause::Exit: return "exit";
        case StopCause::Horizon: return "horizon";
        case StopCause::StepCap: return "step_cap";
        case StopCause::Collision: return "collision";
    }
    return "unknown";
}

namespace {

// Bridge-crossing uniforms live in a counter range disjoint from the normals.
constexpr std::uint64_t kBridgeCounterBase = 1ULL << 62;

}  // namespace

PathEngine::PathEngine(const DiffusionSpec& spec, const ObservableSpec& obs, const PathConfig& cfg)
    : spec_(spec), cfg_(cfg) {
    spec_.validate();
    validate_observable(obs, spec_.n);
    cfg_.validate();
    for (const auto& e : spec_.sigma) sigma_.emplace_back(e);
    for (const auto& e : spec_.drift) drift_.emplace_back(e);
    sigma_constant_ = std::all_of(sigma_.begin(), sigma_.end(), [](const Program& p) { return p.is_constant(); });
    domain_ = CompiledPredicate(spec_.domain);
    if (spec_.confinement) confinement_.emplace(*spec_.confinement);
    g_ = Program(obs.g);
    h_ = Program(obs.h);
    psi_ = Program(obs.psi);
    g_zero_ = obs.g.is_zero();
    h_zero_ = obs.h.is_zero();
    box_ = spec_.domain.box_faces();
    if (cfg_.bridge_correction) {
        if (!box_) throw ConfigError("bridge correction requires an axis-aligned box domain");
        faces_ = *box_;
    }
    counters_per_step_ = static_cast<std::uint64_t>(faces_.size());
}

bool PathEngine::contains(const double* x, double t) const {
    if (box_) {
        for (const auto& f : *box_)
            if (!f.admits(x[f.axis - 1])) return false;
        return true;
    }
    return domain_(x, t);
}

PathSample PathEngine::run(std::span<const double> x0, double t0, std::uint64_t stream, double sign,
                           const StepObserver* observer) const {
    const int n = spec_.n;
    const int d = spec_.d;
    if (static_cast<int>(x0.size()) != n) throw std::invalid_argument("launch point has the wrong dimension");
    if (!contains(x0.data(), t0)) throw ConfigError("launch point is outside the domain");

    const double T = cfg_.horizon;
    PathSample out;
    out.exit_state.assign(x0.begin(), x0.end());
    out.exit_time = t0;
    if (observer) (*observer)(StepView{0, t0, x0, 0.0, 0.0, true});
    if (t0 >= T) {
        out.censored = true;
        out.cause = StopCause::Horizon;
        return out;
    }

    const CounterRng rng(cfg_.seed, stream);
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> y(static_cast<std::size_t>(n));
    std::vector<double> sig(static_cast<std::size_t>(n * d));
    if (sigma_constant_)
        for (std::size_t k = 0; k < sig.size(); ++k) sig[k] = sigma_[k].constant_value();
    std::vector<double> z(static_cast<std::size_t>(d));
    const auto& singular = spec_.singular_coordinates;
    std::vector<double> initial_gaps;
    for (std::size_t a = 0; a < singular.size(); ++a)
        for (std::size_t b = a + 1; b < singular.size(); ++b)
            initial_gaps.push_back(x0[static_cast<std::size_t>(singular[b] - 1)] -
                                   x0[static_cast<std::size_t>(singular[a] - 1)]);

    double t = t0;
    double log_gamma = 0.0;
    double gamma = 1.0;
    double H = 0.0;
    // γ is only needed mid-path for the H integrand and for observers.
    const bool need_gamma = !g_zero_ && (!h_zero_ || observer != nullptr);
    double g_old = g_zero_ ? 0.0 : g_(x.data(), t);
    double h_old = h_zero_ ? 0.0 : h_(x.data(), t);

    // Normals come from the ziggurat sampler reading counters 0, 1, 2, ...
    // of this path's stream in order.
    CounterStream bits(rng);
    boost::random::normal_distribution<double> normal;
    auto next_normal = [&]() { return normal(bits); };

    const double sqrt_dt = std::sqrt(cfg_.dt);
    for (std::uint64_t step = 0;; ++step) {
        if (step >= cfg_.max_steps) {
            out.censored = true;
            out.cause = StopCause::StepCap;
            break;
        }
        double h = cfg_.dt;
        double t_next = t + h;
        bool last = false;
        if (t_next >= T - 1e-9 * cfg_.dt) {
            h = T - t;
            t_next = T;
            last = true;
        }
        const double sqrt_h = last ? std::sqrt(h) : sqrt_dt;
        for (int q = 0; q < d; ++q) z[static_cast<std::size_t>(q)] = sign * sqrt_h * next_normal();
        if (!sigma_constant_)
            for (std::size_t k = 0; k < sig.size(); ++k) sig[k] = sigma_[k](x.data(), t);
        for (int i = 0; i < n; ++i) {
            double v = x[static_cast<std::size_t>(i)] + drift_[static_cast<std::size_t>(i)](x.data(), t) * h;
            for (int q = 0; q < d; ++q)
                v += sig[static_cast<std::size_t>(i * d + q)] * z[static_cast<std::size_t>(q)];
            if (!std::isfinite(v))
                throw DomainError("non-finite state at step " + std::to_string(step + 1));
            y[static_cast<std::size_t>(i)] = v;
        }
        if (confinement_ && !(*confinement_)(y.data(), t_next)) y = x;
        out.steps = step + 1;

        if (!initial_gaps.empty()) {
            bool collided = false;
            std::size_t k = 0;
            for (std::size_t a = 0; a < singular.size() && !collided; ++a)
                for (std::size_t b = a + 1; b < singular.size() && !collided; ++b, ++k) {
                    const double gap = y[static_cast<std::size_t>(singular[b] - 1)] -
                                       y[static_cast<std::size_t>(singular[a] - 1)];
                    collided = std::abs(gap) < cfg_.collision_guard || gap * initial_gaps[k] <= 0.0;
                }
            if (collided) {
                // The state before the collision step is kept as the stop state.
                out.censored = true;
                out.cause = StopCause::Collision;
                break;
            }
        }

        bool inside = contains(y.data(), t_next);
        if (inside && !faces_.empty()) {
            for (std::size_t f = 0; f < faces_.size(); ++f) {
                const auto& face = faces_[f];
                const auto axis = static_cast<std::size_t>(face.axis - 1);
                double a_ii = 0.0;
                for (int q = 0; q < d; ++q) a_ii += sig[axis * static_cast<std::size_t>(d) + static_cast<std::size_t>(q)] *
                                                    sig[axis * static_cast<std::size_t>(d) + static_cast<std::size_t>(q)];
                if (a_ii <= 0.0) continue;
                const double d1 = face.upper ? face.bound - x[axis] : x[axis] - face.bound;
                const double d2 = face.upper ? face.bound - y[axis] : y[axis] - face.bound;
                // Skip the draw when the crossing probability is below e^-45.
                if (2.0 * d1 * d2 > 45.0 * a_ii * h) continue;
                const double exponent = 2.0 * d1 * d2 / (a_ii * h);
                if (rng.uniform(kBridgeCounterBase + step * counters_per_step_ + f) < std::exp(-exponent)) {
                    y[axis] = face.bound;
                    inside = false;
                    break;
                }
            }
        }

        if (!inside) {
            // g and h may be undefined past the boundary: left-endpoint rule.
            H += gamma * h_old * h;
            log_gamma += g_old * h;
        } else {
            const double g_new = g_zero_ ? 0.0 : g_(y.data(), t_next);
            const double h_new = h_zero_ ? 0.0 : h_(y.data(), t_next);
            const double lg_new = log_gamma + 0.5 * (g_old + g_new) * h;
            const double gamma_new = need_gamma ? std::exp(lg_new) : 1.0;
            H += 0.5 * (gamma * h_old + gamma_new * h_new) * h;
            log_gamma = lg_new;
            g_old = g_new;
            h_old = h_new;
        }
        if (need_gamma) gamma = std::exp(log_gamma);
        std::swap(x, y);
        t = t_next;
        if (observer) (*observer)(StepView{step + 1, t, x, log_gamma, H, inside});
        if (!inside) {
            out.cause = StopCause::Exit;
            out.censored = false;
            break;
        }
        if (last) {
            out.censored = true;
            out.cause = StopCause::Horizon;
            break;
        }
    }
    out.exit_time = t;
    out.exit_state = x;
    out.log_gamma = log_gamma;
    out.gamma = std::exp(log_gamma);
    out.H = H;
    return out;
}

PathSample simulate_path(const DiffusionSpec& spec, const ObservableSpec& obs, std::span<const double> x0, double t0,
                         const PathConfig& cfg, std::uint64_t path_index) {
    return PathEngine(spec, obs, cfg).run(x0, t0, path_index);
}

RecordedPath simulate_recorded_path(const DiffusionSpec& spec, const ObservableSpec& obs,
                                    std::span<const double> x0, double t0, const PathConfig& cfg,
                                    std::uint64_t path_index) {
    RecordedPath rec;
    const StepObserver observer = [&rec](const StepView& v) {
        rec.times.push_back(v.t);
        rec.states.emplace_back(v.x.begin(), v.x.end());
        rec.log_gamma.push_back(v.log_gamma);
        rec.H.push_back(v.H);
    };
    rec.sample = PathEngine(spec, obs, cfg).run(x0, t0, path_index, 1.0, &observer);
    return rec;
}

void write_path_csv(std::ostream& out, const RecordedPath& path) {
    const std::size_t n = path.states.empty() ? 0 : path.states.front().size();
    out << "t";
    for (std::size_t i = 1; i <= n; ++i) out << ",x" << i;
    out << ",gamma,H\n";
    const auto old_precision = out.precision(17);
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        out << path.times[k];
        for (double v : path.states[k]) out << ',' << v;
        out << ',' << std::exp(path.log_gamma[k]) << ',' << path.H[k] << '\n';
    }
    out.precision(old_precision);
}

namespace {

struct Accumulated {
    double log_gamma = 0.0;
    double H = 0.0;
};

// Re-runs the engine's quadrature over recorded states [begin, end] with a
// fresh γ = 1, H = 0 start. `exit_last` selects the left-endpoint rule for
// the final interval.
Accumulated accumulate(const RecordedPath& path, const Program& g, const Program& h, std::size_t begin,
                       std::size_t end, bool exit_last) {
    Accumulated acc;
    double gamma = 1.0;
    for (std::size_t k = begin; k < end; ++k) {
        const double dt = path.times[k + 1] - path.times[k];
        const double g0 = g(path.states[k].data(), path.times[k]);
        const double h0 = h(path.states[k].data(), path.times[k]);
        if (exit_last && k + 1 == end) {
            acc.H += gamma * h0 * dt;
            acc.log_gamma += g0 * dt;
        } else {
            const double g1 = g(path.states[k + 1].data(), path.times[k + 1]);
            const double h1 = h(path.states[k + 1].data(), path.times[k + 1]);
            const double lg = acc.log_gamma + 0.5 * (g0 + g1) * dt;
            const double gamma1 = std::exp(lg);
            acc.H += 0.5 * (gamma * h0 + gamma1 * h1) * dt;
            acc.log_gamma = lg;
        }
        gamma = std::exp(acc.log_gamma);
    }
    return acc;
}

}  // namespace

MultiplicativityDeviation gamma_multiplicativity_check(const RecordedPath& path, const ObservableSpec& obs,
                                                       double split) {
    if (path.times.size() < 2) return {};
    const Program g(obs.g), h(obs.h);
    const std::size_t last = path.times.size() - 1;
    const auto it = std::lower_bound(path.times.begin(), path.times.end(), split);
    std::size_t k = static_cast<std::size_t>(it - path.times.begin());
    if (k > last) k = last;
    if (k > 0 && std::abs(path.times[k - 1] - split) < std::abs(path.times[k] - split)) --k;
    const bool exit_last = path.sample.cause == StopCause::Exit;

    const Accumulated first = accumulate(path, g, h, 0, k, exit_last && k == last);
    const Accumulated second = accumulate(path, g, h, k, last, exit_last);
    const double gamma_first = std::exp(first.log_gamma);
    const double gamma_second = std::exp(second.log_gamma);
    MultiplicativityDeviation dev;
    dev.gamma = std::abs(path.sample.gamma - gamma_first * gamma_second);
    dev.H = std::abs(path.sample.H - (first.H + gamma_first * second.H));
    return dev;
}

CutoffSpec CutoffSpec::box(std::vector<double> lower, std::vector<double> upper, double margin) {
    CutoffSpec c;
    c.shape = Shape::Box;
    c.lower = std::move(lower);
    c.upper = std::move(upper);
    c.margin = margin;
    c.validate();
    return c;
}

CutoffSpec CutoffSpec::ball(std::vector<double> center, double radius, double margin) {
    CutoffSpec c;
    c.shape = Shape::Ball;
    c.center = std::move(center);
    c.radius = radius;
    c.margin = margin;
    c.validate();
    return c;
}

void CutoffSpec::validate() const {
    if (!(margin > 0.0)) throw ConfigError("cutoff margin must be positive");
    if (shape == Shape::Box) {
        if (lower.empty() || lower.size() != upper.size()) throw ConfigError("cutoff box bounds must have equal, non-zero length");
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (!(upper[i] - lower[i] > 2.0 * margin))
                throw ConfigError("cutoff box side " + std::to_string(i + 1) + " must exceed twice the margin");
    } else {
        if (center.empty()) throw ConfigError("cutoff ball center must be non-empty");
        if (!(radius > margin)) throw ConfigError("cutoff ball radius must exceed the margin");
    }
}

Expr CutoffSpec::theta() const {
    validate();
    if (shape == Shape::Box) {
        Expr out = Expr::constant(1.0);
        for (std::size_t i = 0; i < lower.size(); ++i) {
            const Expr xi = Expr::var(static_cast<int>(i) + 1);
            out = out * apply(UnaryOp::Step, (xi - lower[i]) / margin) * apply(UnaryOp::Step, (upper[i] - xi) / margin);
        }
        return out;
    }
    Expr r2;
    for (std::size_t i = 0; i < center.size(); ++i) {
        const Expr u = Expr::var(static_cast<int>(i) + 1) - center[i];
        r2 = r2 + u * u;
    }
    const double inner = (radius - margin) * (radius - margin);
    return apply(UnaryOp::Step, (radius * radius - r2) / (radius * radius - inner));
}

Predicate CutoffSpec::closure_predicate() const {
    validate();
    if (shape == Shape::Box) {
        std::vector<Predicate> terms;
        for (std::size_t i = 0; i < lower.size(); ++i) {
            const Expr xi = Expr::var(static_cast<int>(i) + 1);
            terms.push_back(Predicate::compare(xi, CmpOp::Ge, Expr::constant(lower[i])));
            terms.push_back(Predicate::compare(xi, CmpOp::Le, Expr::constant(upper[i])));
        }
        return Predicate::conjunction(std::move(terms));
    }
    Expr r2;
    for (std::size_t i = 0; i < center.size(); ++i) {
        const Expr u = Expr::var(static_cast<int>(i) + 1) - center[i];
        r2 = r2 + u * u;
    }
    return Predicate::compare(r2, CmpOp::Le, Expr::constant(radius * radius));
}

bool CutoffSpec::in_closure(std::span<const double> x, double slack) const {
    if (shape == Shape::Box) {
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
        return true;
    }
    double r2 = 0.0;
    for (std::size_t i = 0; i < center.size(); ++i) r2 += (x[i] - center[i]) * (x[i] - center[i]);
    return std::sqrt(r2) <= radius + slack;
}

std::vector<std::vector<double>> CutoffSpec::closure_samples(int per_axis) const {
    const int n = dimension();
    per_axis = std::max(per_axis, 2);
    std::vector<double> lo(static_cast<std::size_t>(n)), hi(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        lo[k] = shape == Shape::Box ? lower[k] : center[k] - radius;
        hi[k] = shape == Shape::Box ? upper[k] : center[k] + radius;
    }
    std::vector<std::vector<double>> out;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    for (;;) {
        std::vector<double> p(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            p[k] = lo[k] + (hi[k] - lo[k]) * idx[k] / (per_axis - 1);
        }
        if (shape == Shape::Ball) {
            // Project grid points onto the closed ball so the sphere is sampled too.
            double r2 = 0.0;
            for (int i = 0; i < n; ++i) r2 += (p[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]) *
                                              (p[static_cast<std::size_t>(i)] - center[static_cast<std::size_t>(i)]);
            const double r = std::sqrt(r2);
            if (r > radius)
                for (int i = 0; i < n; ++i) {
                    const auto k = static_cast<std::size_t>(i);
                    p[k] = center[k] + (p[k] - center[k]) * radius / r;
                }
        }
        out.push_back(std::move(p));
        int i = 0;
        while (i < n && ++idx[static_cast<std::size_t>(i)] == per_axis) idx[static_cast<std::size_t>(i++)] = 0;
        if (i == n) break;
    }
    return out;
}

DiffusionSpec make_slowed_spec(const DiffusionSpec& spec, const CutoffSpec& cut) {
    spec.validate();
    cut.validate();
    if (cut.dimension() != spec.n) throw ConfigError("cutoff dimension does not match the spec");
    for (const auto& p : cut.closure_samples(9))
        if (!spec.domain(p)) throw ConfigError("cutoff region is not inside the domain");
    const Expr theta = cut.theta();
    DiffusionSpec out;
    out.n = spec.n;
    out.d = spec.d;
    for (const auto& s : spec.sigma) out.sigma.push_back(theta * s);
    const Expr theta2 = theta * theta;
    for (const auto& b : spec.drift) out.drift.push_back(theta2 * b);
    out.domain = Predicate();
    out.confinement = cut.closure_predicate();
    out.validate();
    return out;
}

TimeChangedPath time_change(const RecordedPath& path, const CutoffSpec& cut, double ds, std::size_t count) {
    if (!(ds > 0.0)) throw std::invalid_argument("time_change: ds must be positive");
    if (path.times.empty()) throw std::invalid_argument("time_change: empty path");
    const Program theta(cut.theta());
    const std::size_t n = path.states.front().size();
    TimeChangedPath out;
    out.s.resize(count);
    out.beta.resize(count);
    out.z.resize(count);

    // Clock S(t) = ∫ ϑ(X_u)^{-2} du along the piecewise-linear path; s ↦ β(s)
    // is its inverse. Steps where ϑ < 1 somewhere are split into sub-steps
    // integrated by Simpson's rule, since ϑ^{-2} varies by large factors
    // within one step near the edge of Θ.
    constexpr int kSubSteps = 8;
    // A piece of grid interval k between fractions ua and ub, with its
    // physical times and clock values at both ends.
    struct Segment {
        double ta = 0.0, tb = 0.0, ca = 0.0, cb = 0.0;
        std::size_t k = 0;
        double ua = 0.0, ub = 0.0;
    };
    const double t0 = path.times.front();
    std::vector<Segment> pending;
    pending.reserve(kSubSteps);
    std::size_t pending_pos = 0;
    std::size_t k = 0;   // next grid interval [k, k+1] to split
    bool stalled = false;
    double w_k = theta(path.states[0].data(), t0);
    double clock = 0.0;
    std::vector<double> xu(n);
    auto interpolate = [&](std::size_t iv, double u, double* dst) {
        if (iv + 1 >= path.states.size()) {
            for (std::size_t i = 0; i < n; ++i) dst[i] = path.states[iv][i];
            return;
        }
        for (std::size_t i = 0; i < n; ++i)
            dst[i] = path.states[iv][i] + u * (path.states[iv + 1][i] - path.states[iv][i]);
    };
    auto theta_at = [&](double u) {
        interpolate(k, u, xu.data());
        return theta(xu.data(), 0.0);
    };
    auto refill = [&]() {
        pending.clear();
        pending_pos = 0;
        if (stalled || w_k <= 0.0 || k + 1 >= path.times.size()) return false;
        const double ta = path.times[k] - t0, tb = path.times[k + 1] - t0;
        const double w_next = theta(path.states[k + 1].data(), path.times[k + 1]);
        if (w_k == 1.0 && w_next == 1.0) {
            pending.push_back({ta, tb, clock, clock + (tb - ta), k, 0.0, 1.0});
            clock += tb - ta;
        } else {
            const double h = (tb - ta) / kSubSteps;
            double w0 = w_k;
            for (int q = 0; q < kSubSteps; ++q) {
                const double u0 = static_cast<double>(q) / kSubSteps, um = (q + 0.5) / kSubSteps,
                             u1 = (q + 1.0) / kSubSteps;
                const double wm = theta_at(um);
                const double w1 = q + 1 == kSubSteps ? w_next : theta_at(u1);
                if (wm <= 0.0 || w1 <= 0.0) {
                    stalled = true;
                    break;
                }
                const double inc = h / 6.0 * (1.0 / (w0 * w0) + 4.0 / (wm * wm) + 1.0 / (w1 * w1));
                pending.push_back({ta + q * h, ta + (q + 1) * h, clock, clock + inc, k, u0, u1});
                clock += inc;
                w0 = w1;
            }
        }
        w_k = w_next;
        ++k;
        return !pending.empty();
    };
    auto next = [&](Segment& seg) {
        if (pending_pos >= pending.size() && !refill()) return false;
        seg = pending[pending_pos++];
        return true;
    };

    Segment cur;   // degenerate segment at the start point
    bool have = true;
    for (std::size_t j = 0; j < count; ++j) {
        const double s = static_cast<double>(j) * ds;
        out.s[j] = s;
        while (have && cur.cb < s) {
            Segment seg;
            have = next(seg);
            if (have) cur = seg;
        }
        out.z[j].resize(n);
        if (j == 0) {
            out.beta[j] = 0.0;
            out.z[j] = path.states[0];
        } else if (cur.cb >= s) {
            const double frac = cur.cb > cur.ca ? (s - cur.ca) / (cur.cb - cur.ca) : 0.0;
            out.beta[j] = cur.ta + frac * (cur.tb - cur.ta);
            interpolate(cur.k, cur.ua + frac * (cur.ub - cur.ua), out.z[j].data());
        } else {
            // ϑ reached zero or the recorded path ended: freeze at the last
            // point with ϑ > 0.
            if (!out.stalled) {
                out.stalled = true;
                out.stall_index = j;
            }
            out.beta[j] = cur.tb;
            interpolate(cur.k, cur.ub, out.z[j].data());
        }
    }
    return out;
}

std::vector<ProbeEstimate> x_regularity_probe(const DiffusionSpec& spec, std::span<const double> boundary_point,
                                              double delta, const std::vector<std::vector<double>>& approach,
                                              const PathConfig& cfg, std::uint64_t n_paths, unsigned threads) {
    if (!(delta > 0.0)) throw ConfigError("probe scale delta must be positive");
    if (n_paths == 0) throw ConfigError("n_paths must be positive");
    PathConfig local = cfg;
    local.horizon = std::min(cfg.horizon, delta);
    local.max_steps = std::max<std::uint64_t>(cfg.max_steps, static_cast<std::uint64_t>(std::ceil(local.horizon / cfg.dt)) + 1);
    const PathEngine engine(spec, ObservableSpec{}, local);
    std::vector<ProbeEstimate> out;
    for (std::size_t w = 0; w < approach.size(); ++w) {
        const auto& start = approach[w];
        auto blocks = run_blocks<RunningStats>(n_paths, threads, [&](std::size_t begin, std::size_t end) {
            RunningStats st;
            for (std::size_t i = begin; i < end; ++i) {
                const auto s = engine.run(start, 0.0, w * n_paths + i);
                double dist2 = 0.0;
                for (std::size_t c = 0; c < s.exit_state.size(); ++c)
                    dist2 += (s.exit_state[c] - boundary_point[c]) * (s.exit_state[c] - boundary_point[c]);
                const bool hit = !s.censored && s.exit_time < delta && std::sqrt(dist2) < delta;
                st.add(hit ? 1.0 : 0.0);
            }
            return st;
        });
        const RunningStats total = tree_reduce(std::move(blocks), RunningStats::merge);
        out.push_back({start, total.mean, total.std_error()});
    }
    return out;
}

}  // namespace hypofk
