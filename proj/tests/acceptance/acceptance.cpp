// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "hypofk/estimators.hpp"
#include "hypofk/hormander.hpp"
#include "hypofk/parallel.hpp"
#include "hypofk/paths.hpp"
#include "hypofk/sle.hpp"
#include "hypofk/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace hypofk;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

DiffusionSpec interval_bm() { return make_spec(1, 1, {"1"}, {"0"}, "x1 > -1 && x1 < 1"); }

ObservableSpec observable(const std::string& g, const std::string& h, const std::string& psi, int n = 1) {
    return ObservableSpec{parse_expr(g, n), parse_expr(h, n), parse_expr(psi, n), {}};
}

// Settings of criteria 1-3 and 7.
constexpr std::uint64_t kPaths = 100000;
constexpr double kDt = 1e-4;

PathConfig fine_config(std::uint64_t seed) {
    PathConfig cfg;
    cfg.dt = kDt;
    cfg.seed = seed;
    cfg.bridge_correction = true;
    return cfg;
}

bool within(double estimate, double se, double oracle, double rel) {
    return std::abs(estimate - oracle) <= std::max(3.0 * se, rel * std::abs(oracle));
}

SLEConfig sle_config(double kappa, std::vector<double> launch, std::vector<double> weights = {}) {
    SLEConfig cfg;
    cfg.kappa = kappa;
    cfg.launch = std::move(launch);
    cfg.weights = std::move(weights);
    return cfg;
}

// ---------------------------------------------------------------------------

Outcome laplace() {
    Outcome o{true, ""};
    for (double s : {0.5, 1.0, 2.0}) {
        HarmonicOptions opt;
        opt.criterion = HarmonicCriterion::A;
        const auto r = solve_harmonic(interval_bm(), observable(fmt("%.17g", -s), "0", "1"), std::vector<double>{0.0},
                                      fine_config(101), kPaths, opt);
        const double oracle = oracle_laplace(s);
        const bool ok = within(r.estimate.mean, r.estimate.std_error, oracle, 0.01) && !r.unreliable;
        o.pass = o.pass && ok;
        o.detail += fmt("s=%g est %.5f±%.5f oracle %.5f; ", s, r.estimate.mean, r.estimate.std_error, oracle);
    }
    return o;
}

Outcome moments() {
    HarmonicOptions opt;
    opt.criterion = HarmonicCriterion::A;
    const auto first = solve_harmonic(interval_bm(), observable("0", "1", "0"), std::vector<double>{0.0}, fine_config(201),
                                      kPaths, opt);
    // Second moment from the raw exit times of the same engine.
    const PathEngine engine(interval_bm(), ObservableSpec{}, fine_config(202));
    auto blocks = run_blocks<RunningStats>(kPaths, 0, [&](std::size_t begin, std::size_t end) {
        RunningStats st;
        for (std::size_t i = begin; i < end; ++i) {
            const double tau = engine.run(std::vector<double>{0.0}, 0.0, i).exit_time;
            st.add(tau * tau);
        }
        return st;
    });
    const auto second = tree_reduce(std::move(blocks), RunningStats::merge);
    const double m1 = first.estimate.mean, m2 = second.mean;
    const bool ok1 = std::abs(m1 - oracle_moment(1)) <= 0.01 * oracle_moment(1);
    const bool ok2 = std::abs(m2 - oracle_moment(2)) <= 0.025 * oracle_moment(2);
    return {ok1 && ok2, fmt("E[tau] %.5f±%.5f (oracle 1, 1%%), E[tau^2] %.5f±%.5f (oracle %.5f, 2.5%%)", m1,
                            first.estimate.std_error, m2, second.std_error(), oracle_moment(2))};
}

Outcome exponential_moment() {
    HarmonicOptions opt;
    opt.criterion = HarmonicCriterion::C;
    const auto r = solve_harmonic(interval_bm(), observable("0.5", "0", "1"), std::vector<double>{0.0}, fine_config(301),
                                  kPaths, opt);
    const double oracle = oracle_expC(0.5).value;
    const bool ok = std::abs(r.estimate.mean - oracle) <= 0.025 * oracle && !r.divergent;
    const auto div = solve_harmonic(interval_bm(), observable("1.3", "0", "1"), std::vector<double>{0.0}, fine_config(302),
                                    20000, opt);
    return {ok && div.divergent,
            fmt("E[e^{0.5 tau}] %.5f±%.5f oracle %.5f; C=1.3 flagged divergent: %s (tail growth %.3f vs decay %.3f)",
                r.estimate.mean, r.estimate.std_error, oracle, div.divergent ? "yes" : "no",
                div.stabilization.tail_growth_rate, div.stabilization.tail_decay_rate)};
}

Outcome hormander() {
    const auto eb = make_spec(2, 1, {"1", "0"}, {"0", "0"}, "true");
    const auto lv = make_spec(2, 1, {"0", "1"}, {"x2", "0"}, "true");
    bool ok = true;
    for (auto x : std::vector<std::vector<double>>{{0, 0}, {0.5, -1}, {2, 3}}) {
        const auto r = rank_at(generate_basis(eb, default_depth(eb)), x);
        ok = ok && r.rank == 1 && !r.satisfied;
        const auto l = rank_at(generate_basis(lv, 0), x);
        ok = ok && l.rank == 2 && l.satisfied;
    }
    int sle_checked = 0;
    for (double kappa : {2.0, 8.0 / 3.0}) {
        for (const auto& r : sle_hormander_report(sle_config(kappa, {0, 1}), {{0, 1}, {-1, 2.5}, {3, 3.1}}, 1)) {
            ok = ok && r.satisfied;
            ++sle_checked;
        }
        for (const auto& r : sle_hormander_report(sle_config(kappa, {0, 1, 2}), {{0, 1, 2}, {0.3, -1, 4}, {-2, 5, -0.5}}, 2)) {
            ok = ok && r.satisfied;
            ++sle_checked;
        }
    }
    return {ok, fmt("embedded BM rank 1 (not satisfied), Langevin rank 2 at depth 0, %d SLE points full rank", sle_checked)};
}

Outcome bpz() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<std::vector<double>> pts;
    while (pts.size() < 100) {
        double a = u(rng), b = u(rng);
        if (std::abs(a - b) < 1e-3) continue;
        pts.push_back({std::min(a, b), std::max(a, b)});
    }
    const auto lin = bpz_residual(sle_config(2.0, {0, 1}, {1.0}), parse_expr("x2 - x1", 2), pts, 1e-10);
    const auto half = bpz_residual(sle_config(4.0, {0, 1}, {0.25}), parse_expr("(x2 - x1)^0.5", 2), pts, 1e-10);
    return {lin.pass && half.pass, fmt("max residual %.2e (x2-x1, D=1), %.2e ((x2-x1)^0.5, k=4, D=1/4)", lin.residual, half.residual)};
}

Outcome sle_drift() {
    Outcome o{true, ""};
    const std::vector<std::pair<double, double>> pairs{{0.0, 0.05}, {0.0, 0.1}, {0.0, 0.2}};
    for (double kappa : {2.0, 6.0}) {
        const auto cfg = sle_config(kappa, {1.0, 2.0}, {1.0});
        const Expr f = parse_expr("x2 - x1", 2), perturbed = parse_expr("x2 - x1 + 0.1*x1", 2);
        PathConfig pc;
        pc.dt = 1e-3;
        const auto obs = covariant_observable(cfg, f);
        const auto good = martingale_drift_test(sle_spec(cfg), obs, f, cfg.launch, pairs, pc, 10000);
        const auto bad = martingale_drift_test(sle_spec(cfg), obs, perturbed, cfg.launch, pairs, pc, 10000);
        o.pass = o.pass && good.pass && !bad.pass;
        double zg = 0.0, zb = 0.0;
        for (double z : good.z_scores) zg = std::max(zg, std::abs(z));
        for (double z : bad.z_scores) zb = std::max(zb, std::abs(z));
        o.detail += fmt("k=%g true f max|z| %.2f (%s), perturbed max|z| %.2f (%s); ", kappa, zg, good.pass ? "pass" : "fail",
                        zb, bad.pass ? "pass" : "fail");
    }
    return o;
}

Outcome survival() {
    PathConfig cfg = fine_config(701);
    const auto e = survival_probability(interval_bm(), std::vector<double>{0.0}, 0.0, 0.5, cfg, kPaths);
    const double oracle = oracle_survival(0.0, 0.5);
    return {within(e.mean, e.std_error, oracle, 0.01),
            fmt("P0[tau > 0.5] %.5f±%.5f, eigen-series oracle %.5f", e.mean, e.std_error, oracle)};
}

Outcome density() {
    PathConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 0.5;
    cfg.seed = 801;
    cfg.bridge_correction = true;
    DensityGrid grid{{-1.0}, {1.0}, {20}};
    const auto d = transition_density(interval_bm(), std::vector<double>{0.0}, {0.5}, grid, cfg, 20000);
    cfg.seed = 802;
    const auto s = survival_probability(interval_bm(), std::vector<double>{0.0}, 0.0, 0.5, cfg, 20000);
    const double joint = std::hypot(d.mass_std_error(0), s.std_error);
    const bool mass_ok = std::abs(d.mass(0) - s.mean) <= 2.0 * joint;

    const auto cut = CutoffSpec::box({-0.7}, {0.7}, 0.2);
    const auto slowed = make_slowed_spec(interval_bm(), cut);
    PathConfig sc;
    sc.dt = 1e-3;
    sc.horizon = 2.0;
    sc.seed = 803;
    DensityGrid wide{{-1.0}, {1.0}, {40}};
    const auto sd = transition_density(slowed, std::vector<double>{0.0}, {0.5, 1.0, 2.0}, wide, sc, 20000);
    std::uint64_t outside = 0;
    for (std::size_t slice = 0; slice < sd.times.size(); ++slice) {
        outside += sd.outside[slice];
        for (std::size_t c = 0; c < wide.cell_count(); ++c) {
            const double lo = -1.0 + 0.05 * static_cast<double>(c), hi = lo + 0.05;
            if (hi <= -0.7 || lo >= 0.7) outside += sd.counts[slice][c];
        }
    }
    bool full = true;
    for (std::size_t slice = 0; slice < sd.times.size(); ++slice) full = full && sd.mass(slice) == 1.0;
    return {mass_ok && outside == 0 && full,
            fmt("killed mass %.5f vs survival %.5f (|diff| %.5f <= 2x%.5f); slowed: %llu samples outside the cutoff box, mass 1 at all slices: %s",
                d.mass(0), s.mean, std::abs(d.mass(0) - s.mean), joint, static_cast<unsigned long long>(outside),
                full ? "yes" : "no")};
}

Outcome time_change_law() {
    const auto spec = make_spec(1, 1, {"1"}, {"0"}, "x1 > -2 && x1 < 2");
    const auto cut = CutoffSpec::box({-1.0}, {1.0}, 0.5);
    int passed = 0;
    double worst = 1.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        PathConfig cfg;
        cfg.dt = 1e-3;
        cfg.seed = 900 + seed;
        const auto r = time_change_ks_test(spec, cut, std::vector<double>{0.0}, 0.3, cfg, 10000);
        const double p = r.min_p_value();
        worst = std::min(worst, p);
        if (p > 0.01) ++passed;
    }
    return {passed >= 95, fmt("p > 0.01 in %d of 100 seeds (min p %.3g)", passed, worst)};
}

Outcome properties() {
    std::vector<std::string> notes;
    bool ok = true;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    // Autodiff vs central differences.
    double worst_fd = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Expr p;
        for (int k = 0; k < 4; ++k) {
            Expr m = Expr::constant(u(rng) * 2.0);
            for (int i = 1; i <= 3; ++i) m = m * ipow(Expr::var(i), static_cast<int>(rng() % 5));
            p = p + m;
        }
        for (int i = 1; i <= 3; ++i) {
            std::vector<double> x{u(rng), u(rng), u(rng)}, xp = x, xm = x;
            xp[static_cast<std::size_t>(i - 1)] += 1e-5;
            xm[static_cast<std::size_t>(i - 1)] -= 1e-5;
            const double fd = (eval(p, xp) - eval(p, xm)) / 2e-5, exact = eval(diff(p, i), x);
            worst_fd = std::max(worst_fd, std::abs(exact - fd) / std::max(1.0, std::abs(exact)));
        }
    }
    ok = ok && worst_fd < 1e-6;
    notes.push_back(fmt("autodiff/FD %.1e", worst_fd));

    // Bracket antisymmetry and Jacobi.
    const VectorField a{{parse_expr("x2*x3", 3), parse_expr("sin(x1)", 3), parse_expr("1", 3)}};
    const VectorField b{{parse_expr("x1^2", 3), parse_expr("exp(x3)", 3), parse_expr("x1*x2", 3)}};
    const VectorField c{{parse_expr("cos(x2)", 3), parse_expr("x3 - x1", 3), parse_expr("x2^3", 3)}};
    const auto ab = lie_bracket(a, b), ba = lie_bracket(b, a);
    const auto j1 = lie_bracket(a, lie_bracket(b, c)), j2 = lie_bracket(b, lie_bracket(c, a)), j3 = lie_bracket(c, lie_bracket(a, b));
    double worst_lie = 0.0;
    for (int k = 0; k < 100; ++k) {
        std::vector<double> x{u(rng), u(rng), u(rng)};
        const auto vab = ab.at(x), vba = ba.at(x), v1 = j1.at(x), v2 = j2.at(x), v3 = j3.at(x);
        for (std::size_t i = 0; i < 3; ++i)
            worst_lie = std::max({worst_lie, std::abs(vab[i] + vba[i]), std::abs(v1[i] + v2[i] + v3[i])});
    }
    ok = ok && worst_lie <= 1e-10;
    notes.push_back(fmt("antisymmetry/Jacobi %.1e", worst_lie));

    // Generator identity and duality.
    const auto general = make_spec(2, 2, {"1 + x2^2", "x1", "0", "cos(x1)"}, {"x1*x2", "-x2"}, "true");
    std::vector<std::vector<double>> pts;
    for (int k = 0; k < 100; ++k) pts.push_back({u(rng), u(rng)});
    double worst_gen = 0.0;
    for (const char* f : {"x1*x2", "sin(x1)*exp(x2)", "x1^3 - x2^2*x1"})
        worst_gen = std::max(worst_gen, check_generator_identity(general, parse_expr(f, 2), pts));
    ok = ok && worst_gen <= 1e-10;
    notes.push_back(fmt("generator identity %.1e", worst_gen));
    const double gap = duality_gap(general, bump_test_function({0.1, -0.2}, {0.8, 0.7}, 0, 1),
                                   bump_test_function({-0.1, 0.1}, {0.9, 0.8}, 0, 1), {-1, -1}, {1, 1}, 201);
    ok = ok && gap <= 1e-6;
    notes.push_back(fmt("duality %.1e", gap));

    // gamma/H decomposition.
    const auto obs = observable("0.5*sin(3*x1) - x1^2", "cos(x1) + t*x1", "1");
    PathConfig pc;
    pc.dt = 1e-3;
    pc.horizon = 3.0;
    double worst_dec = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const auto p = simulate_recorded_path(interval_bm(), obs, std::vector<double>{0.2}, 0.0, pc, i);
        const auto d = gamma_multiplicativity_check(p, obs, p.sample.exit_time * 0.4);
        worst_dec = std::max({worst_dec, d.gamma, d.H});
    }
    ok = ok && worst_dec <= 1e-8;
    notes.push_back(fmt("gamma/H decomposition %.1e", worst_dec));

    // Reproducibility and thread-count invariance.
    EstimatorOptions one, many;
    one.threads = 1;
    many.threads = 4;
    pc.horizon = 1.0;
    const auto obs2 = observable("-x1^2", "0.5", "cos(x1)");
    const auto e1 = solve_parabolic(interval_bm(), obs2, std::vector<double>{0.2}, 0.0, pc, 5000, one);
    const auto e2 = solve_parabolic(interval_bm(), obs2, std::vector<double>{0.2}, 0.0, pc, 5000, one);
    const auto e4 = solve_parabolic(interval_bm(), obs2, std::vector<double>{0.2}, 0.0, pc, 5000, many);
    const bool repro = e1.mean == e2.mean && e1.std_error == e2.std_error;
    const bool invariant = e1.mean == e4.mean && e1.std_error == e4.std_error;
    ok = ok && repro && invariant;
    notes.push_back(std::string("bit-identical rerun ") + (repro ? "yes" : "no") + ", threads 1 vs 4 identical " +
                    (invariant ? "yes" : "no"));

    std::string detail;
    for (std::size_t i = 0; i < notes.size(); ++i) detail += (i ? "; " : "") + notes[i];
    return {ok, detail};
}

Outcome weak_form() {
    const auto obs = observable("-1", "0", "1");
    PathConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1.0;
    cfg.seed = 1101;
    cfg.bridge_correction = true;
    const auto field = solve_parabolic_field(interval_bm(), obs, {-0.9}, {0.9}, {17}, 0.05, 0.95, 17, cfg, 2000);
    const auto bumps = random_bumps(field, 5, 1102);
    int passed = 0;
    double worst_ratio = 0.0;
    for (const auto& b : bumps) {
        const auto r = weak_residual(interval_bm(), obs, field, bump_test_function(b));
        if (r.pass) ++passed;
        worst_ratio = std::max(worst_ratio, r.residual / r.tolerance);
    }
    return {passed == 5, fmt("%d of 5 random bumps within the MC+quadrature+interpolation budget (max |I|/budget %.2f)",
                             passed, worst_ratio)};
}

}  // namespace

int main() {
    report(1, "Laplace transform of the exit time", laplace);
    report(2, "Exit-time moments", moments);
    report(3, "Exponential moment and divergence threshold", exponential_moment);
    report(4, "Hormander checker", hormander);
    report(5, "BPZ exactness", bpz);
    report(6, "SLE martingale drift", sle_drift);
    report(7, "Survival probability", survival);
    report(8, "Density consistency", density);
    report(9, "Time-change equivalence", time_change_law);
    report(10, "Property suites", properties);
    report(11, "Weak-form check", weak_form);
    std::printf("%d of 11 criteria passed\n", 11 - failures);
    return failures == 0 ? 0 : 1;
}
