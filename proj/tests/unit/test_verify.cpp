#include "hypofk/verify.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace hypofk;

namespace {

DiffusionSpec bm1(const char* domain = "x1 > -1 && x1 < 1") { return make_spec(1, 1, {"1"}, {"0"}, domain); }

ObservableSpec observable(const char* g, const char* h, const char* psi, int n = 1) {
    return ObservableSpec{parse_expr(g, n), parse_expr(h, n), parse_expr(psi, n), {}};
}

PathConfig config(double dt, std::uint64_t seed = 1) {
    PathConfig cfg;
    cfg.dt = dt;
    cfg.seed = seed;
    return cfg;
}

std::vector<SpaceTimePoint> interior_points(int count) {
    std::vector<SpaceTimePoint> out;
    for (int k = 0; k < count; ++k) out.push_back({{-0.9 + 1.8 * k / (count - 1)}, 0.1 + 0.8 * k / (count - 1)});
    return out;
}

}  // namespace

TEST_CASE("strong residual examples") {
    // Backward heat equation: f = x1^2 + (T - t).
    const auto heat = strong_residual(bm1("true"), observable("0", "0", "0"), parse_expr("x1^2 + 1 - t", 1),
                                      interior_points(11), 1e-12);
    CHECK(heat.pass);
    CHECK(heat.residual == 0.0);

    const auto life = strong_residual(bm1(), observable("0", "1", "0"), parse_expr("1 - x1^2", 1), interior_points(11), 1e-12);
    CHECK(life.pass);
    CHECK(life.residual <= 1e-12);

    const auto cosine = strong_residual(bm1(), observable("pi^2/8", "0", "0"), parse_expr("cos(pi*x1/2)", 1),
                                        interior_points(11), 1e-12);
    CHECK(cosine.pass);
    CHECK(cosine.residual <= 1e-12);

    const auto wrong = strong_residual(bm1(), observable("0", "0", "0"), parse_expr("1 - x1^2", 1), interior_points(5), 1e-12);
    CHECK_FALSE(wrong.pass);
    CHECK(wrong.residual == doctest::Approx(1.0));
}

TEST_CASE("strong residual on a grid of a closed-form field") {
    // f = exp(t/2) cos(x1) solves the backward heat equation.
    const auto field = sample_field(parse_expr("exp(t/2)*cos(x1)", 1), {-1.0}, {1.0}, {41}, 0.0, 1.0, 41);
    const auto r = strong_residual_grid(bm1(), observable("0", "0", "0"), field, 1e-3);
    CHECK(r.pass);
    const auto bad = strong_residual_grid(bm1(), observable("-1", "0", "0"), field, 1e-3);
    CHECK_FALSE(bad.pass);
}

TEST_CASE("weak residual: zero field and zero source integrate to zero") {
    const auto field = sample_field(Expr(), {-1.0}, {1.0}, {9}, 0.0, 1.0, 9);
    const auto phi = bump_test_function({0.0}, {0.5}, 0.5, 0.3);
    const auto r = weak_residual(bm1(), observable("0", "0", "0"), field, phi);
    CHECK(r.residual == 0.0);
    CHECK(r.pass);
}

TEST_CASE("weak residual of an exact solution is small and converges under refinement") {
    const Expr exact = parse_expr("exp(t/2)*cos(x1)", 1);
    const auto obs = observable("0", "0", "0");
    const auto phi = bump_test_function({0.1}, {0.6}, 0.5, 0.35);
    const auto fine = sample_field(exact, {-1.0}, {1.0}, {65}, 0.0, 1.0, 65);
    const auto r = weak_residual(bm1(), obs, fine, phi);
    CHECK(r.residual <= 1e-4);
    CHECK(r.pass);

    // Halving the quadrature spacing reduces the residual at least at second order.
    std::vector<double> residuals;
    for (int refine : {2, 4, 8}) {
        WeakOptions opt;
        opt.refine = refine;
        residuals.push_back(weak_residual(bm1(), obs, fine, phi, opt).residual);
    }
    for (std::size_t i = 0; i + 1 < residuals.size(); ++i) {
        INFO("residuals " << residuals[i] << " -> " << residuals[i + 1]);
        CHECK(std::log2(residuals[i] / residuals[i + 1]) >= 1.8);
    }
}

TEST_CASE("weak residual detects a field that solves a different equation") {
    // exp(1.5 t) cos(x1) solves the equation with g = -1, not g = -0.8.
    const auto field = sample_field(parse_expr("exp(1.5*t)*cos(x1)", 1), {-0.9}, {0.9}, {17}, 0.05, 0.95, 17);
    const auto phi = bump_test_function({0.0}, {0.7}, 0.5, 0.4);
    CHECK(weak_residual(bm1(), observable("-1", "0", "1"), field, phi).pass);
    CHECK_FALSE(weak_residual(bm1(), observable("-0.8", "0", "1"), field, phi).pass);
}

TEST_CASE("weak residual rejects leaking test functions and even grids") {
    const auto field = sample_field(parse_expr("cos(x1)", 1), {-1.0}, {1.0}, {9}, 0.0, 1.0, 9);
    CHECK_THROWS_AS(weak_residual(bm1(), observable("0", "0", "0"), field, bump_test_function({0.8}, {0.5}, 0.5, 0.3)),
                    SupportError);
    CHECK_THROWS_AS(weak_residual(bm1(), observable("0", "0", "0"), field, bump_test_function({0.0}, {0.5}, 0.9, 0.3)),
                    SupportError);
    const auto even = sample_field(parse_expr("cos(x1)", 1), {-1.0}, {1.0}, {8}, 0.0, 1.0, 9);
    CHECK_THROWS(weak_residual(bm1(), observable("0", "0", "0"), even, bump_test_function({0.0}, {0.5}, 0.5, 0.3)));
}

TEST_CASE("random bumps lie strictly inside the grid box") {
    const auto field = sample_field(Expr(), {-1.0, 0.0}, {1.0, 3.0}, {9, 9}, 0.2, 0.8, 9);
    const auto bumps = random_bumps(field, 20, 99);
    REQUIRE(bumps.size() == 20);
    for (const auto& b : bumps) {
        for (int i = 0; i < 2; ++i) {
            const auto k = static_cast<std::size_t>(i);
            CHECK(b.center[k] - b.radius[k] > field.lower[k]);
            CHECK(b.center[k] + b.radius[k] < field.upper[k]);
        }
        CHECK(b.t_center - b.t_radius > 0.2);
        CHECK(b.t_center + b.t_radius < 0.8);
    }
    CHECK(random_bumps(field, 3, 99)[0].center == bumps[0].center);
}

TEST_CASE("drift test: true martingale passes at the stated calibration, perturbed one fails") {
    // Ornstein-Uhlenbeck dX = -X dt + dB: f = x1 e^t is an exact space-time harmonic function.
    const auto spec = make_spec(1, 1, {"1"}, {"-x1"}, "true");
    const ObservableSpec obs;
    const std::vector<std::pair<double, double>> pairs{{0.0, 0.25}, {0.25, 0.5}};
    const std::vector<double> x0{1.0};
    int failures = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto r = martingale_drift_test(spec, obs, parse_expr("x1*exp(t)", 1), x0, pairs, config(1e-2, seed), 1000);
        if (!r.pass) ++failures;
    }
    CHECK(failures <= 5);

    const auto perturbed =
        martingale_drift_test(spec, obs, parse_expr("x1*exp(t) + 0.1*x1", 1), x0, pairs, config(1e-2, 3), 10000);
    CHECK_FALSE(perturbed.pass);
    CHECK(perturbed.critical_value == doctest::Approx(2.5758).epsilon(1e-4));
}

TEST_CASE("drift test refuses probes with too few survivors") {
    CHECK_THROWS(martingale_drift_test(bm1("x1 > -0.05 && x1 < 0.05"), ObservableSpec{}, parse_expr("x1", 1),
                                       std::vector<double>{0.0}, {{0.5, 1.0}}, config(1e-3), 200));
}

TEST_CASE("two-sample KS examples") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n0(0.0, 1.0), n1(0.5, 1.0);
    std::vector<double> a(10000), b(10000);
    for (auto& v : a) v = n0(rng);
    for (auto& v : b) v = n1(rng);
    const auto same = ks_two_sample(a, a);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);
    const auto shifted = ks_two_sample(a, b);
    CHECK(shifted.p_value < 1e-6);
    CHECK(shifted.p_value >= 1e-16);
    CHECK_THROWS(ks_two_sample(std::vector<double>(10, 0.0), a));

    // Small hand-checked case: disjoint samples give statistic 1.
    std::vector<double> lo(60), hi(60);
    for (int i = 0; i < 60; ++i) {
        lo[static_cast<std::size_t>(i)] = i;
        hi[static_cast<std::size_t>(i)] = 100 + i;
    }
    CHECK(ks_two_sample(lo, hi).statistic == 1.0);
}

TEST_CASE("time-change law equality on one seed") {
    const auto spec = bm1("x1 > -2 && x1 < 2");
    const auto cut = CutoffSpec::box({-1.0}, {1.0}, 0.5);
    const auto r = time_change_ks_test(spec, cut, std::vector<double>{0.0}, 0.3, config(1e-3, 5), 2000);
    REQUIRE(r.per_coordinate.size() == 1);
    CHECK(r.min_p_value() > 0.01);
    CHECK(r.n_paths == 2000);
}

TEST_CASE("oracle examples and cross-consistency") {
    CHECK(oracle_fs(1.0, 0.0) == doctest::Approx(1.0 - 1.0 / std::cosh(std::numbers::sqrt2)).epsilon(1e-14));
    CHECK(oracle_fs(1.0, 0.0) == doctest::Approx(0.54090).epsilon(1e-5));
    CHECK(oracle_laplace(1.0) == doctest::Approx(0.45910).epsilon(1e-5));
    CHECK(oracle_moment(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(oracle_moment(2) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
    CHECK(sech_coefficient(1) == doctest::Approx(-0.5));
    CHECK(sech_coefficient(2) == doctest::Approx(5.0 / 24.0));
    CHECK(oracle_expC(0.5).value == doctest::Approx(1.0 / std::cos(1.0)).epsilon(1e-12));
    CHECK_FALSE(oracle_expC(1.2).divergent);
    CHECK(oracle_expC(1.23).value > oracle_expC(1.2).value);
    CHECK(oracle_expC(std::numbers::pi * std::numbers::pi / 8.0).divergent);
    CHECK(oracle_expC(1.3).divergent);
    // Eigenfunction series summed to 1e-8; agrees with the method of images.
    CHECK(oracle_survival(0.0, 0.5) == doctest::Approx(0.6854458).epsilon(1e-6));
    CHECK(oracle_survival(0.0, 0.0) == doctest::Approx(1.0));
    for (double s : {0.5, 1.0, 2.0}) CHECK(std::abs(-s * oracle_fs(s, 0.0) + 1.0 - oracle_laplace(s, 0.0)) <= 1e-12);

    OracleParams p;
    p.k = 2;
    CHECK(oracle_interval_bm(OracleKind::MomentK, p).value == doctest::Approx(5.0 / 3.0));
    p.s = 2.0;
    p.x = 0.3;
    CHECK(oracle_interval_bm(OracleKind::Laplace, p).value == doctest::Approx(oracle_laplace(2.0, 0.3)));
}
