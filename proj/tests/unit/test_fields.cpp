#include "hypofk/fields.hpp"
#include "hypofk/sle.hpp"
#include "hypofk/verify.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace hypofk;

namespace {

DiffusionSpec langevin() { return make_spec(2, 1, {"0", "1"}, {"x2", "0"}, "true"); }
DiffusionSpec embedded_bm() { return make_spec(2, 1, {"1", "0"}, {"0", "0"}, "true"); }
DiffusionSpec bm1() { return make_spec(1, 1, {"1"}, {"0"}, "x1 > -1 && x1 < 1"); }

SLEConfig sle_config(double kappa, std::vector<double> launch) {
    SLEConfig cfg;
    cfg.kappa = kappa;
    cfg.launch = std::move(launch);
    return cfg;
}

/// Random points with strictly increasing coordinates (non-collision for SLE specs).
std::vector<std::vector<double>> ordered_points(int n, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> start(-2.0, 2.0), gap(0.2, 1.5);
    std::vector<std::vector<double>> out;
    for (int k = 0; k < count; ++k) {
        std::vector<double> x{start(rng)};
        for (int i = 1; i < n; ++i) x.push_back(x.back() + gap(rng));
        out.push_back(x);
    }
    return out;
}

double eval_at(const Expr& e, std::vector<double> x) { return eval(e, x, 0.0); }

}  // namespace

TEST_CASE("make_U examples") {
    const auto lv = langevin();
    CHECK(make_U(lv, 1) == VectorField{{Expr(), Expr::constant(1.0)}});
    CHECK(make_U(lv, 0) == VectorField{{Expr::var(2), Expr()}});

    const auto eb = embedded_bm();
    CHECK(make_U(eb, 1) == VectorField{{Expr::constant(1.0), Expr()}});
    CHECK(make_U(eb, 0).is_zero());

    const auto sle = sle_spec(sle_config(8.0 / 3.0, {0.0, 1.0}));
    const VectorField u1 = make_U(sle, 1);
    CHECK(eval_at(u1.coeffs[0], {0.0, 1.0}) == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(u1.coeffs[1].is_zero());
    const VectorField u0 = make_U(sle, 0);
    CHECK(u0.coeffs[0].is_zero());
    CHECK(eval_at(u0.coeffs[1], {0.5, 1.5}) == doctest::Approx(2.0));

    CHECK_THROWS(make_U(lv, 2));
    CHECK_THROWS(make_U(lv, -1));
}

TEST_CASE("make_U includes the Stratonovich correction for state-dependent sigma") {
    // σ = x1: U_1 = x1 ∂1, U_0 = (b - ½ x1) ∂1.
    const auto spec = make_spec(1, 1, {"x1"}, {"0"}, "true");
    CHECK(eval_at(make_U(spec, 0).coeffs[0], {3.0}) == doctest::Approx(-1.5));
}

TEST_CASE("apply_G and apply_G_dual examples") {
    const auto bm = bm1();
    CHECK(apply_G(bm, parse_expr("x1^2", 1)) == Expr::constant(1.0));
    CHECK(apply_G(bm, parse_expr("1 - x1^2", 1)) == Expr::constant(-1.0));
    CHECK(apply_G_dual(bm, parse_expr("x1^2", 1)) == Expr::constant(1.0));
    for (const auto& spec : {bm, langevin(), embedded_bm()}) CHECK(apply_G(spec, Expr::constant(4.0)).is_zero());

    // Constant coefficients: G* f = G f with b negated.
    const auto drifted = make_spec(2, 2, {"1", "0.5", "0", "2"}, {"0.3", "-1"}, "true");
    const auto negated = make_spec(2, 2, {"1", "0.5", "0", "2"}, {"-0.3", "1"}, "true");
    const Expr f = parse_expr("sin(x1)*exp(x2) + x1^3*x2", 2);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> x{u(rng), u(rng)};
        CHECK(eval_at(apply_G_dual(drifted, f), x) == doctest::Approx(eval_at(apply_G(negated, f), x)).epsilon(1e-12));
    }
}

TEST_CASE("property: apply_G is linear and annihilates constants") {
    const auto spec = make_spec(2, 2, {"1 + x2^2", "x1", "0", "cos(x1)"}, {"x1*x2", "-x2"}, "true");
    const Expr p = parse_expr("x1^2*x2 - sin(x2)", 2), q = parse_expr("exp(x1)*x2", 2);
    const Expr lhs = apply_G(spec, 2.0 * p - 3.0 * q);
    const Expr rhs = 2.0 * apply_G(spec, p) - 3.0 * apply_G(spec, q);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> x{u(rng), u(rng)};
        CHECK(eval_at(lhs, x) == doctest::Approx(eval_at(rhs, x)).epsilon(1e-12));
    }
    CHECK(apply_G(spec, Expr::constant(1.0)).is_zero());
}

TEST_CASE("generator identity G = ½ Σ U_q² + U_0") {
    CHECK(check_generator_identity(langevin(), parse_expr("x1*x2", 2), {{0.0, 0.0}, {1.0, -2.0}, {3.0, 0.5}}) <= 1e-12);
    CHECK(check_generator_identity(bm1(), parse_expr("cosh(x1)", 1), {{-0.9}, {0.0}, {0.7}}) <= 1e-12);

    SLEConfig cfg = sle_config(2.0, {0.0, 1.0, 2.0});
    cfg.b1 = parse_expr("0.3*x1", 3);
    CHECK(check_generator_identity(sle_spec(cfg), parse_expr("x2 - x1", 3), ordered_points(3, 100, 1)) <= 1e-10);

    // Corpus with state-dependent noise, where the correction term of U_0 matters.
    const auto spec = make_spec(2, 2, {"1 + x2^2", "x1", "0", "cos(x1)"}, {"x1*x2", "-x2"}, "true");
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<double>> pts;
    for (int k = 0; k < 100; ++k) pts.push_back({u(rng), u(rng)});
    for (const char* f : {"x1*x2", "sin(x1)*exp(x2)", "x1^3 - x2^2*x1", "log(2 + x1^2)"})
        CHECK(check_generator_identity(spec, parse_expr(f, 2), pts) <= 1e-10);
}

TEST_CASE("a = σσᵀ is positive semi-definite on sampled domain points of the example specs") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<std::vector<double>> pts2;
    for (int k = 0; k < 1000; ++k) pts2.push_back({u(rng), u(rng)});
    CHECK(min_diffusion_eigenvalue(langevin(), pts2) >= -1e-10);
    CHECK(min_diffusion_eigenvalue(embedded_bm(), pts2) >= -1e-10);
    CHECK(min_diffusion_eigenvalue(make_spec(2, 2, {"1 + x2^2", "x1", "0", "cos(x1)"}, {"0", "0"}, "true"), pts2) >= -1e-10);
    CHECK(min_diffusion_eigenvalue(sle_spec(sle_config(6.0, {0.0, 1.0, 2.0})), ordered_points(3, 1000, 2)) >= -1e-10);
    std::vector<std::vector<double>> pts1;
    for (int k = 0; k < 1000; ++k) pts1.push_back({u(rng) / 3.0});
    CHECK(min_diffusion_eigenvalue(bm1(), pts1) >= -1e-10);
}

TEST_CASE("duality ∫(Gφ)ψ = ∫φ(G*ψ) for bump test functions") {
    const auto phi = bump_test_function({0.1, -0.2}, {0.8, 0.7}, 0.0, 1.0);
    const auto psi = bump_test_function({-0.1, 0.1}, {0.9, 0.8}, 0.0, 1.0);
    const std::vector<double> lo{-1.0, -1.0}, hi{1.0, 1.0};
    CHECK(duality_gap(langevin(), phi, psi, lo, hi, 201) <= 1e-6);
    CHECK(duality_gap(make_spec(2, 2, {"1 + x2^2", "x1", "0", "cos(x1)"}, {"x1*x2", "-x2"}, "true"), phi, psi, lo, hi, 201) <= 1e-6);
    CHECK(duality_gap(make_spec(2, 1, {"x1^2 - x2", "1 + x1*x2"}, {"x2^3", "x1 - 2*x2"}, "true"), phi, psi, lo, hi, 201) <= 1e-6);
    const auto phi1 = bump_test_function({0.0}, {0.8}, 0.0, 1.0), psi1 = bump_test_function({0.2}, {0.6}, 0.0, 1.0);
    CHECK(duality_gap(bm1(), phi1, psi1, {-1.0}, {1.0}, 401) <= 1e-6);
}

TEST_CASE("G* of a compactly supported function integrates to zero") {
    // ∫ G*φ · 1 = ∫ φ · G1 = 0, expressed as a duality gap against the constant 1.
    const auto spec = make_spec(2, 2, {"1 + x2^2", "x1", "0", "cos(x1)"}, {"x1*x2", "-x2"}, "true");
    const auto phi = bump_test_function({0.0, 0.0}, {0.9, 0.9}, 0.0, 1.0);
    CHECK(duality_gap(spec, Expr::constant(1.0), phi, {-1.0, -1.0}, {1.0, 1.0}, 401) <= 1e-5);
}

TEST_CASE("VectorField applied to a coordinate returns its coefficient") {
    const VectorField v{{parse_expr("x2*sin(x1)", 2), parse_expr("3 - x1", 2)}};
    CHECK(v.apply(Expr::var(1)) == v.coeffs[0]);
    CHECK(v.apply(Expr::var(2)) == v.coeffs[1]);
}

TEST_CASE("DiffusionSpec validation") {
    CHECK_THROWS_AS(make_spec(2, 1, {"1"}, {"0", "0"}, "true"), ConfigError);
    CHECK_THROWS_AS(make_spec(1, 1, {"t"}, {"0"}, "true"), ConfigError);
    CHECK_THROWS_AS(make_spec(1, 1, {"1"}, {"x2"}, "true"), ParseError);
}
