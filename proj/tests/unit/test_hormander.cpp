#include "hypofk/hormander.hpp"
#include "hypofk/paths.hpp"
#include "hypofk/sle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace hypofk;

namespace {

DiffusionSpec langevin() { return make_spec(2, 1, {"0", "1"}, {"x2", "0"}, "true"); }
DiffusionSpec embedded_bm() { return make_spec(2, 1, {"1", "0"}, {"0", "0"}, "true"); }

SLEConfig sle_config(double kappa, std::vector<double> launch) {
    SLEConfig cfg;
    cfg.kappa = kappa;
    cfg.launch = std::move(launch);
    return cfg;
}

double max_abs_at(const VectorField& v, const std::vector<double>& x) {
    double m = 0.0;
    for (double c : v.at(x)) m = std::max(m, std::abs(c));
    return m;
}

VectorField sum(const VectorField& a, const VectorField& b) {
    VectorField out;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) out.coeffs.push_back(a.coeffs[i] + b.coeffs[i]);
    return out;
}

}  // namespace

TEST_CASE("lie_bracket examples") {
    const VectorField d2{{Expr(), Expr::constant(1.0)}};
    const VectorField x2d1{{Expr::var(2), Expr()}};
    CHECK(lie_bracket(d2, x2d1) == VectorField{{Expr::constant(1.0), Expr()}});
    CHECK(lie_bracket(x2d1, x2d1).is_zero());

    const double kappa = 2.0;
    const VectorField u1{{Expr::constant(std::sqrt(kappa)), Expr()}};
    const VectorField u0{{Expr(), parse_expr("2/(x2-x1)", 2)}};
    const VectorField b = lie_bracket(u1, u0);
    CHECK(b.coeffs[0].is_zero());
    for (auto x : std::vector<std::vector<double>>{{0.0, 1.0}, {-1.0, 0.5}}) {
        const double gap = x[1] - x[0];
        CHECK(b.at(x)[1] == doctest::Approx(std::sqrt(kappa) * 2.0 / (gap * gap)));
    }
    CHECK_THROWS(lie_bracket(d2, VectorField{{Expr::constant(1.0)}}));
}

TEST_CASE("property: bracket antisymmetry and Jacobi identity") {
    const VectorField u{{parse_expr("x2*x3", 3), parse_expr("sin(x1)", 3), parse_expr("1", 3)}};
    const VectorField v{{parse_expr("x1^2", 3), parse_expr("exp(x3)", 3), parse_expr("x1*x2", 3)}};
    const VectorField w{{parse_expr("cos(x2)", 3), parse_expr("x3 - x1", 3), parse_expr("x2^3", 3)}};
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const VectorField anti = sum(lie_bracket(v, w), lie_bracket(w, v));
    const VectorField jacobi =
        sum(sum(lie_bracket(u, lie_bracket(v, w)), lie_bracket(v, lie_bracket(w, u))), lie_bracket(w, lie_bracket(u, v)));
    for (int k = 0; k < 100; ++k) {
        std::vector<double> x{d(rng), d(rng), d(rng)};
        CHECK(max_abs_at(anti, x) <= 1e-10);
        CHECK(max_abs_at(jacobi, x) <= 1e-10);
    }
}

TEST_CASE("generate_basis examples") {
    for (int depth : {0, 1, 3}) {
        const auto basis = generate_basis(embedded_bm(), depth);
        REQUIRE(basis.entries.size() == 1);
        CHECK(basis.entries[0].field == VectorField{{Expr::constant(1.0), Expr()}});
    }
    const auto lv = generate_basis(langevin(), 0);
    REQUIRE(lv.entries.size() == 2);
    CHECK(lv.entries[0].field == VectorField{{Expr(), Expr::constant(1.0)}});
    CHECK(lv.entries[1].field == VectorField{{Expr::constant(1.0), Expr()}});
    CHECK(lv.entries[1].word == "[U1,U0]");

    // SLE n=3, K=1: fields with 1/(x_i-x1)^2 and 1/(x_i-x1)^3 components.
    // Along x = (0, g, 2g) the component scales as g^-2 or g^-3.
    const auto sle = generate_basis(sle_spec(sle_config(2.0, {0.0, 1.0, 2.0})), 1);
    bool has_square = false, has_cube = false;
    for (const auto& e : sle.entries) {
        const double c1 = e.field.at(std::vector<double>{0.0, 1.0, 2.0})[1];
        const double c2 = e.field.at(std::vector<double>{0.0, 2.0, 4.0})[1];
        if (c1 == 0.0 || c2 == 0.0) continue;
        const double exponent = std::log2(c1 / c2);
        has_square = has_square || std::abs(exponent - 2.0) < 1e-9;
        has_cube = has_cube || std::abs(exponent - 3.0) < 1e-9;
    }
    CHECK(has_square);
    CHECK(has_cube);
}

TEST_CASE("basis entries equal the bracket of their recorded parents") {
    const auto basis = generate_basis(sle_spec(sle_config(2.0, {0.0, 1.0, 2.0})), 2);
    for (const auto& e : basis.entries) {
        if (e.depth == 0) continue;
        const auto& l = basis.entries[static_cast<std::size_t>(e.left)].field;
        const auto& r = basis.entries[static_cast<std::size_t>(e.right)].field;
        CHECK(lie_bracket(l, r) == e.field);
    }
    for (std::size_t i = 0; i < basis.entries.size(); ++i)
        for (std::size_t j = i + 1; j < basis.entries.size(); ++j) CHECK_FALSE(basis.entries[i].field == basis.entries[j].field);
}

TEST_CASE("rank_at examples") {
    for (auto x : std::vector<std::vector<double>>{{0.0, 0.0}, {1.5, -2.0}}) {
        const auto eb = rank_at(generate_basis(embedded_bm(), 4), x);
        CHECK(eb.rank == 1);
        CHECK_FALSE(eb.satisfied);
        const auto lv = rank_at(generate_basis(langevin(), 0), x);
        CHECK(lv.rank == 2);
        CHECK(lv.satisfied);
    }
    const auto r = rank_at(generate_basis(sle_spec(sle_config(2.0, {0.0, 1.0, 2.0})), 2), std::vector<double>{0.0, 1.0, 2.0});
    CHECK(r.rank == 3);
    CHECK(r.satisfied);
    CHECK(r.singular_values.size() >= 3);
    for (std::size_t i = 1; i < r.singular_values.size(); ++i) CHECK(r.singular_values[i - 1] >= r.singular_values[i]);
}

TEST_CASE("SLE Hörmander reports for n in {2,3}, kappa in {2, 8/3}") {
    for (double kappa : {2.0, 8.0 / 3.0}) {
        auto two = sle_hormander_report(sle_config(kappa, {0.0, 1.0}), {{0.0, 1.0}, {-1.0, 3.0}}, 1);
        for (const auto& r : two) CHECK(r.rank == 2);
        auto three = sle_hormander_report(sle_config(kappa, {0.0, 1.0, 2.0}), {{0.0, 1.0, 2.0}, {0.5, 0.7, 3.0}}, 2);
        for (const auto& r : three) CHECK(r.satisfied);
    }
    CHECK_THROWS_AS(sle_hormander_report(sle_config(2.0, {0.0, 1.0, 2.0}), {{0.0, 1.0, 1.0}}, 2), DomainError);
}

TEST_CASE("property: rank is monotone in depth") {
    const auto specs = {embedded_bm(), langevin(), make_spec(2, 1, {"1", "0"}, {"0", "x1^2"}, "true"),
                        make_spec(3, 1, {"1", "0", "0"}, {"0", "x1", "x2"}, "true")};
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& spec : specs) {
        for (int k = 0; k < 10; ++k) {
            std::vector<double> x;
            for (int i = 0; i < spec.n; ++i) x.push_back(u(rng));
            int prev = 0;
            for (int depth = 0; depth <= 3; ++depth) {
                const int rank = rank_at(generate_basis(spec, depth), x).rank;
                CHECK(rank >= prev);
                prev = rank;
            }
        }
    }
}

TEST_CASE("property: rank agrees with the slowed-down spec where the cutoff equals one") {
    const auto spec = make_spec(3, 1, {"1", "0", "0"}, {"0", "x1", "x2"}, "true");
    const auto cut = CutoffSpec::box({-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}, 0.2);
    const auto slowed = make_slowed_spec(spec, cut);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.75, 0.75);
    for (int depth : {0, 1, 2}) {
        const auto a = generate_basis(spec, depth);
        const auto b = generate_basis(slowed, depth);
        for (int k = 0; k < 20; ++k) {
            std::vector<double> x{u(rng), u(rng), u(rng)};
            CHECK(rank_at(a, x).rank == rank_at(b, x).rank);
        }
    }
}
