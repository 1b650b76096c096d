#include "hypofk/fields.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace hypofk {

void DiffusionSpec::validate() const {
    if (n < 1 || d < 1) throw ConfigError("dimensions must be positive");
    if (sigma.size() != static_cast<std::size_t>(n * d))
        throw ConfigError("sigma must have n*d = " + std::to_string(n * d) + " entries");
    if (drift.size() != static_cast<std::size_t>(n))
        throw ConfigError("drift must have n = " + std::to_string(n) + " entries");
    auto check = [this](const Expr& e, const char* what) {
        if (max_var_index(e) > n) throw ConfigError(std::string(what) + " references a variable beyond x" + std::to_string(n));
        if (depends_on_time(e)) throw ConfigError(std::string(what) + " must not depend on t");
    };
    for (const auto& e : sigma) check(e, "sigma");
    for (const auto& e : drift) check(e, "drift");
    if (domain.max_var_index() > n) throw ConfigError("domain references a variable beyond x" + std::to_string(n));
    for (int c : singular_coordinates)
        if (c < 1 || c > n) throw ConfigError("singular coordinate out of range");
    if (confinement && confinement->max_var_index() > n)
        throw ConfigError("confinement references a variable beyond x" + std::to_string(n));
}

DiffusionSpec make_spec(int n, int d, std::vector<Expr> sigma, std::vector<Expr> drift, Predicate domain) {
    DiffusionSpec spec;
    spec.n = n;
    spec.d = d;
    spec.sigma = std::move(sigma);
    spec.drift = std::move(drift);
    spec.domain = std::move(domain);
    spec.validate();
    return spec;
}

DiffusionSpec make_spec(int n, int d, const std::vector<std::string>& sigma, const std::vector<std::string>& drift,
                        const std::string& domain) {
    std::vector<Expr> s, b;
    for (const auto& src : sigma) s.push_back(parse_expr(src, n));
    for (const auto& src : drift) b.push_back(parse_expr(src, n));
    return make_spec(n, d, std::move(s), std::move(b), parse_predicate(domain, n));
}

Expr VectorField::apply(const Expr& f) const {
    Expr out;
    for (std::size_t i = 0; i < coeffs.size(); ++i) out = out + coeffs[i] * diff(f, static_cast<int>(i) + 1);
    return out;
}

bool VectorField::is_zero() const {
    return std::all_of(coeffs.begin(), coeffs.end(), [](const Expr& e) { return e.is_zero(); });
}

std::vector<double> VectorField::at(std::span<const double> x) const {
    std::vector<double> v(coeffs.size());
    for (std::size_t i = 0; i < coeffs.size(); ++i) v[i] = eval(coeffs[i], x);
    return v;
}

std::vector<Expr> diffusion_matrix(const DiffusionSpec& spec) {
    std::vector<Expr> a(static_cast<std::size_t>(spec.n * spec.n));
    for (int i = 1; i <= spec.n; ++i)
        for (int j = i; j <= spec.n; ++j) {
            Expr s;
            for (int q = 1; q <= spec.d; ++q) s = s + spec.sigma_at(i, q) * spec.sigma_at(j, q);
            a[static_cast<std::size_t>((i - 1) * spec.n + (j - 1))] = s;
            a[static_cast<std::size_t>((j - 1) * spec.n + (i - 1))] = s;
        }
    return a;
}

VectorField make_U(const DiffusionSpec& spec, int q) {
    if (q < 0 || q > spec.d) throw std::out_of_range("vector field index " + std::to_string(q) + " outside 0.." + std::to_string(spec.d));
    VectorField u;
    u.coeffs.resize(static_cast<std::size_t>(spec.n));
    if (q >= 1) {
        for (int i = 1; i <= spec.n; ++i) u.coeffs[static_cast<std::size_t>(i - 1)] = spec.sigma_at(i, q);
        return u;
    }
    for (int i = 1; i <= spec.n; ++i) {
        Expr correction;
        for (int r = 1; r <= spec.d; ++r) correction = correction + make_U(spec, r).apply(spec.sigma_at(i, r));
        u.coeffs[static_cast<std::size_t>(i - 1)] = spec.drift[static_cast<std::size_t>(i - 1)] - Expr::constant(0.5) * correction;
    }
    return u;
}

Expr apply_G(const DiffusionSpec& spec, const Expr& f) {
    const auto a = diffusion_matrix(spec);
    Expr second, first;
    for (int i = 1; i <= spec.n; ++i) {
        const Expr fi = diff(f, i);
        first = first + spec.drift[static_cast<std::size_t>(i - 1)] * fi;
        for (int j = 1; j <= spec.n; ++j) {
            const Expr& aij = a[static_cast<std::size_t>((i - 1) * spec.n + (j - 1))];
            if (aij.is_zero()) continue;
            second = second + aij * diff(fi, j);
        }
    }
    return Expr::constant(0.5) * second + first;
}

Expr apply_G_dual(const DiffusionSpec& spec, const Expr& f) {
    const auto a = diffusion_matrix(spec);
    Expr second, first;
    for (int i = 1; i <= spec.n; ++i) {
        first = first + diff(spec.drift[static_cast<std::size_t>(i - 1)] * f, i);
        for (int j = 1; j <= spec.n; ++j) {
            const Expr& aij = a[static_cast<std::size_t>((i - 1) * spec.n + (j - 1))];
            if (aij.is_zero()) continue;
            second = second + diff(diff(aij * f, j), i);
        }
    }
    return Expr::constant(0.5) * second - first;
}

double check_generator_identity(const DiffusionSpec& spec, const Expr& f,
                                const std::vector<std::vector<double>>& points) {
    const Program lhs(apply_G(spec, f));
    Expr rhs = make_U(spec, 0).apply(f);
    for (int q = 1; q <= spec.d; ++q) {
        const VectorField u = make_U(spec, q);
        rhs = rhs + Expr::constant(0.5) * u.apply(u.apply(f));
    }
    const Program rhs_prog(rhs);
    double worst = 0.0;
    for (const auto& x : points) worst = std::max(worst, std::abs(lhs(x) - rhs_prog(x)));
    return worst;
}

double min_diffusion_eigenvalue(const DiffusionSpec& spec, const std::vector<std::vector<double>>& points) {
    const auto a = diffusion_matrix(spec);
    std::vector<Program> progs(a.begin(), a.end());
    double lowest = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd m(spec.n, spec.n);
    for (const auto& x : points) {
        for (int i = 0; i < spec.n; ++i)
            for (int j = 0; j < spec.n; ++j) m(i, j) = progs[static_cast<std::size_t>(i * spec.n + j)](x);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
        lowest = std::min(lowest, solver.eigenvalues().minCoeff());
    }
    return lowest;
}

}  // namespace hypofk
