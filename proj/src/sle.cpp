#include "hypofk/sle.hpp"

#include <cmath>

namespace hypofk {

double SLEConfig::weight(int i) const {
    if (weights.empty()) return 0.0;
    return weights.at(static_cast<std::size_t>(i - 2));
}

void SLEConfig::validate() const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("kappa must be a non-negative number");
    if (launch.empty()) throw ConfigError("SLE config needs at least the driving point");
    if (!weights.empty() && weights.size() + 1 != launch.size())
        throw ConfigError("SLE config needs one weight for each of x2..xn");
    if (!(collision_guard >= 0.0)) throw ConfigError("collision guard must be non-negative");
    if (max_var_index(b1) > n()) throw ConfigError("b1 references a variable beyond x" + std::to_string(n()));
    if (depends_on_time(b1)) throw ConfigError("b1 must not depend on t");
    for (std::size_t i = 0; i < launch.size(); ++i)
        for (std::size_t j = i + 1; j < launch.size(); ++j)
            if (!(std::abs(launch[j] - launch[i]) > collision_guard))
                throw ConfigError("SLE launch coordinates must be pairwise separated by more than the collision guard");
}

DiffusionSpec sle_spec(const SLEConfig& cfg) {
    cfg.validate();
    const int n = cfg.n();
    std::vector<Expr> sigma(static_cast<std::size_t>(n));
    sigma[0] = Expr::constant(std::sqrt(cfg.kappa));
    std::vector<Expr> drift(static_cast<std::size_t>(n));
    drift[0] = cfg.b1;
    const Expr x1 = Expr::var(1);
    for (int i = 2; i <= n; ++i) drift[static_cast<std::size_t>(i - 1)] = 2.0 / (Expr::var(i) - x1);
    std::vector<Predicate> gaps;
    for (int i = 1; i <= n; ++i)
        for (int j = i + 1; j <= n; ++j)
            gaps.push_back(Predicate::compare(apply(UnaryOp::Abs, Expr::var(j) - Expr::var(i)), CmpOp::Gt,
                                              Expr::constant(cfg.collision_guard)));
    Predicate domain;
    if (gaps.size() == 1) domain = gaps.front();
    else if (gaps.size() > 1) domain = Predicate::conjunction(std::move(gaps));
    DiffusionSpec spec = make_spec(n, 1, std::move(sigma), std::move(drift), std::move(domain));
    for (int i = 1; i <= n && n > 1; ++i) spec.singular_coordinates.push_back(i);
    return spec;
}

ObservableSpec covariant_observable(const SLEConfig& cfg, const Expr& f) {
    cfg.validate();
    ObservableSpec obs;
    const Expr x1 = Expr::var(1);
    for (int i = 2; i <= cfg.n(); ++i) {
        const double w = cfg.weight(i);
        if (w == 0.0) continue;
        const Expr gap = Expr::var(i) - x1;
        obs.g = obs.g - (2.0 * w) / (gap * gap);
    }
    obs.psi = f;
    obs.weights = cfg.weights;
    return obs;
}

namespace {

void check_collisions(const std::vector<double>& p, int n) {
    if (static_cast<int>(p.size()) != n) throw std::invalid_argument("point has the wrong dimension");
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = i + 1; j < p.size(); ++j)
            if (p[i] == p[j])
                throw DomainError("coordinate collision x" + std::to_string(i + 1) + " = x" + std::to_string(j + 1));
}

}  // namespace

ResidualReport bpz_residual(const SLEConfig& cfg, const Expr& f, const std::vector<std::vector<double>>& points,
                            double tol) {
    cfg.validate();
    const Expr x1 = Expr::var(1);
    const Expr d1 = diff(f, 1);
    Expr r = (cfg.kappa / 2.0) * diff(d1, 1) + cfg.b1 * d1;
    for (int i = 2; i <= cfg.n(); ++i) {
        const Expr gap = Expr::var(i) - x1;
        r = r + (2.0 / gap) * diff(f, i);
        if (cfg.weight(i) != 0.0) r = r - (2.0 * cfg.weight(i)) / (gap * gap) * f;
    }
    const Program p(r);
    ResidualReport rep;
    rep.mode = ResidualMode::StrongSymbolic;
    rep.tolerance = tol;
    for (const auto& x : points) {
        check_collisions(x, cfg.n());
        const double v = p(x.data(), 0.0);
        rep.values.push_back(v);
        rep.residual = std::max(rep.residual, std::abs(v));
    }
    rep.pass = rep.residual <= tol;
    return rep;
}

std::vector<RankReport> sle_hormander_report(const SLEConfig& cfg, const std::vector<std::vector<double>>& points,
                                             int depth, double tol) {
    for (const auto& x : points) check_collisions(x, cfg.n());
    const BracketBasis basis = generate_basis(sle_spec(cfg), depth);
    std::vector<RankReport> out;
    for (const auto& x : points) out.push_back(rank_at(basis, x, tol));
    return out;
}

}  // namespace hypofk
