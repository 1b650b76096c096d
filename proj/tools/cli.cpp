#include "cli.hpp"

#include "config.hpp"

#include "hypofk/parallel.hpp"
#include "hypofk/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

namespace hypofk::cli {

namespace {

constexpr int kSchemaVersion = 1;

/// Output files of one command; written only when --out is given.
class Outputs {
public:
    explicit Outputs(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {}

    /// Stream for a CSV file, or nullptr when no output directory was given.
    std::ostream* csv(const std::string& name) {
        if (!dir_) return nullptr;
        files_.emplace_back(*dir_ / name);
        auto& f = files_.back();
        if (!f) throw ConfigError("cannot write " + (*dir_ / name).string());
        f << std::setprecision(17);
        written_.push_back(name);
        return &f;
    }

    const std::vector<std::string>& written() const { return written_; }
    const std::optional<std::filesystem::path>& dir() const { return dir_; }

private:
    std::optional<std::filesystem::path> dir_;
    std::vector<std::ofstream> files_;
    std::vector<std::string> written_;
};

struct Context {
    ojson resolved = ojson::object();
    Numerics numerics;
    Problem problem;
    Outputs* outputs = nullptr;
};

ojson estimate_json(const MCEstimate& e) {
    return ojson{{"mean", e.mean},
                 {"std_error", e.std_error},
                 {"n_paths", e.n_paths},
                 {"n_censored_by_cap", e.n_censored_by_cap},
                 {"n_collisions", e.n_collisions},
                 {"seed", e.seed}};
}

ojson residual_json(const ResidualReport& r) {
    ojson j{{"mode", to_string(r.mode)}, {"residual", r.residual}, {"tolerance", r.tolerance}, {"pass", r.pass}};
    if (r.mode == ResidualMode::Weak) {
        j["mc_error"] = r.mc_error;
        j["quadrature_error"] = r.quadrature_error;
        j["interpolation_error"] = r.interpolation_error;
    } else {
        j["values"] = r.values;
    }
    return j;
}

void write_header(std::ostream& out, int n, std::initializer_list<const char*> tail, bool with_t = true) {
    for (int i = 1; i <= n; ++i) out << (i > 1 ? "," : "") << 'x' << i;
    if (with_t) out << ",t";
    for (const char* c : tail) out << ',' << c;
    out << '\n';
}

void write_point(std::ostream& out, const std::vector<double>& x) {
    for (std::size_t i = 0; i < x.size(); ++i) out << (i ? "," : "") << x[i];
}

void check_in_domain(const Problem& p, const std::vector<std::vector<double>>& pts, const std::string& where) {
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (!p.spec.domain(pts[i]))
            throw ConfigError(where + "[" + std::to_string(i) + "]: point lies outside the domain");
}

EstimatorOptions estimator_options(const Numerics& n) {
    EstimatorOptions o;
    o.threads = n.threads;
    o.antithetic = n.antithetic;
    return o;
}

// ---------------------------------------------------------------------------
// check-hormander

int cmd_check_hormander(Context& ctx, Section task, ojson& result) {
    const auto points = read_points(task, "points", ctx.problem.n());
    task.finish();
    check_in_domain(ctx.problem, points, task.where("points"));
    const BracketBasis basis = generate_basis(ctx.problem.spec, ctx.numerics.depth);
    result["basis"] = {{"size", basis.entries.size()}, {"depth", basis.depth}, {"truncated", basis.truncated}};
    ojson words = ojson::array();
    for (const auto& e : basis.entries) words.push_back(e.word);
    result["basis"]["words"] = words;
    bool all = true;
    ojson reports = ojson::array();
    for (const auto& x : points) {
        const RankReport r = rank_at(basis, x, ctx.numerics.rank_tolerance);
        all = all && r.satisfied;
        reports.push_back({{"point", r.point},
                           {"rank", r.rank},
                           {"satisfied", r.satisfied},
                           {"depth", r.depth},
                           {"singular_values", r.singular_values}});
    }
    result["reports"] = reports;
    result["all_satisfied"] = all;
    result["note"] = all ? "rank n reached at every listed point (conclusive for these points only)"
                         : "rank below n at some point up to the depth cap (inconclusive: higher depth may reach n)";
    return all ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// solve

/// Launch points: an explicit list, or every node of a box grid.
std::vector<std::vector<double>> read_launch_points(Section& task, int n) {
    if (task.has("grid")) {
        if (task.has("points")) throw ConfigError(task.where("grid") + ": give either points or grid, not both");
        Section g = task.child("grid");
        GriddedField grid;
        grid.lower = g.require<std::vector<double>>("lower");
        grid.upper = g.require<std::vector<double>>("upper");
        grid.nodes = g.require<std::vector<int>>("nodes");
        g.finish();
        if (grid.dimension() != n) throw ConfigError(g.path() + ": dimension does not match the problem");
        grid.values.assign(grid.space_count(), 0.0);
        grid.validate();
        std::vector<std::vector<double>> pts;
        for (std::size_t i = 0; i < grid.space_count(); ++i) pts.push_back(grid.space_node(i));
        return pts;
    }
    return read_points(task, "points", n);
}

int solve_parabolic_task(Context& ctx, Section& task, ojson& result) {
    const int n = ctx.problem.n();
    const auto points = read_launch_points(task, n);
    const auto times = task.get<std::vector<double>>("times", {0.0});
    task.finish();
    const PathConfig& base = ctx.numerics.path;
    if (!std::isfinite(base.horizon)) throw ConfigError("numerics.T: parabolic solves need a finite horizon");
    for (double t : times)
        if (!(t < base.horizon)) throw ConfigError("task.times: every time must be below numerics.T");
    check_in_domain(ctx.problem, points, "task.points");
    std::ostream* csv = ctx.outputs->csv("solve.csv");
    if (csv) write_header(*csv, n, {"mean", "std_error", "n_paths", "n_censored_by_cap", "n_collisions"});
    ojson estimates = ojson::array();
    std::uint64_t capped = 0, collisions = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        for (std::size_t j = 0; j < points.size(); ++j) {
            PathConfig cfg = base;
            cfg.seed = base.seed + k * points.size() + j;   // independent errors per launch node
            const MCEstimate e = solve_parabolic(ctx.problem.spec, ctx.problem.obs, points[j], times[k], cfg,
                                                 ctx.numerics.n_paths, estimator_options(ctx.numerics));
            capped += e.n_censored_by_cap;
            collisions += e.n_collisions;
            ojson row = estimate_json(e);
            row["x"] = points[j];
            row["t"] = times[k];
            estimates.push_back(row);
            if (csv) {
                write_point(*csv, points[j]);
                *csv << ',' << times[k] << ',' << e.mean << ',' << e.std_error << ',' << e.n_paths << ','
                     << e.n_censored_by_cap << ',' << e.n_collisions << '\n';
            }
        }
    }
    result["estimates"] = estimates;
    result["censoring"] = {{"censored_by_cap", capped}, {"collisions", collisions}};
    return kOk;
}

HarmonicCriterion parse_criterion(const std::string& s, const std::string& where) {
    if (s == "none") return HarmonicCriterion::None;
    if (s == "a") return HarmonicCriterion::A;
    if (s == "b") return HarmonicCriterion::B;
    if (s == "c") return HarmonicCriterion::C;
    throw ConfigError(where + ": expected one of none, a, b, c");
}

int solve_harmonic_task(Context& ctx, Section& task, ojson& result) {
    const int n = ctx.problem.n();
    const auto points = read_launch_points(task, n);
    HarmonicOptions opt;
    static_cast<EstimatorOptions&>(opt) = estimator_options(ctx.numerics);
    opt.criterion = parse_criterion(task.get<std::string>("criterion", "none"), task.where("criterion"));
    opt.alpha = task.get<double>("alpha", 0.0);
    opt.sample_lower = task.optional<std::vector<double>>("sample_lower");
    opt.sample_upper = task.optional<std::vector<double>>("sample_upper");
    opt.sup_samples = task.get<std::size_t>("sup_samples", 4096);
    opt.stabilization_test = task.get<bool>("stabilization_test", true);
    task.finish();
    check_in_domain(ctx.problem, points, "task.points");
    std::ostream* csv = ctx.outputs->csv("solve.csv");
    if (csv) write_header(*csv, n, {"mean", "std_error", "n_paths", "n_censored_by_cap", "divergent", "unreliable"}, false);
    ojson estimates = ojson::array();
    bool flagged = false;
    for (std::size_t j = 0; j < points.size(); ++j) {
        PathConfig cfg = ctx.numerics.path;
        cfg.seed += j;
        const HarmonicEstimate h = solve_harmonic(ctx.problem.spec, ctx.problem.obs, points[j], cfg,
                                                  ctx.numerics.n_paths, opt);
        flagged = flagged || h.divergent || h.unreliable;
        ojson row = estimate_json(h.estimate);
        row["x"] = points[j];
        row["sup_g"] = h.sup_g;
        row["divergent"] = h.divergent;
        row["unreliable"] = h.unreliable;
        row["warnings"] = h.warnings;
        const auto& st = h.stabilization;
        row["stabilization"] = {{"performed", st.performed},
                                {"cauchy_pass", st.cauchy_pass},
                                {"checkpoints", st.checkpoints},
                                {"running_means", st.running_means},
                                {"max_normalized_gap", st.max_normalized_gap},
                                {"tail_pass", st.tail_pass},
                                {"tail_threshold_time", st.tail_threshold_time},
                                {"tail_paths", st.tail_paths},
                                {"tail_decay_rate", st.tail_decay_rate},
                                {"tail_decay_se", st.tail_decay_se},
                                {"tail_growth_rate", st.tail_growth_rate}};
        estimates.push_back(row);
        if (csv) {
            write_point(*csv, points[j]);
            *csv << ',' << h.estimate.mean << ',' << h.estimate.std_error << ',' << h.estimate.n_paths << ','
                 << h.estimate.n_censored_by_cap << ',' << h.divergent << ',' << h.unreliable << '\n';
        }
    }
    result["estimates"] = estimates;
    if (opt.criterion == HarmonicCriterion::C) result["alpha_note"] = "criterion (c) moment exponent is asserted, not verified";
    return flagged ? kUnreliable : kOk;
}

int solve_survival_task(Context& ctx, Section& task, ojson& result) {
    const int n = ctx.problem.n();
    const auto points = read_launch_points(task, n);
    const double t = task.get<double>("t", 0.0);
    const double T = task.has("T") ? task.require<double>("T") : ctx.numerics.path.horizon;
    if (!task.has("T")) task.get<double>("T", T);
    task.finish();
    if (!std::isfinite(T)) throw ConfigError("task.T: survival needs a finite horizon (task.T or numerics.T)");
    check_in_domain(ctx.problem, points, "task.points");
    std::ostream* csv = ctx.outputs->csv("solve.csv");
    if (csv) write_header(*csv, n, {"T", "mean", "std_error", "n_paths", "n_censored_by_cap"});
    ojson estimates = ojson::array();
    for (std::size_t j = 0; j < points.size(); ++j) {
        PathConfig cfg = ctx.numerics.path;
        cfg.seed += j;
        const MCEstimate e = survival_probability(ctx.problem.spec, points[j], t, T, cfg, ctx.numerics.n_paths,
                                                  estimator_options(ctx.numerics));
        ojson row = estimate_json(e);
        row["x"] = points[j];
        estimates.push_back(row);
        if (csv) {
            write_point(*csv, points[j]);
            *csv << ',' << t << ',' << T << ',' << e.mean << ',' << e.std_error << ',' << e.n_paths << ','
                 << e.n_censored_by_cap << '\n';
        }
    }
    result["estimates"] = estimates;
    return kOk;
}

int solve_density_task(Context& ctx, Section& task, ojson& result) {
    const int n = ctx.problem.n();
    const auto start = task.require<std::vector<double>>("start");
    const auto times = task.require<std::vector<double>>("times");
    Section g = task.child("grid", true);
    DensityGrid grid;
    grid.lower = g.require<std::vector<double>>("lower");
    grid.upper = g.require<std::vector<double>>("upper");
    grid.cells = g.require<std::vector<int>>("cells");
    g.finish();
    task.finish();
    if (static_cast<int>(start.size()) != n) throw ConfigError("task.start: wrong dimension");
    if (grid.dimension() != n) throw ConfigError("task.grid: dimension does not match the problem");
    grid.validate();
    check_in_domain(ctx.problem, {start}, "task.start");
    const DensityEstimate d = transition_density(ctx.problem.spec, start, times, grid, ctx.numerics.path,
                                                 ctx.numerics.n_paths, estimator_options(ctx.numerics));
    std::ostream* csv = ctx.outputs->csv("density.csv");
    if (csv) {
        *csv << "slice,t,cell";
        for (int i = 1; i <= n; ++i) *csv << ",x" << i;
        *csv << ",count,density,std_error,smoothed\n";
    }
    ojson slices = ojson::array();
    for (std::size_t k = 0; k < times.size(); ++k) {
        slices.push_back({{"t", times[k]},
                          {"mass", d.mass(k)},
                          {"mass_std_error", d.mass_std_error(k)},
                          {"outside_grid", d.outside[k]},
                          {"bandwidth", d.bandwidth[k]}});
        if (!csv) continue;
        const auto smooth = d.smoothed(k);
        for (std::size_t c = 0; c < grid.cell_count(); ++c) {
            *csv << k << ',' << times[k] << ',' << c << ',';
            write_point(*csv, grid.cell_center(c));
            *csv << ',' << d.counts[k][c] << ',' << d.density(k, c) << ',' << d.density_std_error(k, c) << ','
                 << smooth[c] << '\n';
        }
    }
    result["n_launched"] = d.n_launched;
    result["slices"] = slices;
    return kOk;
}

int cmd_solve(Context& ctx, Section task, ojson& result) {
    const auto kind = task.require<std::string>("kind");
    result["kind"] = kind;
    if (kind == "parabolic") return solve_parabolic_task(ctx, task, result);
    if (kind == "harmonic") return solve_harmonic_task(ctx, task, result);
    if (kind == "survival") return solve_survival_task(ctx, task, result);
    if (kind == "density") return solve_density_task(ctx, task, result);
    throw ConfigError("task.kind: expected parabolic, harmonic, survival or density");
}

// ---------------------------------------------------------------------------
// verify

std::vector<SpaceTimePoint> read_space_time_points(Section& c, int n) {
    std::vector<SpaceTimePoint> out;
    for (auto& p : c.children("points")) {
        SpaceTimePoint q;
        q.x = p.require<std::vector<double>>("x");
        q.t = p.get<double>("t", 0.0);
        p.finish();
        if (static_cast<int>(q.x.size()) != n) throw ConfigError(p.where("x") + ": wrong dimension");
        out.push_back(std::move(q));
    }
    if (out.empty()) throw ConfigError(c.where("points") + ": needs at least one point");
    return out;
}

int verify_strong(Context& ctx, Section& c, ojson& out) {
    const Expr f = c.require_expr("f", ctx.problem.n());
    const auto pts = read_space_time_points(c, ctx.problem.n());
    const double tol = c.get<double>("tolerance", 1e-10);
    c.finish();
    const ResidualReport r = strong_residual(ctx.problem.spec, ctx.problem.obs, f, pts, tol);
    out = residual_json(r);
    return r.pass ? kOk : kCheckFailed;
}

int verify_weak(Context& ctx, Section& c, ojson& out) {
    const int n = ctx.problem.n();
    Section g = c.child("grid", true);
    auto lower = g.require<std::vector<double>>("lower");
    auto upper = g.require<std::vector<double>>("upper");
    auto nodes = g.require<std::vector<int>>("nodes");
    const double t0 = g.require<double>("t0");
    const double t1 = g.require<double>("t1");
    const int time_nodes = g.require<int>("time_nodes");
    g.finish();
    if (static_cast<int>(lower.size()) != n) throw ConfigError(g.path() + ": dimension does not match the problem");
    const auto source = c.get<std::string>("field", "solve");
    GriddedField field;
    if (source == "solve") {
        field = solve_parabolic_field(ctx.problem.spec, ctx.problem.obs, lower, upper, nodes, t0, t1, time_nodes,
                                      ctx.numerics.path, ctx.numerics.n_paths, estimator_options(ctx.numerics));
    } else if (source == "closed_form") {
        field = sample_field(c.require_expr("f", n), lower, upper, nodes, t0, t1, time_nodes);
    } else {
        throw ConfigError(c.where("field") + ": expected \"solve\" or \"closed_form\"");
    }
    std::vector<BumpSpec> bumps;
    for (auto& b : c.children("bumps")) {
        BumpSpec s;
        s.center = b.require<std::vector<double>>("center");
        s.radius = b.require<std::vector<double>>("radius");
        s.t_center = b.require<double>("t_center");
        s.t_radius = b.require<double>("t_radius");
        b.finish();
        if (static_cast<int>(s.center.size()) != n || s.radius.size() != s.center.size())
            throw ConfigError(b.path() + ": wrong dimension");
        bumps.push_back(std::move(s));
    }
    const int random_count = c.get<int>("random_bumps", 0);
    const auto bump_seed = c.get<std::uint64_t>("bump_seed", ctx.numerics.path.seed);
    WeakOptions wopt;
    wopt.tolerance_override = c.get<double>("tolerance", 0.0);
    c.finish();
    for (auto& b : random_bumps(field, random_count, bump_seed)) bumps.push_back(std::move(b));
    if (bumps.empty()) throw ConfigError(c.path() + ": give bumps or random_bumps");
    ojson list = ojson::array();
    bool pass = true;
    for (const auto& b : bumps) {
        const ResidualReport r = weak_residual(ctx.problem.spec, ctx.problem.obs, field, bump_test_function(b), wopt);
        ojson j = residual_json(r);
        j["bump"] = {{"center", b.center}, {"radius", b.radius}, {"t_center", b.t_center}, {"t_radius", b.t_radius}};
        list.push_back(j);
        pass = pass && r.pass;
    }
    out = {{"pass", pass}, {"bumps", list}};
    return pass ? kOk : kCheckFailed;
}

int verify_drift(Context& ctx, Section& c, ojson& out) {
    const int n = ctx.problem.n();
    const Expr f = c.require_expr("f", n);
    std::vector<double> launch;
    if (ctx.problem.sle) launch = c.get<std::vector<double>>("launch", ctx.problem.sle->launch);
    else launch = c.require<std::vector<double>>("launch");
    if (static_cast<int>(launch.size()) != n) throw ConfigError(c.where("launch") + ": wrong dimension");
    const auto pairs = c.require<std::vector<std::pair<double, double>>>("pairs");
    DriftTestOptions opt;
    opt.confidence = c.get<double>("confidence", ctx.numerics.confidence);
    opt.min_survivors = c.get<std::uint64_t>("min_survivors", 100);
    opt.threads = ctx.numerics.threads;
    const auto n_paths = c.get<std::uint64_t>("n_paths", ctx.numerics.n_paths);
    c.finish();
    check_in_domain(ctx.problem, {launch}, c.where("launch"));
    const DriftTestReport r = martingale_drift_test(ctx.problem.spec, ctx.problem.obs, f, launch, pairs,
                                                    ctx.numerics.path, n_paths, opt);
    out = {{"pass", r.pass},
           {"confidence", r.confidence},
           {"critical_value", r.critical_value},
           {"pairs", r.pairs},
           {"mean_increments", r.mean_increments},
           {"std_errors", r.std_errors},
           {"z_scores", r.z_scores},
           {"survivors", r.survivors}};
    return r.pass ? kOk : kCheckFailed;
}

int verify_time_change(Context& ctx, Section& c, ojson& out) {
    if (!ctx.problem.cutoff) throw ConfigError(c.path() + ": needs problem.cutoff");
    const auto start = c.require<std::vector<double>>("start");
    const double s = c.require<double>("s");
    const double alpha = c.get<double>("alpha", 0.01);
    const auto n_paths = c.get<std::uint64_t>("n_paths", ctx.numerics.n_paths);
    c.finish();
    if (static_cast<int>(start.size()) != ctx.problem.n()) throw ConfigError(c.where("start") + ": wrong dimension");
    const TimeChangeTestReport r = time_change_ks_test(ctx.problem.base, *ctx.problem.cutoff, start, s,
                                                       ctx.numerics.path, n_paths, ctx.numerics.threads);
    ojson ks = ojson::array();
    for (const auto& k : r.per_coordinate) ks.push_back({{"statistic", k.statistic}, {"p_value", k.p_value}});
    const bool pass = r.min_p_value() > alpha;
    out = {{"pass", pass}, {"alpha", alpha}, {"stalled", r.stalled}, {"per_coordinate", ks}};
    return pass ? kOk : kCheckFailed;
}

int cmd_verify(Context& ctx, Section task, ojson& result) {
    auto checks = task.children("checks");
    task.finish();
    if (checks.empty()) throw ConfigError("task.checks: needs at least one check");
    ojson list = ojson::array();
    int code = kOk;
    for (auto& c : checks) {
        const auto type = c.require<std::string>("type");
        ojson out;
        int rc;
        if (type == "strong") rc = verify_strong(ctx, c, out);
        else if (type == "weak") rc = verify_weak(ctx, c, out);
        else if (type == "drift") rc = verify_drift(ctx, c, out);
        else if (type == "time_change") rc = verify_time_change(ctx, c, out);
        else throw ConfigError(c.where("type") + ": expected strong, weak, drift or time_change");
        out["type"] = type;
        list.push_back(out);
        code = std::max(code, rc);
    }
    result["checks"] = list;
    return code;
}

// ---------------------------------------------------------------------------
// sle-sim and bpz-check

const SLEConfig& require_sle(const Context& ctx) {
    if (!ctx.problem.sle) throw ConfigError("problem.sle: this command needs an SLE problem");
    return *ctx.problem.sle;
}

int cmd_sle_sim(Context& ctx, Section task, ojson& result) {
    const SLEConfig& sle = require_sle(ctx);
    const int n = ctx.problem.n();
    const auto record = task.get<std::uint64_t>("record", 0);
    const Expr f = task.expr("f", "0", n);
    const bool has_f = task.has("f");
    task.finish();
    if (!std::isfinite(ctx.numerics.path.horizon)) throw ConfigError("numerics.T: sle-sim needs a finite horizon");
    const PathEngine engine(ctx.problem.spec, ctx.problem.obs, ctx.numerics.path);
    const Program fp(f);
    struct Block {
        std::vector<PathSample> samples;
    };
    const std::uint64_t n_paths = ctx.numerics.n_paths;
    auto blocks = run_blocks<Block>(n_paths, ctx.numerics.threads, [&](std::size_t begin, std::size_t end) {
        Block b;
        for (std::size_t i = begin; i < end; ++i) b.samples.push_back(engine.run(sle.launch, 0.0, i));
        return b;
    });
    std::ostream* csv = ctx.outputs->csv("sle_paths.csv");
    if (csv) {
        *csv << "path,cause,tau";
        for (int i = 1; i <= n; ++i) *csv << ",x" << i;
        *csv << ",gamma,H" << (has_f ? ",M" : "") << '\n';
    }
    RunningStats tau, m;
    std::uint64_t collisions = 0, capped = 0, index = 0;
    for (const auto& b : blocks) {
        for (const auto& s : b.samples) {
            tau.add(s.exit_time);
            if (s.cause == StopCause::Collision) ++collisions;
            if (s.cause == StopCause::StepCap) ++capped;
            const double M = s.gamma * fp(s.exit_state.data(), s.exit_time) + s.H;
            if (has_f) m.add(M);
            if (csv) {
                *csv << index << ',' << to_string(s.cause) << ',' << s.exit_time << ',';
                write_point(*csv, s.exit_state);
                *csv << ',' << s.gamma << ',' << s.H;
                if (has_f) *csv << ',' << M;
                *csv << '\n';
            }
            ++index;
        }
    }
    for (std::uint64_t i = 0; i < std::min(record, n_paths); ++i) {
        std::ostream* p = ctx.outputs->csv("sle_path_" + std::to_string(i) + ".csv");
        if (!p) break;
        write_path_csv(*p, simulate_recorded_path(ctx.problem.spec, ctx.problem.obs, sle.launch, 0.0,
                                                  ctx.numerics.path, i));
    }
    result["n_paths"] = n_paths;
    result["mean_stop_time"] = tau.mean;
    result["collisions"] = collisions;
    result["censored_by_cap"] = capped;
    if (has_f) {
        const double m0 = fp(sle.launch.data(), 0.0);
        const double se = m.std_error();
        result["observable"] = {{"M0", m0}, {"mean_M_stop", m.mean}, {"std_error", se},
                                {"z", se > 0.0 ? (m.mean - m0) / se : 0.0}};
    }
    return capped > n_paths / 100 ? kUnreliable : kOk;
}

int cmd_bpz_check(Context& ctx, Section task, ojson& result) {
    const SLEConfig& sle = require_sle(ctx);
    const int n = ctx.problem.n();
    const Expr f = task.require_expr("f", n);
    const double tol = task.get<double>("tolerance", 1e-10);
    std::vector<std::vector<double>> points;
    if (task.has("points")) points = read_points(task, "points", n);
    Section r = task.child("random_points");
    const auto count = r.get<std::uint64_t>("count", 0);
    if (count > 0) {
        const auto lo = r.get<double>("lower", -3.0);
        const auto hi = r.get<double>("upper", 3.0);
        const auto seed = r.get<std::uint64_t>("seed", ctx.numerics.path.seed);
        // Marked points are ordered x1 < x2 < .. unless asked otherwise.
        const bool ordered = r.get<bool>("ordered", true);
        if (!(hi > lo)) throw ConfigError(r.where("upper") + ": must exceed lower");
        const CounterRng rng(seed, 0xB92ULL);
        std::uint64_t counter = 0;
        // Rejection-sample points whose coordinates are pairwise further apart than the guard.
        while (points.size() < count) {
            std::vector<double> p(static_cast<std::size_t>(n));
            for (auto& v : p) v = lo + (hi - lo) * rng.uniform(counter++);
            if (ordered) std::sort(p.begin(), p.end());
            if (ctx.problem.spec.domain(p)) points.push_back(std::move(p));
        }
    }
    r.finish();
    task.finish();
    if (points.empty()) throw ConfigError("task: give points or random_points.count");
    const ResidualReport rep = bpz_residual(sle, f, points, tol);
    result["residual"] = residual_json(rep);
    result["n_points"] = points.size();
    return rep.pass ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------
// oracle

ojson oracle_value(OracleKind kind, const OracleParams& p) {
    const OracleValue v = oracle_interval_bm(kind, p);
    return {{"value", v.divergent ? ojson(nullptr) : ojson(v.value)}, {"divergent", v.divergent}};
}

OracleKind parse_oracle_kind(const std::string& s, const std::string& where) {
    if (s == "laplace") return OracleKind::Laplace;
    if (s == "moment") return OracleKind::MomentK;
    if (s == "expC") return OracleKind::ExpC;
    if (s == "survival") return OracleKind::Survival;
    if (s == "fs") return OracleKind::Fs;
    throw ConfigError(where + ": expected laplace, fs, moment, expC or survival");
}

int cmd_oracle(Section* task, ojson& result) {
    if (task) {
        const auto kind = task->require<std::string>("kind");
        OracleParams p;
        p.s = task->get<double>("s", 1.0);
        p.x = task->get<double>("x", 0.0);
        p.k = task->get<int>("k", 1);
        p.C = task->get<double>("C", 0.0);
        p.u = task->get<double>("u", 0.0);
        task->finish();
        result = oracle_value(parse_oracle_kind(kind, task->where("kind")), p);
        result["kind"] = kind;
        return kOk;
    }
    // Standard table for Brownian motion on (-1, 1) launched at 0.
    ojson table = ojson::array();
    auto add = [&](const char* kind, const char* param, double value, OracleParams p) {
        ojson row = oracle_value(parse_oracle_kind(kind, "kind"), p);
        row["kind"] = kind;
        row[param] = value;
        table.push_back(row);
    };
    for (double s : {0.5, 1.0, 2.0}) add("laplace", "s", s, {.s = s});
    for (double s : {0.5, 1.0, 2.0}) add("fs", "s", s, {.s = s});
    for (int k : {1, 2, 3, 4}) add("moment", "k", k, {.k = k});
    for (double C : {0.5, 1.0, 1.3}) add("expC", "C", C, {.C = C});
    for (double u : {0.25, 0.5, 1.0}) add("survival", "u", u, {.u = u});
    result["table"] = table;
    result["threshold_C"] = std::numbers::pi * std::numbers::pi / 8.0;
    return kOk;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

const char* verdict(int code) {
    switch (code) {
        case kOk: return "pass";
        case kCheckFailed: return "fail";
        case kUnreliable: return "unreliable";
        default: return "config_error";
    }
}

int execute(const std::string& command, const std::optional<std::string>& config_path,
            std::optional<std::uint64_t> seed, std::optional<unsigned> threads,
            const std::optional<std::string>& out_dir, std::ostream& out) {
    const auto started = std::chrono::steady_clock::now();
    std::optional<std::filesystem::path> dir;
    if (out_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*out_dir, ec);
        if (ec) throw ConfigError("cannot create output directory " + *out_dir + ": " + ec.message());
        dir = *out_dir;
    }
    Outputs outputs(dir);
    Context ctx;
    ctx.outputs = &outputs;
    ojson result = ojson::object();
    int code = kOk;

    if (command == "oracle" && !config_path) {
        code = cmd_oracle(nullptr, result);
    } else {
        if (!config_path) throw ConfigError("--config is required for " + command);
        json cfg = load_config(*config_path);
        if (!cfg.is_object()) throw ConfigError(*config_path + ": top level must be an object");
        if (seed) cfg["numerics"]["seed"] = *seed;
        if (threads) cfg["numerics"]["threads"] = *threads;
        Section root(cfg, ctx.resolved, "");
        const int schema = root.get<int>("schema_version", kSchemaVersion);
        if (schema != kSchemaVersion) throw ConfigError("schema_version: only version 1 is supported");
        if (command == "oracle") {
            Section task = root.child("task", true);
            root.finish();
            code = cmd_oracle(&task, result);
        } else {
            ctx.numerics = read_numerics(root.child("numerics"));
            ctx.problem = read_problem(root.child("problem", true), ctx.numerics);
            if (ctx.numerics.depth < 0) ctx.numerics.depth = default_depth(ctx.problem.spec);
            ctx.resolved["numerics"]["depth"] = ctx.numerics.depth;
            Section task = root.child("task", command != "sle-sim");
            root.finish();
            if (command == "check-hormander") code = cmd_check_hormander(ctx, task, result);
            else if (command == "solve") code = cmd_solve(ctx, task, result);
            else if (command == "verify") code = cmd_verify(ctx, task, result);
            else if (command == "sle-sim") code = cmd_sle_sim(ctx, task, result);
            else if (command == "bpz-check") code = cmd_bpz_check(ctx, task, result);
            else throw ConfigError("unknown command " + command);
        }
    }

    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    ojson doc;
    doc["schema_version"] = kSchemaVersion;
    doc["version"] = HYPOFK_VERSION;
    doc["command"] = command;
    doc["config"] = ctx.resolved;
    doc["result"] = result;
    doc["verdict"] = verdict(code);
    doc["exit_code"] = code;
    doc["outputs"] = outputs.written();
    doc["metadata"] = {{"timestamp", utc_timestamp()},
                       {"runtime_seconds", runtime},
                       {"threads_used", resolve_threads(ctx.numerics.threads)}};
    const std::string text = doc.dump(2) + "\n";
    out << text;
    if (dir) {
        std::ofstream f(*dir / (command + ".json"));
        f << text;
    }
    return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hypofk: Feynman-Kac Monte Carlo for degenerate diffusions", "hypofk"};
    app.set_version_flag("--version", std::string(HYPOFK_VERSION));
    app.require_subcommand(1);
    std::optional<std::string> config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    const std::vector<std::pair<const char*, const char*>> commands = {
        {"check-hormander", "Bracket-rank (Hormander) check at configured points"},
        {"solve", "Monte Carlo solve: parabolic, harmonic, survival or density"},
        {"verify", "Strong/weak residuals, martingale drift and time-change tests"},
        {"sle-sim", "Simulate SLE marked points and report stop statistics"},
        {"bpz-check", "BPZ residual of an SLE observable at points"},
        {"oracle", "Closed forms for Brownian motion on (-1, 1)"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--seed", seed, "Override numerics.seed");
        sub->add_option("--threads", threads, "Override numerics.threads (0 = all cores)");
        sub->add_option("--out", out_dir, "Directory for the JSON report and CSV outputs");
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << HYPOFK_VERSION << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "hypofk: " << e.what() << '\n';
        return kConfigError;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return execute(command, config_path, seed, threads, out_dir, out);
    } catch (const ConfigError& e) {
        err << "hypofk: configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ParseError& e) {
        err << "hypofk: configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DomainError& e) {
        err << "hypofk: evaluation error at a configured point: " << e.what() << '\n';
        return kConfigError;
    } catch (const SupportError& e) {
        err << "hypofk: test function support error: " << e.what() << '\n';
        return kConfigError;
    } catch (const NumericalError& e) {
        err << "hypofk: numerical error (path " << e.path_index() << "): " << e.what() << '\n';
        return kUnreliable;
    } catch (const std::invalid_argument& e) {
        err << "hypofk: invalid input: " << e.what() << '\n';
        return kConfigError;
    }
}

}  // namespace hypofk::cli
