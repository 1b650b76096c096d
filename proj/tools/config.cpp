#include "config.hpp"

#include <cmath>
#include <limits>

namespace hypofk::cli {

const json Section::empty_object_ = json::object();

Section::Section(const json& source, ojson& resolved, std::string path)
    : source_(&source), resolved_(&resolved), path_(std::move(path)) {
    if (!source.is_object()) throw ConfigError(path_ + ": expected an object");
    if (!resolved_->is_object()) *resolved_ = ojson::object();
}

bool Section::has(const std::string& key) const { return source_->contains(key) && !source_->at(key).is_null(); }

std::string Section::where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

double Section::number_or_infinity(const std::string& key) {
    used_.insert(key);
    if (!has(key)) {
        (*resolved_)[key] = nullptr;
        return std::numeric_limits<double>::infinity();
    }
    const double v = convert<double>(source_->at(key), key);
    (*resolved_)[key] = v;
    return v;
}

Expr Section::expr(const std::string& key, const std::string& fallback, int n) {
    const std::string text = get<std::string>(key, fallback);
    try {
        return parse_expr(text, n);
    } catch (const ParseError& e) {
        throw ConfigError(where(key) + ": " + e.what());
    }
}

Expr Section::require_expr(const std::string& key, int n) {
    const std::string text = require<std::string>(key);
    try {
        return parse_expr(text, n);
    } catch (const ParseError& e) {
        throw ConfigError(where(key) + ": " + e.what());
    }
}

Predicate Section::predicate(const std::string& key, const std::string& fallback, int n) {
    const std::string text = get<std::string>(key, fallback);
    try {
        return parse_predicate(text, n);
    } catch (const ParseError& e) {
        throw ConfigError(where(key) + ": " + e.what());
    }
}

Section Section::child(const std::string& key, bool required) {
    used_.insert(key);
    if (!has(key)) {
        if (required) throw ConfigError(where(key) + ": required block is missing");
        (*resolved_)[key] = ojson::object();
        return Section(empty_object_, (*resolved_)[key], where(key));
    }
    return Section(source_->at(key), (*resolved_)[key], where(key));
}

std::vector<Section> Section::children(const std::string& key) {
    used_.insert(key);
    std::vector<Section> out;
    if (!has(key)) {
        (*resolved_)[key] = ojson::array();
        return out;
    }
    const json& arr = source_->at(key);
    if (!arr.is_array()) throw ConfigError(where(key) + ": expected an array");
    ojson& dst = (*resolved_)[key];
    dst = ojson::array();
    for (std::size_t i = 0; i < arr.size(); ++i) dst.push_back(ojson::object());
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.emplace_back(arr[i], dst[i], where(key) + "[" + std::to_string(i) + "]");
    return out;
}

void Section::finish() const {
    for (auto it = source_->begin(); it != source_->end(); ++it)
        if (!used_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown field");
}

Numerics read_numerics(Section s) {
    Numerics out;
    out.path.dt = s.get<double>("dt", 1e-3);
    out.path.horizon = s.number_or_infinity("T");
    out.n_paths = s.get<std::uint64_t>("n_paths", 10000);
    out.path.seed = s.get<std::uint64_t>("seed", 1);
    out.path.collision_guard = s.get<double>("collision_guard", 1e-4);
    out.path.max_steps = s.get<std::uint64_t>("max_steps", 10'000'000);
    out.path.bridge_correction = s.get<bool>("bridge_correction", false);
    out.threads = s.get<unsigned>("threads", 0);
    out.antithetic = s.get<bool>("antithetic", false);
    out.depth = s.get<int>("depth", -1);   // -1: n + 2, resolved once n is known
    out.rank_tolerance = s.get<double>("rank_tolerance", kDefaultRankTolerance);
    out.confidence = s.get<double>("confidence", 0.99);
    s.finish();
    if (out.n_paths == 0) throw ConfigError(s.where("n_paths") + ": must be positive");
    if (!(out.confidence > 0.0 && out.confidence < 1.0)) throw ConfigError(s.where("confidence") + ": must lie in (0, 1)");
    if (!(out.rank_tolerance > 0.0)) throw ConfigError(s.where("rank_tolerance") + ": must be positive");
    out.path.validate();
    return out;
}

std::vector<std::vector<double>> read_points(Section& s, const std::string& key, int n) {
    auto pts = s.require<std::vector<std::vector<double>>>(key);
    if (pts.empty()) throw ConfigError(s.where(key) + ": needs at least one point");
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (static_cast<int>(pts[i].size()) != n)
            throw ConfigError(s.where(key) + "[" + std::to_string(i) + "]: expected " + std::to_string(n) +
                              " coordinates");
    return pts;
}

namespace {

CutoffSpec read_cutoff(Section s, int n) {
    const auto shape = s.get<std::string>("shape", "box");
    const double margin = s.get<double>("margin", 0.1);
    CutoffSpec cut;
    if (shape == "box") {
        auto lower = s.require<std::vector<double>>("lower");
        auto upper = s.require<std::vector<double>>("upper");
        cut = CutoffSpec::box(std::move(lower), std::move(upper), margin);
    } else if (shape == "ball") {
        auto center = s.require<std::vector<double>>("center");
        const double radius = s.require<double>("radius");
        cut = CutoffSpec::ball(std::move(center), radius, margin);
    } else {
        throw ConfigError(s.where("shape") + ": expected \"box\" or \"ball\"");
    }
    s.finish();
    if (cut.dimension() != n) throw ConfigError(s.path() + ": dimension does not match the problem");
    return cut;
}

}  // namespace

Problem read_problem(Section s, const Numerics& numerics) {
    Problem out;
    if (s.has("sle")) {
        Section b = s.child("sle");
        SLEConfig cfg;
        cfg.kappa = b.get<double>("kappa", 2.0);
        cfg.launch = b.require<std::vector<double>>("launch");
        cfg.weights = b.get<std::vector<double>>("weights", {});
        cfg.collision_guard = numerics.path.collision_guard;
        const int n = static_cast<int>(cfg.launch.size());
        if (n == 0) throw ConfigError(b.where("launch") + ": needs at least the driving point");
        cfg.b1 = b.expr("b1", "0", n);
        b.finish();
        cfg.validate();
        out.spec = sle_spec(cfg);
        out.obs = covariant_observable(cfg, s.expr("psi", "0", n));
        out.obs.h = s.expr("h", "0", n);
        if (s.has("g")) throw ConfigError(s.where("g") + ": SLE problems take g from the conformal weights");
        out.sle = cfg;
    } else {
        const int n = s.require<int>("n");
        const int d = s.get<int>("d", 1);
        if (n < 1 || d < 1) throw ConfigError(s.path() + ": n and d must be positive");
        // sigma: n rows of d expressions, or a flat list of n expressions when d = 1.
        std::vector<Expr> sigma;
        const auto raw = s.require<json>("sigma");
        if (!raw.is_array() || static_cast<int>(raw.size()) != n)
            throw ConfigError(s.where("sigma") + ": expected " + std::to_string(n) + " rows");
        for (int i = 0; i < n; ++i) {
            const json& row = raw[static_cast<std::size_t>(i)];
            const json cells = row.is_array() ? row : json::array({row});
            if (static_cast<int>(cells.size()) != d || !std::all_of(cells.begin(), cells.end(), [](const json& c) { return c.is_string(); }))
                throw ConfigError(s.where("sigma") + "[" + std::to_string(i) + "]: expected " + std::to_string(d) +
                                  " expression strings");
            for (int q = 0; q < d; ++q) {
                try {
                    sigma.push_back(parse_expr(cells[static_cast<std::size_t>(q)].get<std::string>(), n));
                } catch (const ParseError& e) {
                    throw ConfigError(s.where("sigma") + "[" + std::to_string(i) + "]: " + e.what());
                }
            }
        }
        const auto drift_text = s.get<std::vector<std::string>>("drift", std::vector<std::string>(static_cast<std::size_t>(n), "0"));
        if (static_cast<int>(drift_text.size()) != n)
            throw ConfigError(s.where("drift") + ": expected " + std::to_string(n) + " expressions");
        std::vector<Expr> drift;
        for (std::size_t i = 0; i < drift_text.size(); ++i) {
            try {
                drift.push_back(parse_expr(drift_text[i], n));
            } catch (const ParseError& e) {
                throw ConfigError(s.where("drift") + "[" + std::to_string(i) + "]: " + e.what());
            }
        }
        Predicate domain = s.predicate("domain", "true", n);
        out.spec = make_spec(n, d, std::move(sigma), std::move(drift), std::move(domain));
        out.spec.singular_coordinates = s.get<std::vector<int>>("singular_coordinates", {});
        out.obs.g = s.expr("g", "0", n);
        out.obs.h = s.expr("h", "0", n);
        out.obs.psi = s.expr("psi", "0", n);
    }
    out.base = out.spec;
    if (s.has("cutoff")) out.cutoff = read_cutoff(s.child("cutoff"), out.spec.n);
    const bool slowed = s.get<bool>("slowed", false);
    if (slowed) {
        if (!out.cutoff) throw ConfigError(s.where("slowed") + ": needs a cutoff block");
        out.spec = make_slowed_spec(out.base, *out.cutoff);
    }
    s.finish();
    out.spec.validate();
    validate_observable(out.obs, out.spec.n);
    return out;
}

}  // namespace hypofk::cli
