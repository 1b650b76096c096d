#pragma once

#include "hypofk/estimators.hpp"
#include "hypofk/sle.hpp"
#include "hypofk/verify.hpp"

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hypofk::cli {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

/// Reads one JSON object while recording every value it hands out (defaults
/// included) into the resolved-config echo. Errors name the offending path.
class Section {
public:
    Section(const json& source, ojson& resolved, std::string path);

    const std::string& path() const { return path_; }
    bool has(const std::string& key) const;

    template <class T>
    T get(const std::string& key, const T& fallback) {
        used_.insert(key);
        T value = has(key) ? convert<T>(source_->at(key), key) : fallback;
        (*resolved_)[key] = value;
        return value;
    }

    template <class T>
    T require(const std::string& key) {
        used_.insert(key);
        if (!has(key)) throw ConfigError(where(key) + ": required field is missing");
        T value = convert<T>(source_->at(key), key);
        (*resolved_)[key] = value;
        return value;
    }

    template <class T>
    std::optional<T> optional(const std::string& key) {
        used_.insert(key);
        if (!has(key)) {
            (*resolved_)[key] = nullptr;
            return std::nullopt;
        }
        T value = convert<T>(source_->at(key), key);
        (*resolved_)[key] = value;
        return value;
    }

    /// A number where JSON null (or absence) means +infinity; echoed as null.
    double number_or_infinity(const std::string& key);

    Expr expr(const std::string& key, const std::string& fallback, int n);
    Expr require_expr(const std::string& key, int n);
    Predicate predicate(const std::string& key, const std::string& fallback, int n);

    /// Nested object; an absent optional child reads as an empty object.
    Section child(const std::string& key, bool required = false);
    /// Elements of an array of objects.
    std::vector<Section> children(const std::string& key);

    /// Throws on keys that were never read.
    void finish() const;

    std::string where(const std::string& key) const;

private:
    template <class T>
    T convert(const json& value, const std::string& key) const {
        try {
            return value.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + ": value " + value.dump() + " has the wrong type");
        }
    }

    const json* source_;
    ojson* resolved_;
    std::string path_;
    std::set<std::string> used_;
    static const json empty_object_;
};

struct Numerics {
    PathConfig path;
    std::uint64_t n_paths = 10000;
    unsigned threads = 0;
    bool antithetic = false;
    int depth = 0;                 // resolved against the dimension
    double rank_tolerance = kDefaultRankTolerance;
    double confidence = 0.99;
};

struct Problem {
    DiffusionSpec spec;            // what commands simulate (slowed when requested)
    DiffusionSpec base;            // the spec before any cutoff slowing
    ObservableSpec obs;
    std::optional<SLEConfig> sle;
    std::optional<CutoffSpec> cutoff;
    int n() const { return spec.n; }
};

Numerics read_numerics(Section numerics);
Problem read_problem(Section problem, const Numerics& numerics);
std::vector<std::vector<double>> read_points(Section& s, const std::string& key, int n);

}  // namespace hypofk::cli
