#include "cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
    json doc;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = hypofk::cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    if (!r.out.empty() && r.out.front() == '{') r.doc = json::parse(r.out);
    return r;
}

std::string shipped(const std::string& name) { return std::string(HYPOFK_CONFIG_DIR) + "/" + name; }

/// Scratch directory removed on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("hypofk_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path / name) << text;
        return (path / name).string();
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("check-hormander exit codes") {
    const auto eb = run({"check-hormander", "--config", shipped("embedded_bm_hormander.json")});
    CHECK(eb.code == 1);
    for (const auto& p : eb.doc["result"]["reports"]) CHECK(p["rank"] == 1);
    CHECK(run({"check-hormander", "--config", shipped("langevin_hormander.json")}).code == 0);
    CHECK(run({"check-hormander", "--config", shipped("sle3_hormander.json")}).code == 0);
}

TEST_CASE("verify jobs") {
    const auto strong = run({"verify", "--config", shipped("verify_strong.json")});
    CHECK(strong.code == 0);
    CHECK(strong.doc["verdict"] == "pass");
    CHECK(run({"verify", "--config", shipped("sle_drift.json")}).code == 0);
    CHECK(run({"verify", "--config", shipped("sle_drift_perturbed.json")}).code == 1);
}

TEST_CASE("solve jobs with exact answers") {
    TempDir tmp;
    const auto survival = tmp.write("s.json", R"({
      "problem": {"n": 1, "sigma": ["1"], "domain": "x1 > -1 and x1 < 1"},
      "numerics": {"n_paths": 200},
      "task": {"kind": "survival", "points": [[0], [0.5]], "t": 0.5, "T": 0.5}})");
    const auto s = run({"solve", "--config", survival});
    REQUIRE(s.code == 0);
    for (const auto& e : s.doc["result"]["estimates"]) CHECK(e["mean"] == 1.0);

    const auto parabolic = tmp.write("p.json", R"({
      "problem": {"n": 2, "d": 1, "sigma": [["0"], ["1"]], "drift": ["x2", "0"], "domain": "x1*x1 + x2*x2 < 1", "psi": "1"},
      "numerics": {"n_paths": 300, "T": 1, "dt": 0.01},
      "task": {"kind": "parabolic", "points": [[0, 0], [0.2, -0.3]], "times": [0, 0.5]}})");
    const auto p = run({"solve", "--config", parabolic});
    REQUIRE(p.code == 0);
    for (const auto& e : p.doc["result"]["estimates"]) {
        CHECK(e["mean"] == 1.0);
        CHECK(e["std_error"] == 0.0);
    }
}

TEST_CASE("configuration errors exit with code 2") {
    TempDir tmp;
    CHECK(run({"solve", "--config", (tmp.path / "missing.json").string()}).code == 2);
    CHECK(run({"solve", "--config", tmp.write("bad.json", "{not json")}).code == 2);
    CHECK(run({"solve", "--config", tmp.write("unknown.json", R"({"problem": {"n": 1, "sigma": ["1"], "colour": 1},
                                                                  "task": {"kind": "survival", "points": [[0]], "T": 1}})")})
              .code == 2);
    const auto range = run({"check-hormander", "--config", tmp.write("range.json", R"({"problem": {"n": 1, "sigma": ["x3"]},
                                                                                  "task": {"points": [[0]]}})")});
    CHECK(range.code == 2);
    CHECK(range.err.find("variable index out of range") != std::string::npos);
    CHECK(run({"check-hormander", "--config", tmp.write("syntax.json", R"({"problem": {"n": 1, "sigma": ["1 +"]},
                                                                          "task": {"points": [[0]]}})")})
              .code == 2);
    CHECK(run({"nonsense"}).code == 2);
    CHECK(run({"solve"}).code == 2);
}

TEST_CASE("divergent harmonic problem exits with code 3") {
    TempDir tmp;
    const auto cfg = tmp.write("div.json", R"({
      "problem": {"n": 1, "sigma": ["1"], "domain": "x1 > -1 and x1 < 1", "g": "1.3", "psi": "1"},
      "numerics": {"dt": 1e-3, "n_paths": 20000, "bridge_correction": true},
      "task": {"kind": "harmonic", "points": [[0]], "criterion": "c", "alpha": 0}})");
    CHECK(run({"solve", "--config", cfg}).code == 3);
}

TEST_CASE("oracle and version") {
    const auto table = run({"oracle"});
    CHECK(table.code == 0);
    const auto laplace = run({"oracle", "--config", shipped("oracle_laplace.json")});
    CHECK(laplace.code == 0);
    CHECK(laplace.doc["result"]["value"].get<double>() == doctest::Approx(0.45910).epsilon(1e-5));
    CHECK(run({"--version"}).code == 0);
}

TEST_CASE("reports echo the resolved config and reruns are byte-identical") {
    TempDir a, b;
    const auto ra = run({"solve", "--config", shipped("parabolic_field.json"), "--out", a.path.string(), "--threads", "1"});
    const auto rb = run({"solve", "--config", shipped("parabolic_field.json"), "--out", b.path.string(), "--threads", "3"});
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(slurp(a.path / "solve.csv") == slurp(b.path / "solve.csv"));
    CHECK(ra.doc["result"] == rb.doc["result"]);
    CHECK(ra.doc["schema_version"] == 1);
    const auto& numerics = ra.doc["config"]["numerics"];
    CHECK(numerics["seed"] == 1);
    CHECK(numerics.contains("collision_guard"));
    CHECK(numerics.contains("max_steps"));
    CHECK(ra.doc["metadata"].contains("timestamp"));

    json ja = json::parse(slurp(a.path / "solve.json")), jb = json::parse(slurp(b.path / "solve.json"));
    ja.erase("metadata");
    jb.erase("metadata");
    ja["config"]["numerics"].erase("threads");
    jb["config"]["numerics"].erase("threads");
    CHECK(ja == jb);

    const auto seeded = run({"solve", "--config", shipped("parabolic_field.json"), "--seed", "2"});
    CHECK(seeded.doc["config"]["numerics"]["seed"] == 2);
    CHECK(seeded.doc["result"] != ra.doc["result"]);
}
