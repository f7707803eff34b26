#include "doctest.h"

#include "gaplab/gap_cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gaplab;
using namespace gaplab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gaplab_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Table& table(const RunReport& r, const std::string& name) {
    for (const auto& t : r.tables)
        if (t.name == name) return t;
    throw std::runtime_error("no table " + name);
}

std::string cell(const Table& t, std::size_t row, const std::string& col) {
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        if (t.columns[c] == col) return t.rows.at(row).at(c);
    throw std::runtime_error("no column " + col);
}

json hyperbolic_geometry() {
    return json{{"type", "profile"}, {"profile", {{"preset", "hyperbolic"}, {"parameters", {{"a", 1.0}}}}}, {"n", 3}, {"d", 1.0}};
}

}  // namespace

TEST_CASE("sigma1 run on hyperbolic d=1 agrees across routes") {
    const json cfg = {{"kind", "sigma1"}, {"geometries", {hyperbolic_geometry()}}, {"m", 256}};
    const auto rep = run(cfg, {});
    const auto& t = table(rep, "sigma1");
    REQUIRE(t.rows.size() == 1);
    CHECK(std::abs(std::stod(cell(t, 0, "sigma1_eig")) - std::stod(cell(t, 0, "sigma1_opnorm"))) < 5e-3);
    CHECK(t.pass[0]);
    CHECK(t.columns.back() == "pass");
}

TEST_CASE("semiclassical run on OU at lambda 10") {
    const json cfg = {{"kind", "semiclassical"}, {"potentials", {{{"preset", "ou"}, {"N", 1}}}}, {"lambda", {10.0}}};
    const auto rep = run(cfg, {});
    const auto& t = table(rep, "semiclassical");
    CHECK(std::stod(cell(t, 0, "e2_over_lambda")) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(rep.pass());
}

TEST_CASE("schema errors name the offending key") {
    const json base = {{"kind", "semiclassical"}, {"potentials", {{{"preset", "ou"}, {"N", 1}}}}, {"lambda", 10.0}};
    CHECK_NOTHROW(validate_config(base));
    json missing = base;
    missing.erase("lambda");
    CHECK_THROWS_WITH_AS(validate_config(missing), doctest::Contains("lambda"), SchemaError);
    json unknown = base;
    unknown["lamda"] = 3;
    CHECK_THROWS_WITH_AS(validate_config(unknown), doctest::Contains("lamda"), SchemaError);
    json negative = base;
    negative["lambda"] = -1;
    CHECK_THROWS_AS(validate_config(negative), SchemaError);
    json bad_preset = base;
    bad_preset["potentials"][0]["preset"] = "nonesuch";
    CHECK_THROWS_WITH_AS(validate_config(bad_preset), doctest::Contains("potentials[0]"), SchemaError);
    json bad_tol = base;
    bad_tol["tolerances"] = {{"gap_rel", 0.0}};
    CHECK_THROWS_AS(validate_config(bad_tol), SchemaError);
    CHECK_THROWS_AS(validate_config(json{{"kind", "nonesuch"}}), SchemaError);
    CHECK_THROWS_AS(validate_config(json::array()), SchemaError);
    CHECK_THROWS_AS(validate_config(json{{"kind", "simulate"}}), SchemaError);
    // conjugate point inside the geodesic
    CHECK_THROWS_AS(validate_config(json{{"kind", "sigma1"},
                                         {"geometries", {{{"type", "constant"}, {"n", 2}, {"d", 1.0}, {"kappa", 10.0}}}}}),
                    SchemaError);
}

TEST_CASE("csv export round-trips and carries the manifest") {
    const json cfg = {{"kind", "bounds"},
                      {"seed", 11},
                      {"inputs", {{{"alpha", 1}, {"beta", 1}, {"r0", 1}, {"expected", 0.25 / 294912.0}}}},
                      {"sweep", {{"C1", 1}, {"C2", 1}, {"r0", 1}, {"lambda", {100, 1e4, 1e6}}}}};
    const auto rep = run(cfg, {});
    const auto dir = scratch("roundtrip");
    export_report(rep, dir.string());
    for (const auto& t : rep.tables) {
        const std::string text = slurp(dir / (t.name + ".csv"));
        CHECK(text == table_csv(rep, t));
        char manifest[128];
        std::snprintf(manifest, sizeof manifest, "# kind=bounds digest=%016llx seed=11\n",
                      static_cast<unsigned long long>(config_digest(cfg)));
        CHECK(text.rfind(manifest, 0) == 0);
        const Table back = parse_csv(text);
        CHECK(back.columns == t.columns);
        CHECK(back.rows == t.rows);
        CHECK(back.pass == t.pass);
    }
    CHECK(fs::exists(dir / "bounds_report.json"));
    CHECK(fs::exists(dir / "bounds_timing.json"));
    for (const auto& e : fs::directory_iterator(dir)) CHECK(e.path().extension() != ".partial");
    fs::remove_all(dir);
}

TEST_CASE("failed tolerance flags the offending row") {
    const json cfg = {{"kind", "bounds"},
                      {"inputs",
                       {{{"alpha", 1}, {"beta", 1}, {"r0", 1}, {"expected", 0.25 / 294912.0}},
                        {{"alpha", 1}, {"beta", 1}, {"r0", 1000}, {"expected", 1.0}}}}};
    const auto rep = run(cfg, {});
    const auto& t = table(rep, "bounds");
    CHECK(t.pass == std::vector<bool>{true, false});
    CHECK(t.rows[1].back() == "fail");
    CHECK_FALSE(rep.pass());
    const json j = report_json(rep);
    CHECK(j["tables"]["bounds"]["failed_rows"] == json::array({1}));
    CHECK(j["pass"] == false);
}

TEST_CASE("csv is byte-identical across repeats and thread counts") {
    const json cfg = {{"kind", "simulate"},
                      {"seed", 5},
                      {"radial",
                       {{"profile", {{"preset", "hyperbolic"}, {"parameters", {{"a", 1.0}}}}},
                        {"n", 3},
                        {"lambda", {4, 16}},
                        {"m", 200},
                        {"P", 400}}},
                      {"bridge", {{"space", "h3"}, {"lambda", 20}, {"m", 8}, {"chain", 40000}, {"burnin", 4000}, {"chains", 2}}}};
    RunOptions one, three;
    three.threads = 3;
    const auto a = run(cfg, one), b = run(cfg, one), c = run(cfg, three);
    REQUIRE(a.tables.size() == c.tables.size());
    for (std::size_t i = 0; i < a.tables.size(); ++i) {
        CHECK(table_csv(a, a.tables[i]) == table_csv(b, b.tables[i]));
        CHECK(table_csv(a, a.tables[i]) == table_csv(c, c.tables[i]));
    }
    CHECK(report_json(a).dump() == report_json(c).dump());
    RunOptions other;
    other.seed = 6;
    const auto d = run(cfg, other);
    CHECK(table_csv(a, a.tables[0]) != table_csv(d, d.tables[0]));
}

TEST_CASE("binary path dump is exported when requested") {
    const json cfg = {{"kind", "simulate"},
                      {"radial", {{"profile", {{"preset", "flat"}}}, {"n", 3}, {"lambda", 4}, {"m", 10}, {"P", 5}, {"dump", true}}}};
    const auto rep = run(cfg, {});
    REQUIRE(rep.blobs.size() == 1);
    CHECK(rep.blobs[0].second.size() == 4 + 4 + 4 + 4 + 8 + 2 * 5 * 11 * 8);
    CHECK(rep.blobs[0].second.substr(0, 4) == "GLPE");
}

TEST_CASE("unwritable output directory is an io error") {
    const json cfg = {{"kind", "bounds"}, {"inputs", {{{"alpha", 1}, {"beta", 1}, {"r0", 1}}}}};
    const auto rep = run(cfg, {});
    const auto blocker = scratch("blocker");
    std::ofstream(blocker) << "x";
    CHECK_THROWS_AS(export_report(rep, (blocker / "sub").string()), IoError);
    fs::remove_all(blocker);
}

#ifdef GAP_CLI_PATH
TEST_CASE("cli exit codes") {
    const auto dir = scratch("exit");
    fs::create_directories(dir);
    auto write = [&](const std::string& name, const json& j) {
        std::ofstream(dir / name) << j.dump();
        return (dir / name).string();
    };
    auto sh = [&](const std::string& args) {
        const int st = std::system((std::string(GAP_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(st);
    };
    const auto good = write("good.json", {{"kind", "bounds"}, {"inputs", {{{"alpha", 1}, {"beta", 1}, {"r0", 1}}}}});
    const auto bad = write("bad.json", {{"kind", "semiclassical"}, {"potentials", {{{"preset", "ou"}, {"N", 1}}}}});
    const auto failing = write("fail.json", {{"kind", "bounds"}, {"inputs", {{{"alpha", 1}, {"beta", 1}, {"r0", 1}, {"expected", 2}}}}});
    const auto out = (dir / "out").string();
    CHECK(sh("bounds --config " + good + " --out " + out) == Ok);
    CHECK(fs::exists(dir / "out" / "bounds.csv"));
    CHECK(sh("semiclassical --config " + bad + " --out " + (dir / "bad_out").string()) == Schema);
    CHECK_FALSE(fs::exists(dir / "bad_out"));
    CHECK(sh("sigma1 --config " + good + " --out " + out) == Schema);  // kind mismatch
    CHECK(sh("bounds --config " + (dir / "missing.json").string() + " --out " + out) == Io);
    CHECK(sh("bounds --config " + failing + " --out " + out) == Ok);
    CHECK(sh("bounds --strict --config " + failing + " --out " + out) == Tolerance);
    std::ofstream(dir / "blocker") << "x";
    CHECK(sh("bounds --config " + good + " --out " + (dir / "blocker" / "sub").string()) == Io);
    fs::remove_all(dir);
}
#endif
