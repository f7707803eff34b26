#include "gaplab/gap_cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

using namespace gaplab;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw cli::SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
}

int execute(const std::string& kind, const std::string& config_path, std::string out, std::optional<std::uint64_t> seed,
            unsigned threads, bool strict, bool validate_only) {
    json cfg = load_config(config_path);
    if (!cfg.is_object()) throw cli::SchemaError("config must be a JSON object");
    if (!cfg.contains("kind")) cfg["kind"] = kind;
    if (cfg["kind"] != kind)
        throw cli::SchemaError("config kind '" + cfg["kind"].dump() + "' does not match subcommand '" + kind + "'");
    if (out.empty()) out = cfg.contains("out") && cfg["out"].is_string() ? cfg["out"].get<std::string>() : "out";
    if (validate_only) {
        cli::validate_config(cfg);
        std::cout << "config ok\n";
        return cli::Ok;
    }
    cli::RunOptions opt;
    opt.seed = seed;
    opt.threads = threads;
    const auto rep = cli::run(cfg, opt);
    cli::export_report(rep, out);
    std::size_t failed = 0;
    for (const auto& t : rep.tables) {
        for (std::size_t i = 0; i < t.rows.size(); ++i)
            if (!t.pass[i]) {
                ++failed;
                std::cerr << "FAIL " << t.name << " row " << i << ":";
                for (std::size_t c = 0; c + 1 < t.columns.size(); ++c) std::cerr << ' ' << t.columns[c] << '=' << t.rows[i][c];
                std::cerr << '\n';
            }
        std::cout << t.name << ": " << t.rows.size() << " rows\n";
    }
    for (const auto& n : rep.notes) std::cout << "note: " << n << '\n';
    std::cout << (failed ? "some rows failed their tolerance" : "all rows pass") << ", outputs in " << out << '\n';
    return failed && strict ? cli::Tolerance : cli::Ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gap_cli: spectral gap experiments"};
    app.require_subcommand(1);
    std::string config, out;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    bool strict = false, validate_only = false;
    for (const auto& kind : cli::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run a " + kind + " experiment");
        sub->add_option("-c,--config", config, "JSON config file")->required();
        sub->add_option("-o,--out", out, "output directory (default: config 'out', else ./out)");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("-j,--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
        sub->add_flag("--strict", strict, "exit with code 4 when any row fails");
        sub->add_flag("--validate", validate_only, "check the config and exit");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::Schema;
    }
    const std::string kind = app.get_subcommands().front()->get_name();
    const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
    try {
        return execute(kind, config, out, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt, threads, strict,
                       validate_only);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return cli::Io;
    } catch (const InvalidInput& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return cli::Schema;
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return cli::Numeric;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return cli::Numeric;
    }
}
