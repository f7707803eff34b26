#pragma once

#include "gaplab/common.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <string>
#include <vector>

#include "json.hpp"

namespace gaplab::cli {

/// Config does not match the schema of its experiment kind.
struct SchemaError : InvalidInput {
    using InvalidInput::InvalidInput;
};

enum ExitCode : int { Ok = 0, Schema = 2, Numeric = 3, Tolerance = 4, Io = 5 };

const std::vector<std::string>& experiment_kinds();

struct Table {
    std::string name;                        // file stem, e.g. "sigma1"
    std::vector<std::string> columns;        // last column is always "pass"
    std::vector<std::vector<std::string>> rows;
    std::vector<bool> pass;
};

struct RunReport {
    std::string kind;
    std::uint64_t digest = 0;
    std::uint64_t seed = 0;
    std::vector<Table> tables;
    std::vector<std::pair<std::string, double>> stage_seconds;
    std::vector<std::string> notes;
    std::vector<std::pair<std::string, std::string>> blobs;  // file name, raw bytes (binary path dumps)
    bool pass() const;
};

struct RunOptions {
    std::optional<std::uint64_t> seed;  // overrides the config seed
    unsigned threads = 1;
};

/// Canonical digest of a config (FNV-1a of the sorted-key dump).
std::uint64_t config_digest(const nlohmann::json& config);

/// Checks the whole config against the schema of its kind; throws SchemaError.
void validate_config(const nlohmann::json& config);

/// Validates, then runs. Writes nothing.
RunReport run(const nlohmann::json& config, const RunOptions& opt);

/// CSV text of one table: manifest comment line, header, rows (%.12g numbers).
std::string table_csv(const RunReport& r, const Table& t);
/// Structured report (JSON) without wall-clock data, so it is reproducible.
nlohmann::json report_json(const RunReport& r);

/// Writes <dir>/<table>.csv for each table, <dir>/<kind>_report.json and <dir>/<kind>_timing.json.
/// Files are staged under temporary names and renamed only after every write succeeded.
void export_report(const RunReport& r, const std::string& dir);

/// Parses a CSV produced by table_csv (skipping the manifest line).
Table parse_csv(const std::string& text);

std::string format_number(double x);

}  // namespace gaplab::cli
