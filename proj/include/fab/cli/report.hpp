#pragma once

// Runs configured jobs and renders their JSON reports and flat CSV tables.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fab/analysis.hpp"
#include "fab/cli/config.hpp"
#include "fab/cli/ingest.hpp"
#include "fab/multigroup.hpp"

namespace fab::cli {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportVersion = "fabtest-report/1";

enum ExitCode : int { exit_ok = 0, exit_partial = 1, exit_failure = 2 };

struct RunOutput {
    Json report;
    std::string csv;  // group,statistic,p_value,decision
    int exit_code = exit_ok;
};

// Per-group tests over the configured data file (or an already ingested
// dataset).
RunOutput run_test(const RunConfig& cfg);
RunOutput run_test_on(const RunConfig& cfg, const Dataset& data);

// One general linear hypothesis across the named groups.
RunOutput run_hypothesis(const RunConfig& cfg);
RunOutput run_hypothesis_on(const RunConfig& cfg, const Dataset& data);

struct PowerSuite {
    std::vector<PowerScenario> scenarios;
    std::vector<PowerTest> tests;
    std::uint64_t seed = 20240601;
    unsigned threads = 1;
};

RunOutput run_power(const PowerSuite& suite);

// Exact p-value ratio and its lower bound at each (n, p, c). With S > 0 a
// Monte Carlo check at y = sqrt(c) mu + sqrt(1 - c) v is added, mu a unit
// vector in col(X) and v a unit vector orthogonal to it.
struct RatioRequest {
    std::vector<Index> n;
    std::vector<Index> p;
    std::vector<double> c;
    Index S = 0;
    std::uint64_t seed = 20240601;
    unsigned threads = 1;
};

RunOutput run_ratio(const RatioRequest& req);

DimensionRule parse_dimension_rule(const std::string& s);
SignalRule parse_signal_rule(const std::string& s);
AngleRule parse_angle_rule(const std::string& s);
std::string to_string(DimensionRule r);
std::string to_string(SignalRule r);
std::string to_string(AngleRule r);

// Report text: two-space indented JSON with a trailing newline. Non-finite
// numbers are written as null.
std::string dump_report(const Json& report);

Json result_json(const GroupTest& t);
std::string results_csv(const std::vector<GroupTest>& tests);

// Adds the rejection set at each alpha. NaN p-values are not tested.
Json bh_json(const std::vector<GroupTest>& tests, const std::vector<double>& alphas);

// Writes the report to cfg.report_path (stdout when empty) and the CSV when
// cfg.csv_path is set.
void write_outputs(const RunConfig& cfg, const RunOutput& out);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace fab::cli
