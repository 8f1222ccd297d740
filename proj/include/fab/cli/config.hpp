#pragma once

// Run configuration in plain key=value form.
//
//   # comment
//   [test]
//   alpha = 0.05
//   linking.mode = shared      # dotted keys work anywhere
//
// A key inside a [section] is read as section.key. Lists are comma
// separated; matrices separate rows with ';'.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fab/multigroup.hpp"

namespace fab::cli {

struct HypothesisSpec {
    std::vector<std::string> groups;
    Matrix A;
    Vector v;
};

struct RunConfig {
    TestConfig test;
    std::string data_path;
    std::string group_column = "group";
    std::string response_column = "y";
    std::vector<std::string> nuisance;
    std::string report_path;  // stdout when empty
    std::string csv_path;
    bool timing = false;
    std::vector<double> bh_alphas;
    std::optional<HypothesisSpec> hypothesis;
};

// Applies key=value text on top of base. Unknown keys and malformed values
// throw std::invalid_argument naming the line.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});

// Reads a config file. A JSON report is accepted too; its config echo is
// used.
RunConfig load_config(const std::string& path, RunConfig base = {});

// Sets one canonical key.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical key -> value text of every setting that affects results. The
// thread count is left out: output does not depend on it.
std::map<std::string, std::string> config_echo(const RunConfig& cfg);
std::string config_echo_text(const RunConfig& cfg);

// Number formatting shared by config echo, reports and CSV output:
// shortest text that reads back to the same double.
std::string format_double(double x);
std::vector<double> parse_list(const std::string& s);
Matrix parse_matrix(const std::string& s);
std::string format_list(const VectorRef& v);
std::string format_matrix(const MatrixRef& m);

}  // namespace fab::cli
