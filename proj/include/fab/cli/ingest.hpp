#pragma once

// CSV ingestion into per-group data.

#include <string>
#include <vector>

#include "fab/core_model.hpp"

namespace fab::cli {

struct IngestOptions {
    std::string group_column = "group";
    std::string response_column = "y";
    std::vector<std::string> nuisance;  // columns moved to Z
};

struct Dataset {
    std::vector<GroupData> groups;          // order of first appearance
    std::vector<std::string> focal_columns;
    std::vector<std::string> nuisance_columns;
    Index rows = 0;
};

// Header row required. Every column other than group and response is a
// focal covariate unless listed as nuisance. Rows inside a group are put in
// lexicographic order of (y, x, z), so row order in the file does not matter.
// Errors name the 1-based data row and the column.
Dataset ingest_csv_text(const std::string& text, const IngestOptions& opt);
Dataset ingest_csv(const std::string& path, const IngestOptions& opt);

// Splits one CSV line; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace fab::cli
