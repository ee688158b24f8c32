#pragma once

// Minimal CSV reading shared by the graph and series loaders.

#include "sgcp/error.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace sgcp::detail {

struct CsvRow {
    std::size_t line = 0;  // 1-based line number in the file
    std::vector<std::string> cells;
};

std::vector<CsvRow> read_csv(const std::filesystem::path& path);

/// Parses a finite double; "nan"/"inf"/empty cells are reported as MissingValue,
/// anything else unparseable as ParseError.
double parse_number(const std::string& cell, std::size_t line, std::size_t column);

std::string format_double(double v);

}  // namespace sgcp::detail
