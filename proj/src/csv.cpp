#include "csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sgcp::detail {

namespace {

std::string trim(const std::string& s) {
    auto first = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto last = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    return first < last ? std::string(first, last) : std::string();
}

}  // namespace

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::IoError, "cannot open " + path.string());
    }
    std::vector<CsvRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        CsvRow row{line_no, {}};
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.cells.push_back(trim(cell));
        if (!line.empty() && line.back() == ',') row.cells.emplace_back();
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_number(const std::string& cell, std::size_t line, std::size_t column) {
    std::string lowered = cell;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto where = " at line " + std::to_string(line) + ", column " + std::to_string(column);
    if (lowered.empty() || lowered == "nan" || lowered == "na" || lowered == "null") {
        throw Error(Errc::MissingValue, "missing cell" + where);
    }
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    if (*begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(Errc::ParseError, "cannot parse '" + cell + "'" + where);
    }
    if (!std::isfinite(value)) {
        throw Error(Errc::MissingValue, "non-finite cell" + where);
    }
    return value;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace sgcp::detail
