#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fundsel::csv {

/// A parsed comma-separated file. Quoting is not supported; every input the
/// engine reads is plain numeric or identifier data.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers; // 1-based source line of each row
};

/// Reads a whole file. Accepts LF or CRLF, strips a UTF-8 BOM, skips blank
/// lines. Throws MissingFile if the path cannot be opened.
Table read(const std::filesystem::path& path);

std::vector<std::string> split_line(std::string_view line);

/// Strict decimal parse of the whole token (surrounding blanks allowed).
std::optional<double> parse_double(std::string_view token);

/// Empty cell or the literal NA.
bool is_missing_token(std::string_view token);

/// Shortest representation that parses back to the identical double.
std::string format_exact(double value);

/// Fixed number of significant digits, used in human-facing reports.
std::string format_sig(double value, int digits);

/// Writes text atomically enough for our purposes (truncate + write).
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace fundsel::csv
