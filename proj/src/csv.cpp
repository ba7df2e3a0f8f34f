#include "fundsel/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fundsel/error.hpp"

namespace fundsel::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

} // namespace

std::vector<std::string> split_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        auto cell = trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        out.emplace_back(cell);
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::MissingFile, "cannot open " + path.string());

    Table table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0)
            line.erase(0, 3);
        if (trim(line).empty())
            continue;
        if (!have_header) {
            table.header = split_line(line);
            have_header = true;
            continue;
        }
        table.rows.push_back(split_line(line));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header)
        fail(ErrorKind::SchemaError, path.string() + " is empty");
    return table;
}

std::optional<double> parse_double(std::string_view token) {
    token = trim(token);
    if (token.empty())
        return std::nullopt;
    if (token.front() == '+')
        token.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(value))
        return std::nullopt;
    return value;
}

bool is_missing_token(std::string_view token) {
    token = trim(token);
    return token.empty() || token == "NA";
}

std::string format_exact(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string format_sig(double value, int digits) {
    // Negative zero prints as "-0" otherwise, which makes byte comparisons noisy.
    if (value == 0.0)
        value = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, value);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::MissingFile, "cannot write " + path.string());
    out << text;
}

} // namespace fundsel::csv
