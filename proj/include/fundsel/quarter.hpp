#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace fundsel {

/// Calendar quarter, ordered by (year, q).
struct Quarter {
    int year = 0;
    int q = 1;

    auto operator<=>(const Quarter&) const = default;

    /// Number of quarters since year 0 Q1; lets callers do index arithmetic.
    constexpr long ordinal() const { return static_cast<long>(year) * 4 + (q - 1); }
    static constexpr Quarter from_ordinal(long ord) {
        long y = ord >= 0 ? ord / 4 : -((-ord + 3) / 4);
        return Quarter{static_cast<int>(y), static_cast<int>(ord - y * 4) + 1};
    }

    std::string to_string() const; // "YYYY-Qn"
};

/// Throws InvalidArgument for q outside 1..4.
Quarter make_quarter(int year, int q);

Quarter next_quarter(Quarter q);
Quarter prev_quarter(Quarter q);

/// Signed distance in quarters: b - a.
inline long quarters_between(Quarter a, Quarter b) { return b.ordinal() - a.ordinal(); }

/// Parses "YYYY-Qn" (also accepts "YYYYQn"). Returns nullopt on malformed input.
std::optional<Quarter> parse_quarter(std::string_view text);

} // namespace fundsel
