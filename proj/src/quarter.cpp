#include "fundsel/quarter.hpp"

#include <charconv>
#include <cstdio>

#include "fundsel/error.hpp"

namespace fundsel {

std::string Quarter::to_string() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-Q%d", year, q);
    return buf;
}

Quarter make_quarter(int year, int q) {
    if (q < 1 || q > 4)
        fail(ErrorKind::InvalidArgument, "quarter index must be 1..4, got " + std::to_string(q));
    return Quarter{year, q};
}

Quarter next_quarter(Quarter q) {
    return q.q == 4 ? Quarter{q.year + 1, 1} : Quarter{q.year, q.q + 1};
}

Quarter prev_quarter(Quarter q) {
    return q.q == 1 ? Quarter{q.year - 1, 4} : Quarter{q.year, q.q - 1};
}

std::optional<Quarter> parse_quarter(std::string_view text) {
    int year = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), year);
    if (ec != std::errc{} || ptr - text.data() != 4)
        return std::nullopt;
    std::string_view rest(ptr, text.data() + text.size() - ptr);
    if (!rest.empty() && rest.front() == '-')
        rest.remove_prefix(1);
    if (rest.size() != 2 || (rest[0] != 'Q' && rest[0] != 'q') || rest[1] < '1' || rest[1] > '4')
        return std::nullopt;
    return Quarter{year, rest[1] - '0'};
}

} // namespace fundsel
