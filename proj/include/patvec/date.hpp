#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace patvec {

// Calendar date; "YYYY-MM-DD" on the wire.
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;
    auto operator<=>(const Date&) const = default;
};

bool is_leap_year(int year);
int days_in_month(int year, int month);
bool is_valid_date(const Date& d);

// Strict ISO-8601 "YYYY-MM-DD"; nullopt on any deviation.
std::optional<Date> parse_date(std::string_view s);
std::string format_date(const Date& d);

// Proleptic-Gregorian civil-day count (days since 1970-01-01), exact.
std::int64_t days_from_civil(const Date& d);
Date civil_from_days(std::int64_t z);
Date add_days(const Date& d, std::int64_t n);

// Shift by whole years; Feb 29 clamps to Feb 28 when the target is non-leap.
Date add_years(const Date& d, int n);

}  // namespace patvec
