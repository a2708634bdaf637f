#pragma once

#include <compare>
#include <string>

namespace attrition {

struct Date {
    int year = 0;
    int month = 0; // 1..12
    int day = 0;   // 1..31

    auto operator<=>(const Date&) const = default;
};

// Calendar month; the unit of panel arithmetic.
struct YearMonth {
    int year = 0;
    int month = 0; // 1..12

    auto operator<=>(const YearMonth&) const = default;
};

bool is_leap_year(int year);
int days_in_month(int year, int month);
bool is_month_end(const Date& d);

// Strict ISO-8601 YYYY-MM-DD. Throws DataError on malformed input.
Date parse_date(const std::string& s);
std::string format_date(const Date& d);

// YYYY-MM. Throws ConfigError on malformed input.
YearMonth parse_year_month(const std::string& s);
std::string format_year_month(const YearMonth& ym);

YearMonth year_month_of(const Date& d);
YearMonth add_months(const YearMonth& ym, int k);
Date month_end(const YearMonth& ym);

// Month-end k months after d's month. The month-end convention keeps
// snapshot arithmetic free of day-of-month drift.
Date add_months_month_end(const Date& d, int k);

// Signed whole-month distance b.month - a.month.
int months_between(const YearMonth& a, const YearMonth& b);

} // namespace attrition
