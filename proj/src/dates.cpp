#include "attrition/dates.hpp"

#include <cstdio>

#include "attrition/errors.hpp"

namespace attrition {

bool is_leap_year(int year) {
    return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_month(int year, int month) {
    static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2 && is_leap_year(year)) return 29;
    return days[month - 1];
}

bool is_month_end(const Date& d) {
    return d.day == days_in_month(d.year, d.month);
}

namespace {

bool parse_int_field(const std::string& s, size_t pos, size_t len, int& out) {
    int v = 0;
    for (size_t i = pos; i < pos + len; ++i) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

} // namespace

Date parse_date(const std::string& s) {
    Date d;
    bool ok = s.size() == 10 && s[4] == '-' && s[7] == '-' &&
              parse_int_field(s, 0, 4, d.year) && parse_int_field(s, 5, 2, d.month) &&
              parse_int_field(s, 8, 2, d.day);
    if (!ok || d.month < 1 || d.month > 12 || d.day < 1 ||
        d.day > days_in_month(d.year, d.month)) {
        throw DataError("invalid date '" + s + "' (expected YYYY-MM-DD)");
    }
    return d;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

YearMonth parse_year_month(const std::string& s) {
    YearMonth ym;
    bool ok = s.size() == 7 && s[4] == '-' && parse_int_field(s, 0, 4, ym.year) &&
              parse_int_field(s, 5, 2, ym.month);
    if (!ok || ym.month < 1 || ym.month > 12) {
        throw ConfigError("invalid month '" + s + "' (expected YYYY-MM)");
    }
    return ym;
}

std::string format_year_month(const YearMonth& ym) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", ym.year, ym.month);
    return buf;
}

YearMonth year_month_of(const Date& d) {
    return {d.year, d.month};
}

YearMonth add_months(const YearMonth& ym, int k) {
    int idx = ym.year * 12 + (ym.month - 1) + k;
    int year = idx / 12;
    int month = idx % 12;
    if (month < 0) {
        month += 12;
        year -= 1;
    }
    return {year, month + 1};
}

Date month_end(const YearMonth& ym) {
    return {ym.year, ym.month, days_in_month(ym.year, ym.month)};
}

Date add_months_month_end(const Date& d, int k) {
    return month_end(add_months(year_month_of(d), k));
}

int months_between(const YearMonth& a, const YearMonth& b) {
    return (b.year * 12 + b.month) - (a.year * 12 + a.month);
}

} // namespace attrition
