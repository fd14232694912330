#include "enscal/common.hpp"

#include <cstdio>

namespace enscal {

std::string variable_name(Variable v) {
    return v == Variable::wind_speed_mps ? "wind" : "ghi";
}

Variable variable_from_name(const std::string& name) {
    if (name == "wind" || name == "wind_speed_mps") return Variable::wind_speed_mps;
    if (name == "ghi" || name == "ghi_wm2") return Variable::ghi_wm2;
    throw config_error("unknown variable '" + name + "' (expected wind|ghi)");
}

// Howard Hinnant's algorithm, proleptic Gregorian.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

namespace {

bool all_digits(const std::string& s, size_t from, size_t to) {
    if (to > s.size()) return false;
    for (size_t i = from; i < to; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    return true;
}

int num(const std::string& s, size_t from, size_t to) {
    int v = 0;
    for (size_t i = from; i < to; ++i) v = v * 10 + (s[i] - '0');
    return v;
}

}  // namespace

std::int64_t parse_iso_utc(const std::string& s) {
    // accepted: YYYY-MM-DDTHH:MM:SSZ and YYYY-MM-DDTHH:MMZ
    const bool with_sec = s.size() == 20;
    if (!(with_sec || s.size() == 17)) throw schema_error("bad timestamp '" + s + "'");
    if (s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s.back() != 'Z')
        throw schema_error("bad timestamp '" + s + "'");
    if (!all_digits(s, 0, 4) || !all_digits(s, 5, 7) || !all_digits(s, 8, 10) ||
        !all_digits(s, 11, 13) || !all_digits(s, 14, 16))
        throw schema_error("bad timestamp '" + s + "'");
    int sec = 0;
    if (with_sec) {
        if (s[16] != ':' || !all_digits(s, 17, 19)) throw schema_error("bad timestamp '" + s + "'");
        sec = num(s, 17, 19);
        if (sec != 0) throw schema_error("timestamp '" + s + "' not on a whole minute");
    }
    const int yy = num(s, 0, 4), mm = num(s, 5, 7), dd = num(s, 8, 10);
    const int h = num(s, 11, 13), mi = num(s, 14, 16);
    if (mm < 1 || mm > 12 || dd < 1 || dd > 31 || h > 23 || mi > 59)
        throw schema_error("bad timestamp '" + s + "'");
    return days_from_civil(yy, mm, dd) * minutes_per_day + h * 60 + mi;
}

std::string format_iso_utc(std::int64_t t) {
    std::int64_t d = day_of(t);
    const int rem = static_cast<int>(t - d * minutes_per_day);
    int y, m, dd;
    civil_from_days(d, y, m, dd);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00Z", y, m, dd, rem / 60, rem % 60);
    return buf;
}

std::int64_t parse_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-' || !all_digits(s, 0, 4) ||
        !all_digits(s, 5, 7) || !all_digits(s, 8, 10))
        throw schema_error("bad date '" + s + "' (expected YYYY-MM-DD)");
    const int mm = num(s, 5, 7), dd = num(s, 8, 10);
    if (mm < 1 || mm > 12 || dd < 1 || dd > 31) throw schema_error("bad date '" + s + "'");
    return days_from_civil(num(s, 0, 4), mm, dd);
}

std::string format_date(std::int64_t days) {
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[12];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

}  // namespace enscal
