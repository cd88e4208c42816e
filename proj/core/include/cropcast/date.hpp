#pragma once

#include <compare>
#include <cstdint>
#include <string>

#include "cropcast/common.hpp"

namespace cropcast {

/// Calendar day stored as a serial count of days since 1970-01-01.
/// Arithmetic is plain integer math, so daily series can be windowed
/// and gap-checked without timezone or DST concerns.
class Date {
  public:
    Date() = default;
    explicit Date(std::int64_t serial) : serial_(serial) {}

    static Date from_ymd(int year, int month, int day);
    static Date parse(const std::string& iso); // "YYYY-MM-DD"

    std::int64_t serial() const { return serial_; }
    void ymd(int& year, int& month, int& day) const;
    std::string to_string() const;

    Date operator+(std::int64_t days) const { return Date(serial_ + days); }
    Date operator-(std::int64_t days) const { return Date(serial_ - days); }
    std::int64_t operator-(const Date& o) const { return serial_ - o.serial_; }
    auto operator<=>(const Date&) const = default;

  private:
    std::int64_t serial_ = 0;
};

namespace detail {

// Civil <-> serial conversions, valid across the proleptic Gregorian calendar.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
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

} // namespace detail

inline Date Date::from_ymd(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1 || day > 31)
        throw DataError("invalid calendar date: " + std::to_string(year) + "-" +
                        std::to_string(month) + "-" + std::to_string(day));
    return Date(detail::days_from_civil(year, month, day));
}

inline Date Date::parse(const std::string& iso) {
    int y = 0, m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    if (std::sscanf(iso.c_str(), "%d%c%d%c%d", &y, &dash1, &m, &dash2, &d) != 5 ||
        dash1 != '-' || dash2 != '-')
        throw DataError("invalid ISO date: '" + iso + "'");
    Date parsed = from_ymd(y, m, d);
    // Round-trip rejects out-of-range day-of-month like 2020-02-31.
    int y2, m2, d2;
    parsed.ymd(y2, m2, d2);
    if (y2 != y || m2 != m || d2 != d)
        throw DataError("invalid ISO date: '" + iso + "'");
    return parsed;
}

inline void Date::ymd(int& year, int& month, int& day) const {
    detail::civil_from_days(serial_, year, month, day);
}

inline std::string Date::to_string() const {
    int y, m, d;
    ymd(y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

} // namespace cropcast
