#pragma once

#include <compare>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace gcrit {

// Calendar date stored as a day count since 1970-01-01. All guideline
// durations are whole days, so day arithmetic is plain integer math.
class Date {
public:
    Date() = default;
    constexpr explicit Date(int days) : days_(days) {}

    static Date from_ymd(int year, int month, int day) {
        return Date(days_from_civil(year, month, day));
    }

    // Parses strict ISO-8601 YYYY-MM-DD. Returns nullopt on any deviation.
    static std::optional<Date> parse(std::string_view iso) {
        if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
        int y = 0, m = 0, d = 0;
        for (int i = 0; i < 4; ++i) {
            if (iso[i] < '0' || iso[i] > '9') return std::nullopt;
            y = y * 10 + (iso[i] - '0');
        }
        for (int i = 5; i < 7; ++i) {
            if (iso[i] < '0' || iso[i] > '9') return std::nullopt;
            m = m * 10 + (iso[i] - '0');
        }
        for (int i = 8; i < 10; ++i) {
            if (iso[i] < '0' || iso[i] > '9') return std::nullopt;
            d = d * 10 + (iso[i] - '0');
        }
        if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) return std::nullopt;
        return from_ymd(y, m, d);
    }

    std::string to_string() const {
        int y, m, d;
        civil_from_days(days_, y, m, d);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
        return buf;
    }

    int days_since_epoch() const { return days_; }

    int year() const {
        int y, m, d;
        civil_from_days(days_, y, m, d);
        return y;
    }

    Date operator+(int days) const { return Date(days_ + days); }
    Date operator-(int days) const { return Date(days_ - days); }
    Date& operator+=(int days) { days_ += days; return *this; }

    friend int operator-(Date a, Date b) { return a.days_ - b.days_; }
    friend auto operator<=>(const Date&, const Date&) = default;

private:
    int days_ = 0;

    static constexpr bool is_leap(int y) {
        return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0);
    }

    static constexpr int days_in_month(int y, int m) {
        constexpr int table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        return m == 2 && is_leap(y) ? 29 : table[m - 1];
    }

    // Howard Hinnant's public-domain civil-date algorithms.
    static constexpr int days_from_civil(int y, int m, int d) {
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153 * (static_cast<unsigned>(m) + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<int>(doe) - 719468;
    }

    static constexpr void civil_from_days(int z, int& y, int& m, int& d) {
        z += 719468;
        const int era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const int yr = static_cast<int>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
        m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
        y = yr + (m <= 2);
    }
};

} // namespace gcrit
