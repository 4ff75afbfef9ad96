#pragma once

#include <chrono>
#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace survclf {

// Calendar date with day resolution, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

  static std::optional<Date> from_ymd(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date{static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count())};
  }

  // Strict ISO-8601 calendar date: YYYY-MM-DD.
  static std::optional<Date> parse(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto num = [&](std::string_view part, auto& out) {
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
      return ec == std::errc{} && p == part.data() + part.size();
    };
    if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) {
      return std::nullopt;
    }
    return from_ymd(y, m, d);
  }

  std::string iso() const {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
  }

  constexpr std::int32_t days() const { return days_; }
  constexpr Date plus_days(std::int32_t n) const { return Date{days_ + n}; }
  constexpr friend std::int32_t operator-(Date a, Date b) { return a.days_ - b.days_; }
  constexpr friend auto operator<=>(Date, Date) = default;

 private:
  std::int32_t days_ = 0;
};

inline constexpr double kDaysPerYear = 365.25;
inline constexpr double kDaysPerMonth = 30.44;

}  // namespace survclf
