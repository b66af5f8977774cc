#pragma once

#include <chrono>
#include <cstdint>

#include "canids/frame.hpp"

namespace canids {

/// Civil-time decomposition of a timestamp.
struct CalendarFields {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int millisecond = 0;

  friend bool operator==(const CalendarFields&, const CalendarFields&) = default;
};

/// Wall clock at a fixed UTC offset. The host timezone is never consulted.
struct LocalClock {
  std::int64_t utc_offset_seconds = 0;

  CalendarFields fields(Timestamp t) const {
    using namespace std::chrono;
    const std::int64_t local_us = t.micros() + utc_offset_seconds * 1'000'000;
    const auto us = microseconds{local_us};
    const auto day = floor<days>(us);
    const year_month_day ymd{sys_days{day}};
    const std::int64_t in_day = (us - day).count();
    CalendarFields f;
    f.year = static_cast<int>(ymd.year());
    f.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
    f.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
    f.hour = static_cast<int>(in_day / 3'600'000'000LL);
    f.minute = static_cast<int>(in_day / 60'000'000LL % 60);
    f.second = static_cast<int>(in_day / 1'000'000LL % 60);
    f.millisecond = static_cast<int>(in_day / 1000 % 1000);
    return f;
  }

  int hour(Timestamp t) const {
    constexpr std::int64_t kDay = 86'400'000'000LL;
    std::int64_t local_us = t.micros() + utc_offset_seconds * 1'000'000;
    std::int64_t in_day = ((local_us % kDay) + kDay) % kDay;
    return static_cast<int>(in_day / 3'600'000'000LL);
  }

  /// Local midnight of the day containing `t`, as a UTC timestamp.
  Timestamp day_start(Timestamp t) const {
    constexpr std::int64_t kDay = 86'400'000'000LL;
    const std::int64_t off = utc_offset_seconds * 1'000'000;
    std::int64_t local_us = t.micros() + off;
    std::int64_t floor_day = local_us >= 0 ? local_us / kDay : -((-local_us + kDay - 1) / kDay);
    return Timestamp::from_micros(floor_day * kDay - off);
  }
};

}  // namespace canids
