#include "polyswarm/clock.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <string>

#include "polyswarm/errors.hpp"

namespace polyswarm {

TimestampMs SystemClock::now() const {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace

TimestampMs parse_iso8601(std::string_view text) {
  const auto fail = [&] { throw ValidationError("bad ISO-8601 timestamp: " + std::string(text)); };
  std::tm tm{};
  int year = 0, month = 0, day = 0;
  if (!read_int(text, 0, 4, year) || text.size() < 10 || text[4] != '-' || !read_int(text, 5, 2, month) ||
      text[7] != '-' || !read_int(text, 8, 2, day)) {
    fail();
  }
  int hour = 0, minute = 0, second = 0, millis = 0;
  long offset_seconds = 0;
  std::size_t pos = 10;
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    if (!read_int(text, pos + 1, 2, hour) || text.size() < pos + 6 || text[pos + 3] != ':' ||
        !read_int(text, pos + 4, 2, minute)) {
      fail();
    }
    pos += 6;
    if (pos < text.size() && text[pos] == ':') {
      if (!read_int(text, pos + 1, 2, second)) fail();
      pos += 3;
    }
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      int digits = 0;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (digits < 3) millis = millis * 10 + (text[pos] - '0');
        ++digits;
        ++pos;
      }
      for (; digits < 3; ++digits) millis *= 10;
    }
    if (pos < text.size()) {
      if (text[pos] == 'Z') {
        ++pos;
      } else if (text[pos] == '+' || text[pos] == '-') {
        int oh = 0, om = 0;
        const int sign = text[pos] == '+' ? 1 : -1;
        if (!read_int(text, pos + 1, 2, oh)) fail();
        std::size_t mpos = pos + 3;
        if (mpos < text.size() && text[mpos] == ':') ++mpos;
        if (!read_int(text, mpos, 2, om)) fail();
        offset_seconds = sign * (oh * 3600L + om * 60L);
        pos = mpos + 2;
      }
    }
  }
  if (pos != text.size()) fail();
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) fail();
  tm.tm_year = year - 1900;
  tm.tm_mon = month - 1;
  tm.tm_mday = day;
  tm.tm_hour = hour;
  tm.tm_min = minute;
  tm.tm_sec = second;
  const std::time_t secs = timegm(&tm);
  return (static_cast<TimestampMs>(secs) - offset_seconds) * kMsPerSecond + millis;
}

std::string format_iso8601(TimestampMs t) {
  const std::time_t secs = static_cast<std::time_t>(utc_day(t) * 86400 + (t - utc_day(t) * kMsPerDay) / 1000);
  const int millis = static_cast<int>(t - static_cast<TimestampMs>(secs) * 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
  return buf;
}

std::string format_date(TimestampMs t) { return format_iso8601(t).substr(0, 10); }

}  // namespace polyswarm
