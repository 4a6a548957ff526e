#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

namespace polyswarm {

// UTC milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

constexpr TimestampMs kMsPerSecond = 1000;
constexpr TimestampMs kMsPerHour = 3600 * kMsPerSecond;
constexpr TimestampMs kMsPerDay = 24 * kMsPerHour;

// Event-time source. Everything that stamps a record reads time through a
// Clock so tests and deterministic replays can control it.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs now() const override;
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = 0) : now_(start) {}
  TimestampMs now() const override { return now_.load(); }
  void set(TimestampMs t) { now_.store(t); }
  void advance(TimestampMs delta) { now_.fetch_add(delta); }

 private:
  std::atomic<TimestampMs> now_;
};

// Index of the UTC day containing t (days since epoch).
constexpr std::int64_t utc_day(TimestampMs t) {
  return t >= 0 ? t / kMsPerDay : -((-t + kMsPerDay - 1) / kMsPerDay);
}

// "2024-11-05T12:00:00Z", "2024-11-05T12:00:00.250Z", "2024-11-05" and
// numeric offsets like "+02:00" are accepted. Throws ValidationError.
TimestampMs parse_iso8601(std::string_view text);
std::string format_iso8601(TimestampMs t);
std::string format_date(TimestampMs t);

}  // namespace polyswarm
