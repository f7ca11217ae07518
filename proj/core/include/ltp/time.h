#ifndef LTP_TIME_H_
#define LTP_TIME_H_

#include <chrono>
#include <cstdint>

namespace ltp {

using Duration = std::chrono::nanoseconds;

// Monotonic clock shared by the simulated and the live transport. In
// simulation the channel owns "now"; live runs read steady_clock.
struct Clock {
  using duration = Duration;
  using rep = duration::rep;
  using period = duration::period;
  using time_point = std::chrono::time_point<Clock>;
  static constexpr bool is_steady = true;

  static time_point now() noexcept {
    return time_point(std::chrono::duration_cast<duration>(
        std::chrono::steady_clock::now().time_since_epoch()));
  }
};

using Instant = Clock::time_point;

inline constexpr Duration kInfiniteDuration = Duration::max();

inline constexpr double ToSeconds(Duration d) {
  return std::chrono::duration<double>(d).count();
}

inline constexpr double ToMillis(Duration d) {
  return std::chrono::duration<double, std::milli>(d).count();
}

inline constexpr Duration FromSeconds(double s) {
  return std::chrono::duration_cast<Duration>(std::chrono::duration<double>(s));
}

// a + b without overflowing when b is kInfiniteDuration.
inline constexpr Instant SaturatingAdd(Instant a, Duration b) {
  if (b == kInfiniteDuration ||
      a.time_since_epoch() > Duration::max() - b) {
    return Instant::max();
  }
  return a + b;
}

}  // namespace ltp

#endif  // LTP_TIME_H_
