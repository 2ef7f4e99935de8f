#pragma once

#include <chrono>
#include <cstdint>
#include <thread>

namespace cemu {

// Monotonic microsecond clock used for every timestamp in the system.
inline int64_t now_us() {
  using namespace std::chrono;
  return duration_cast<microseconds>(steady_clock::now().time_since_epoch())
      .count();
}

// Busy-spin until the monotonic clock reaches `deadline_us`.
inline void spin_until_us(int64_t deadline_us) {
  while (now_us() < deadline_us) {
    // keep the loop body nonempty so the optimizer cannot elide it
#if defined(__x86_64__)
    __builtin_ia32_pause();
#endif
  }
}

// Emulate a compute phase of `dur_us`. Sub-millisecond phases are pure
// busy-spin; longer phases sleep most of the way and spin the tail, since
// sleep granularity alone would swamp microsecond-scale overlap effects.
inline void emulate_compute_us(int64_t dur_us) {
  if (dur_us <= 0) return;
  const int64_t deadline = now_us() + dur_us;
  if (dur_us >= 1000) {
    const int64_t sleep_us = dur_us - 300;
    std::this_thread::sleep_for(std::chrono::microseconds(sleep_us));
  }
  spin_until_us(deadline);
}

}  // namespace cemu
