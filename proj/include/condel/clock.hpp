#pragma once

#include <chrono>
#include <cstdint>
#include <functional>

namespace condel {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

// Injected time source; sessions never read the wall clock directly.
using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

inline std::int64_t to_millis(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_millis(std::int64_t ms) { return Timestamp(std::chrono::milliseconds(ms)); }

}  // namespace condel
