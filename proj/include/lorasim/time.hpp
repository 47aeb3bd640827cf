#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>

namespace lorasim {

// Simulated time is an integer number of microseconds since t = 0. All MAC
// timing (receive windows, turnarounds, airtime) is exact in this unit.
using Duration = std::chrono::microseconds;
using SimTime = std::chrono::microseconds;

inline constexpr double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-6; }

// Rounds to the nearest microsecond.
inline Duration from_seconds(double s) { return Duration{std::llround(s * 1e6)}; }

}  // namespace lorasim
