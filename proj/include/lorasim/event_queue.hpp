#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "lorasim/time.hpp"

namespace lorasim {

using EventId = std::uint64_t;

/// Within one instant, radio state changes run before transmissions start,
/// so a window opening at t hears a frame starting at t.
enum class Phase : int { Radio = 0, Transmit = 1, Normal = 2 };

class EventQueue {
 public:
  /// Throws std::logic_error when `at` precedes the current time.
  EventId schedule(SimTime at, std::function<void()> fn, Phase phase = Phase::Normal);
  /// Returns false if the event already ran or was cancelled.
  bool cancel(EventId id);

  /// Executes the next event. Returns false when none is left.
  bool step();
  /// Runs every event with time < end, then sets the clock to end.
  void run_until(SimTime end);

  SimTime now() const { return now_; }
  std::size_t pending() const { return handlers_.size(); }
  std::uint64_t executed() const { return executed_; }
  std::optional<SimTime> next_time();

 private:
  struct Key {
    SimTime time;
    int phase;
    EventId seq;
    bool operator>(const Key& o) const {
      if (time != o.time) return time > o.time;
      if (phase != o.phase) return phase > o.phase;
      return seq > o.seq;
    }
  };

  void drop_cancelled();

  std::priority_queue<Key, std::vector<Key>, std::greater<Key>> heap_;
  std::unordered_map<EventId, std::function<void()>> handlers_;
  EventId next_id_ = 1;
  SimTime now_{0};
  std::uint64_t executed_ = 0;
};

}  // namespace lorasim
