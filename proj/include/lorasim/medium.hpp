#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lorasim/d2d.hpp"
#include "lorasim/lorawan.hpp"
#include "lorasim/time.hpp"

namespace lorasim {

struct Position {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

using Payload = std::variant<lorawan::Uplink, lorawan::Downlink, lorawan::JoinRequest, lorawan::JoinAccept, d2d::Frame>;

/// An on-air frame, active during [start, start + duration).
struct Transmission {
  std::uint64_t id = 0;
  SimTime start{0};
  Duration duration{0};
  double freq_hz = 0.0;
  int dr = 0;
  double tx_power_dbm = 14.0;
  int phy_bytes = 0;
  std::string source;
  Position origin;
  Payload payload;

  SimTime end() const { return start + duration; }
};

enum class Outcome { Decoded, Collision, BelowSensitivity, None };

const char* to_string(Outcome o);

struct Listening {
  double freq_hz = 0.0;
  int dr = 0;
  SimTime from{0};
  SimTime to{0};  // exclusive
};

/// A transmission as seen by one receiver.
struct Candidate {
  std::uint64_t id = 0;
  double freq_hz = 0.0;
  int dr = 0;
  SimTime start{0};
  SimTime end{0};
  double rssi_dbm = 0.0;
};

struct Arbitration {
  Outcome outcome = Outcome::None;
  std::optional<std::uint64_t> decoded;
};

/// Decides what a receiver gets from the frames overlapping its window.
/// Frames on another channel or DR are ignored (orthogonal). Below-sensitivity
/// frames neither decode nor interfere. Several contenders decode only if the
/// strongest leads the runner-up by at least capture_threshold_db; ties on
/// RSSI resolve to the lower id.
Arbitration arbitrate(const Listening& listening, const std::vector<Candidate>& overlapping,
                      double sensitivity_dbm, double capture_threshold_db);

/// Registry of frames that are on air or recently ended.
class Medium {
 public:
  std::uint64_t begin(Transmission tx);
  const Transmission& get(std::uint64_t id) const;
  bool contains(std::uint64_t id) const { return frames_.count(id) > 0; }

  /// Frames on (freq, dr) overlapping [from, to).
  std::vector<const Transmission*> overlapping(double freq_hz, int dr, SimTime from, SimTime to) const;

  /// Forgets frames that ended at or before `t`.
  void prune(SimTime t);
  std::size_t size() const { return frames_.size(); }

 private:
  std::map<std::uint64_t, Transmission> frames_;
  std::uint64_t next_id_ = 1;
};

}  // namespace lorasim
