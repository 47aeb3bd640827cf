#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lorasim/event_queue.hpp"
#include "lorasim/medium.hpp"
#include "lorasim/phy.hpp"
#include "lorasim/rng.hpp"
#include "lorasim/trace.hpp"

namespace lorasim {

/// Anything with an antenna. The engine asks nodes whether they lock onto a
/// frame when it starts and reports the arbitration outcome when it ends.
class RadioNode {
 public:
  virtual ~RadioNode() = default;
  virtual const std::string& name() const = 0;
  virtual Position position() const = 0;
  /// Called at frame start for frames heard above sensitivity. Returning true
  /// commits the receiver to this frame until it ends.
  virtual bool can_lock(const Transmission& tx) = 0;
  virtual void on_tx_end(const Transmission& tx) = 0;
  virtual void on_frame(const Transmission& tx, double rssi_dbm, Outcome outcome) = 0;
};

struct LinkConfig {
  phy::PathLossModel path_loss;
  phy::SensitivityTable sensitivity;
  double capture_threshold_db = 6.0;
};

struct MediumCounters {
  std::uint64_t transmissions = 0;
  std::uint64_t decoded = 0;
  std::uint64_t collisions = 0;
};

class Engine {
 public:
  Engine(std::uint64_t seed, LinkConfig link, bool trace_enabled);

  EventQueue& queue() { return queue_; }
  SimTime now() const { return queue_.now(); }
  Trace& trace() { return trace_; }
  const Trace& trace() const { return trace_; }
  const RngFactory& rng() const { return rng_; }
  const LinkConfig& link() const { return link_; }
  const MediumCounters& counters() const { return counters_; }
  /// On-air time per source and carrier frequency, whether or not duty
  /// cycle enforcement is switched on.
  const std::map<std::string, std::map<double, Duration>>& airtime() const { return airtime_; }

  void attach(RadioNode* node) { nodes_.push_back(node); }

  /// Puts a frame on air starting now. The source gets on_tx_end, then every
  /// locked receiver gets on_frame, when it ends.
  std::uint64_t transmit(RadioNode& source, Transmission tx);

  double rssi_dbm(const Transmission& tx, const RadioNode& receiver) const;

 private:
  void finish(std::uint64_t id);

  EventQueue queue_;
  Trace trace_;
  RngFactory rng_;
  LinkConfig link_;
  Medium medium_;
  MediumCounters counters_;
  std::map<std::string, std::map<double, Duration>> airtime_;
  std::vector<RadioNode*> nodes_;
  std::map<std::uint64_t, RadioNode*> sources_;
  std::map<std::uint64_t, std::vector<RadioNode*>> locks_;
  std::multiset<SimTime> active_starts_;
};

}  // namespace lorasim
