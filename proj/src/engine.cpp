#include "lorasim/engine.hpp"

#include <stdexcept>

namespace lorasim {

Engine::Engine(std::uint64_t seed, LinkConfig link, bool trace_enabled)
    : trace_(trace_enabled), rng_(seed), link_(std::move(link)) {}

double Engine::rssi_dbm(const Transmission& tx, const RadioNode& receiver) const {
  return link_.path_loss.rssi_dbm(tx.tx_power_dbm, distance(tx.origin, receiver.position()));
}

std::uint64_t Engine::transmit(RadioNode& source, Transmission tx) {
  if (tx.start != now()) throw std::logic_error("transmission must start at the current time");
  if (tx.duration.count() <= 0) throw std::logic_error("transmission with non-positive duration");
  tx.source = source.name();
  tx.origin = source.position();
  const std::uint64_t id = medium_.begin(std::move(tx));
  const Transmission& on_air = medium_.get(id);
  ++counters_.transmissions;
  airtime_[on_air.source][on_air.freq_hz] += on_air.duration;
  sources_[id] = &source;
  active_starts_.insert(on_air.start);

  const double sensitivity = link_.sensitivity(on_air.dr);
  auto& locked = locks_[id];
  for (RadioNode* node : nodes_) {
    if (node == &source) continue;
    if (rssi_dbm(on_air, *node) < sensitivity) continue;
    if (node->can_lock(on_air)) locked.push_back(node);
  }
  queue_.schedule(on_air.end(), [this, id] { finish(id); }, Phase::Normal);
  return id;
}

void Engine::finish(std::uint64_t id) {
  const Transmission tx = medium_.get(id);
  RadioNode* source = sources_.at(id);
  sources_.erase(id);
  active_starts_.erase(active_starts_.find(tx.start));

  std::vector<RadioNode*> locked = std::move(locks_[id]);
  locks_.erase(id);

  source->on_tx_end(tx);

  const Listening window{tx.freq_hz, tx.dr, tx.start, tx.end()};
  const double sensitivity = link_.sensitivity(tx.dr);
  for (RadioNode* node : locked) {
    std::vector<Candidate> candidates;
    for (const Transmission* other : medium_.overlapping(tx.freq_hz, tx.dr, tx.start, tx.end())) {
      if (other->source == node->name()) continue;
      candidates.push_back({other->id, other->freq_hz, other->dr, other->start, other->end(), rssi_dbm(*other, *node)});
    }
    const Arbitration a = arbitrate(window, candidates, sensitivity, link_.capture_threshold_db);
    const double rssi = rssi_dbm(tx, *node);
    if (a.outcome == Outcome::Decoded && a.decoded == id) {
      ++counters_.decoded;
      node->on_frame(tx, rssi, Outcome::Decoded);
    } else {
      ++counters_.collisions;
      node->on_frame(tx, rssi, Outcome::Collision);
    }
  }

  medium_.prune(active_starts_.empty() ? now() : *active_starts_.begin());
}

}  // namespace lorasim
