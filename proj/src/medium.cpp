#include "lorasim/medium.hpp"

#include <algorithm>
#include <stdexcept>

namespace lorasim {

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Decoded:
      return "decoded";
    case Outcome::Collision:
      return "collision";
    case Outcome::BelowSensitivity:
      return "below_sensitivity";
    case Outcome::None:
      return "none";
  }
  return "?";
}

Arbitration arbitrate(const Listening& l, const std::vector<Candidate>& overlapping, double sensitivity_dbm,
                      double capture_threshold_db) {
  std::vector<const Candidate*> heard;
  bool any_on_channel = false;
  for (const auto& c : overlapping) {
    if (c.freq_hz != l.freq_hz || c.dr != l.dr) continue;
    if (!(c.start < l.to && l.from < c.end)) continue;
    any_on_channel = true;
    if (c.rssi_dbm >= sensitivity_dbm) heard.push_back(&c);
  }
  if (!any_on_channel) return {Outcome::None, std::nullopt};
  if (heard.empty()) return {Outcome::BelowSensitivity, std::nullopt};
  if (heard.size() == 1) return {Outcome::Decoded, heard.front()->id};

  std::sort(heard.begin(), heard.end(), [](const Candidate* a, const Candidate* b) {
    if (a->rssi_dbm != b->rssi_dbm) return a->rssi_dbm > b->rssi_dbm;
    return a->id < b->id;
  });
  if (heard[0]->rssi_dbm - heard[1]->rssi_dbm >= capture_threshold_db) return {Outcome::Decoded, heard[0]->id};
  return {Outcome::Collision, std::nullopt};
}

std::uint64_t Medium::begin(Transmission tx) {
  tx.id = next_id_++;
  const auto id = tx.id;
  frames_.emplace(id, std::move(tx));
  return id;
}

const Transmission& Medium::get(std::uint64_t id) const {
  const auto it = frames_.find(id);
  if (it == frames_.end()) throw std::out_of_range("unknown transmission id " + std::to_string(id));
  return it->second;
}

std::vector<const Transmission*> Medium::overlapping(double freq_hz, int dr, SimTime from, SimTime to) const {
  std::vector<const Transmission*> out;
  for (const auto& [id, tx] : frames_) {
    if (tx.freq_hz == freq_hz && tx.dr == dr && tx.start < to && from < tx.end()) out.push_back(&tx);
  }
  return out;
}

void Medium::prune(SimTime t) {
  for (auto it = frames_.begin(); it != frames_.end();) {
    if (it->second.end() <= t) {
      it = frames_.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace lorasim
