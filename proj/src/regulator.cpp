#include "lorasim/regulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lorasim::regulator {

BandPlan::BandPlan(std::vector<SubBand> bands) : bands_(std::move(bands)) {
  for (const auto& b : bands_) {
    if (!(b.freq_high_hz > b.freq_low_hz)) throw ConfigError("band " + b.id + " has an empty frequency range");
    if (!(b.duty_cycle_limit > 0.0 && b.duty_cycle_limit <= 1.0)) {
      throw ConfigError("band " + b.id + " duty cycle must be in (0, 1]");
    }
  }
  auto sorted = bands_;
  std::sort(sorted.begin(), sorted.end(), [](const SubBand& a, const SubBand& b) { return a.freq_low_hz < b.freq_low_hz; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].freq_low_hz < sorted[i - 1].freq_high_hz) {
      throw ConfigError("bands " + sorted[i - 1].id + " and " + sorted[i].id + " overlap");
    }
  }
}

BandPlan BandPlan::eu868() {
  return BandPlan({
      {"g", 865.0e6, 868.0e6, 0.01, 14.0},
      {"g1", 868.0e6, 868.6e6, 0.01, 14.0},
      {"g2", 868.7e6, 869.2e6, 0.001, 14.0},
      {"g3", 869.4e6, 869.65e6, 0.10, 27.0},
      {"g4", 869.7e6, 870.0e6, 0.01, 14.0},
  });
}

const SubBand& BandPlan::classify(double freq_hz) const {
  for (const auto& b : bands_) {
    if (b.contains(freq_hz)) return b;
  }
  std::ostringstream os;
  os << "frequency " << freq_hz << " Hz is outside every configured sub-band";
  throw ConfigError(os.str());
}

Duration off_time(Duration toa, double duty_cycle_limit) {
  if (duty_cycle_limit >= 1.0) return Duration{0};
  const double raw = static_cast<double>(toa.count()) * (1.0 / duty_cycle_limit - 1.0);
  // Tolerate representation error on exact products (e.g. 2 s at 1%).
  return Duration{static_cast<std::int64_t>(std::ceil(raw - 1e-6))};
}

SimTime DutyLedger::next_allowed_time(const SubBand& band, SimTime now) const {
  const auto it = records_.find(band.id);
  if (it == records_.end()) return now;
  return std::max(now, it->second.next_allowed);
}

void DutyLedger::record_transmission(const SubBand& band, SimTime start, Duration toa) {
  auto& rec = records_[band.id];
  if (start < rec.next_allowed) {
    std::ostringstream os;
    os << "transmission in band " << band.id << " at " << start.count() << " us precedes next allowed time "
       << rec.next_allowed.count() << " us";
    throw ContractViolation(os.str());
  }
  rec.last_tx_end = start + toa;
  rec.accumulated_on_air += toa;
  rec.next_allowed = rec.last_tx_end + off_time(toa, band.duty_cycle_limit);
}

const DutyLedger::Record* DutyLedger::find(const std::string& band_id) const {
  const auto it = records_.find(band_id);
  return it == records_.end() ? nullptr : &it->second;
}

Duration DutyLedger::accumulated(const std::string& band_id) const {
  const auto* r = find(band_id);
  return r ? r->accumulated_on_air : Duration{0};
}

}  // namespace lorasim::regulator
