#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorasim/time.hpp"

namespace lorasim::regulator {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a transmission is recorded before the band allows it. This
/// always indicates a scheduling bug in the caller.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct SubBand {
  std::string id;
  double freq_low_hz = 0.0;
  double freq_high_hz = 0.0;  // exclusive
  double duty_cycle_limit = 1.0;
  double max_erp_dbm = 14.0;

  bool contains(double freq_hz) const { return freq_hz >= freq_low_hz && freq_hz < freq_high_hz; }
};

class BandPlan {
 public:
  /// Validates that bands are disjoint and limits are in (0, 1].
  explicit BandPlan(std::vector<SubBand> bands);

  /// Default EU 868 table: g (865.0-868.0, 1%), g1 (868.0-868.6, 1%),
  /// g2 (868.7-869.2, 0.1%), g3 (869.4-869.65, 10%), g4 (869.7-870.0, 1%).
  static BandPlan eu868();

  const SubBand& classify(double freq_hz) const;
  const std::vector<SubBand>& bands() const { return bands_; }

 private:
  std::vector<SubBand> bands_;
};

/// Off-time after a transmission of `toa` under `duty_cycle_limit`:
/// toa * (1/dc - 1), rounded up to the microsecond.
Duration off_time(Duration toa, double duty_cycle_limit);

class DutyLedger {
 public:
  struct Record {
    SimTime last_tx_end{0};
    Duration accumulated_on_air{0};
    SimTime next_allowed{0};
  };

  SimTime next_allowed_time(const SubBand& band, SimTime now) const;

  /// Throws ContractViolation if `start` precedes the band's next allowed time.
  void record_transmission(const SubBand& band, SimTime start, Duration toa);

  const Record* find(const std::string& band_id) const;
  Duration accumulated(const std::string& band_id) const;
  const std::map<std::string, Record>& records() const { return records_; }

 private:
  std::map<std::string, Record> records_;
};

}  // namespace lorasim::regulator
