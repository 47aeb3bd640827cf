#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "lorasim/time.hpp"

namespace lorasim::phy {

enum class Modulation { LoRa, GFSK };

/// One row of the EU 868 MHz data-rate table.
struct DataRateDescriptor {
  int index;
  Modulation modulation;
  std::optional<int> sf;  // absent for GFSK
  double bandwidth_hz;
  double nominal_phy_rate_bps;
  int max_mac_payload_bytes;
};

inline constexpr int kNumDataRates = 8;
inline constexpr int kMaxPhyPayloadBytes = 255;

// LoRaWAN framing overhead: MHDR(1) + FHDR(7) + FPort(1) + MIC(4).
inline constexpr int kFrameOverheadBytes = 13;
// An uplink without FPort/FRMPayload: MHDR + FHDR + MIC.
inline constexpr int kEmptyFrameBytes = 12;

const std::array<DataRateDescriptor, kNumDataRates>& data_rate_table();

/// Throws std::domain_error for an index outside 0..7.
const DataRateDescriptor& data_rate(int index);

/// PHY payload size of a LoRaWAN data frame carrying `mac_payload_bytes`
/// application bytes (0 means no FPort).
int lorawan_phy_bytes(int mac_payload_bytes);

/// Raw chirp rate SF * BW / 2^SF, before forward error correction.
double raw_bit_rate(int sf, double bandwidth_hz);

struct FrameOptions {
  int preamble_symbols = 8;
  bool explicit_header = true;
  bool crc = true;
  int coding_rate = 1;  // 1..4 meaning 4/5..4/8
  // Low-data-rate optimisation; unset means "on for SF >= 11 at 125 kHz".
  std::optional<bool> low_data_rate_optimize;

  static FrameOptions uplink() { return {}; }
  static FrameOptions downlink() {
    FrameOptions o;
    o.crc = false;
    return o;
  }
};

/// Symbol duration 2^SF / BW in microseconds. Exact for every LoRa row.
Duration symbol_time(const DataRateDescriptor& dr);

/// Number of payload symbols (header block included, preamble excluded).
int payload_symbols(const DataRateDescriptor& dr, int phy_payload_bytes, const FrameOptions& options);

/// Airtime from preamble start to last payload symbol. Throws
/// std::domain_error for payloads above 255 bytes.
Duration time_on_air(const DataRateDescriptor& dr, int phy_payload_bytes,
                     const FrameOptions& options = FrameOptions::uplink());

inline Duration time_on_air(int dr_index, int phy_payload_bytes,
                            const FrameOptions& options = FrameOptions::uplink()) {
  return time_on_air(data_rate(dr_index), phy_payload_bytes, options);
}

/// Per-DR receiver sensitivity in dBm. The defaults are monotone: lower DR
/// index means a more sensitive (more negative) threshold.
class SensitivityTable {
 public:
  SensitivityTable();
  explicit SensitivityTable(const std::array<double, kNumDataRates>& dbm);

  double operator()(int dr_index) const;
  const std::array<double, kNumDataRates>& values() const { return dbm_; }

 private:
  std::array<double, kNumDataRates> dbm_;
};

/// Log-distance path loss: PL(d) = PL0 + 10 n log10(d / d0).
struct PathLossModel {
  double reference_loss_db = 127.5;
  double reference_distance_m = 1000.0;
  double exponent = 2.9;
  double min_distance_m = 1.0;

  double loss_db(double distance_m) const;
  double rssi_dbm(double tx_power_dbm, double distance_m) const {
    return tx_power_dbm - loss_db(distance_m);
  }
};

}  // namespace lorasim::phy
