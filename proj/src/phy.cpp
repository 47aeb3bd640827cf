#include "lorasim/phy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lorasim::phy {

const std::array<DataRateDescriptor, kNumDataRates>& data_rate_table() {
  static const std::array<DataRateDescriptor, kNumDataRates> table{{
      {0, Modulation::LoRa, 12, 125000.0, 250.0, 59},
      {1, Modulation::LoRa, 11, 125000.0, 440.0, 59},
      {2, Modulation::LoRa, 10, 125000.0, 980.0, 59},
      {3, Modulation::LoRa, 9, 125000.0, 1760.0, 123},
      {4, Modulation::LoRa, 8, 125000.0, 3125.0, 230},
      {5, Modulation::LoRa, 7, 125000.0, 5470.0, 230},
      {6, Modulation::LoRa, 7, 250000.0, 11000.0, 230},
      {7, Modulation::GFSK, std::nullopt, 0.0, 50000.0, 230},
  }};
  return table;
}

const DataRateDescriptor& data_rate(int index) {
  if (index < 0 || index >= kNumDataRates) {
    throw std::domain_error("data rate index out of range: " + std::to_string(index));
  }
  return data_rate_table()[static_cast<std::size_t>(index)];
}

int lorawan_phy_bytes(int mac_payload_bytes) {
  if (mac_payload_bytes < 0) throw std::domain_error("negative MAC payload");
  return mac_payload_bytes == 0 ? kEmptyFrameBytes : kFrameOverheadBytes + mac_payload_bytes;
}

double raw_bit_rate(int sf, double bandwidth_hz) {
  if (sf < 7 || sf > 12) throw std::domain_error("spreading factor must be in 7..12");
  if (!(bandwidth_hz > 0.0)) throw std::domain_error("bandwidth must be positive");
  return static_cast<double>(sf) * bandwidth_hz / std::ldexp(1.0, sf);
}

Duration symbol_time(const DataRateDescriptor& dr) {
  if (dr.modulation != Modulation::LoRa) throw std::domain_error("GFSK has no LoRa symbol time");
  const auto chips = static_cast<std::int64_t>(1) << *dr.sf;
  const auto bw = static_cast<std::int64_t>(dr.bandwidth_hz);
  return Duration{chips * 1'000'000 / bw};
}

namespace {

bool uses_ldro(const DataRateDescriptor& dr, const FrameOptions& options) {
  if (options.low_data_rate_optimize) return *options.low_data_rate_optimize;
  return *dr.sf >= 11 && dr.bandwidth_hz == 125000.0;
}

}  // namespace

int payload_symbols(const DataRateDescriptor& dr, int phy_payload_bytes, const FrameOptions& options) {
  if (dr.modulation != Modulation::LoRa) throw std::domain_error("payload symbols are defined for LoRa only");
  const int sf = *dr.sf;
  const int de = uses_ldro(dr, options) ? 1 : 0;
  const int ih = options.explicit_header ? 0 : 1;
  const int crc = options.crc ? 1 : 0;
  const int numerator = 8 * phy_payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih;
  const int denominator = 4 * (sf - 2 * de);
  // Integer ceiling; a non-positive numerator contributes no extra blocks.
  const int blocks = numerator > 0 ? (numerator + denominator - 1) / denominator : 0;
  return 8 + blocks * (options.coding_rate + 4);
}

Duration time_on_air(const DataRateDescriptor& dr, int phy_payload_bytes, const FrameOptions& options) {
  if (phy_payload_bytes < 0 || phy_payload_bytes > kMaxPhyPayloadBytes) {
    throw std::domain_error("PHY payload must be within 0..255 bytes, got " + std::to_string(phy_payload_bytes));
  }
  if (options.coding_rate < 1 || options.coding_rate > 4) throw std::domain_error("coding rate must be 1..4");
  if (options.preamble_symbols < 6) throw std::domain_error("preamble must be at least 6 symbols");

  if (dr.modulation == Modulation::GFSK) {
    // 50 kbit/s: 20 us per bit, 40 bits of preamble and sync word.
    return Duration{(8 * static_cast<std::int64_t>(phy_payload_bytes) + 40) * 20};
  }

  // Count in quarter symbols so the 4.25-symbol sync stays integral.
  const std::int64_t quarters =
      4 * static_cast<std::int64_t>(options.preamble_symbols) + 17 +
      4 * static_cast<std::int64_t>(payload_symbols(dr, phy_payload_bytes, options));
  return Duration{quarters * symbol_time(dr).count() / 4};
}

SensitivityTable::SensitivityTable() : dbm_{-137.0, -134.5, -132.0, -129.0, -126.0, -124.0, -121.0, -108.0} {}

SensitivityTable::SensitivityTable(const std::array<double, kNumDataRates>& dbm) : dbm_(dbm) {}

double SensitivityTable::operator()(int dr_index) const {
  data_rate(dr_index);  // range check
  return dbm_[static_cast<std::size_t>(dr_index)];
}

double PathLossModel::loss_db(double distance_m) const {
  const double d = std::max(distance_m, min_distance_m);
  return reference_loss_db + 10.0 * exponent * std::log10(d / reference_distance_m);
}

}  // namespace lorasim::phy
