#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lorasim/energy.hpp"
#include "lorasim/network.hpp"
#include "lorasim/scenario.hpp"

namespace lorasim::table2 {

// Published reference cells.
inline constexpr double kConventionalTimeS = 225.6;
inline constexpr double kD2dTimeS = 30.2;
inline constexpr double kTransmitterJ = 15.696;
inline constexpr double kReceiverJ = 9.120;
inline constexpr double kInitiatorJ = 0.817;
inline constexpr double kScannerJ = 1.494;
inline constexpr int kConventionalUplinks = 47;  // floor(2400 / 51)

struct RoleEnergy {
  std::string role;
  std::string device;
  SimTime from{0};
  SimTime to{0};
  energy::Activity activity;
  double joules = 0.0;
  double reference_joules = 0.0;
  double relative_error() const { return joules / reference_joules - 1.0; }
};

struct Report {
  double conventional_time_s = 0.0;
  double d2d_time_s = 0.0;           // plan issue to initiator completion
  double exchange_s = 0.0;           // initiator first frame to completion
  double exchange_closed_form_s = 0.0;
  double scanner_listen_s = 0.0;     // scanner RX time before the exchange began
  bool d2d_completed = false;
  int conventional_delivered = 0;
  RoleEnergy transmitter;
  RoleEnergy receiver;
  RoleEnergy initiator;
  RoleEnergy scanner;
  energy::PowerProfile profile;  // the one the joules were computed with
  std::optional<energy::CalibrationResult> calibration;
  nlohmann::ordered_json conventional_metrics;
  nlohmann::ordered_json d2d_metrics;

  double time_ratio() const { return conventional_time_s / d2d_time_s; }
  double transmitter_energy_ratio() const { return transmitter.joules / initiator.joules; }
  double receiver_energy_ratio() const { return receiver.joules / scanner.joules; }

  nlohmann::ordered_json to_json() const;
  /// Human-readable comparison table.
  std::string text() const;
};

struct Options {
  std::filesystem::path scenario_dir = default_scenario_dir();
  /// Fit tx/rx power to the published joules (true) or bill with the
  /// scenarios' own profile as is (false).
  bool calibrate = true;
  std::optional<std::uint64_t> seed;
};

/// Energy windows, shared with the calibration so fit and replay agree.
/// Conventional transmitter: its first `uplinks` cycles.
RoleEnergy transmitter_window(const mac::EndDevice& dev, int uplinks);
/// Conventional receiver: the cycles whose receive windows delivered data.
RoleEnergy receiver_window(const mac::EndDevice& dev);
/// D2D device: from its first uplink at or after the plan to the end of its
/// first uplink cycle after resuming LoRaWAN.
RoleEnergy d2d_window(const mac::EndDevice& dev, SimTime plan_at);

Report run(const Options& options = {});

}  // namespace lorasim::table2
