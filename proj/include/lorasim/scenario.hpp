#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorasim/energy.hpp"
#include "lorasim/engine.hpp"
#include "lorasim/mac_device.hpp"
#include "lorasim/netserver.hpp"
#include "lorasim/regulator.hpp"

namespace lorasim {

/// Parse or validation failure; the message starts with "line N" when the
/// problem can be pinned to the source.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DeviceSpec {
  std::string name;
  int count = 1;  // > 1 expands to name-0, name-1, ... with consecutive addresses
  std::string dev_eui;  // defaults to the name
  std::optional<std::uint32_t> dev_addr;
  bool joined = true;
  Position position;
  std::vector<double> channels;  // empty: the scenario's channel plan
  int dr = 0;
  double tx_power_dbm = 14.0;
  mac::TrafficModel traffic = mac::TrafficModel::Periodic;
  Duration period = std::chrono::seconds(5);
  Duration first_uplink = std::chrono::seconds(1);
  double jitter = 0.01;
  int payload_bytes = 12;
  std::optional<int> max_uplinks;
  int line = 0;
};

struct GatewaySpec {
  std::string name = "gw";
  Position position;
  std::vector<double> channels;  // empty: the scenario's channel plan plus RX2
  double tx_power_dbm = 14.0;
  int line = 0;
};

struct RelaySpec {
  std::string from;
  std::string to;
  int line = 0;
};

struct D2DDirective {
  Duration at{0};
  std::string initiator;
  std::string scanner;
  ns::D2DParams params;
  int line = 0;
};

struct Switches {
  bool device_duty_cycle = true;
  bool gateway_duty_cycle = true;
  bool duty_cycle_applies_to_d2d = true;
  double d2d_frame_loss_prob = 0.0;
  double capture_threshold_db = 6.0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  Duration end_time = std::chrono::seconds(60);
  std::vector<regulator::SubBand> bands = regulator::BandPlan::eu868().bands();
  std::vector<double> channels{868.1e6, 868.3e6, 868.5e6};
  mac::MacParams mac;
  ns::DownlinkPolicy downlink_policy = ns::DownlinkPolicy::PreferRw1;
  double join_success_probability = 1.0;
  phy::PathLossModel path_loss;
  phy::SensitivityTable sensitivity;
  std::string profile_ref;  // named profile file; empty means inline
  energy::PowerProfile profile;
  Switches switches;
  std::vector<GatewaySpec> gateways;
  std::vector<DeviceSpec> devices;
  std::vector<RelaySpec> relays;
  std::vector<D2DDirective> d2d;
};

/// Directory searched for named power profiles.
std::filesystem::path default_profile_dir();
std::filesystem::path default_scenario_dir();

energy::PowerProfile parse_profile(const std::string& yaml_text);
energy::PowerProfile load_profile(const std::filesystem::path& path);
std::string emit_profile(const energy::PowerProfile& profile);

/// Parses and validates. Named profiles resolve against `profile_dir`.
Scenario parse_scenario(const std::string& yaml_text, const std::filesystem::path& profile_dir = default_profile_dir());
Scenario load_scenario(const std::filesystem::path& path, const std::filesystem::path& profile_dir = default_profile_dir());
/// Resolves a bundled scenario by name (without extension) or a file path.
Scenario load_named_scenario(const std::string& name_or_path);

/// Canonical YAML: every field present, fixed order, shortest round-trip
/// numbers. emit(parse(emit(s))) == emit(s).
std::string emit_scenario(const Scenario& s);

/// Throws ScenarioError on the first problem found.
void validate(const Scenario& s);

/// One entry per simulated device after group expansion.
std::vector<DeviceSpec> expand_devices(const Scenario& s);

}  // namespace lorasim
