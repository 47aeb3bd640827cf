#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorasim/d2d.hpp"
#include "lorasim/engine.hpp"
#include "lorasim/lorawan.hpp"
#include "lorasim/mac_device.hpp"
#include "lorasim/regulator.hpp"

namespace lorasim::ns {

struct DownlinkSizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlanningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Gap too small or too large for the devices' uplink periods.
struct InfeasibleTiming : PlanningError {
  using PlanningError::PlanningError;
};

enum class DownlinkPolicy { PreferRw1, Rw2Only };

const char* to_string(DownlinkPolicy p);

class NetworkServer;

struct GatewayConfig {
  std::string name = "gw";
  Position position;
  std::vector<double> channels;  // listens on all of them, every DR at once
  double tx_power_dbm = 14.0;
};

class Gateway : public RadioNode {
 public:
  Gateway(Engine& engine, GatewayConfig config, const regulator::BandPlan& bands, bool duty_cycle);

  void connect(NetworkServer* ns) { ns_ = ns; }

  /// True if a downlink of `toa` may start at `at` on `freq_hz`: the band's
  /// off-time has elapsed and it does not overlap an earlier reservation.
  bool can_transmit(SimTime at, double freq_hz, Duration toa) const;
  /// Books the band and the radio now, transmits at `at`.
  void reserve(SimTime at, double freq_hz, int dr, int phy_bytes, Duration toa, Payload payload,
               std::function<void(SimTime)> on_sent);

  const std::string& name() const override { return config_.name; }
  Position position() const override { return config_.position; }
  bool can_lock(const Transmission& tx) override;
  void on_tx_end(const Transmission& tx) override;
  void on_frame(const Transmission& tx, double rssi_dbm, Outcome outcome) override;

  const regulator::DutyLedger& duty() const { return duty_; }
  std::uint64_t frames_decoded() const { return decoded_; }
  std::uint64_t frames_lost() const { return lost_; }
  std::uint64_t downlinks_sent() const { return sent_; }

 private:
  Engine& engine_;
  GatewayConfig config_;
  const regulator::BandPlan& bands_;
  bool duty_cycle_;
  NetworkServer* ns_ = nullptr;
  regulator::DutyLedger duty_;
  SimTime busy_until_{0};
  std::map<std::uint64_t, std::function<void(SimTime)>> on_sent_;
  std::uint64_t decoded_ = 0;
  std::uint64_t lost_ = 0;
  std::uint64_t sent_ = 0;
};

/// What the server knows about a device from provisioning.
struct DeviceInfo {
  std::string name;
  std::string dev_eui;
  std::optional<std::uint32_t> dev_addr;
  int uplink_dr = 0;
  int uplink_payload_bytes = 0;
  mac::TrafficModel traffic = mac::TrafficModel::Periodic;
  Duration period{0};
  double jitter = 0.0;
};

struct D2DParams {
  std::uint32_t freq_hz = 865'000'000;
  int dr = 6;
  int tx_power_dbm = 14;
  Duration gap = std::chrono::seconds(15);  // initiator T1; the scanner's is 0
  Duration t2 = std::chrono::seconds(30);
  d2d::SessionConfig session;
};

struct D2DPlan {
  std::uint32_t initiator = 0;
  std::uint32_t scanner = 0;
  d2d::SetupCommand setup_initiator;
  d2d::SetupCommand setup_scanner;
  SimTime issued_at{0};
  // Latest time by which both setups are expected to have arrived.
  SimTime issue_deadline{0};
};

/// Inputs of the rendezvous feasibility check, all in the plan's frame.
struct PlanTiming {
  Duration scanner_period{0};
  Duration initiator_period{0};
  double jitter = 0.0;
  Duration scanner_uplink_toa{0};
  Duration initiator_uplink_toa{0};
  Duration setup_toa{0};
  Duration rx1_delay{0};
  Duration rx2_delay{0};
  Duration gap{0};
  Duration t2{0};
  Duration exchange{0};
};

struct PlanBounds {
  Duration min_gap{0};       // gap must exceed this
  Duration max_gap{0};       // gap must not exceed this
  Duration scanner_worst{0}; // plan issue to scanner setup reception, worst case
  Duration initiator_lag{0}; // scanner reception to initiator reception, worst case
};

/// Lower bound: even if the initiator's setup went out at once and rode its
/// very next uplink, its first frame comes after the scanner's worst-case
/// setup arrival. Upper bound: with the initiator's setup arriving as late as
/// its uplink period allows after the scanner's, the exchange still ends
/// before the scanner's T2 expires.
PlanBounds plan_bounds(const PlanTiming& t);
/// Throws InfeasibleTiming when the gap falls outside plan_bounds.
void check_plan_timing(const PlanTiming& t);

/// Idealised exchange length: packets x (data + turnaround + ack + turnaround).
Duration exchange_duration(const d2d::SessionConfig& cfg, int dr);

struct NsCounters {
  std::uint64_t deliveries = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t replays = 0;
  std::uint64_t unknown_device = 0;
  std::uint64_t downlinks_scheduled_rw1 = 0;
  std::uint64_t downlinks_scheduled_rw2 = 0;
  std::uint64_t downlink_deferrals = 0;
  std::uint64_t downlinks_rejected = 0;
  std::uint64_t joins_accepted = 0;
  std::uint64_t joins_rejected = 0;
};

struct UplinkMetadata {
  std::uint64_t transmission = 0;
  std::string gateway;
  double rssi_dbm = 0.0;
};

struct UplinkDelivery {
  SimTime at{0};
  std::uint32_t dev_addr = 0;
  std::uint32_t fcnt = 0;
  int message_id = -1;
  SimTime tx_start{0};
};

class NetworkServer {
 public:
  struct Config {
    DownlinkPolicy policy = DownlinkPolicy::PreferRw1;
    double join_success_probability = 1.0;
    std::uint32_t first_assigned_addr = 0x26000001;
  };

  NetworkServer(Engine& engine, Config config, const mac::MacParams& mac);

  void add_gateway(Gateway* gw);
  /// Provisioned (ABP) devices carry their address; OTAA devices get one on join.
  void register_device(const DeviceInfo& info);
  /// Forward every application uplink of `from` to `to` as a downlink.
  void add_relay(std::uint32_t from, std::uint32_t to);

  void on_uplink(Gateway& gw, const Transmission& tx, double rssi_dbm);

  /// Queues a downlink for the device's next receive window. Throws
  /// DownlinkSizeError if no window the policy allows can carry it.
  void queue_downlink(std::uint32_t dev_addr, int port, std::vector<std::uint8_t> payload, int message_id = -1,
                      std::function<void(SimTime)> on_sent = {});

  /// Builds the paired setups. Throws PlanningError for a degenerate pair or
  /// unjoined device, InfeasibleTiming for an unsafe gap.
  D2DPlan plan_d2d(std::uint32_t initiator, std::uint32_t scanner, const D2DParams& params, SimTime now) const;
  /// Queues the scanner's setup now and the initiator's once the scanner's
  /// has gone out.
  void issue(const D2DPlan& plan);

  std::optional<std::uint32_t> address_of(const std::string& name) const;
  bool joined(std::uint32_t dev_addr) const;
  const NsCounters& counters() const { return counters_; }
  const std::vector<UplinkMetadata>& metadata() const { return metadata_; }
  const std::vector<UplinkDelivery>& deliveries() const { return deliveries_; }
  const std::vector<D2DPlan>& plans() const { return plans_; }
  std::size_t queued(std::uint32_t dev_addr) const;

 private:
  struct QueuedDownlink {
    int port;
    std::vector<std::uint8_t> payload;
    int message_id;
    std::function<void(SimTime)> on_sent;
  };

  struct DeviceRecord {
    DeviceInfo info;
    bool joined = false;
    std::optional<std::uint32_t> last_fcnt;
    std::uint32_t fcnt_down = 0;
    std::deque<QueuedDownlink> queue;
  };

  void handle_join(Gateway& gw, const Transmission& tx, const lorawan::JoinRequest& req);
  void place_downlink(DeviceRecord& dev, Gateway& gw, const Transmission& uplink);
  DeviceRecord* by_addr(std::uint32_t addr);
  const DeviceRecord* by_addr(std::uint32_t addr) const;
  int max_payload_for(const DeviceRecord& dev) const;

  Engine& engine_;
  Config config_;
  const mac::MacParams& mac_;
  Rng rng_;
  std::vector<Gateway*> gateways_;
  std::vector<DeviceRecord> devices_;
  std::map<std::uint32_t, std::size_t> addr_index_;
  std::map<std::uint32_t, std::uint32_t> relays_;
  std::set<std::uint64_t> seen_;
  std::uint32_t next_addr_;
  NsCounters counters_;
  std::vector<UplinkMetadata> metadata_;
  std::vector<UplinkDelivery> deliveries_;
  std::vector<D2DPlan> plans_;
};

}  // namespace lorasim::ns
