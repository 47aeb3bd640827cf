#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lorasim/d2d.hpp"
#include "lorasim/energy.hpp"
#include "lorasim/engine.hpp"
#include "lorasim/lorawan.hpp"
#include "lorasim/regulator.hpp"

namespace lorasim::mac {

using namespace std::chrono_literals;

enum class MacState { Sleep, Tx, WaitRw1, Rx1, WaitRw2, Rx2, D2dSuspended };

const char* to_string(MacState s);

enum class TrafficModel { Periodic, Poisson };

/// Network-wide class A timing and switches.
struct MacParams {
  Duration rx1_delay = 1s;
  Duration rx2_delay = 2s;
  double rx2_freq_hz = 869.525e6;
  int rx2_dr = 3;
  int rx1_dr_offset = 0;
  // Receive windows stay open long enough to detect this many preamble symbols.
  int preamble_detect_symbols = 8;
  Duration join_accept_delay1 = 5s;
  Duration join_accept_delay2 = 6s;
  Duration join_backoff = 10s;

  // Host controller to radio command cost (UART round trip) around D2D.
  Duration command_latency{0};
  int setup_commands = 6;
  int resume_commands = 1;

  bool device_duty_cycle = true;
  bool duty_cycle_applies_to_d2d = true;
  double d2d_frame_loss_prob = 0.0;

  int rx1_dr(int uplink_dr) const { return uplink_dr - rx1_dr_offset < 0 ? 0 : uplink_dr - rx1_dr_offset; }
  Duration rx_window(int dr) const;
};

struct DeviceConfig {
  std::string name;
  std::string dev_eui;
  std::optional<std::uint32_t> dev_addr;  // set for pre-provisioned devices
  bool joined = true;
  Position position;
  std::vector<double> channels;
  int dr = 0;
  double tx_power_dbm = 14.0;

  TrafficModel traffic = TrafficModel::Periodic;
  Duration period = 5s;  // mean interval for poisson traffic
  Duration first_uplink = 1s;
  double jitter = 0.01;  // periodic: uniform +-jitter * period
  int payload_bytes = 12;
  std::optional<int> max_uplinks;

  energy::PowerProfile profile;
};

/// One uplink and the receive windows that follow it.
struct UplinkCycle {
  SimTime start{0};
  SimTime tx_end{0};
  SimTime end{0};
  std::uint32_t fcnt = 0;
  double freq_hz = 0.0;
  bool join = false;
  std::optional<lorawan::Window> downlink;
};

struct Delivery {
  SimTime at{0};
  int port = 0;
  int bytes = 0;
  int message_id = -1;
  lorawan::Window window = lorawan::Window::RW2;
};

struct SessionRecord {
  d2d::Role role = d2d::Role::Initiator;
  std::uint32_t peer = 0;
  SimTime setup_received{0};
  SimTime activated{0};
  std::optional<SimTime> first_tx;
  std::optional<SimTime> established;
  SimTime finished{0};
  SimTime resumed{0};
  d2d::State outcome = d2d::State::Failed;
  int frames_sent = 0;
  int retransmissions = 0;
  int packets_acked = 0;
  int bytes_delivered = 0;
  int timeouts = 0;
  int duty_blocked = 0;
};

struct DeviceCounters {
  std::uint64_t uplinks_sent = 0;
  std::uint64_t slots_skipped_suspended = 0;
  std::uint64_t slots_overrun = 0;
  std::uint64_t duty_deferrals = 0;
  std::uint64_t downlinks_rw1 = 0;
  std::uint64_t downlinks_rw2 = 0;
  std::uint64_t downlinks_lost = 0;
  std::uint64_t setup_decode_errors = 0;
  std::uint64_t join_requests = 0;
  std::uint64_t d2d_frames_lost = 0;
};

class EndDevice : public RadioNode {
 public:
  EndDevice(Engine& engine, DeviceConfig config, const MacParams& params, const regulator::BandPlan& bands);

  /// Schedules the first uplink or join attempt. Call once before running.
  void start();
  /// Closes the energy ledger at the end of the run.
  void stop(SimTime end);

  /// Knowledge both peers share about the data exchange; the setup command
  /// only carries link parameters.
  void set_d2d_session_config(const d2d::SessionConfig& cfg) { d2d_config_ = cfg; }

  // RadioNode
  const std::string& name() const override { return config_.name; }
  Position position() const override { return config_.position; }
  bool can_lock(const Transmission& tx) override;
  void on_tx_end(const Transmission& tx) override;
  void on_frame(const Transmission& tx, double rssi_dbm, Outcome outcome) override;

  MacState state() const { return state_; }
  bool joined() const { return joined_; }
  std::optional<std::uint32_t> dev_addr() const { return dev_addr_; }
  std::uint32_t fcnt_up() const { return fcnt_up_; }
  std::uint32_t fcnt_down() const { return fcnt_down_; }
  const DeviceConfig& config() const { return config_; }
  const DeviceCounters& counters() const { return counters_; }
  const energy::EnergyLedger& energy() const { return energy_; }
  const regulator::DutyLedger& duty() const { return duty_; }
  const std::vector<UplinkCycle>& cycles() const { return cycles_; }
  const std::vector<Delivery>& deliveries() const { return deliveries_; }
  const std::vector<SessionRecord>& sessions() const { return sessions_; }
  const std::optional<d2d::Session>& session() const { return session_; }
  const std::optional<d2d::SetupCommand>& pending_d2d() const { return pending_d2d_; }

 private:
  void schedule_slot();
  void on_slot();
  void try_send();
  void begin_uplink(double freq_hz);
  void begin_join(double freq_hz);
  void join_attempt();
  void start_cycle(const Transmission& tx, bool join);
  void open_window(lorawan::Window w);
  void close_window();
  void end_window();
  void end_cycle();
  bool handle_window_frame(const Transmission& tx);

  void suspend_for_d2d();
  void apply(const std::vector<d2d::Action>& actions);
  void d2d_transmit(const d2d::Frame& frame);
  void d2d_tx_done();
  void finish_session();

  Duration uplink_toa(int phy_bytes) const;
  nlohmann::ordered_json base_fields() const;

  Engine& engine_;
  DeviceConfig config_;
  const MacParams& params_;
  const regulator::BandPlan& bands_;
  Rng rng_;
  Rng loss_rng_;

  MacState state_ = MacState::Sleep;
  bool joined_ = false;
  std::optional<std::uint32_t> dev_addr_;
  std::uint32_t fcnt_up_ = 0;
  std::uint32_t fcnt_down_ = 0;
  std::uint32_t join_nonce_ = 0;
  regulator::DutyLedger duty_;
  energy::EnergyLedger energy_;

  // Uplink scheduling.
  SimTime nominal_{0};
  bool slots_started_ = false;
  bool traffic_done_ = false;
  bool pending_uplink_ = false;
  std::optional<EventId> tx_event_;

  // Receive windows.
  bool join_cycle_ = false;
  double cycle_freq_ = 0.0;
  int cycle_dr_ = 0;
  SimTime cycle_tx_end_{0};
  double listen_freq_ = 0.0;
  int listen_dr_ = 0;
  std::optional<EventId> close_event_;
  bool close_pending_ = false;
  std::optional<std::uint64_t> locked_;

  // D2D.
  d2d::SessionConfig d2d_config_;
  std::optional<d2d::SetupCommand> pending_d2d_;
  SimTime setup_received_{0};
  std::optional<d2d::Session> session_;
  std::optional<EventId> session_timer_;
  int session_duty_blocked_ = 0;
  bool resuming_ = false;

  DeviceCounters counters_;
  std::vector<UplinkCycle> cycles_;
  std::vector<Delivery> deliveries_;
  std::vector<SessionRecord> sessions_;
};

}  // namespace lorasim::mac
