#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorasim/phy.hpp"
#include "lorasim/time.hpp"

namespace lorasim::d2d {

inline constexpr std::uint8_t kSetupPort = 0xDD;
inline constexpr std::size_t kSetupBytes = 14;
inline constexpr std::uint8_t kCodecVersion = 1;
// Link-layer overhead of a D2D frame, same as a LoRaWAN data frame.
inline constexpr int kFrameOverheadBytes = 13;

struct CodecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Role : std::uint8_t { Initiator = 0, Scanner = 1 };

const char* to_string(Role r);

/// Link descriptor sent by the network server on port 0xDD.
struct SetupCommand {
  Role role = Role::Initiator;
  std::uint32_t freq_hz = 0;
  int dr = 0;
  int tx_power_dbm = 14;
  Duration t1{0};
  Duration t2{0};
  std::uint32_t peer_addr = 0;

  bool operator==(const SetupCommand&) const = default;
};

/// 14 bytes, big-endian:
///   [0]     version:4 | role:1 | reserved:3
///   [1..3]  frequency, 100 Hz units
///   [4]     DR
///   [5]     power, dBm (two's complement)
///   [6..7]  T1, 0.1 s units
///   [8..9]  T2, 0.1 s units
///   [10..13] peer address
/// Throws CodecError if a field is not representable at that resolution.
std::vector<std::uint8_t> encode_setup(const SetupCommand& cmd);

/// Throws CodecError on wrong length, unknown version or nonzero reserved bits.
SetupCommand decode_setup(const std::vector<std::uint8_t>& bytes);

enum class FrameKind { Data, Ack };

struct Frame {
  FrameKind kind = FrameKind::Data;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  int seq = 0;
  bool last = false;
  int app_bytes = 0;

  int phy_bytes() const { return app_bytes + kFrameOverheadBytes; }
};

struct SessionConfig {
  Duration turnaround = std::chrono::milliseconds(50);
  Duration guard = std::chrono::milliseconds(100);
  int total_bytes = 2400;  // initiator's application data
  int data_bytes = 240;    // per data frame
  int ack_bytes = 10;
  int max_attempts = 3;    // consecutive no-reply timeouts before giving up
  phy::FrameOptions frame_options = phy::FrameOptions::uplink();
};

enum class State { Armed, Scanning, Initiating, Exchange, Done, Failed };

const char* to_string(State s);

/// What the owning device must do right now.
struct Action {
  enum class Kind { Transmit, Listen, Idle, Finish };
  Kind kind;
  Frame frame{};  // Transmit only
};

/// One device's side of a D2D session. Pure: time is passed in and the
/// driver executes the returned actions and calls on_timer at next_timer().
class Session {
 public:
  Session(SetupCommand cmd, std::uint32_t self_addr, SessionConfig config = {});

  /// `reference` is when the setup arrived (T1 counts from it); `now` is when
  /// the radio is ready. The session deadline is now + T2.
  std::vector<Action> activate(SimTime now, SimTime reference);
  std::vector<Action> on_timer(SimTime now);
  std::vector<Action> on_tx_end(SimTime now);
  /// Frames not from the peer or not addressed to us are ignored and counted.
  std::vector<Action> on_receive(const Frame& frame, SimTime now);

  std::optional<SimTime> next_timer() const;

  State state() const { return state_; }
  bool finished() const { return finished_; }
  bool listening() const { return listening_; }
  bool transmitting() const { return in_tx_; }
  Role role() const { return cmd_.role; }
  const SetupCommand& command() const { return cmd_; }
  const SessionConfig& config() const { return cfg_; }
  std::uint32_t self() const { return self_; }

  Duration data_toa() const { return data_toa_; }
  Duration ack_toa() const { return ack_toa_; }
  int packet_count() const { return packets_; }

  // Bookkeeping for metrics.
  SimTime activated_at() const { return activated_at_; }
  SimTime deadline() const { return deadline_; }
  std::optional<SimTime> established_at() const { return established_at_; }
  std::optional<SimTime> first_tx_at() const { return first_tx_at_; }
  std::optional<SimTime> finished_at() const { return finished_at_; }
  int frames_sent() const { return frames_sent_; }
  int retransmissions() const { return retransmissions_; }
  int packets_acked() const { return acked_; }
  int bytes_delivered() const { return bytes_delivered_; }
  int ignored_frames() const { return ignored_; }
  int duplicates() const { return duplicates_; }
  int timeouts() const { return timeouts_; }

 private:
  Frame data_frame(int seq) const;
  void finish(std::vector<Action>& out, SimTime now, State terminal);
  void fire(std::vector<Action>& out, SimTime now);

  SetupCommand cmd_;
  std::uint32_t self_;
  SessionConfig cfg_;
  Duration data_toa_{0};
  Duration ack_toa_{0};
  int packets_ = 0;

  State state_ = State::Armed;
  bool finished_ = false;
  bool finish_pending_ = false;  // terminal state reached during a TX
  State pending_terminal_ = State::Failed;
  bool listening_ = false;
  bool in_tx_ = false;

  SimTime activated_at_{0};
  SimTime deadline_{0};
  std::optional<SimTime> start_at_;      // initial listen (scanner) or first TX (initiator)
  std::optional<SimTime> tx_at_;
  std::optional<SimTime> no_reply_at_;
  std::optional<SimTime> done_at_;       // initiator's grace after the final ack
  Frame pending_frame_{};

  int current_ = 0;   // initiator: packet awaiting ack; scanner: next expected
  int misses_ = 0;
  bool acked_last_ = false;

  std::optional<SimTime> established_at_;
  std::optional<SimTime> first_tx_at_;
  std::optional<SimTime> finished_at_;
  int frames_sent_ = 0;
  int retransmissions_ = 0;
  int acked_ = 0;
  int bytes_delivered_ = 0;
  int ignored_ = 0;
  int duplicates_ = 0;
  int timeouts_ = 0;
};

}  // namespace lorasim::d2d
