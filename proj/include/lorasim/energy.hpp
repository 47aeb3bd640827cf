#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lorasim/time.hpp"

namespace lorasim::energy {

struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RadioState { Sleep, Tx, Rx };

const char* to_string(RadioState s);

/// Power draw per radio state. Idle listening is billed as RX.
struct PowerProfile {
  std::string name = "unnamed";
  double supply_voltage = 3.0;
  // Transmit power curve, dBm -> watts. Piecewise linear between points and
  // clamped outside them. Must be non-decreasing.
  std::map<double, double> tx_watts;
  double rx_watts = 0.0;
  double sleep_watts = 0.0;
  double mcu_joules_per_command = 0.0;

  double tx(double dbm) const;
  double power(RadioState state, double tx_dbm) const;
  /// Throws std::invalid_argument on negative powers or a decreasing tx curve.
  void validate() const;
};

/// Linear sufficient statistics of a device's radio activity over a window;
/// joules for any profile follow without re-running the trace.
struct Activity {
  std::map<double, double> tx_seconds;  // keyed by tx power in dBm
  double rx_seconds = 0.0;
  double sleep_seconds = 0.0;
  std::int64_t commands = 0;

  double total_tx_seconds() const;
  double total_seconds() const { return total_tx_seconds() + rx_seconds + sleep_seconds; }
  double joules(const PowerProfile& profile) const;
};

class EnergyLedger {
 public:
  struct Segment {
    SimTime start;
    SimTime end;
    RadioState state;
    double tx_dbm;
  };

  struct CommandMark {
    SimTime at;
    int count;
  };

  EnergyLedger() = default;
  explicit EnergyLedger(PowerProfile profile);

  /// joules += power(state) * duration. Negative durations are a contract
  /// violation.
  void accrue(RadioState state, Duration duration, const PowerProfile& profile, double tx_dbm = 0.0);

  // Time-driven use: the owning device reports every radio state change and
  // the ledger integrates between them.
  void begin(SimTime t0, RadioState initial = RadioState::Sleep);
  void transition(SimTime now, RadioState next, double tx_dbm = 0.0);
  void command(SimTime now, int count = 1);
  void finish(SimTime end);

  RadioState state() const { return current_; }
  double seconds(RadioState s) const;
  double joules(RadioState s) const;
  double total_joules() const;
  double command_joules() const { return command_joules_; }
  std::int64_t commands() const { return commands_; }

  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<CommandMark>& command_marks() const { return marks_; }

  /// Activity clipped to [from, to).
  Activity activity(SimTime from, SimTime to) const;
  Activity activity() const;

  const PowerProfile& profile() const { return profile_; }

 private:
  PowerProfile profile_;
  std::map<RadioState, double> seconds_;
  std::map<RadioState, double> joules_;
  double command_joules_ = 0.0;
  std::int64_t commands_ = 0;

  bool tracking_ = false;
  RadioState current_ = RadioState::Sleep;
  double current_dbm_ = 0.0;
  SimTime since_{0};
  std::vector<Segment> segments_;
  std::vector<CommandMark> marks_;
};

struct CalibrationRow {
  std::string role;
  Activity activity;
  double target_joules = 0.0;
};

/// Inputs of the Table II fit. The transmitter row pins the transmit power,
/// the receiver and scanner rows pin receive power in the least-squares
/// sense (relative residuals). Optional check rows are only reported.
struct CalibrationTargets {
  CalibrationRow transmitter;
  CalibrationRow receiver;
  CalibrationRow scanner;
  std::vector<CalibrationRow> checks;
  double tx_power_dbm = 14.0;
};

struct Residual {
  std::string role;
  double target_joules;
  double fitted_joules;
  double relative_error;
};

struct CalibrationResult {
  PowerProfile profile;
  double tx_watts = 0.0;
  double rx_watts = 0.0;
  std::vector<Residual> residuals;
};

/// Solves tx and rx power from Table II style targets. Sleep power, MCU
/// overhead and the tx curve shape come from `base`. Throws CalibrationError
/// when the fit needs a negative or non-finite power.
CalibrationResult calibrate(const PowerProfile& base, const CalibrationTargets& targets);

}  // namespace lorasim::energy
