#include "lorasim/energy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lorasim::energy {

const char* to_string(RadioState s) {
  switch (s) {
    case RadioState::Sleep:
      return "sleep";
    case RadioState::Tx:
      return "tx";
    case RadioState::Rx:
      return "rx";
  }
  return "?";
}

double PowerProfile::tx(double dbm) const {
  if (tx_watts.empty()) return 0.0;
  auto hi = tx_watts.lower_bound(dbm);
  if (hi == tx_watts.end()) return std::prev(hi)->second;
  if (hi->first == dbm || hi == tx_watts.begin()) return hi->second;
  auto lo = std::prev(hi);
  const double f = (dbm - lo->first) / (hi->first - lo->first);
  return lo->second + f * (hi->second - lo->second);
}

double PowerProfile::power(RadioState state, double tx_dbm) const {
  switch (state) {
    case RadioState::Sleep:
      return sleep_watts;
    case RadioState::Tx:
      return tx(tx_dbm);
    case RadioState::Rx:
      return rx_watts;
  }
  return 0.0;
}

void PowerProfile::validate() const {
  if (rx_watts < 0 || sleep_watts < 0 || mcu_joules_per_command < 0 || supply_voltage <= 0) {
    throw std::invalid_argument("power profile " + name + " has a negative entry");
  }
  double prev = -1.0;
  for (const auto& [dbm, w] : tx_watts) {
    if (w < 0) throw std::invalid_argument("power profile " + name + " has negative tx power");
    if (w < prev) throw std::invalid_argument("power profile " + name + " tx curve decreases with dBm");
    prev = w;
  }
}

double Activity::total_tx_seconds() const {
  double s = 0.0;
  for (const auto& [dbm, sec] : tx_seconds) s += sec;
  return s;
}

double Activity::joules(const PowerProfile& profile) const {
  double j = rx_seconds * profile.rx_watts + sleep_seconds * profile.sleep_watts +
             static_cast<double>(commands) * profile.mcu_joules_per_command;
  for (const auto& [dbm, sec] : tx_seconds) j += sec * profile.tx(dbm);
  return j;
}

EnergyLedger::EnergyLedger(PowerProfile profile) : profile_(std::move(profile)) { profile_.validate(); }

void EnergyLedger::accrue(RadioState state, Duration duration, const PowerProfile& profile, double tx_dbm) {
  if (duration.count() < 0) throw ContractViolation("negative duration accrued to energy ledger");
  if (duration.count() == 0) return;
  const double s = to_seconds(duration);
  seconds_[state] += s;
  joules_[state] += profile.power(state, tx_dbm) * s;
}

void EnergyLedger::begin(SimTime t0, RadioState initial) {
  tracking_ = true;
  current_ = initial;
  current_dbm_ = 0.0;
  since_ = t0;
}

void EnergyLedger::transition(SimTime now, RadioState next, double tx_dbm) {
  if (!tracking_) begin(now, RadioState::Sleep);
  if (now < since_) throw ContractViolation("energy ledger transition goes back in time");
  if (now > since_) {
    accrue(current_, now - since_, profile_, current_dbm_);
    if (!segments_.empty() && segments_.back().end == since_ && segments_.back().state == current_ &&
        segments_.back().tx_dbm == current_dbm_) {
      segments_.back().end = now;
    } else {
      segments_.push_back({since_, now, current_, current_dbm_});
    }
  }
  current_ = next;
  current_dbm_ = next == RadioState::Tx ? tx_dbm : 0.0;
  since_ = now;
}

void EnergyLedger::command(SimTime now, int count) {
  commands_ += count;
  command_joules_ += count * profile_.mcu_joules_per_command;
  marks_.push_back({now, count});
}

void EnergyLedger::finish(SimTime end) {
  if (!tracking_) begin(end, RadioState::Sleep);
  transition(end, current_, current_dbm_);
}

double EnergyLedger::seconds(RadioState s) const {
  const auto it = seconds_.find(s);
  return it == seconds_.end() ? 0.0 : it->second;
}

double EnergyLedger::joules(RadioState s) const {
  const auto it = joules_.find(s);
  return it == joules_.end() ? 0.0 : it->second;
}

double EnergyLedger::total_joules() const {
  double j = command_joules_;
  for (const auto& [s, v] : joules_) j += v;
  return j;
}

Activity EnergyLedger::activity(SimTime from, SimTime to) const {
  Activity a;
  for (const auto& seg : segments_) {
    const SimTime lo = std::max(seg.start, from);
    const SimTime hi = std::min(seg.end, to);
    if (hi <= lo) continue;
    const double s = to_seconds(hi - lo);
    switch (seg.state) {
      case RadioState::Tx:
        a.tx_seconds[seg.tx_dbm] += s;
        break;
      case RadioState::Rx:
        a.rx_seconds += s;
        break;
      case RadioState::Sleep:
        a.sleep_seconds += s;
        break;
    }
  }
  for (const auto& m : marks_) {
    if (m.at >= from && m.at < to) a.commands += m.count;
  }
  return a;
}

Activity EnergyLedger::activity() const {
  if (segments_.empty()) return {};
  return activity(segments_.front().start, segments_.back().end + Duration{1});
}

namespace {

// Transmit seconds weighted by the base curve's shape relative to the
// calibration power level; a flat or empty curve weighs every level as 1.
double shaped_tx_seconds(const Activity& a, const PowerProfile& base, double dbm) {
  const double ref = base.tx(dbm);
  double s = 0.0;
  for (const auto& [level, sec] : a.tx_seconds) s += sec * (ref > 0.0 ? base.tx(level) / ref : 1.0);
  return s;
}

double fixed_joules(const Activity& a, const PowerProfile& base) {
  return a.sleep_seconds * base.sleep_watts + static_cast<double>(a.commands) * base.mcu_joules_per_command;
}

}  // namespace

CalibrationResult calibrate(const PowerProfile& base, const CalibrationTargets& t) {
  for (const auto* row : {&t.transmitter, &t.receiver, &t.scanner}) {
    if (!(row->target_joules > 0.0) || !std::isfinite(row->target_joules)) {
      throw CalibrationError("calibration target for " + row->role + " must be positive");
    }
  }
  const double tx_t = shaped_tx_seconds(t.transmitter.activity, base, t.tx_power_dbm);
  if (!(tx_t > 0.0)) throw CalibrationError("transmitter row has no transmit time to fit against");

  // Transmitter row exactly: E_T = a * tx_T + b * rx_T + k_T, so a = alpha + beta * b.
  const double k_t = fixed_joules(t.transmitter.activity, base);
  const double alpha = (t.transmitter.target_joules - k_t) / tx_t;
  const double beta = -t.transmitter.activity.rx_seconds / tx_t;

  // Substituting into the receiver and scanner rows leaves m_i * b = y_i.
  double num = 0.0;
  double den = 0.0;
  for (const auto* row : {&t.receiver, &t.scanner}) {
    const double tx_i = shaped_tx_seconds(row->activity, base, t.tx_power_dbm);
    const double m = tx_i * beta + row->activity.rx_seconds;
    const double y = row->target_joules - fixed_joules(row->activity, base) - tx_i * alpha;
    const double w = 1.0 / (row->target_joules * row->target_joules);
    num += w * m * y;
    den += w * m * m;
  }
  if (!(den > 0.0)) throw CalibrationError("receiver and scanner rows carry no receive time");
  const double rx = num / den;
  const double tx = alpha + beta * rx;

  if (!std::isfinite(rx) || !std::isfinite(tx) || rx < 0.0 || tx <= 0.0) {
    std::ostringstream os;
    os << "infeasible calibration: tx=" << tx << " W, rx=" << rx << " W";
    throw CalibrationError(os.str());
  }

  CalibrationResult result;
  result.tx_watts = tx;
  result.rx_watts = rx;
  result.profile = base;
  result.profile.name = "reference-calibrated";
  result.profile.rx_watts = rx;
  const double ref = base.tx(t.tx_power_dbm);
  if (base.tx_watts.empty() || !(ref > 0.0)) {
    result.profile.tx_watts = {{t.tx_power_dbm, tx}};
  } else {
    for (auto& [dbm, w] : result.profile.tx_watts) w *= tx / ref;
  }
  result.profile.validate();

  auto add = [&](const CalibrationRow& row) {
    const double fitted = row.activity.joules(result.profile);
    result.residuals.push_back({row.role, row.target_joules, fitted, fitted / row.target_joules - 1.0});
  };
  add(t.transmitter);
  add(t.receiver);
  add(t.scanner);
  for (const auto& c : t.checks) add(c);
  return result;
}

}  // namespace lorasim::energy
