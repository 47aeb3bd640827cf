#include "lorasim/table2.hpp"

#include <cstdio>
#include <sstream>

namespace lorasim::table2 {

namespace {

void add(energy::Activity& into, const energy::Activity& a) {
  for (const auto& [dbm, s] : a.tx_seconds) into.tx_seconds[dbm] += s;
  into.rx_seconds += a.rx_seconds;
  into.sleep_seconds += a.sleep_seconds;
  into.commands += a.commands;
}

nlohmann::ordered_json role_json(const RoleEnergy& r) {
  return {{"device", r.device},
          {"window_from_s", to_seconds(r.from)},
          {"window_to_s", to_seconds(r.to)},
          {"tx_s", r.activity.total_tx_seconds()},
          {"rx_s", r.activity.rx_seconds},
          {"sleep_s", r.activity.sleep_seconds},
          {"commands", r.activity.commands},
          {"joules", r.joules},
          {"reference_joules", r.reference_joules},
          {"relative_error", r.relative_error()}};
}

const mac::SessionRecord* first_session(const mac::EndDevice& dev) {
  return dev.sessions().empty() ? nullptr : &dev.sessions().front();
}

}  // namespace

RoleEnergy transmitter_window(const mac::EndDevice& dev, int uplinks) {
  RoleEnergy r;
  r.device = dev.name();
  std::vector<const mac::UplinkCycle*> data;
  for (const auto& c : dev.cycles()) {
    if (!c.join) data.push_back(&c);
  }
  if (static_cast<int>(data.size()) < uplinks) {
    throw std::runtime_error(dev.name() + " sent " + std::to_string(data.size()) + " uplinks, need " +
                             std::to_string(uplinks));
  }
  r.from = data.front()->start;
  r.to = data[static_cast<std::size_t>(uplinks) - 1]->end;
  r.activity = dev.energy().activity(r.from, r.to);
  return r;
}

RoleEnergy receiver_window(const mac::EndDevice& dev) {
  RoleEnergy r;
  r.device = dev.name();
  bool any = false;
  for (const auto& c : dev.cycles()) {
    if (c.join || !c.downlink) continue;
    if (!any) r.from = c.start;
    any = true;
    r.to = c.end;
    add(r.activity, dev.energy().activity(c.start, c.end));
  }
  if (!any) throw std::runtime_error(dev.name() + " received nothing");
  return r;
}

RoleEnergy d2d_window(const mac::EndDevice& dev, SimTime plan_at) {
  RoleEnergy r;
  r.device = dev.name();
  const auto* s = first_session(dev);
  if (!s) throw std::runtime_error(dev.name() + " never ran a D2D session");
  std::optional<SimTime> from;
  std::optional<SimTime> to;
  for (const auto& c : dev.cycles()) {
    if (c.join) continue;
    if (!from && c.start >= plan_at) from = c.start;
    if (!to && c.start >= s->resumed) to = c.end;
  }
  if (!from || !to) throw std::runtime_error(dev.name() + " has no uplink after resuming");
  r.from = *from;
  r.to = *to;
  r.activity = dev.energy().activity(r.from, r.to);
  return r;
}

Report run(const Options& options) {
  RunOptions ro;
  ro.seed = options.seed;
  ro.trace = false;

  const auto conv_scn = load_scenario(options.scenario_dir / "table2_conventional.yaml");
  const auto d2d_scn = load_scenario(options.scenario_dir / "table2_d2d.yaml");
  if (d2d_scn.d2d.empty()) throw std::runtime_error("table2_d2d has no D2D directive");
  const SimTime plan_at = d2d_scn.d2d.front().at;

  Network conv(conv_scn, ro);
  conv.run();
  Network d2d(d2d_scn, ro);
  d2d.run();

  Report rep;
  const auto transfers = conv.transfers();
  if (transfers.empty() || !transfers.front().total_time()) {
    throw std::runtime_error("conventional scenario produced no complete transfer");
  }
  rep.conventional_time_s = to_seconds(*transfers.front().total_time());
  rep.conventional_delivered = transfers.front().messages_delivered;

  const auto& ini = d2d.device("initiator");
  const auto& scn = d2d.device("scanner");
  const auto* is = first_session(ini);
  const auto* ss = first_session(scn);
  if (!is || !ss) throw std::runtime_error("D2D scenario produced no session");
  rep.d2d_completed = is->outcome == d2d::State::Done;
  rep.d2d_time_s = to_seconds(is->finished - plan_at);
  rep.exchange_s = is->first_tx ? to_seconds(is->finished - *is->first_tx) : 0.0;
  rep.exchange_closed_form_s =
      to_seconds(ns::exchange_duration(d2d_scn.d2d.front().params.session, d2d_scn.d2d.front().params.dr));
  if (is->first_tx) rep.scanner_listen_s = scn.energy().activity(ss->activated, *is->first_tx).rx_seconds;

  rep.transmitter = transmitter_window(conv.device("transmitter"), kConventionalUplinks);
  rep.receiver = receiver_window(conv.device("receiver"));
  rep.initiator = d2d_window(ini, plan_at);
  rep.scanner = d2d_window(scn, plan_at);
  rep.transmitter.role = "transmitter";
  rep.receiver.role = "receiver";
  rep.initiator.role = "initiator";
  rep.scanner.role = "scanner";
  rep.transmitter.reference_joules = kTransmitterJ;
  rep.receiver.reference_joules = kReceiverJ;
  rep.initiator.reference_joules = kInitiatorJ;
  rep.scanner.reference_joules = kScannerJ;

  rep.profile = conv_scn.profile;
  if (options.calibrate) {
    energy::CalibrationTargets t;
    t.transmitter = {"transmitter", rep.transmitter.activity, kTransmitterJ};
    t.receiver = {"receiver", rep.receiver.activity, kReceiverJ};
    t.scanner = {"scanner", rep.scanner.activity, kScannerJ};
    t.checks.push_back({"initiator", rep.initiator.activity, kInitiatorJ});
    t.tx_power_dbm = conv_scn.devices.front().tx_power_dbm;
    rep.calibration = energy::calibrate(conv_scn.profile, t);
    rep.profile = rep.calibration->profile;
  }
  for (auto* r : {&rep.transmitter, &rep.receiver, &rep.initiator, &rep.scanner}) {
    r->joules = r->activity.joules(rep.profile);
  }
  rep.conventional_metrics = conv.metrics();
  rep.d2d_metrics = d2d.metrics();
  return rep;
}

nlohmann::ordered_json Report::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["time"] = {{"conventional_s", conventional_time_s},
               {"conventional_reference_s", kConventionalTimeS},
               {"conventional_relative_error", conventional_time_s / kConventionalTimeS - 1.0},
               {"d2d_s", d2d_time_s},
               {"d2d_reference_s", kD2dTimeS},
               {"d2d_relative_error", d2d_time_s / kD2dTimeS - 1.0},
               {"exchange_s", exchange_s},
               {"exchange_closed_form_s", exchange_closed_form_s},
               {"ratio", time_ratio()}};
  j["d2d_completed"] = d2d_completed;
  j["conventional_messages_delivered"] = conventional_delivered;
  j["scanner_listen_s"] = scanner_listen_s;
  j["energy"] = {{"transmitter", role_json(transmitter)},
                 {"receiver", role_json(receiver)},
                 {"initiator", role_json(initiator)},
                 {"scanner", role_json(scanner)},
                 {"ratio_transmitter_initiator", transmitter_energy_ratio()},
                 {"ratio_receiver_scanner", receiver_energy_ratio()}};
  j["profile"] = {{"name", profile.name},
                  {"tx_watts_at_14dbm", profile.tx(14.0)},
                  {"rx_watts", profile.rx_watts},
                  {"sleep_watts", profile.sleep_watts},
                  {"mcu_joules_per_command", profile.mcu_joules_per_command}};
  return j;
}

std::string Report::text() const {
  std::ostringstream os;
  char line[160];
  auto row = [&](const char* name, double sim, double reference, const char* unit) {
    std::snprintf(line, sizeof line, "%-26s %12.3f %12.3f %9.2f%%  %s\n", name, sim, reference,
                  100.0 * (sim / reference - 1.0), unit);
    os << line;
  };
  std::snprintf(line, sizeof line, "%-26s %12s %12s %10s\n", "cell", "simulated", "reference", "error");
  os << line;
  row("time conventional", conventional_time_s, kConventionalTimeS, "s");
  row("time d2d", d2d_time_s, kD2dTimeS, "s");
  row("energy transmitter", transmitter.joules, kTransmitterJ, "J");
  row("energy receiver", receiver.joules, kReceiverJ, "J");
  row("energy initiator", initiator.joules, kInitiatorJ, "J");
  row("energy scanner", scanner.joules, kScannerJ, "J");
  std::snprintf(line, sizeof line, "time ratio %.2fx, energy ratios %.2fx (tx/initiator) %.2fx (rx/scanner)\n",
                time_ratio(), transmitter_energy_ratio(), receiver_energy_ratio());
  os << line;
  std::snprintf(line, sizeof line, "exchange %.6f s (closed form %.6f s), scanner listened %.2f s\n", exchange_s,
                exchange_closed_form_s, scanner_listen_s);
  os << line;
  std::snprintf(line, sizeof line, "profile %s: tx %.6f W, rx %.6f W, sleep %.3g W\n", profile.name.c_str(),
                profile.tx(14.0), profile.rx_watts, profile.sleep_watts);
  os << line;
  return os.str();
}

}  // namespace lorasim::table2
