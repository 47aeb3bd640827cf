#include "lorasim/network.hpp"

#include <algorithm>

namespace lorasim {

namespace {

double sec(SimTime t) { return to_seconds(t); }

const char* role_name(d2d::Role r) { return r == d2d::Role::Initiator ? "initiator" : "scanner"; }

const char* state_name(d2d::State s) {
  switch (s) {
    case d2d::State::Armed: return "armed";
    case d2d::State::Scanning: return "scanning";
    case d2d::State::Initiating: return "initiating";
    case d2d::State::Exchange: return "exchange";
    case d2d::State::Done: return "done";
    case d2d::State::Failed: return "failed";
  }
  return "?";
}

nlohmann::ordered_json opt_sec(const std::optional<SimTime>& t) {
  return t ? nlohmann::ordered_json(sec(*t)) : nlohmann::ordered_json(nullptr);
}

}  // namespace

Network::Network(Scenario scenario, RunOptions options)
    : scenario_(std::move(scenario)),
      seed_(options.seed.value_or(scenario_.seed)),
      bands_([this] {
        validate(scenario_);
        return regulator::BandPlan(scenario_.bands);
      }()) {
  auto& mac = scenario_.mac;
  mac.device_duty_cycle = scenario_.switches.device_duty_cycle;
  mac.duty_cycle_applies_to_d2d = scenario_.switches.duty_cycle_applies_to_d2d;
  mac.d2d_frame_loss_prob = scenario_.switches.d2d_frame_loss_prob;

  LinkConfig link{scenario_.path_loss, scenario_.sensitivity, scenario_.switches.capture_threshold_db};
  engine_ = std::make_unique<Engine>(seed_, link, options.trace);

  ns::NetworkServer::Config nc;
  nc.policy = scenario_.downlink_policy;
  nc.join_success_probability = scenario_.join_success_probability;
  ns_ = std::make_unique<ns::NetworkServer>(*engine_, nc, scenario_.mac);

  for (const auto& g : scenario_.gateways) {
    ns::GatewayConfig gc;
    gc.name = g.name;
    gc.position = g.position;
    gc.channels = g.channels.empty() ? scenario_.channels : g.channels;
    gc.tx_power_dbm = g.tx_power_dbm;
    auto gw = std::make_unique<ns::Gateway>(*engine_, gc, bands_, scenario_.switches.gateway_duty_cycle);
    gw->connect(ns_.get());
    engine_->attach(gw.get());
    ns_->add_gateway(gw.get());
    gateways_.push_back(std::move(gw));
  }

  for (const auto& d : expand_devices(scenario_)) {
    mac::DeviceConfig dc;
    dc.name = d.name;
    dc.dev_eui = d.dev_eui;
    dc.dev_addr = d.dev_addr;
    dc.joined = d.joined;
    dc.position = d.position;
    dc.channels = d.channels.empty() ? scenario_.channels : d.channels;
    dc.dr = d.dr;
    dc.tx_power_dbm = d.tx_power_dbm;
    dc.traffic = d.traffic;
    dc.period = d.period;
    dc.first_uplink = d.first_uplink;
    dc.jitter = d.jitter;
    dc.payload_bytes = d.payload_bytes;
    dc.max_uplinks = d.max_uplinks;
    dc.profile = scenario_.profile;
    auto dev = std::make_unique<mac::EndDevice>(*engine_, dc, scenario_.mac, bands_);
    engine_->attach(dev.get());

    ns::DeviceInfo info;
    info.name = d.name;
    info.dev_eui = d.dev_eui;
    info.dev_addr = d.joined ? d.dev_addr : std::nullopt;
    info.uplink_dr = d.dr;
    info.uplink_payload_bytes = d.payload_bytes;
    info.traffic = d.traffic;
    info.period = d.period;
    info.jitter = d.jitter;
    ns_->register_device(info);
    devices_.push_back(std::move(dev));
  }

  for (const auto& r : scenario_.relays) {
    const auto from = ns_->address_of(r.from);
    const auto to = ns_->address_of(r.to);
    if (!from || !to) throw ScenarioError("line " + std::to_string(r.line) + ": relay endpoints need provisioned addresses");
    ns_->add_relay(*from, *to);
  }

  for (const auto& e : scenario_.d2d) {
    const auto i = ns_->address_of(e.initiator);
    const auto s = ns_->address_of(e.scanner);
    if (i && s && ns_->joined(*i) && ns_->joined(*s)) {
      try {
        (void)ns_->plan_d2d(*i, *s, e.params, e.at);
      } catch (const ns::PlanningError& err) {
        throw ScenarioError("line " + std::to_string(e.line) + ": " + err.what());
      }
    }
  }
}

Network::~Network() = default;

const mac::EndDevice& Network::device(const std::string& name) const {
  for (const auto& d : devices_) {
    if (d->name() == name) return *d;
  }
  throw std::out_of_range("no device named " + name);
}

void Network::run() {
  if (ran_) throw std::logic_error("Network::run called twice");
  ran_ = true;

  for (const auto& e : scenario_.d2d) {
    const std::size_t index = directives_.size();
    directives_.push_back({e.initiator, e.scanner, e.at, false, {}});
    engine_->queue().schedule(e.at, [this, e, index] {
      auto& outcome = directives_[index];
      const auto i = ns_->address_of(e.initiator);
      const auto s = ns_->address_of(e.scanner);
      try {
        if (!i || !s) throw ns::PlanningError("D2D pair has not joined yet");
        const auto plan = ns_->plan_d2d(*i, *s, e.params, engine_->now());
        for (auto& d : devices_) {
          if (d->name() == e.initiator || d->name() == e.scanner) d->set_d2d_session_config(e.params.session);
        }
        ns_->issue(plan);
        outcome.planned = true;
      } catch (const ns::PlanningError& err) {
        outcome.error = err.what();
        auto f = nlohmann::ordered_json::object();
        f["initiator"] = e.initiator;
        f["scanner"] = e.scanner;
        f["error"] = err.what();
        engine_->trace().record(engine_->now(), "ns", "d2d_plan_failed", f);
      }
    });
  }

  for (auto& d : devices_) d->start();
  engine_->queue().run_until(scenario_.end_time);
  for (auto& d : devices_) d->stop(scenario_.end_time);
}

std::vector<Transfer> Network::transfers() const {
  std::vector<Transfer> out;
  for (const auto& r : scenario_.relays) {
    Transfer t;
    t.from = r.from;
    t.to = r.to;
    const auto& src = device(r.from);
    for (const auto& c : src.cycles()) {
      if (c.join) continue;
      ++t.messages_sent;
      if (!t.first_send) t.first_send = c.start;
    }
    for (const auto& d : device(r.to).deliveries()) {
      if (d.port == d2d::kSetupPort || d.message_id < 0) continue;
      ++t.messages_delivered;
      t.last_delivery = d.at;
    }
    out.push_back(t);
  }
  return out;
}

nlohmann::ordered_json Network::metrics() const {
  using J = nlohmann::ordered_json;
  J m = J::object();
  m["schema_version"] = kMetricsSchemaVersion;
  m["scenario"] = scenario_.name;
  m["seed"] = seed_;
  m["end_time_s"] = sec(scenario_.end_time);

  const double horizon = sec(scenario_.end_time);
  const auto& mc = engine_->counters();
  const auto& nc = ns_->counters();
  J net = J::object();
  net["transmissions"] = mc.transmissions;
  net["frames_decoded"] = mc.decoded;
  net["collisions"] = mc.collisions;
  net["uplinks_delivered"] = nc.deliveries;
  net["duplicate_uplinks"] = nc.duplicates;
  net["replayed_uplinks"] = nc.replays;
  net["unknown_device_uplinks"] = nc.unknown_device;
  net["downlinks_scheduled_rw1"] = nc.downlinks_scheduled_rw1;
  net["downlinks_scheduled_rw2"] = nc.downlinks_scheduled_rw2;
  net["downlink_deferrals"] = nc.downlink_deferrals;
  net["downlinks_rejected"] = nc.downlinks_rejected;
  net["joins_accepted"] = nc.joins_accepted;
  net["joins_rejected"] = nc.joins_rejected;

  // Band audit: totals plus the busiest single transmitter, which is what the
  // duty cycle limit constrains.
  J bands = J::array();
  for (const auto& b : bands_.bands()) {
    double total = 0.0;
    double worst = 0.0;
    std::string worst_source;
    for (const auto& [source, by_freq] : engine_->airtime()) {
      double s = 0.0;
      for (const auto& [freq, d] : by_freq) {
        if (b.contains(freq)) s += to_seconds(d);
      }
      total += s;
      if (s > worst) {
        worst = s;
        worst_source = source;
      }
    }
    J e = J::object();
    e["id"] = b.id;
    e["duty_cycle_limit"] = b.duty_cycle_limit;
    e["on_air_s"] = total;
    e["max_transmitter_on_air_s"] = worst;
    e["max_transmitter"] = worst_source;
    e["max_on_air_fraction"] = horizon > 0 ? worst / horizon : 0.0;
    bands.push_back(e);
  }
  net["bands"] = bands;
  m["network"] = net;

  J devs = J::array();
  for (const auto& d : devices_) {
    J e = J::object();
    e["name"] = d->name();
    e["dev_addr"] = d->dev_addr() ? J(*d->dev_addr()) : J(nullptr);
    e["joined"] = d->joined();
    const auto& c = d->counters();
    std::uint64_t delivered = 0;
    if (d->dev_addr()) {
      for (const auto& u : ns_->deliveries()) delivered += u.dev_addr == *d->dev_addr();
    }
    e["uplinks_sent"] = c.uplinks_sent;
    e["uplinks_delivered"] = delivered;
    e["join_requests"] = c.join_requests;
    e["downlinks_rw1"] = c.downlinks_rw1;
    e["downlinks_rw2"] = c.downlinks_rw2;
    e["downlinks_lost"] = c.downlinks_lost;
    e["duty_deferrals"] = c.duty_deferrals;
    e["slots_skipped_suspended"] = c.slots_skipped_suspended;
    e["slots_overrun"] = c.slots_overrun;

    int attempted = 0, established = 0, completed = 0, bytes = 0;
    J sessions = J::array();
    for (const auto& s : d->sessions()) {
      ++attempted;
      established += s.established.has_value();
      completed += s.outcome == d2d::State::Done;
      bytes += s.bytes_delivered;
      J x = J::object();
      x["role"] = role_name(s.role);
      x["peer"] = s.peer;
      x["setup_received_s"] = sec(s.setup_received);
      x["activated_s"] = sec(s.activated);
      x["first_tx_s"] = opt_sec(s.first_tx);
      x["established_s"] = opt_sec(s.established);
      x["finished_s"] = sec(s.finished);
      x["resumed_s"] = sec(s.resumed);
      x["outcome"] = state_name(s.outcome);
      x["frames_sent"] = s.frames_sent;
      x["retransmissions"] = s.retransmissions;
      x["packets_acked"] = s.packets_acked;
      x["bytes_delivered"] = s.bytes_delivered;
      x["timeouts"] = s.timeouts;
      x["duty_blocked"] = s.duty_blocked;
      sessions.push_back(x);
    }
    e["d2d"] = {{"attempted", attempted}, {"established", established}, {"completed", completed}};
    e["bytes_transferred"] = bytes;
    e["sessions"] = sessions;

    const auto& led = d->energy();
    using energy::RadioState;
    J en = J::object();
    en["profile"] = led.profile().name;
    en["tx_s"] = led.seconds(RadioState::Tx);
    en["rx_s"] = led.seconds(RadioState::Rx);
    en["sleep_s"] = led.seconds(RadioState::Sleep);
    en["tx_j"] = led.joules(RadioState::Tx);
    en["rx_j"] = led.joules(RadioState::Rx);
    en["sleep_j"] = led.joules(RadioState::Sleep);
    en["commands"] = led.commands();
    en["mcu_j"] = led.command_joules();
    en["total_j"] = led.total_joules();
    e["energy"] = en;
    devs.push_back(e);
  }
  m["devices"] = devs;

  J gws = J::array();
  for (const auto& g : gateways_) {
    gws.push_back({{"name", g->name()},
                   {"frames_decoded", g->frames_decoded()},
                   {"frames_lost", g->frames_lost()},
                   {"downlinks_sent", g->downlinks_sent()}});
  }
  m["gateways"] = gws;

  J tr = J::array();
  for (const auto& t : transfers()) {
    const auto total = t.total_time();
    tr.push_back({{"from", t.from},
                  {"to", t.to},
                  {"messages_sent", t.messages_sent},
                  {"messages_delivered", t.messages_delivered},
                  {"first_send_s", opt_sec(t.first_send)},
                  {"last_delivery_s", opt_sec(t.last_delivery)},
                  {"total_transfer_time", total ? J(to_seconds(*total)) : J(nullptr)}});
  }
  m["transfers"] = tr;

  J dirs = J::array();
  for (const auto& d : directives_) {
    dirs.push_back({{"at_s", sec(d.at)},
                    {"initiator", d.initiator},
                    {"scanner", d.scanner},
                    {"planned", d.planned},
                    {"error", d.error}});
  }
  m["d2d_directives"] = dirs;
  return m;
}

RunResult run(const Scenario& scenario, const RunOptions& options) {
  Network net(scenario, options);
  net.run();
  return {net.engine().trace().text(), net.metrics()};
}

}  // namespace lorasim
