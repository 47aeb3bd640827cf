#include "lorasim/netserver.hpp"

#include <algorithm>
#include <sstream>

namespace lorasim::ns {

const char* to_string(DownlinkPolicy p) { return p == DownlinkPolicy::PreferRw1 ? "prefer_rw1" : "rw2_only"; }

// ------------------------------------------------------------------ gateway

Gateway::Gateway(Engine& engine, GatewayConfig config, const regulator::BandPlan& bands, bool duty_cycle)
    : engine_(engine), config_(std::move(config)), bands_(bands), duty_cycle_(duty_cycle) {
  for (double ch : config_.channels) bands_.classify(ch);
}

bool Gateway::can_transmit(SimTime at, double freq_hz, Duration) const {
  if (at < busy_until_) return false;
  if (!duty_cycle_) return true;
  return duty_.next_allowed_time(bands_.classify(freq_hz), at) <= at;
}

void Gateway::reserve(SimTime at, double freq_hz, int dr, int phy_bytes, Duration toa, Payload payload,
                      std::function<void(SimTime)> on_sent) {
  if (!can_transmit(at, freq_hz, toa)) throw std::logic_error("gateway " + config_.name + " double-booked");
  if (duty_cycle_) duty_.record_transmission(bands_.classify(freq_hz), at, toa);
  busy_until_ = at + toa;
  engine_.queue().schedule(
      at,
      [this, freq_hz, dr, phy_bytes, toa, payload = std::move(payload), on_sent = std::move(on_sent)]() mutable {
        Transmission tx;
        tx.start = engine_.now();
        tx.duration = toa;
        tx.freq_hz = freq_hz;
        tx.dr = dr;
        tx.tx_power_dbm = config_.tx_power_dbm;
        tx.phy_bytes = phy_bytes;
        tx.payload = std::move(payload);
        const auto id = engine_.transmit(*this, std::move(tx));
        if (on_sent) on_sent_[id] = std::move(on_sent);
      },
      Phase::Transmit);
}

bool Gateway::can_lock(const Transmission& tx) {
  const bool uplink = std::holds_alternative<lorawan::Uplink>(tx.payload) ||
                      std::holds_alternative<lorawan::JoinRequest>(tx.payload);
  return uplink && std::find(config_.channels.begin(), config_.channels.end(), tx.freq_hz) != config_.channels.end();
}

void Gateway::on_tx_end(const Transmission& tx) {
  ++sent_;
  auto it = on_sent_.find(tx.id);
  if (it != on_sent_.end()) {
    auto fn = std::move(it->second);
    on_sent_.erase(it);
    fn(engine_.now());
  }
}

void Gateway::on_frame(const Transmission& tx, double rssi_dbm, Outcome outcome) {
  if (outcome != Outcome::Decoded) {
    ++lost_;
    auto f = nlohmann::ordered_json::object();
    f["source"] = tx.source;
    f["outcome"] = to_string(outcome);
    engine_.trace().record(engine_.now(), config_.name, "uplink_lost", f);
    return;
  }
  ++decoded_;
  if (ns_) ns_->on_uplink(*this, tx, rssi_dbm);
}

// --------------------------------------------------------------- planning

Duration exchange_duration(const d2d::SessionConfig& cfg, int dr) {
  const auto opts = cfg.frame_options;
  const Duration ack = phy::time_on_air(dr, cfg.ack_bytes + d2d::kFrameOverheadBytes, opts);
  Duration total{0};
  for (int sent = 0; sent < cfg.total_bytes; sent += cfg.data_bytes) {
    const int bytes = std::min(cfg.data_bytes, cfg.total_bytes - sent);
    total += phy::time_on_air(dr, bytes + d2d::kFrameOverheadBytes, opts) + ack + 2 * cfg.turnaround;
  }
  return total;
}

namespace {

Duration scaled(Duration period, double factor) { return from_seconds(to_seconds(period) * factor); }

}  // namespace

PlanBounds plan_bounds(const PlanTiming& t) {
  PlanBounds b;
  b.scanner_worst = scaled(t.scanner_period, 1.0 + 2.0 * t.jitter) + t.scanner_uplink_toa + t.rx2_delay + t.setup_toa;
  b.min_gap = b.scanner_worst - (t.initiator_uplink_toa + t.rx1_delay);
  b.initiator_lag =
      scaled(t.initiator_period, 1.0 + 2.0 * t.jitter) + t.initiator_uplink_toa + t.rx2_delay + t.setup_toa;
  b.max_gap = t.t2 - b.initiator_lag - t.exchange;
  return b;
}

void check_plan_timing(const PlanTiming& t) {
  const PlanBounds b = plan_bounds(t);
  if (t.gap <= b.min_gap || t.gap > b.max_gap) {
    std::ostringstream os;
    os << "infeasible D2D timing: gap " << to_seconds(t.gap) << " s must lie in (" << to_seconds(b.min_gap) << ", "
       << to_seconds(b.max_gap) << "] s for the given uplink periods and T2";
    throw InfeasibleTiming(os.str());
  }
}

// ---------------------------------------------------------- network server

NetworkServer::NetworkServer(Engine& engine, Config config, const mac::MacParams& mac)
    : engine_(engine),
      config_(config),
      mac_(mac),
      rng_(engine.rng().stream("ns")),
      next_addr_(config.first_assigned_addr) {}

void NetworkServer::add_gateway(Gateway* gw) {
  gateways_.push_back(gw);
  gw->connect(this);
}

void NetworkServer::register_device(const DeviceInfo& info) {
  DeviceRecord rec;
  rec.info = info;
  rec.joined = info.dev_addr.has_value();
  devices_.push_back(std::move(rec));
  if (info.dev_addr) {
    if (addr_index_.count(*info.dev_addr)) {
      throw regulator::ConfigError("duplicate dev_addr for device " + info.name);
    }
    addr_index_[*info.dev_addr] = devices_.size() - 1;
  }
}

void NetworkServer::add_relay(std::uint32_t from, std::uint32_t to) { relays_[from] = to; }

NetworkServer::DeviceRecord* NetworkServer::by_addr(std::uint32_t addr) {
  const auto it = addr_index_.find(addr);
  return it == addr_index_.end() ? nullptr : &devices_[it->second];
}

const NetworkServer::DeviceRecord* NetworkServer::by_addr(std::uint32_t addr) const {
  const auto it = addr_index_.find(addr);
  return it == addr_index_.end() ? nullptr : &devices_[it->second];
}

std::optional<std::uint32_t> NetworkServer::address_of(const std::string& name) const {
  for (const auto& d : devices_) {
    if (d.info.name == name) return d.info.dev_addr;
  }
  return std::nullopt;
}

bool NetworkServer::joined(std::uint32_t dev_addr) const {
  const auto* d = by_addr(dev_addr);
  return d && d->joined;
}

std::size_t NetworkServer::queued(std::uint32_t dev_addr) const {
  const auto* d = by_addr(dev_addr);
  return d ? d->queue.size() : 0;
}

int NetworkServer::max_payload_for(const DeviceRecord& dev) const {
  int m = phy::data_rate(mac_.rx2_dr).max_mac_payload_bytes;
  if (config_.policy == DownlinkPolicy::PreferRw1) {
    m = std::max(m, phy::data_rate(mac_.rx1_dr(dev.info.uplink_dr)).max_mac_payload_bytes);
  }
  return m;
}

void NetworkServer::queue_downlink(std::uint32_t dev_addr, int port, std::vector<std::uint8_t> payload,
                                   int message_id, std::function<void(SimTime)> on_sent) {
  auto* dev = by_addr(dev_addr);
  if (!dev) throw PlanningError("downlink for unknown device " + std::to_string(dev_addr));
  const int limit = max_payload_for(*dev);
  if (static_cast<int>(payload.size()) > limit) {
    ++counters_.downlinks_rejected;
    throw DownlinkSizeError("downlink of " + std::to_string(payload.size()) + " B exceeds the " +
                            std::to_string(limit) + " B limit of every usable receive window");
  }
  dev->queue.push_back({port, std::move(payload), message_id, std::move(on_sent)});
}

void NetworkServer::on_uplink(Gateway& gw, const Transmission& tx, double rssi_dbm) {
  metadata_.push_back({tx.id, gw.name(), rssi_dbm});
  if (!seen_.insert(tx.id).second) {
    ++counters_.duplicates;
    return;
  }
  if (const auto* req = std::get_if<lorawan::JoinRequest>(&tx.payload)) {
    handle_join(gw, tx, *req);
    return;
  }
  const auto* up = std::get_if<lorawan::Uplink>(&tx.payload);
  if (!up) return;

  const SimTime now = engine_.now();
  auto* dev = by_addr(up->dev_addr);
  if (!dev) {
    ++counters_.unknown_device;
    auto f = nlohmann::ordered_json::object();
    f["dev_addr"] = up->dev_addr;
    engine_.trace().record(now, "ns", "unknown_device", f);
    return;
  }
  if (dev->last_fcnt && up->fcnt <= *dev->last_fcnt) {
    ++counters_.replays;
    return;
  }
  dev->last_fcnt = up->fcnt;
  ++counters_.deliveries;
  deliveries_.push_back({now, up->dev_addr, up->fcnt, up->message_id, tx.start});

  if (engine_.trace().enabled()) {
    auto f = nlohmann::ordered_json::object();
    f["dev_addr"] = up->dev_addr;
    f["fcnt"] = up->fcnt;
    f["gateway"] = gw.name();
    f["rssi_dbm"] = rssi_dbm;
    engine_.trace().record(now, "ns", "uplink_rx", f);
  }

  const auto relay = relays_.find(up->dev_addr);
  if (relay != relays_.end() && !up->payload.empty()) {
    try {
      queue_downlink(relay->second, up->port, up->payload, up->message_id);
    } catch (const DownlinkSizeError&) {
      // counted in queue_downlink
    }
  }
  place_downlink(*dev, gw, tx);
}

void NetworkServer::place_downlink(DeviceRecord& dev, Gateway& gw, const Transmission& uplink) {
  if (dev.queue.empty()) return;
  auto& head = dev.queue.front();
  const int phy_bytes = phy::lorawan_phy_bytes(static_cast<int>(head.payload.size()));

  struct Option {
    lorawan::Window window;
    SimTime at;
    double freq;
    int dr;
  };
  std::vector<Option> options;
  if (config_.policy == DownlinkPolicy::PreferRw1) {
    options.push_back({lorawan::Window::RW1, uplink.end() + mac_.rx1_delay, uplink.freq_hz, mac_.rx1_dr(uplink.dr)});
  }
  options.push_back({lorawan::Window::RW2, uplink.end() + mac_.rx2_delay, mac_.rx2_freq_hz, mac_.rx2_dr});

  for (const auto& o : options) {
    if (static_cast<int>(head.payload.size()) > phy::data_rate(o.dr).max_mac_payload_bytes) continue;
    const Duration toa = phy::time_on_air(o.dr, phy_bytes, phy::FrameOptions::downlink());
    if (!gw.can_transmit(o.at, o.freq, toa)) continue;

    lorawan::Downlink dl;
    dl.dev_addr = *dev.info.dev_addr;
    dl.fcnt = dev.fcnt_down++;
    dl.port = head.port;
    dl.payload = std::move(head.payload);
    dl.window = o.window;
    dl.message_id = head.message_id;
    auto on_sent = std::move(head.on_sent);
    dev.queue.pop_front();

    if (o.window == lorawan::Window::RW1) {
      ++counters_.downlinks_scheduled_rw1;
    } else {
      ++counters_.downlinks_scheduled_rw2;
    }
    auto f = nlohmann::ordered_json::object();
    f["dev_addr"] = dl.dev_addr;
    f["window"] = lorawan::to_string(o.window);
    f["at_us"] = o.at.count();
    f["port"] = dl.port;
    f["bytes"] = dl.payload.size();
    engine_.trace().record(engine_.now(), "ns", "downlink_scheduled", f);
    gw.reserve(o.at, o.freq, o.dr, phy_bytes, toa, std::move(dl), std::move(on_sent));
    return;
  }
  ++counters_.downlink_deferrals;
}

void NetworkServer::handle_join(Gateway& gw, const Transmission& tx, const lorawan::JoinRequest& req) {
  const SimTime now = engine_.now();
  DeviceRecord* dev = nullptr;
  for (auto& d : devices_) {
    if (d.info.dev_eui == req.dev_eui) dev = &d;
  }
  if (!dev) {
    ++counters_.unknown_device;
    return;
  }
  if (!rng_.bernoulli(config_.join_success_probability)) {
    ++counters_.joins_rejected;
    auto f = nlohmann::ordered_json::object();
    f["dev_eui"] = req.dev_eui;
    engine_.trace().record(now, "ns", "join_rejected", f, {"kind"});
    return;
  }
  if (!dev->info.dev_addr) {
    dev->info.dev_addr = next_addr_++;
    addr_index_[*dev->info.dev_addr] = static_cast<std::size_t>(dev - devices_.data());
  }

  struct Option {
    lorawan::Window window;
    SimTime at;
    double freq;
    int dr;
  };
  const Option options[] = {
      {lorawan::Window::RW1, tx.end() + mac_.join_accept_delay1, tx.freq_hz, mac_.rx1_dr(tx.dr)},
      {lorawan::Window::RW2, tx.end() + mac_.join_accept_delay2, mac_.rx2_freq_hz, mac_.rx2_dr},
  };
  for (const auto& o : options) {
    const Duration toa = phy::time_on_air(o.dr, lorawan::kJoinAcceptBytes, phy::FrameOptions::downlink());
    if (!gw.can_transmit(o.at, o.freq, toa)) continue;
    const std::uint32_t addr = *dev->info.dev_addr;
    DeviceRecord* rec = dev;
    gw.reserve(o.at, o.freq, o.dr, lorawan::kJoinAcceptBytes, toa,
               lorawan::JoinAccept{req.dev_eui, addr, o.window}, [rec](SimTime) { rec->joined = true; });
    ++counters_.joins_accepted;
    auto f = nlohmann::ordered_json::object();
    f["dev_eui"] = req.dev_eui;
    f["dev_addr"] = addr;
    f["window"] = lorawan::to_string(o.window);
    engine_.trace().record(now, "ns", "join_accept", f);
    return;
  }
  ++counters_.downlink_deferrals;
}

D2DPlan NetworkServer::plan_d2d(std::uint32_t initiator, std::uint32_t scanner, const D2DParams& p,
                                SimTime now) const {
  if (initiator == scanner) throw PlanningError("D2D initiator and scanner must be different devices");
  const auto* di = by_addr(initiator);
  const auto* ds = by_addr(scanner);
  if (!di || !ds) throw PlanningError("D2D pair refers to an unknown device");
  if (!di->joined || !ds->joined) throw PlanningError("both D2D devices must have joined the network");
  if (di->info.traffic != mac::TrafficModel::Periodic || ds->info.traffic != mac::TrafficModel::Periodic) {
    throw PlanningError("D2D planning needs devices with periodic uplinks");
  }

  PlanTiming t;
  t.scanner_period = ds->info.period;
  t.initiator_period = di->info.period;
  t.jitter = std::max(di->info.jitter, ds->info.jitter);
  t.scanner_uplink_toa = phy::time_on_air(ds->info.uplink_dr, phy::lorawan_phy_bytes(ds->info.uplink_payload_bytes));
  t.initiator_uplink_toa =
      phy::time_on_air(di->info.uplink_dr, phy::lorawan_phy_bytes(di->info.uplink_payload_bytes));
  t.setup_toa = phy::time_on_air(mac_.rx2_dr, phy::lorawan_phy_bytes(static_cast<int>(d2d::kSetupBytes)),
                                 phy::FrameOptions::downlink());
  t.rx1_delay = mac_.rx1_delay;
  t.rx2_delay = mac_.rx2_delay;
  t.gap = p.gap;
  t.t2 = p.t2;
  t.exchange = exchange_duration(p.session, p.dr);
  check_plan_timing(t);
  const PlanBounds b = plan_bounds(t);

  D2DPlan plan;
  plan.initiator = initiator;
  plan.scanner = scanner;
  plan.setup_scanner = {d2d::Role::Scanner, p.freq_hz, p.dr, p.tx_power_dbm, Duration{0}, p.t2, initiator};
  plan.setup_initiator = {d2d::Role::Initiator, p.freq_hz, p.dr, p.tx_power_dbm, p.gap, p.t2, scanner};
  plan.issued_at = now;
  plan.issue_deadline = now + b.scanner_worst + b.initiator_lag;
  return plan;
}

void NetworkServer::issue(const D2DPlan& plan) {
  plans_.push_back(plan);
  auto f = nlohmann::ordered_json::object();
  f["initiator"] = plan.initiator;
  f["scanner"] = plan.scanner;
  f["freq_hz"] = plan.setup_initiator.freq_hz;
  f["dr"] = plan.setup_initiator.dr;
  f["gap_us"] = plan.setup_initiator.t1.count();
  f["t2_us"] = plan.setup_initiator.t2.count();
  engine_.trace().record(engine_.now(), "ns", "d2d_plan", f);

  const auto initiator_setup = d2d::encode_setup(plan.setup_initiator);
  const std::uint32_t initiator = plan.initiator;
  queue_downlink(plan.scanner, d2d::kSetupPort, d2d::encode_setup(plan.setup_scanner), -1,
                 [this, initiator, initiator_setup](SimTime) {
                   queue_downlink(initiator, d2d::kSetupPort, initiator_setup);
                 });
}

}  // namespace lorasim::ns
