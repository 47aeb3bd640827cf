#include "lorasim/mac_device.hpp"

#include <algorithm>

namespace lorasim::mac {

using energy::RadioState;
using lorawan::Window;

const char* to_string(MacState s) {
  switch (s) {
    case MacState::Sleep:
      return "sleep";
    case MacState::Tx:
      return "tx";
    case MacState::WaitRw1:
      return "wait_rw1";
    case MacState::Rx1:
      return "rx1";
    case MacState::WaitRw2:
      return "wait_rw2";
    case MacState::Rx2:
      return "rx2";
    case MacState::D2dSuspended:
      return "d2d_suspended";
  }
  return "?";
}

Duration MacParams::rx_window(int dr) const {
  const auto& d = phy::data_rate(dr);
  if (d.modulation == phy::Modulation::GFSK) return 5ms;
  return phy::symbol_time(d) * preamble_detect_symbols;
}

EndDevice::EndDevice(Engine& engine, DeviceConfig config, const MacParams& params, const regulator::BandPlan& bands)
    : engine_(engine),
      config_(std::move(config)),
      params_(params),
      bands_(bands),
      rng_(engine.rng().stream("device/" + config_.name)),
      loss_rng_(engine.rng().stream("device/" + config_.name + "/d2d-loss")),
      energy_(config_.profile) {
  if (config_.channels.empty()) throw regulator::ConfigError("device " + config_.name + " has no enabled channels");
  for (double ch : config_.channels) bands_.classify(ch);
  phy::data_rate(config_.dr);
  joined_ = config_.joined;
  dev_addr_ = config_.dev_addr;
  if (joined_ && !dev_addr_) throw regulator::ConfigError("joined device " + config_.name + " needs a dev_addr");
}

void EndDevice::start() {
  energy_.begin(engine_.now(), RadioState::Sleep);
  if (joined_) {
    nominal_ = engine_.now() + config_.first_uplink;
    slots_started_ = true;
    schedule_slot();
  } else {
    // Same spread as ordinary slots, so a fleet powered on together does not
    // fire its join requests in lockstep.
    SimTime first = engine_.now() + config_.first_uplink;
    if (config_.jitter > 0.0) {
      first += from_seconds(rng_.uniform(-config_.jitter, config_.jitter) * to_seconds(config_.period));
    }
    engine_.queue().schedule(std::max(first, engine_.now()), [this] { join_attempt(); });
  }
}

void EndDevice::stop(SimTime end) { energy_.finish(end); }

Duration EndDevice::uplink_toa(int phy_bytes) const {
  return phy::time_on_air(config_.dr, phy_bytes, phy::FrameOptions::uplink());
}

nlohmann::ordered_json EndDevice::base_fields() const {
  nlohmann::ordered_json f;
  f["state"] = to_string(state_);
  return f;
}

// ---------------------------------------------------------------- uplinks

void EndDevice::schedule_slot() {
  SimTime fire = nominal_;
  if (config_.traffic == TrafficModel::Periodic && config_.jitter > 0.0) {
    fire += from_seconds(rng_.uniform(-config_.jitter, config_.jitter) * to_seconds(config_.period));
  }
  fire = std::max(fire, engine_.now());
  engine_.queue().schedule(fire, [this] { on_slot(); });
}

void EndDevice::on_slot() {
  if (config_.traffic == TrafficModel::Periodic) {
    nominal_ += config_.period;
  } else {
    nominal_ += from_seconds(rng_.exponential(to_seconds(config_.period)));
  }

  const auto sent = counters_.uplinks_sent + (pending_uplink_ ? 1 : 0);
  if (config_.max_uplinks && sent >= static_cast<std::uint64_t>(*config_.max_uplinks)) {
    traffic_done_ = true;
    return;
  }
  if (state_ == MacState::D2dSuspended || pending_d2d_ || resuming_) {
    ++counters_.slots_skipped_suspended;
    engine_.trace().record(engine_.now(), config_.name, "slot_skipped", base_fields());
  } else {
    if (pending_uplink_) ++counters_.slots_overrun;
    pending_uplink_ = true;
    try_send();
  }
  schedule_slot();
}

void EndDevice::try_send() {
  if (!pending_uplink_ || state_ != MacState::Sleep || tx_event_ || !joined_) return;
  const double freq = config_.channels[rng_.index(config_.channels.size())];
  SimTime start = engine_.now();
  if (params_.device_duty_cycle) {
    start = duty_.next_allowed_time(bands_.classify(freq), start);
    if (start > engine_.now()) ++counters_.duty_deferrals;
  }
  tx_event_ = engine_.queue().schedule(start, [this, freq] { begin_uplink(freq); }, Phase::Transmit);
}

void EndDevice::begin_uplink(double freq) {
  tx_event_.reset();
  pending_uplink_ = false;
  const SimTime now = engine_.now();

  lorawan::Uplink up;
  up.dev_addr = *dev_addr_;
  up.fcnt = fcnt_up_++;
  up.port = config_.payload_bytes > 0 ? 1 : 0;
  up.payload.resize(static_cast<std::size_t>(config_.payload_bytes));
  for (std::size_t i = 0; i < up.payload.size(); ++i) up.payload[i] = static_cast<std::uint8_t>(up.fcnt + i);
  up.message_id = static_cast<int>(up.fcnt);

  Transmission tx;
  tx.start = now;
  tx.phy_bytes = phy::lorawan_phy_bytes(config_.payload_bytes);
  tx.duration = uplink_toa(tx.phy_bytes);
  tx.freq_hz = freq;
  tx.dr = config_.dr;
  tx.tx_power_dbm = config_.tx_power_dbm;
  tx.payload = up;

  if (params_.device_duty_cycle) duty_.record_transmission(bands_.classify(freq), now, tx.duration);
  state_ = MacState::Tx;
  energy_.transition(now, RadioState::Tx, config_.tx_power_dbm);
  ++counters_.uplinks_sent;

  if (engine_.trace().enabled()) {
    auto f = nlohmann::ordered_json::object();
    f["fcnt"] = up.fcnt;
    f["freq_hz"] = freq;
    f["dr"] = tx.dr;
    f["phy_bytes"] = tx.phy_bytes;
    f["toa_us"] = tx.duration.count();
    if (config_.jitter > 0.0 || config_.traffic == TrafficModel::Poisson) {
      engine_.trace().record(now, config_.name, "uplink_tx", f, {"time_us", "freq_hz"});
    } else {
      engine_.trace().record(now, config_.name, "uplink_tx", f, {"freq_hz"});
    }
  }

  cycles_.push_back({now, now + tx.duration, now + tx.duration, up.fcnt, freq, false, std::nullopt});
  engine_.transmit(*this, std::move(tx));
}

void EndDevice::join_attempt() {
  if (joined_) return;
  if (state_ != MacState::Sleep) {
    engine_.queue().schedule(engine_.now() + params_.join_backoff, [this] { join_attempt(); });
    return;
  }
  const double freq = config_.channels[rng_.index(config_.channels.size())];
  SimTime start = engine_.now();
  if (params_.device_duty_cycle) start = duty_.next_allowed_time(bands_.classify(freq), start);
  tx_event_ = engine_.queue().schedule(start, [this, freq] { begin_join(freq); }, Phase::Transmit);
}

void EndDevice::begin_join(double freq) {
  tx_event_.reset();
  const SimTime now = engine_.now();
  Transmission tx;
  tx.start = now;
  tx.phy_bytes = lorawan::kJoinRequestBytes;
  tx.duration = uplink_toa(tx.phy_bytes);
  tx.freq_hz = freq;
  tx.dr = config_.dr;
  tx.tx_power_dbm = config_.tx_power_dbm;
  tx.payload = lorawan::JoinRequest{config_.dev_eui, join_nonce_++};

  if (params_.device_duty_cycle) duty_.record_transmission(bands_.classify(freq), now, tx.duration);
  state_ = MacState::Tx;
  energy_.transition(now, RadioState::Tx, config_.tx_power_dbm);
  ++counters_.join_requests;

  auto f = nlohmann::ordered_json::object();
  f["nonce"] = join_nonce_ - 1;
  f["freq_hz"] = freq;
  f["dr"] = tx.dr;
  engine_.trace().record(now, config_.name, "join_request", f, {"time_us", "freq_hz"});

  cycles_.push_back({now, now + tx.duration, now + tx.duration, 0, freq, true, std::nullopt});
  engine_.transmit(*this, std::move(tx));
}

void EndDevice::on_tx_end(const Transmission& tx) {
  if (std::holds_alternative<d2d::Frame>(tx.payload)) {
    d2d_tx_done();
    return;
  }
  start_cycle(tx, std::holds_alternative<lorawan::JoinRequest>(tx.payload));
}

// ---------------------------------------------------------- receive windows

void EndDevice::start_cycle(const Transmission& tx, bool join) {
  const SimTime now = engine_.now();
  join_cycle_ = join;
  cycle_freq_ = tx.freq_hz;
  cycle_dr_ = tx.dr;
  cycle_tx_end_ = now;
  state_ = MacState::WaitRw1;
  energy_.transition(now, RadioState::Sleep);
  const Duration d1 = join ? params_.join_accept_delay1 : params_.rx1_delay;
  engine_.queue().schedule(now + d1, [this] { open_window(Window::RW1); }, Phase::Radio);
}

void EndDevice::open_window(Window w) {
  const SimTime now = engine_.now();
  if (w == Window::RW1) {
    state_ = MacState::Rx1;
    listen_freq_ = cycle_freq_;
    listen_dr_ = params_.rx1_dr(cycle_dr_);
  } else {
    state_ = MacState::Rx2;
    listen_freq_ = params_.rx2_freq_hz;
    listen_dr_ = params_.rx2_dr;
  }
  close_pending_ = false;
  energy_.transition(now, RadioState::Rx);
  const Duration len = params_.rx_window(listen_dr_);
  close_event_ = engine_.queue().schedule(now + len, [this] { close_window(); }, Phase::Radio);

  if (engine_.trace().enabled()) {
    auto f = nlohmann::ordered_json::object();
    f["window"] = lorawan::to_string(w);
    f["offset_us"] = (now - cycle_tx_end_).count();
    f["freq_hz"] = listen_freq_;
    f["dr"] = listen_dr_;
    if (w == Window::RW1) {
      engine_.trace().record(now, config_.name, "rx_open", f, {"freq_hz"});
    } else {
      engine_.trace().record(now, config_.name, "rx_open", f);
    }
  }
}

void EndDevice::close_window() {
  close_event_.reset();
  if (locked_) {
    close_pending_ = true;  // a preamble was caught; stay on until the frame ends
    return;
  }
  end_window();
}

void EndDevice::end_window() {
  const SimTime now = engine_.now();
  close_pending_ = false;
  if (state_ == MacState::Rx1) {
    state_ = MacState::WaitRw2;
    energy_.transition(now, RadioState::Sleep);
    const Duration d2 = join_cycle_ ? params_.join_accept_delay2 : params_.rx2_delay;
    engine_.queue().schedule(cycle_tx_end_ + d2, [this] { open_window(Window::RW2); }, Phase::Radio);
  } else {
    end_cycle();
  }
}

void EndDevice::end_cycle() {
  const SimTime now = engine_.now();
  if (close_event_) {
    engine_.queue().cancel(*close_event_);
    close_event_.reset();
  }
  close_pending_ = false;
  state_ = MacState::Sleep;
  energy_.transition(now, RadioState::Sleep);
  if (!cycles_.empty()) cycles_.back().end = now;

  if (join_cycle_ && !joined_) {
    const double spread = rng_.uniform(0.0, 0.5);
    engine_.queue().schedule(now + params_.join_backoff + from_seconds(spread * to_seconds(params_.join_backoff)),
                             [this] { join_attempt(); });
    return;
  }
  if (join_cycle_ && joined_ && !slots_started_) {
    slots_started_ = true;
    nominal_ = now + config_.first_uplink;
    schedule_slot();
    return;
  }
  if (pending_d2d_) {
    suspend_for_d2d();
    return;
  }
  try_send();
}

bool EndDevice::can_lock(const Transmission& tx) {
  if (locked_) return false;
  if (state_ == MacState::Rx1 || state_ == MacState::Rx2) {
    // Devices listen with inverted IQ: only gateway frames are demodulated.
    const bool downlink = std::holds_alternative<lorawan::Downlink>(tx.payload) ||
                          std::holds_alternative<lorawan::JoinAccept>(tx.payload);
    if (!downlink || tx.freq_hz != listen_freq_ || tx.dr != listen_dr_) return false;
  } else if (session_ && session_->listening()) {
    const auto& cmd = session_->command();
    if (!std::holds_alternative<d2d::Frame>(tx.payload) || tx.freq_hz != cmd.freq_hz || tx.dr != cmd.dr) return false;
  } else {
    return false;
  }
  locked_ = tx.id;
  return true;
}

void EndDevice::on_frame(const Transmission& tx, double rssi_dbm, Outcome outcome) {
  if (!locked_ || *locked_ != tx.id) return;
  locked_.reset();
  const SimTime now = engine_.now();

  if (const auto* frame = std::get_if<d2d::Frame>(&tx.payload)) {
    if (outcome != Outcome::Decoded || !session_) return;
    if (params_.d2d_frame_loss_prob > 0.0 && loss_rng_.bernoulli(params_.d2d_frame_loss_prob)) {
      ++counters_.d2d_frames_lost;
      auto f = nlohmann::ordered_json::object();
      f["seq"] = frame->seq;
      engine_.trace().record(now, config_.name, "d2d_lost", f, {"kind"});
      return;
    }
    auto f = nlohmann::ordered_json::object();
    f["frame"] = frame->kind == d2d::FrameKind::Data ? "data" : "ack";
    f["seq"] = frame->seq;
    f["rssi_dbm"] = rssi_dbm;
    engine_.trace().record(now, config_.name, "d2d_rx", f);
    apply(session_->on_receive(*frame, now));
    return;
  }

  if (state_ != MacState::Rx1 && state_ != MacState::Rx2) return;
  if (outcome == Outcome::Decoded && handle_window_frame(tx)) return;
  if (outcome != Outcome::Decoded) ++counters_.downlinks_lost;
  if (close_pending_) end_window();
}

bool EndDevice::handle_window_frame(const Transmission& tx) {
  const SimTime now = engine_.now();
  const Window w = state_ == MacState::Rx1 ? Window::RW1 : Window::RW2;

  if (const auto* acc = std::get_if<lorawan::JoinAccept>(&tx.payload)) {
    if (acc->dev_eui != config_.dev_eui || !join_cycle_) return false;
    joined_ = true;
    dev_addr_ = acc->dev_addr;
    auto f = nlohmann::ordered_json::object();
    f["dev_addr"] = acc->dev_addr;
    f["window"] = lorawan::to_string(w);
    engine_.trace().record(now, config_.name, "joined", f);
    end_cycle();
    return true;
  }

  const auto* dl = std::get_if<lorawan::Downlink>(&tx.payload);
  if (!dl || !dev_addr_ || dl->dev_addr != *dev_addr_) return false;
  fcnt_down_ = dl->fcnt + 1;
  if (w == Window::RW1) {
    ++counters_.downlinks_rw1;
  } else {
    ++counters_.downlinks_rw2;
  }
  if (!cycles_.empty()) cycles_.back().downlink = w;
  deliveries_.push_back({now, dl->port, static_cast<int>(dl->payload.size()), dl->message_id, w});

  auto f = nlohmann::ordered_json::object();
  f["window"] = lorawan::to_string(w);
  f["port"] = dl->port;
  f["bytes"] = dl->payload.size();
  f["fcnt"] = dl->fcnt;
  engine_.trace().record(now, config_.name, "downlink_rx", f);

  if (dl->port == d2d::kSetupPort) {
    try {
      pending_d2d_ = d2d::decode_setup(dl->payload);
      setup_received_ = now;
      auto s = nlohmann::ordered_json::object();
      s["role"] = d2d::to_string(pending_d2d_->role);
      s["peer"] = pending_d2d_->peer_addr;
      s["freq_hz"] = pending_d2d_->freq_hz;
      s["dr"] = pending_d2d_->dr;
      s["t1_us"] = pending_d2d_->t1.count();
      s["t2_us"] = pending_d2d_->t2.count();
      engine_.trace().record(now, config_.name, "d2d_setup", s);
    } catch (const d2d::CodecError& e) {
      ++counters_.setup_decode_errors;
      auto err = nlohmann::ordered_json::object();
      err["error"] = e.what();
      engine_.trace().record(now, config_.name, "setup_rejected", err);
    }
  }
  end_cycle();
  return true;
}

// -------------------------------------------------------------------- D2D

void EndDevice::suspend_for_d2d() {
  const SimTime now = engine_.now();
  state_ = MacState::D2dSuspended;
  pending_uplink_ = false;
  if (tx_event_) {
    engine_.queue().cancel(*tx_event_);
    tx_event_.reset();
  }
  energy_.command(now, params_.setup_commands);
  const SimTime ready = now + params_.command_latency * params_.setup_commands;
  const d2d::SetupCommand cmd = *pending_d2d_;
  pending_d2d_.reset();
  session_.emplace(cmd, *dev_addr_, d2d_config_);
  session_duty_blocked_ = 0;
  engine_.trace().record(now, config_.name, "mac_pause", base_fields());
  engine_.queue().schedule(ready, [this] {
    const SimTime t = engine_.now();
    auto f = nlohmann::ordered_json::object();
    f["role"] = d2d::to_string(session_->role());
    f["deadline_us"] = (t + session_->command().t2).count();
    engine_.trace().record(t, config_.name, "d2d_activate", f);
    apply(session_->activate(t, setup_received_));
  });
}

void EndDevice::apply(const std::vector<d2d::Action>& actions) {
  const SimTime now = engine_.now();
  for (const auto& a : actions) {
    switch (a.kind) {
      case d2d::Action::Kind::Transmit:
        d2d_transmit(a.frame);
        break;
      case d2d::Action::Kind::Listen:
        energy_.transition(now, RadioState::Rx);
        break;
      case d2d::Action::Kind::Idle:
        locked_.reset();
        energy_.transition(now, RadioState::Sleep);
        break;
      case d2d::Action::Kind::Finish:
        finish_session();
        return;
    }
  }
  if (session_timer_) {
    engine_.queue().cancel(*session_timer_);
    session_timer_.reset();
  }
  if (session_ && !session_->finished()) {
    if (const auto t = session_->next_timer()) {
      session_timer_ = engine_.queue().schedule(*t, [this] {
        session_timer_.reset();
        apply(session_->on_timer(engine_.now()));
      }, Phase::Transmit);
    }
  }
}

void EndDevice::d2d_transmit(const d2d::Frame& frame) {
  const SimTime now = engine_.now();
  const auto& cmd = session_->command();
  locked_.reset();
  Transmission tx;
  tx.start = now;
  tx.phy_bytes = frame.phy_bytes();
  tx.duration = phy::time_on_air(cmd.dr, tx.phy_bytes, session_->config().frame_options);
  tx.freq_hz = cmd.freq_hz;
  tx.dr = cmd.dr;
  tx.tx_power_dbm = cmd.tx_power_dbm;
  tx.payload = frame;

  auto f = nlohmann::ordered_json::object();
  f["frame"] = frame.kind == d2d::FrameKind::Data ? "data" : "ack";
  f["seq"] = frame.seq;
  f["last"] = frame.last;
  f["phy_bytes"] = tx.phy_bytes;
  f["toa_us"] = tx.duration.count();

  if (params_.duty_cycle_applies_to_d2d) {
    const auto& band = bands_.classify(cmd.freq_hz);
    if (duty_.next_allowed_time(band, now) > now) {
      // The radio refuses; the session only notices through missing replies.
      ++session_duty_blocked_;
      engine_.trace().record(now, config_.name, "d2d_duty_blocked", f);
      engine_.queue().schedule(now + tx.duration, [this] { d2d_tx_done(); }, Phase::Normal);
      return;
    }
    duty_.record_transmission(band, now, tx.duration);
  }
  energy_.transition(now, RadioState::Tx, cmd.tx_power_dbm);
  engine_.trace().record(now, config_.name, "d2d_tx", f);
  engine_.transmit(*this, std::move(tx));
}

void EndDevice::d2d_tx_done() {
  energy_.transition(engine_.now(), RadioState::Sleep);
  apply(session_->on_tx_end(engine_.now()));
}

void EndDevice::finish_session() {
  const SimTime now = engine_.now();
  if (session_timer_) {
    engine_.queue().cancel(*session_timer_);
    session_timer_.reset();
  }
  locked_.reset();
  energy_.transition(now, RadioState::Sleep);
  const auto& s = *session_;

  SessionRecord r;
  r.role = s.role();
  r.peer = s.command().peer_addr;
  r.setup_received = setup_received_;
  r.activated = s.activated_at();
  r.first_tx = s.first_tx_at();
  r.established = s.established_at();
  r.finished = now;
  r.outcome = s.state();
  r.frames_sent = s.frames_sent();
  r.retransmissions = s.retransmissions();
  r.packets_acked = s.packets_acked();
  r.bytes_delivered = s.bytes_delivered();
  r.timeouts = s.timeouts();
  r.duty_blocked = session_duty_blocked_;

  auto f = nlohmann::ordered_json::object();
  f["outcome"] = d2d::to_string(s.state());
  f["frames_sent"] = s.frames_sent();
  f["retransmissions"] = s.retransmissions();
  engine_.trace().record(now, config_.name, "d2d_end", f);

  energy_.command(now, params_.resume_commands);
  const SimTime ready = now + params_.command_latency * params_.resume_commands;
  r.resumed = ready;
  sessions_.push_back(r);
  resuming_ = true;
  engine_.queue().schedule(ready, [this] {
    session_.reset();
    resuming_ = false;
    state_ = MacState::Sleep;
    engine_.trace().record(engine_.now(), config_.name, "mac_resume", base_fields());
    try_send();
  });
}

}  // namespace lorasim::mac
