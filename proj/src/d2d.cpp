#include "lorasim/d2d.hpp"

#include <algorithm>
#include <sstream>

namespace lorasim::d2d {

const char* to_string(Role r) { return r == Role::Initiator ? "initiator" : "scanner"; }

const char* to_string(State s) {
  switch (s) {
    case State::Armed:
      return "armed";
    case State::Scanning:
      return "scanning";
    case State::Initiating:
      return "initiating";
    case State::Exchange:
      return "exchange";
    case State::Done:
      return "done";
    case State::Failed:
      return "failed";
  }
  return "?";
}

namespace {

constexpr std::int64_t kTimeUnitUs = 100'000;  // 0.1 s
constexpr std::uint32_t kFreqUnitHz = 100;

std::uint16_t encode_time(Duration d, const char* field) {
  const auto us = d.count();
  if (us < 0 || us % kTimeUnitUs != 0 || us / kTimeUnitUs > 0xFFFF) {
    std::ostringstream os;
    os << field << " = " << us << " us is not a multiple of 0.1 s within 0..6553.5 s";
    throw CodecError(os.str());
  }
  return static_cast<std::uint16_t>(us / kTimeUnitUs);
}

}  // namespace

std::vector<std::uint8_t> encode_setup(const SetupCommand& cmd) {
  if (cmd.freq_hz % kFreqUnitHz != 0 || cmd.freq_hz / kFreqUnitHz > 0xFFFFFF) {
    throw CodecError("frequency " + std::to_string(cmd.freq_hz) + " Hz is not encodable in 100 Hz units");
  }
  if (cmd.dr < 0 || cmd.dr >= phy::kNumDataRates) throw CodecError("data rate out of range: " + std::to_string(cmd.dr));
  if (cmd.tx_power_dbm < -128 || cmd.tx_power_dbm > 127) throw CodecError("tx power does not fit a signed byte");
  const std::uint16_t t1 = encode_time(cmd.t1, "t1");
  const std::uint16_t t2 = encode_time(cmd.t2, "t2");
  const std::uint32_t f = cmd.freq_hz / kFreqUnitHz;

  std::vector<std::uint8_t> b(kSetupBytes, 0);
  b[0] = static_cast<std::uint8_t>(kCodecVersion << 4 | static_cast<std::uint8_t>(cmd.role) << 3);
  b[1] = static_cast<std::uint8_t>(f >> 16);
  b[2] = static_cast<std::uint8_t>(f >> 8);
  b[3] = static_cast<std::uint8_t>(f);
  b[4] = static_cast<std::uint8_t>(cmd.dr);
  b[5] = static_cast<std::uint8_t>(static_cast<std::int8_t>(cmd.tx_power_dbm));
  b[6] = static_cast<std::uint8_t>(t1 >> 8);
  b[7] = static_cast<std::uint8_t>(t1);
  b[8] = static_cast<std::uint8_t>(t2 >> 8);
  b[9] = static_cast<std::uint8_t>(t2);
  for (int i = 0; i < 4; ++i) b[10 + i] = static_cast<std::uint8_t>(cmd.peer_addr >> (24 - 8 * i));
  return b;
}

SetupCommand decode_setup(const std::vector<std::uint8_t>& b) {
  if (b.size() != kSetupBytes) {
    throw CodecError("setup command must be " + std::to_string(kSetupBytes) + " bytes, got " +
                     std::to_string(b.size()));
  }
  if ((b[0] >> 4) != kCodecVersion) throw CodecError("unsupported setup version " + std::to_string(b[0] >> 4));
  if ((b[0] & 0x07) != 0) throw CodecError("reserved bits set in setup header");

  SetupCommand c;
  c.role = static_cast<Role>((b[0] >> 3) & 1);
  c.freq_hz = (std::uint32_t{b[1]} << 16 | std::uint32_t{b[2]} << 8 | b[3]) * kFreqUnitHz;
  c.dr = b[4];
  if (c.dr >= phy::kNumDataRates) throw CodecError("data rate out of range: " + std::to_string(c.dr));
  c.tx_power_dbm = static_cast<std::int8_t>(b[5]);
  c.t1 = Duration{(std::int64_t{b[6]} << 8 | b[7]) * kTimeUnitUs};
  c.t2 = Duration{(std::int64_t{b[8]} << 8 | b[9]) * kTimeUnitUs};
  c.peer_addr = std::uint32_t{b[10]} << 24 | std::uint32_t{b[11]} << 16 | std::uint32_t{b[12]} << 8 | b[13];
  return c;
}

Session::Session(SetupCommand cmd, std::uint32_t self_addr, SessionConfig config)
    : cmd_(cmd), self_(self_addr), cfg_(config) {
  if (cfg_.data_bytes <= 0 || cfg_.total_bytes <= 0 || cfg_.ack_bytes < 0 || cfg_.max_attempts < 1) {
    throw std::invalid_argument("invalid D2D session configuration");
  }
  packets_ = (cfg_.total_bytes + cfg_.data_bytes - 1) / cfg_.data_bytes;
  const auto& dr = phy::data_rate(cmd_.dr);
  data_toa_ = phy::time_on_air(dr, cfg_.data_bytes + kFrameOverheadBytes, cfg_.frame_options);
  ack_toa_ = phy::time_on_air(dr, cfg_.ack_bytes + kFrameOverheadBytes, cfg_.frame_options);
}

Frame Session::data_frame(int seq) const {
  Frame f;
  f.kind = FrameKind::Data;
  f.src = self_;
  f.dst = cmd_.peer_addr;
  f.seq = seq;
  f.last = seq == packets_ - 1;
  f.app_bytes = std::min(cfg_.data_bytes, cfg_.total_bytes - seq * cfg_.data_bytes);
  return f;
}

std::vector<Action> Session::activate(SimTime now, SimTime reference) {
  if (state_ != State::Armed) throw std::logic_error("session activated twice");
  activated_at_ = now;
  deadline_ = now + cmd_.t2;
  std::vector<Action> out;
  if (cmd_.t1 > cmd_.t2) {
    finish(out, now, State::Failed);
    return out;
  }
  state_ = cmd_.role == Role::Scanner ? State::Scanning : State::Initiating;
  start_at_ = std::max(now, reference + cmd_.t1);
  out.push_back({Action::Kind::Idle});
  fire(out, now);
  return out;
}

std::optional<SimTime> Session::next_timer() const {
  if (finished_) return std::nullopt;
  std::optional<SimTime> t;
  auto take = [&](const std::optional<SimTime>& c) {
    if (c && (!t || *c < *t)) t = c;
  };
  if (!finish_pending_ && state_ != State::Armed) take(deadline_);
  take(start_at_);
  take(tx_at_);
  take(no_reply_at_);
  take(done_at_);
  return t;
}

void Session::finish(std::vector<Action>& out, SimTime now, State terminal) {
  start_at_.reset();
  tx_at_.reset();
  no_reply_at_.reset();
  done_at_.reset();
  listening_ = false;
  if (in_tx_) {
    finish_pending_ = true;
    pending_terminal_ = terminal;
    return;
  }
  state_ = terminal;
  finished_ = true;
  finished_at_ = now;
  out.push_back({Action::Kind::Finish});
}

void Session::fire(std::vector<Action>& out, SimTime now) {
  if (finished_ || finish_pending_) return;
  if (state_ != State::Armed && now >= deadline_) {
    const bool complete = cmd_.role == Role::Initiator ? current_ == packets_ : acked_last_;
    finish(out, now, complete ? State::Done : State::Failed);
    return;
  }
  if (done_at_ && *done_at_ <= now) {
    finish(out, now, State::Done);
    return;
  }
  if (no_reply_at_ && *no_reply_at_ <= now) {
    ++timeouts_;
    ++misses_;
    if (misses_ >= cfg_.max_attempts) {
      finish(out, now, State::Failed);
      return;
    }
    if (cmd_.role == Role::Initiator) {
      no_reply_at_.reset();
      tx_at_ = now;
      pending_frame_ = data_frame(current_);
    } else {
      // Keep listening for one more initiator cycle: data, turnaround, ack wait.
      *no_reply_at_ += data_toa_ + cfg_.turnaround + ack_toa_ + cfg_.guard;
    }
  }
  if (start_at_ && *start_at_ <= now) {
    start_at_.reset();
    if (cmd_.role == Role::Initiator) {
      tx_at_ = now;
      pending_frame_ = data_frame(current_);
    } else {
      listening_ = true;
      out.push_back({Action::Kind::Listen});
    }
  }
  if (tx_at_ && *tx_at_ <= now) {
    tx_at_.reset();
    in_tx_ = true;
    listening_ = false;
    ++frames_sent_;
    if (pending_frame_.kind == FrameKind::Data && misses_ > 0) ++retransmissions_;
    if (!first_tx_at_) first_tx_at_ = now;
    out.push_back({Action::Kind::Transmit, pending_frame_});
  }
}

std::vector<Action> Session::on_timer(SimTime now) {
  std::vector<Action> out;
  fire(out, now);
  return out;
}

std::vector<Action> Session::on_tx_end(SimTime now) {
  std::vector<Action> out;
  if (!in_tx_) throw std::logic_error("tx end without a transmission in progress");
  in_tx_ = false;
  if (finish_pending_) {
    finish_pending_ = false;
    state_ = pending_terminal_;
    finished_ = true;
    finished_at_ = now;
    out.push_back({Action::Kind::Finish});
    return out;
  }
  if (cmd_.role == Role::Scanner && acked_last_) {
    finish(out, now, State::Done);
    return out;
  }
  listening_ = true;
  out.push_back({Action::Kind::Listen});
  if (cmd_.role == Role::Initiator) {
    no_reply_at_ = now + cfg_.turnaround + ack_toa_ + cfg_.guard;
  } else {
    no_reply_at_ = now + cfg_.turnaround + data_toa_ + cfg_.guard;
  }
  fire(out, now);
  return out;
}

std::vector<Action> Session::on_receive(const Frame& frame, SimTime now) {
  std::vector<Action> out;
  if (finished_ || finish_pending_ || !listening_) return out;
  if (frame.dst != self_ || frame.src != cmd_.peer_addr) {
    ++ignored_;
    return out;
  }
  const bool initiator = cmd_.role == Role::Initiator;
  const FrameKind expected = initiator ? FrameKind::Ack : FrameKind::Data;
  if (frame.kind != expected) {
    ++ignored_;
    return out;
  }

  if (initiator) {
    if (frame.seq != current_) {
      ++duplicates_;
      return out;
    }
    if (!established_at_) established_at_ = now;
    state_ = State::Exchange;
    misses_ = 0;
    no_reply_at_.reset();
    ++acked_;
    bytes_delivered_ += data_frame(current_).app_bytes;
    ++current_;
    listening_ = false;
    out.push_back({Action::Kind::Idle});
    if (current_ == packets_) {
      done_at_ = now + cfg_.turnaround;
    } else {
      tx_at_ = now + cfg_.turnaround;
      pending_frame_ = data_frame(current_);
    }
  } else {
    if (frame.seq > current_) {
      ++ignored_;
      return out;
    }
    if (!established_at_) established_at_ = now;
    state_ = State::Exchange;
    misses_ = 0;
    no_reply_at_.reset();
    if (frame.seq == current_) {
      ++current_;
      bytes_delivered_ += frame.app_bytes;
    } else {
      ++duplicates_;  // our ack was lost; acknowledge again
    }
    if (frame.last) acked_last_ = true;
    Frame ack;
    ack.kind = FrameKind::Ack;
    ack.src = self_;
    ack.dst = cmd_.peer_addr;
    ack.seq = frame.seq;
    ack.last = frame.last;
    ack.app_bytes = cfg_.ack_bytes;
    pending_frame_ = ack;
    tx_at_ = now + cfg_.turnaround;
    listening_ = false;
    out.push_back({Action::Kind::Idle});
  }
  fire(out, now);
  return out;
}

}  // namespace lorasim::d2d
