#include <gtest/gtest.h>

#include "lorasim/network.hpp"
#include "lorasim/netserver.hpp"
#include "lorasim/scenario.hpp"
#include "oracles/toa_oracle.hpp"

using namespace lorasim;
using namespace lorasim::ns;
using namespace std::chrono_literals;

namespace {

struct Bench {
  mac::MacParams params;
  regulator::BandPlan bands = regulator::BandPlan::eu868();
  Engine engine{1, {}, true};
  NetworkServer server;
  Gateway gw{engine, {"gw", {0, 0}, {868.1e6, 868.3e6, 868.5e6}, 14.0}, bands, true};

  explicit Bench(NetworkServer::Config c = {}) : server(engine, c, params) {
    server.add_gateway(&gw);
    for (std::uint32_t k = 1; k <= 3; ++k) {
      DeviceInfo info;
      info.name = "d" + std::to_string(k);
      info.dev_eui = info.name;
      info.dev_addr = 0x26000000 + k;
      info.uplink_dr = 0;
      info.uplink_payload_bytes = 12;
      info.period = 4800ms;
      info.jitter = 0.01;
      server.register_device(info);
    }
    DeviceInfo otaa;
    otaa.name = "late";
    otaa.dev_eui = "late";
    otaa.period = 4800ms;
    server.register_device(otaa);
  }

  Transmission uplink(std::uint64_t id, std::uint32_t addr, std::uint32_t fcnt) {
    Transmission tx;
    tx.id = id;
    tx.start = engine.now();
    tx.duration = 1s;
    tx.freq_hz = 868.1e6;
    tx.payload = lorawan::Uplink{addr, fcnt, 1, {1, 2, 3}, -1};
    return tx;
  }
};

D2DParams reference() {
  D2DParams p;
  p.session.turnaround = 50ms;
  return p;
}

// Bounds for the bundled pair worked out from the symbol oracle.
struct Expected {
  std::int64_t uplink = oracle::dr_toa_us(0, 25);
  std::int64_t setup = oracle::dr_toa_us(3, 27, false);
  std::int64_t exchange = 10 * (oracle::dr_toa_us(6, 253) + oracle::dr_toa_us(6, 23) + 100'000);
  std::int64_t worst = 4'800'000 * 102 / 100 + uplink + 2'000'000 + setup;
  std::int64_t min_gap = worst - uplink - 1'000'000;
  std::int64_t max_gap = 30'000'000 - worst - exchange;
};

}  // namespace

TEST(Dedup, TwoGatewaysOneDelivery) {
  const std::string y =
      "name: two\nseed: 1\nend_time: 120\npower_profile: datasheet_sx1276\n"
      "gateways:\n  - {name: a, position: [0, 0]}\n  - {name: b, position: [1000, 0]}\n"
      "devices:\n  - {name: n, dev_addr: 0x26000001, position: [500, 0], dr: 5, period: 10}\n";
  Network net(parse_scenario(y));
  net.run();
  const auto& ns = net.server();
  const auto sent = net.device("n").counters().uplinks_sent;
  ASSERT_GT(sent, 5u);
  EXPECT_EQ(ns.counters().deliveries, sent);
  EXPECT_EQ(ns.metadata().size(), 2 * sent);
  EXPECT_EQ(ns.counters().duplicates, sent);
  std::set<std::uint32_t> fcnts;
  for (const auto& d : ns.deliveries()) EXPECT_TRUE(fcnts.insert(d.fcnt).second);
}

TEST(Dedup, SingleGatewayDeliversWhatItDecodes) {
  Network net(load_named_scenario("table2_conventional"), {std::nullopt, false});
  net.run();
  EXPECT_EQ(net.server().counters().deliveries, net.gateways()[0]->frames_decoded());
  EXPECT_EQ(net.server().counters().duplicates, 0u);
}

TEST(Dedup, ReplayedCounterIsDropped) {
  Bench b;
  b.server.on_uplink(b.gw, b.uplink(10, 0x26000001, 7), -100);
  b.server.on_uplink(b.gw, b.uplink(11, 0x26000001, 7), -100);
  b.server.on_uplink(b.gw, b.uplink(12, 0x26000001, 6), -100);
  b.server.on_uplink(b.gw, b.uplink(13, 0x26000001, 8), -100);
  EXPECT_EQ(b.server.counters().deliveries, 2u);
  EXPECT_EQ(b.server.counters().replays, 2u);
}

TEST(Dedup, UnknownDeviceIsCounted) {
  Bench b;
  b.server.on_uplink(b.gw, b.uplink(1, 0x11111111, 0), -100);
  EXPECT_EQ(b.server.counters().unknown_device, 1u);
  EXPECT_EQ(b.server.counters().deliveries, 0u);
}

TEST(Downlink, SizeLimitFollowsUsableWindows) {
  Bench rw1;  // RW1 at DR0 (59 B) or RW2 at DR3 (123 B)
  EXPECT_NO_THROW(rw1.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(14)));
  EXPECT_NO_THROW(rw1.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(123)));
  EXPECT_THROW(rw1.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(200)), DownlinkSizeError);
  EXPECT_THROW(rw1.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(124)), DownlinkSizeError);
  EXPECT_EQ(rw1.server.counters().downlinks_rejected, 2u);
  EXPECT_EQ(rw1.server.queued(0x26000001), 2u);
}

TEST(Downlink, OversizeForRw1GoesToRw2) {
  Bench b;
  b.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(100));
  b.server.on_uplink(b.gw, b.uplink(1, 0x26000001, 0), -100);
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw1, 0u);
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw2, 1u);
}

TEST(Downlink, SmallFramePrefersRw1) {
  Bench b;
  b.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(14));
  b.server.on_uplink(b.gw, b.uplink(1, 0x26000001, 0), -100);
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw1, 1u);
}

TEST(Downlink, Rw2OnlyPolicy) {
  Bench b({DownlinkPolicy::Rw2Only, 1.0, 0x26000001});
  b.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(14));
  b.server.on_uplink(b.gw, b.uplink(1, 0x26000001, 0), -100);
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw2, 1u);
  EXPECT_THROW(b.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(124)), DownlinkSizeError);
}

TEST(Downlink, GatewayDutyBlockedDefersToNextUplink) {
  Bench b;
  b.server.queue_downlink(0x26000002, 1, std::vector<std::uint8_t>(40));
  b.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(100));
  b.server.queue_downlink(0x26000003, 1, std::vector<std::uint8_t>(40));
  b.server.on_uplink(b.gw, b.uplink(1, 0x26000002, 0), -100);  // RW1 at 2 s closes g1 for minutes
  b.engine.queue().run_until(4s);
  b.server.on_uplink(b.gw, b.uplink(2, 0x26000001, 0), -100);  // too big for RW1: RW2 at 7 s closes g3
  b.engine.queue().run_until(7s);
  b.server.on_uplink(b.gw, b.uplink(3, 0x26000003, 0), -100);  // RW1 at 9 s, RW2 at 10 s: both shut
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw1, 1u);
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw2, 1u);
  EXPECT_EQ(b.server.counters().downlink_deferrals, 1u);
  EXPECT_EQ(b.server.queued(0x26000003), 1u);
  // Once g3 has cooled down the frame rides a later uplink's RW2.
  b.engine.queue().run_until(30s);
  b.server.on_uplink(b.gw, b.uplink(4, 0x26000003, 1), -100);
  EXPECT_EQ(b.server.queued(0x26000003), 0u);
  EXPECT_EQ(b.server.counters().downlinks_scheduled_rw2, 2u);
}

TEST(Planner, ReferenceParametersGiveSymmetricSetups) {
  Bench b;
  const auto plan = b.server.plan_d2d(0x26000002, 0x26000001, reference(), 10s);
  EXPECT_EQ(plan.setup_scanner.role, d2d::Role::Scanner);
  EXPECT_EQ(plan.setup_initiator.role, d2d::Role::Initiator);
  EXPECT_EQ(plan.setup_scanner.t1, 0s);
  EXPECT_EQ(plan.setup_initiator.t1, 15s);
  EXPECT_EQ(plan.setup_initiator.peer_addr, 0x26000001u);
  EXPECT_EQ(plan.setup_scanner.peer_addr, 0x26000002u);
  const auto i = d2d::decode_setup(d2d::encode_setup(plan.setup_initiator));
  const auto s = d2d::decode_setup(d2d::encode_setup(plan.setup_scanner));
  for (const auto* c : {&i, &s}) {
    EXPECT_EQ(c->freq_hz, 865'000'000u);
    EXPECT_EQ(c->dr, 6);
    EXPECT_EQ(c->tx_power_dbm, 14);
    EXPECT_EQ(c->t2, 30s);
  }
  const Expected e;
  EXPECT_EQ(plan.issue_deadline, 10s + Duration{2 * e.worst});
}

TEST(Planner, BoundsMatchHandComputation) {
  const Expected e;
  PlanTiming t;
  t.scanner_period = t.initiator_period = 4800ms;
  t.jitter = 0.01;
  t.scanner_uplink_toa = t.initiator_uplink_toa = Duration{e.uplink};
  t.setup_toa = Duration{e.setup};
  t.rx1_delay = 1s;
  t.rx2_delay = 2s;
  t.gap = 15s;
  t.t2 = 30s;
  t.exchange = Duration{e.exchange};
  const auto b = plan_bounds(t);
  EXPECT_EQ(b.scanner_worst.count(), e.worst);
  EXPECT_EQ(b.min_gap.count(), e.min_gap);
  EXPECT_EQ(b.max_gap.count(), e.max_gap);
  EXPECT_NO_THROW(check_plan_timing(t));
  t.gap = Duration{e.min_gap};
  EXPECT_THROW(check_plan_timing(t), InfeasibleTiming);
  t.gap = Duration{e.max_gap};
  EXPECT_NO_THROW(check_plan_timing(t));
  t.gap = Duration{e.max_gap + 1};
  EXPECT_THROW(check_plan_timing(t), InfeasibleTiming);
}

TEST(Planner, ExchangeDurationClosedForm) {
  const Expected e;
  d2d::SessionConfig c;
  c.turnaround = 50ms;
  EXPECT_EQ(exchange_duration(c, 6).count(), e.exchange);
  c.total_bytes = 500;  // two full frames and a 20 B tail
  const auto ack = oracle::dr_toa_us(6, 23);
  EXPECT_EQ(exchange_duration(c, 6).count(),
            2 * oracle::dr_toa_us(6, 253) + oracle::dr_toa_us(6, 33) + 3 * (ack + 100'000));
}

TEST(Planner, RejectsBadPairs) {
  Bench b;
  EXPECT_THROW(b.server.plan_d2d(0x26000001, 0x26000001, reference(), 0s), PlanningError);
  EXPECT_THROW(b.server.plan_d2d(0x26000001, 0x2600FFFF, reference(), 0s), PlanningError);
  auto p = reference();
  p.gap = 5s;
  EXPECT_THROW(b.server.plan_d2d(0x26000002, 0x26000001, p, 0s), InfeasibleTiming);
  p.gap = 20s;
  EXPECT_THROW(b.server.plan_d2d(0x26000002, 0x26000001, p, 0s), InfeasibleTiming);
}

TEST(Planner, UnjoinedDeviceIsRejected) {
  const std::string y =
      "name: j\nseed: 1\nend_time: 30\npower_profile: datasheet_sx1276\n"
      "gateways:\n  - {name: gw, position: [0, 0]}\n"
      "devices:\n"
      "  - {name: a, position: [100, 0], dr: 0, period: 4.8}\n"
      "  - {name: b, dev_addr: 0x26000009, position: [100, 10], dr: 0, period: 4.8}\n"
      "d2d:\n  - {at: 1, initiator: a, scanner: b}\n";
  Network net(parse_scenario(y));
  net.run();
  ASSERT_EQ(net.directives().size(), 1u);
  EXPECT_FALSE(net.directives()[0].planned);
  EXPECT_NE(net.directives()[0].error.find("joined"), std::string::npos);
}

TEST(Planner, IssuesScannerFirst) {
  Network net(load_named_scenario("table2_d2d"));
  net.run();
  const auto& s = net.device("scanner").sessions();
  const auto& i = net.device("initiator").sessions();
  ASSERT_EQ(s.size(), 1u);
  ASSERT_EQ(i.size(), 1u);
  EXPECT_LT(s[0].setup_received, i[0].setup_received);
  // The scanner is listening before the initiator's first frame.
  ASSERT_TRUE(i[0].first_tx);
  EXPECT_LT(s[0].activated, *i[0].first_tx);
}
