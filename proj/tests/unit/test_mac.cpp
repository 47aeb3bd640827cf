#include <gtest/gtest.h>

#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "lorasim/network.hpp"
#include "lorasim/scenario.hpp"
#include "oracles/toa_oracle.hpp"

using namespace lorasim;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

// One gateway and one provisioned device; `extra` lands under the device.
std::string single(const std::string& extra, const std::string& top = "", double end = 300) {
  std::ostringstream y;
  y << "name: t\nseed: 5\nend_time: " << end << "\n" << top
    << "power_profile: datasheet_sx1276\n"
       "gateways:\n  - name: gw\n    position: [0, 0]\n"
       "devices:\n  - name: dev\n    dev_addr: 0x26000001\n    position: [500, 0]\n"
    << extra;
  return y.str();
}

std::vector<json> events(const std::string& trace, const std::string& kind, const std::string& entity = "") {
  std::vector<json> out;
  std::istringstream in(trace);
  for (std::string line; std::getline(in, line);) {
    auto j = json::parse(line);
    if (j["kind"] == kind && (entity.empty() || j["entity"] == entity)) out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

TEST(ReceiveWindows, OpenExactlyAtConfiguredDelays) {
  Network net(parse_scenario(single("    dr: 3\n    period: 20\n")));
  net.run();
  const auto& trace = net.engine().trace().text();
  const auto opens = events(trace, "rx_open", "dev");
  ASSERT_GT(opens.size(), 20u);
  const auto& cycles = net.device("dev").cycles();
  std::size_t k = 0;
  for (const auto& o : opens) {
    const auto at = SimTime{o["time_us"].get<std::int64_t>()};
    while (k + 1 < cycles.size() && cycles[k + 1].tx_end <= at) ++k;
    if (o["fields"]["window"] == "rw1") {
      EXPECT_EQ(o["fields"]["offset_us"], 1'000'000);
      EXPECT_EQ(at, cycles[k].tx_end + 1s);
      EXPECT_EQ(o["fields"]["freq_hz"], cycles[k].freq_hz);
      EXPECT_EQ(o["fields"]["dr"], 3);
    } else {
      EXPECT_EQ(o["fields"]["offset_us"], 2'000'000);
      EXPECT_EQ(at, cycles[k].tx_end + 2s);
      EXPECT_EQ(o["fields"]["freq_hz"], 869.525e6);
      EXPECT_EQ(o["fields"]["dr"], 3);
    }
  }
  // Nothing queued: the device is asleep after RW2 closes.
  for (const auto& c : cycles) {
    EXPECT_FALSE(c.downlink);
    EXPECT_GT(c.end, c.tx_end + 2s);
  }
  EXPECT_EQ(net.device("dev").state(), mac::MacState::Sleep);
}

TEST(ReceiveWindows, CustomDelaysAndRx2) {
  Network net(parse_scenario(
      single("    dr: 5\n    period: 30\n", "mac:\n  rx1_delay: 3\n  rx2_delay: 4\n  rx2_freq_hz: 869525000\n  rx2_dr: 0\n")));
  net.run();
  for (const auto& o : events(net.engine().trace().text(), "rx_open", "dev")) {
    if (o["fields"]["window"] == "rw1") {
      EXPECT_EQ(o["fields"]["offset_us"], 3'000'000);
    } else {
      EXPECT_EQ(o["fields"]["offset_us"], 4'000'000);
      EXPECT_EQ(o["fields"]["dr"], 0);
    }
  }
}

TEST(Uplink, ChannelDrawIsUniform) {
  // Device duty cycle off so the draw is the only thing that picks channels.
  Network net(parse_scenario(single("    dr: 5\n    period: 4\n    payload_bytes: 4\n",
                                    "switches:\n  device_duty_cycle: false\n", 40'100)),
              {std::nullopt, false});
  net.run();
  std::map<double, int> hits;
  for (const auto& c : net.device("dev").cycles()) ++hits[c.freq_hz];
  const auto n = net.device("dev").cycles().size();
  ASSERT_GE(n, 10'000u);
  ASSERT_EQ(hits.size(), 3u);
  for (const auto& [f, k] : hits) EXPECT_NEAR(static_cast<double>(k) / n, 1.0 / 3.0, 0.02) << f;
}

TEST(Uplink, SingleChannelAlwaysUsed) {
  Network net(parse_scenario(single("    dr: 5\n    period: 10\n    channels: [868300000]\n")));
  net.run();
  ASSERT_FALSE(net.device("dev").cycles().empty());
  for (const auto& c : net.device("dev").cycles()) EXPECT_EQ(c.freq_hz, 868.3e6);
}

TEST(Uplink, FrameCounterStrictlyIncreases) {
  Network net(parse_scenario(single("    dr: 5\n    period: 10\n")));
  net.run();
  const auto& cycles = net.device("dev").cycles();
  ASSERT_GT(cycles.size(), 2u);
  for (std::size_t i = 1; i < cycles.size(); ++i) EXPECT_EQ(cycles[i].fcnt, cycles[i - 1].fcnt + 1);
  EXPECT_EQ(net.device("dev").fcnt_up(), cycles.size());
}

// DR0 with a 51 B payload takes 2.79 s on air, so on one channel the next
// frame has to wait 99 times that.
TEST(Uplink, DutyCycleDefersTheNextFrame) {
  Network net(parse_scenario(
      single("    dr: 0\n    period: 4.8\n    payload_bytes: 51\n    channels: [868100000]\n", "", 1200)));
  net.run();
  const auto& dev = net.device("dev");
  const auto toa = Duration{oracle::dr_toa_us(0, 64)};
  const auto& cycles = dev.cycles();
  ASSERT_GE(cycles.size(), 3u);
  for (std::size_t i = 1; i < cycles.size(); ++i) EXPECT_GE(cycles[i].start, cycles[i - 1].start + toa * 100);
  EXPECT_GT(dev.counters().duty_deferrals, 0u);
  EXPECT_GT(dev.counters().slots_overrun, 0u);
  EXPECT_EQ(dev.duty().accumulated("g1"), toa * static_cast<std::int64_t>(cycles.size()));
}

TEST(Downlink, RelayedPayloadLandsInRw2AtDr3) {
  auto s = load_named_scenario("table2_conventional");
  Network net(std::move(s), {std::nullopt, false});
  net.run();
  const auto& rx = net.device("receiver");
  ASSERT_FALSE(rx.deliveries().empty());
  for (const auto& d : rx.deliveries()) {
    EXPECT_EQ(d.window, lorawan::Window::RW2);
    EXPECT_EQ(d.port, 1);
    EXPECT_EQ(d.bytes, 51);
  }
  EXPECT_EQ(rx.counters().downlinks_rw1, 0u);
  EXPECT_EQ(rx.fcnt_down(), rx.deliveries().size());
}

TEST(Downlink, PreferRw1WhenItFits) {
  std::string y = single("    dr: 0\n    period: 10\n    channels: [868100000]\n", "switches:\n  device_duty_cycle: false\n");
  y += "  - name: sink\n    dev_addr: 0x26000002\n    position: [500, 50]\n    dr: 0\n    period: 10\n"
       "    first_uplink: 3\n    channels: [868300000]\n"
       "relays:\n  - {from: dev, to: sink}\n";
  Network net(parse_scenario(y));
  net.run();
  const auto& sink = net.device("sink");
  ASSERT_FALSE(sink.deliveries().empty());
  EXPECT_GT(sink.counters().downlinks_rw1, 0u);
  for (const auto& d : sink.deliveries()) EXPECT_EQ(d.bytes, 12);
}

namespace {

// Hand-wired engine, server, gateway and device for feeding raw downlinks.
struct Bench {
  mac::MacParams params;
  regulator::BandPlan bands = regulator::BandPlan::eu868();
  Engine engine{1, {}, true};
  ns::NetworkServer server{engine, {}, params};
  ns::Gateway gw{engine, {"gw", {0, 0}, {868.1e6, 868.3e6, 868.5e6}, 14.0}, bands, true};
  std::unique_ptr<mac::EndDevice> dev;

  Bench() {
    params.device_duty_cycle = false;
    mac::DeviceConfig c;
    c.name = "dev";
    c.dev_eui = "dev";
    c.dev_addr = 0x26000001;
    c.position = {500, 0};
    c.channels = {868.1e6};
    c.dr = 3;
    c.period = 10s;
    c.jitter = 0.0;
    c.profile.tx_watts = {{14.0, 0.1}};
    c.profile.rx_watts = 0.04;
    dev = std::make_unique<mac::EndDevice>(engine, c, params, bands);
    gw.connect(&server);
    engine.attach(&gw);
    engine.attach(dev.get());
    server.add_gateway(&gw);
    ns::DeviceInfo info;
    info.name = "dev";
    info.dev_eui = "dev";
    info.dev_addr = 0x26000001;
    info.uplink_dr = 3;
    info.uplink_payload_bytes = 12;
    info.period = 10s;
    server.register_device(info);
    dev->start();
  }
};

}  // namespace

TEST(Downlink, ApplicationPortHasNoD2dEffect) {
  Bench b;
  b.server.queue_downlink(0x26000001, 1, std::vector<std::uint8_t>(5, 0xAB));
  b.engine.queue().run_until(30s);
  ASSERT_EQ(b.dev->deliveries().size(), 1u);
  EXPECT_EQ(b.dev->deliveries()[0].port, 1);
  EXPECT_EQ(b.dev->deliveries()[0].bytes, 5);
  EXPECT_FALSE(b.dev->pending_d2d());
  EXPECT_TRUE(b.dev->sessions().empty());
  EXPECT_EQ(b.dev->fcnt_down(), 1u);
}

TEST(Downlink, TruncatedSetupIsDroppedAndCounted) {
  Bench b;
  auto bytes = d2d::encode_setup({d2d::Role::Scanner, 865'000'000, 6, 14, 0s, 30s, 0x26000002});
  bytes.pop_back();
  b.server.queue_downlink(0x26000001, d2d::kSetupPort, bytes);
  b.engine.queue().run_until(40s);
  EXPECT_EQ(b.dev->counters().setup_decode_errors, 1u);
  EXPECT_FALSE(b.dev->pending_d2d());
  EXPECT_TRUE(b.dev->sessions().empty());
  // Normal operation continues.
  EXPECT_GE(b.dev->counters().uplinks_sent, 3u);
  EXPECT_EQ(b.dev->counters().slots_skipped_suspended, 0u);
}

TEST(Downlink, ValidSetupArmsSession) {
  Bench b;
  const d2d::SetupCommand cmd{d2d::Role::Scanner, 865'000'000, 6, 14, 0s, 5s, 0x26000002};
  b.server.queue_downlink(0x26000001, d2d::kSetupPort, d2d::encode_setup(cmd));
  // RW1 lands at 2.41 s and T2 runs out five seconds later.
  b.engine.queue().run_until(3s);
  ASSERT_TRUE(b.dev->session());
  EXPECT_EQ(b.dev->session()->command(), cmd);
  EXPECT_EQ(b.dev->state(), mac::MacState::D2dSuspended);
  b.engine.queue().run_until(60s);
  ASSERT_EQ(b.dev->sessions().size(), 1u);
  EXPECT_EQ(b.dev->sessions()[0].outcome, d2d::State::Failed);  // nobody to talk to
  EXPECT_NE(b.dev->state(), mac::MacState::D2dSuspended);
}

TEST(Suspension, NoLorawanTrafficWhileSuspended) {
  Network net(load_named_scenario("table2_d2d"));
  net.run();
  const auto trace = net.engine().trace().text();
  for (const std::string name : {"scanner", "initiator"}) {
    const auto pause = events(trace, "mac_pause", name);
    const auto resume = events(trace, "mac_resume", name);
    ASSERT_EQ(pause.size(), 1u);
    ASSERT_EQ(resume.size(), 1u);
    const auto from = pause[0]["time_us"].get<std::int64_t>();
    const auto to = resume[0]["time_us"].get<std::int64_t>();
    for (const auto& u : events(trace, "uplink_tx", name)) {
      const auto t = u["time_us"].get<std::int64_t>();
      EXPECT_TRUE(t < from || t >= to) << name << " uplink at " << t;
    }
    EXPECT_GT(net.device(name).counters().slots_skipped_suspended, 0u);
  }
}

TEST(Join, IdealChannelJoinsAfterOneExchange) {
  const std::string y =
      "name: one\nseed: 4\nend_time: 300\npower_profile: datasheet_sx1276\n"
      "gateways:\n  - {name: gw, position: [0, 0]}\n"
      "devices:\n  - {name: solo, position: [800, 300], dr: 2, period: 60, payload_bytes: 20}\n";
  Network net(parse_scenario(y));
  net.run();
  const auto& d = net.device("solo");
  EXPECT_TRUE(d.joined());
  EXPECT_EQ(d.counters().join_requests, 1u);
  ASSERT_TRUE(d.dev_addr());
  EXPECT_GT(d.counters().uplinks_sent, 0u);
}

TEST(Join, DemoFleetAllJoin) {
  // Accepts share the gateway's duty budget, so a node may need a second try.
  Network net(load_named_scenario("join_demo"));
  net.run();
  for (const auto& d : net.devices()) {
    EXPECT_TRUE(d->joined()) << d->name();
    EXPECT_GE(d->counters().join_requests, 1u) << d->name();
    EXPECT_GT(d->counters().uplinks_sent, 0u) << d->name();
  }
}

TEST(Join, OutOfRangeKeepsRetrying) {
  const std::string y =
      "name: far\nseed: 2\nend_time: 600\npower_profile: datasheet_sx1276\n"
      "gateways:\n  - {name: gw, position: [0, 0]}\n"
      "devices:\n  - {name: lost, position: [90000, 0], dr: 5, period: 60}\n";
  Network net(parse_scenario(y));
  net.run();
  const auto& d = net.device("lost");
  EXPECT_FALSE(d.joined());
  EXPECT_GT(d.counters().join_requests, 5u);
  EXPECT_EQ(d.counters().uplinks_sent, 0u);
}

TEST(Join, LossyJoinReplaysWithSeed) {
  const std::string y =
      "name: coin\nseed: 9\nend_time: 900\npower_profile: datasheet_sx1276\n"
      "mac:\n  join_success_probability: 0.5\n"
      "gateways:\n  - {name: gw, position: [0, 0]}\n"
      "devices:\n  - {name: n, count: 4, position: [400, 0], dr: 5, period: 60}\n";
  const auto a = run(parse_scenario(y));
  const auto b = run(parse_scenario(y));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_GT(a.metrics["network"]["joins_rejected"].get<int>(), 0);
  EXPECT_GT(a.metrics["network"]["joins_accepted"].get<int>(), 0);
}
