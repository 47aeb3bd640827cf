#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "lorasim/engine.hpp"
#include "lorasim/medium.hpp"
#include "oracles/arbitration_oracle.hpp"

using namespace lorasim;
using namespace std::chrono_literals;

namespace {

constexpr double kSens = -130.0;
constexpr double kThr = 6.0;

Outcome from_oracle(oracle::Result r) {
  switch (r) {
    case oracle::Result::Decoded:
      return Outcome::Decoded;
    case oracle::Result::Collision:
      return Outcome::Collision;
    case oracle::Result::BelowSensitivity:
      return Outcome::BelowSensitivity;
    case oracle::Result::None:
      return Outcome::None;
  }
  return Outcome::None;
}

Candidate cand(std::uint64_t id, double rssi, SimTime start = 0s, SimTime end = 1s, double f = 868.1e6, int dr = 0) {
  return {id, f, dr, start, end, rssi};
}

const Listening kWin{868.1e6, 0, 0s, 1s};

}  // namespace

TEST(Arbitrate, SingleFrameDecodes) {
  const auto a = arbitrate(kWin, {cand(4, -100)}, kSens, kThr);
  EXPECT_EQ(a.outcome, Outcome::Decoded);
  EXPECT_EQ(a.decoded, 4u);
}

TEST(Arbitrate, TwoDbApartCollide) {
  const auto a = arbitrate(kWin, {cand(1, -100), cand(2, -102)}, kSens, kThr);
  EXPECT_EQ(a.outcome, Outcome::Collision);
  EXPECT_FALSE(a.decoded);
}

TEST(Arbitrate, TenDbApartCaptures) {
  const auto a = arbitrate(kWin, {cand(1, -110, 200ms, 900ms), cand(2, -100)}, kSens, kThr);
  EXPECT_EQ(a.outcome, Outcome::Decoded);
  EXPECT_EQ(a.decoded, 2u);
}

TEST(Arbitrate, ExactlyAtThresholdCaptures) {
  EXPECT_EQ(arbitrate(kWin, {cand(1, -100), cand(2, -106)}, kSens, kThr).decoded, 1u);
}

TEST(Arbitrate, OrthogonalAndWeakFramesDoNotInterfere) {
  auto a = arbitrate(kWin, {cand(1, -100), cand(2, -100, 0s, 1s, 868.3e6), cand(3, -100, 0s, 1s, 868.1e6, 1)}, kSens,
                     kThr);
  EXPECT_EQ(a.decoded, 1u);
  a = arbitrate(kWin, {cand(1, -120), cand(2, -131)}, kSens, kThr);
  EXPECT_EQ(a.decoded, 1u);
  EXPECT_EQ(arbitrate(kWin, {cand(2, -131)}, kSens, kThr).outcome, Outcome::BelowSensitivity);
  EXPECT_EQ(arbitrate(kWin, {}, kSens, kThr).outcome, Outcome::None);
  // Touching [start, end) intervals do not overlap.
  EXPECT_EQ(arbitrate(kWin, {cand(1, -100, 1s, 2s)}, kSens, kThr).outcome, Outcome::None);
}

// Every generated instance of up to three frames, under every ordering of
// the input, must agree with the pairwise oracle.
TEST(Arbitrate, MatchesOracleOnRandomSmallInstances) {
  std::mt19937_64 gen(2024);
  const std::vector<double> powers{-140, -131, -130, -126, -124, -120, -118, -114, -100};
  const std::vector<double> thresholds{0.0, 6.0, 10.0};
  std::size_t cases = 0;
  for (int trial = 0; trial < 6000; ++trial) {
    const int n = 1 + static_cast<int>(gen() % 3);
    const double thr = thresholds[gen() % thresholds.size()];
    const Listening w{868.1e6, static_cast<int>(gen() % 2), SimTime{static_cast<std::int64_t>(gen() % 50)},
                      SimTime{static_cast<std::int64_t>(50 + gen() % 50)}};
    std::vector<Candidate> frames;
    for (int k = 0; k < n; ++k) {
      const auto s = static_cast<std::int64_t>(gen() % 100);
      const auto e = s + 1 + static_cast<std::int64_t>(gen() % 60);
      frames.push_back({static_cast<std::uint64_t>(k + 1), gen() % 4 ? 868.1e6 : 868.3e6, static_cast<int>(gen() % 2),
                        SimTime{s}, SimTime{e}, powers[gen() % powers.size()]});
    }
    std::vector<oracle::Frame> of;
    for (const auto& c : frames) of.push_back({c.id, c.freq_hz, c.dr, c.start.count(), c.end.count(), c.rssi_dbm});
    const auto expect = oracle::arbitrate({w.freq_hz, w.dr, w.from.count(), w.to.count()}, of, kSens, thr);

    std::vector<int> order(frames.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    do {
      std::vector<Candidate> shuffled;
      for (int i : order) shuffled.push_back(frames[i]);
      const auto got = arbitrate(w, shuffled, kSens, thr);
      ASSERT_EQ(got.outcome, from_oracle(expect.result)) << "trial " << trial;
      ASSERT_EQ(got.decoded, expect.id) << "trial " << trial;
      ++cases;
    } while (std::next_permutation(order.begin(), order.end()));
  }
  EXPECT_GE(cases, 10'000u);
}

TEST(MediumRegistry, OverlapAndPrune) {
  Medium m;
  Transmission a;
  a.start = 0s;
  a.duration = 2s;
  a.freq_hz = 868.1e6;
  Transmission b = a;
  b.start = 1s;
  Transmission c = a;
  c.freq_hz = 868.3e6;
  const auto ia = m.begin(a);
  const auto ib = m.begin(b);
  m.begin(c);
  EXPECT_NE(ia, ib);
  EXPECT_EQ(m.overlapping(868.1e6, 0, 0s, 1s).size(), 1u);
  EXPECT_EQ(m.overlapping(868.1e6, 0, 0s, 3s).size(), 2u);
  EXPECT_EQ(m.overlapping(868.1e6, 1, 0s, 3s).size(), 0u);
  m.prune(2s);
  EXPECT_FALSE(m.contains(ia));
  EXPECT_TRUE(m.contains(ib));
  EXPECT_THROW(m.get(ia), std::out_of_range);
}

namespace {

struct Probe : RadioNode {
  std::string id;
  Position pos;
  std::vector<std::pair<std::uint64_t, Outcome>> heard;
  int tx_ends = 0;
  Probe(std::string n, Position p) : id(std::move(n)), pos(p) {}
  const std::string& name() const override { return id; }
  Position position() const override { return pos; }
  bool can_lock(const Transmission&) override { return true; }
  void on_tx_end(const Transmission&) override { ++tx_ends; }
  void on_frame(const Transmission& tx, double, Outcome o) override { heard.emplace_back(tx.id, o); }
};

Transmission frame(SimTime at, Duration d) {
  Transmission t;
  t.start = at;
  t.duration = d;
  t.freq_hz = 868.1e6;
  t.dr = 0;
  t.tx_power_dbm = 14.0;
  return t;
}

}  // namespace

TEST(EngineMedium, NearFarCaptureAndEqualCollision) {
  Engine eng(1, {}, true);
  Probe gw("gw", {0, 0}), near("near", {100, 0}), far("far", {2000, 0}), twin("twin", {0, 100});
  for (auto* n : {&gw, &near, &far, &twin}) eng.attach(n);
  eng.queue().schedule(1s, [&] {
    eng.transmit(near, frame(1s, 1s));
    eng.transmit(far, frame(1s, 1s));
  });
  eng.queue().schedule(5s, [&] {
    eng.transmit(near, frame(5s, 1s));
    eng.transmit(twin, frame(5s, 1s));
  });
  eng.queue().run_until(10s);
  EXPECT_EQ(near.tx_ends, 2);
  // Gateway: near captures over far; near and twin are equidistant.
  std::map<std::uint64_t, Outcome> at_gw(gw.heard.begin(), gw.heard.end());
  ASSERT_EQ(at_gw.size(), 4u);
  EXPECT_EQ(at_gw[1], Outcome::Decoded);
  EXPECT_EQ(at_gw[2], Outcome::Collision);
  EXPECT_EQ(at_gw[3], Outcome::Collision);
  EXPECT_EQ(at_gw[4], Outcome::Collision);
  EXPECT_EQ(eng.counters().transmissions, 4u);
  EXPECT_EQ(eng.airtime().at("near").at(868.1e6), 2s);
}

TEST(EngineMedium, RejectsFramesOutsideNow) {
  Engine eng(1, {}, false);
  Probe a("a", {0, 0});
  eng.attach(&a);
  EXPECT_THROW(eng.transmit(a, frame(1s, 1s)), std::logic_error);
  EXPECT_THROW(eng.transmit(a, frame(0s, 0s)), std::logic_error);
}
