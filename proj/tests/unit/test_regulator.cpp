#include <gtest/gtest.h>

#include <random>

#include "lorasim/regulator.hpp"

using namespace lorasim;
using namespace lorasim::regulator;
using namespace std::chrono_literals;

TEST(BandPlan, ClassifiesEu868) {
  const auto plan = BandPlan::eu868();
  EXPECT_EQ(plan.classify(868.1e6).id, "g1");
  EXPECT_EQ(plan.classify(868.5e6).id, "g1");
  EXPECT_EQ(plan.classify(865.0e6).id, "g");
  EXPECT_EQ(plan.classify(869.525e6).id, "g3");
  EXPECT_DOUBLE_EQ(plan.classify(869.525e6).duty_cycle_limit, 0.10);
  EXPECT_DOUBLE_EQ(plan.classify(868.9e6).duty_cycle_limit, 0.001);
  EXPECT_THROW(plan.classify(868.65e6), ConfigError);
  EXPECT_THROW(plan.classify(915e6), ConfigError);
}

TEST(BandPlan, RejectsBadTables) {
  EXPECT_THROW(BandPlan({{"a", 1e6, 2e6, 0.01, 14}, {"b", 1.5e6, 3e6, 0.01, 14}}), ConfigError);
  EXPECT_THROW(BandPlan({{"a", 2e6, 1e6, 0.01, 14}}), ConfigError);
  EXPECT_THROW(BandPlan({{"a", 1e6, 2e6, 0.0, 14}}), ConfigError);
  EXPECT_THROW(BandPlan({{"a", 1e6, 2e6, 1.5, 14}}), ConfigError);
  EXPECT_NO_THROW(BandPlan({{"a", 1e6, 2e6, 1.0, 14}, {"b", 2e6, 3e6, 0.5, 14}}));
}

TEST(OffTime, ClosedForm) {
  EXPECT_EQ(off_time(2s, 0.01), 198s);
  EXPECT_EQ(off_time(Duration{2'793'472}, 0.01).count(), 2'793'472LL * 99);
  EXPECT_EQ(off_time(1s, 0.1), 9s);
  EXPECT_EQ(off_time(1s, 1.0), 0s);
  EXPECT_EQ(off_time(0s, 0.01), 0s);
}

TEST(DutyLedger, BlocksUntilOffTimeElapses) {
  const auto plan = BandPlan::eu868();
  const auto& g1 = plan.classify(868.1e6);
  DutyLedger led;
  EXPECT_EQ(led.next_allowed_time(g1, 5s), 5s);
  led.record_transmission(g1, 10s, 1s);
  EXPECT_EQ(led.next_allowed_time(g1, 10s), 110s);
  EXPECT_EQ(led.next_allowed_time(g1, 200s), 200s);
  EXPECT_THROW(led.record_transmission(g1, 50s, 1s), ContractViolation);
  // Another band is independent.
  const auto& g3 = plan.classify(869.525e6);
  EXPECT_EQ(led.next_allowed_time(g3, 11s), 11s);
  led.record_transmission(g3, 11s, 1s);
  EXPECT_EQ(led.accumulated("g3"), 1s);
  EXPECT_EQ(led.accumulated("g2"), 0s);
}

// Brute force: a greedy sender that always transmits as early as the ledger
// allows must leave at least toa * (1/dc - 1) of silence after every frame, so
// the on-air fraction over [first start, last release] never exceeds dc.
TEST(DutyLedger, GreedySenderNeverExceedsLimit) {
  const auto plan = BandPlan::eu868();
  std::mt19937_64 gen(42);
  const std::vector<double> freqs{865.5e6, 868.1e6, 868.3e6, 868.9e6, 869.525e6, 869.8e6};
  for (int trial = 0; trial < 200; ++trial) {
    DutyLedger led;
    struct Tx {
      std::string band;
      SimTime start;
      Duration toa;
      double dc;
    };
    std::vector<Tx> sent;
    SimTime now{0};
    for (int k = 0; k < 60; ++k) {
      now += Duration{static_cast<std::int64_t>(gen() % 5'000'000)};
      const double f = freqs[gen() % freqs.size()];
      const auto& band = plan.classify(f);
      const Duration toa{static_cast<std::int64_t>(30'000 + gen() % 3'000'000)};
      const SimTime at = led.next_allowed_time(band, now);
      led.record_transmission(band, at, toa);
      sent.push_back({band.id, at, toa, band.duty_cycle_limit});
    }
    for (std::size_t i = 0; i < sent.size(); ++i) {
      for (std::size_t j = 0; j < sent.size(); ++j) {
        if (i == j || sent[i].band != sent[j].band || sent[j].start < sent[i].start) continue;
        const double silence = to_seconds(sent[j].start - (sent[i].start + sent[i].toa));
        const double need = to_seconds(sent[i].toa) * (1.0 / sent[i].dc - 1.0);
        ASSERT_GE(silence, need - 1e-6) << "trial " << trial;
      }
    }
    for (const auto& b : plan.bands()) {
      double on_air = 0.0;
      std::optional<SimTime> first;
      SimTime release{0};
      for (const auto& t : sent) {
        if (t.band != b.id) continue;
        on_air += to_seconds(t.toa);
        if (!first) first = t.start;
        release = t.start + t.toa + off_time(t.toa, t.dc);
      }
      if (!first) continue;
      ASSERT_LE(on_air / to_seconds(release - *first), b.duty_cycle_limit + 1e-9) << b.id;
    }
  }
}
