#include <gtest/gtest.h>

#include "lorasim/scenario.hpp"
#include "lorasim/table2.hpp"
#include "oracles/toa_oracle.hpp"

using namespace lorasim;
using namespace std::chrono_literals;

namespace {

const table2::Report& report() {
  static const table2::Report r = table2::run();
  return r;
}

}  // namespace

TEST(Table2, ShippedProfileIsTheFit) {
  const auto shipped = load_profile(default_profile_dir() / "reference_calibrated.yaml");
  const auto& fit = report().calibration->profile;
  EXPECT_NEAR(shipped.tx(14.0), fit.tx(14.0), 1e-12);
  EXPECT_NEAR(shipped.rx_watts, fit.rx_watts, 1e-12);
  EXPECT_DOUBLE_EQ(shipped.sleep_watts, fit.sleep_watts);
  EXPECT_DOUBLE_EQ(shipped.mcu_joules_per_command, fit.mcu_joules_per_command);
}

TEST(Table2, ReplayWithShippedProfileMatchesFit) {
  table2::Options o;
  o.calibrate = false;
  const auto plain = table2::run(o);
  EXPECT_NEAR(plain.transmitter.joules, report().transmitter.joules, 1e-9);
  EXPECT_NEAR(plain.receiver.joules, report().receiver.joules, 1e-9);
  EXPECT_NEAR(plain.initiator.joules, report().initiator.joules, 1e-9);
  EXPECT_NEAR(plain.scanner.joules, report().scanner.joules, 1e-9);
  EXPECT_FALSE(plain.calibration);
}

TEST(Table2, ConventionalRunIsComplete) {
  const auto& r = report();
  EXPECT_EQ(r.conventional_delivered, table2::kConventionalUplinks);
  // The transmitter window holds exactly 47 DR0 frames of 64 B.
  EXPECT_NEAR(r.transmitter.activity.total_tx_seconds(), 47 * oracle::dr_toa_us(0, 64) * 1e-6, 1e-9);
  EXPECT_EQ(r.transmitter.activity.tx_seconds.size(), 1u);
  EXPECT_GT(r.receiver.activity.rx_seconds, 0.0);
}

TEST(Table2, D2dRunIsIdeal) {
  const auto& r = report();
  EXPECT_TRUE(r.d2d_completed);
  EXPECT_DOUBLE_EQ(r.exchange_s, r.exchange_closed_form_s);
  EXPECT_NEAR(r.exchange_closed_form_s, 10 * (oracle::dr_toa_us(6, 253) + oracle::dr_toa_us(6, 23) + 100'000) * 1e-6,
              1e-12);
  EXPECT_GT(r.d2d_time_s, r.exchange_s);
  EXPECT_GT(r.scanner_listen_s, 15.0);
  // Setup and resume each cost commands on both sides.
  EXPECT_EQ(r.initiator.activity.commands, 7);
  EXPECT_EQ(r.scanner.activity.commands, 7);
}

TEST(Table2, WindowsAreOrdered) {
  const auto& r = report();
  for (const auto* e : {&r.transmitter, &r.receiver, &r.initiator, &r.scanner}) {
    EXPECT_LT(e->from, e->to) << e->role;
    EXPECT_GT(e->joules, 0.0) << e->role;
    // The receiver row sums only the cycles that carried data.
    if (e == &r.receiver) {
      EXPECT_LE(e->activity.total_seconds(), to_seconds(e->to - e->from) + 1e-6);
    } else {
      EXPECT_NEAR(e->activity.total_seconds(), to_seconds(e->to - e->from), 1e-6) << e->role;
    }
  }
  EXPECT_GE(r.initiator.from, SimTime{7450ms});
}

TEST(Table2, CalibrationResidualsAreReported) {
  const auto& cal = *report().calibration;
  ASSERT_EQ(cal.residuals.size(), 4u);
  EXPECT_EQ(cal.residuals[0].role, "transmitter");
  EXPECT_EQ(cal.residuals[3].role, "initiator");
  EXPECT_GT(cal.tx_watts, 0.0);
  EXPECT_GT(cal.rx_watts, 0.0);
  EXPECT_LT(cal.rx_watts, cal.tx_watts);
}

TEST(Table2, ReportSerialises) {
  const auto j = report().to_json();
  EXPECT_EQ(j["time"]["conventional_reference_s"], table2::kConventionalTimeS);
  EXPECT_EQ(j["energy"]["scanner"]["reference_joules"], table2::kScannerJ);
  const auto t = report().text();
  EXPECT_NE(t.find("time ratio"), std::string::npos);
  EXPECT_NE(t.find("energy initiator"), std::string::npos);
}
