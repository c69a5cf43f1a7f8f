#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "asfv/radio.hpp"

using namespace asfv;

TEST(Downlink, HandArithmetic) {
  ChannelParams ch;
  ch.bandwidth_hz = 1e6;
  ch.ec_gain = 1.0;
  ch.ec_power_w = 10.0;
  ch.pathloss_exp = 2.0;
  ch.noise_power_w = 1e-13;
  const std::vector<double> d{100.0};
  EXPECT_NEAR(downlink_rate(ch, d), 1e6 * std::log(1.0 + 1e10), 1e-3);
  EXPECT_NEAR(downlink_rate(ch, d), 2.303e7, 1e4);
}

TEST(Downlink, WorstVehicleSetsRate) {
  ChannelParams ch;
  ch.pathloss_exp = 3.0;
  const std::vector<double> both{100.0, 400.0}, far{400.0}, near{100.0};
  EXPECT_EQ(downlink_rate(ch, both), downlink_rate(ch, far));
  EXPECT_LT(downlink_rate(ch, both), downlink_rate(ch, near));
}

TEST(Downlink, Errors) {
  ChannelParams ch;
  EXPECT_THROW(downlink_rate(ch, std::vector<double>{}), DomainError);
  EXPECT_THROW(downlink_rate(ch, std::vector<double>{-1.0}), DomainError);
}

TEST(Uplink, HandArithmetic) {
  ChannelParams ch;
  ch.bandwidth_hz = 1e6;
  ch.pathloss_exp = 3.0;
  ch.noise_power_w = 1e-13;
  EXPECT_NEAR(uplink_rate(ch, 1.0, 0.1, 200.0, 0.5), 0.5e6 * std::log(1.0 + 0.1 * std::pow(200.0, -3) / 1e-13), 1e-6);
}

TEST(Uplink, ZeroPowerAndLinearInShare) {
  ChannelParams ch;
  EXPECT_EQ(uplink_rate(ch, 1.0, 0.0, 100.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(uplink_rate(ch, 1.0, 0.5, 100.0, 0.4), 2.0 * uplink_rate(ch, 1.0, 0.5, 100.0, 0.2));
}

TEST(Uplink, Monotonicity) {
  ChannelParams ch;
  EXPECT_LT(uplink_rate(ch, 1.0, 0.1, 100.0, 0.5), uplink_rate(ch, 1.0, 0.2, 100.0, 0.5));
  EXPECT_GT(uplink_rate(ch, 1.0, 0.1, 100.0, 0.5), uplink_rate(ch, 1.0, 0.1, 200.0, 0.5));
}

TEST(Uplink, ConcaveInPower) {
  ChannelParams ch;
  for (double phi : {0.05, 0.1, 0.2, 0.3, 0.45, 0.5, 0.6, 0.7, 0.85, 0.95}) {
    const double h = 1e-4;
    const double second = uplink_rate(ch, 1.0, phi + h, 150.0, 1.0) - 2 * uplink_rate(ch, 1.0, phi, 150.0, 1.0) +
                          uplink_rate(ch, 1.0, phi - h, 150.0, 1.0);
    EXPECT_LT(second, 0.0) << phi;
  }
}

TEST(Uplink, Errors) {
  ChannelParams ch;
  EXPECT_THROW(uplink_rate(ch, 1.0, 0.1, 100.0, 0.0), DomainError);
  EXPECT_THROW(uplink_rate(ch, 1.0, 0.1, 100.0, 1.5), DomainError);
  EXPECT_THROW(uplink_rate(ch, 1.0, -0.1, 100.0, 0.5), DomainError);
  EXPECT_THROW(uplink_rate(ch, 1.0, 0.1, 0.0, 0.5), DomainError);
}

TEST(Link, DistanceClampedAtOneMetre) {
  ChannelParams ch;
  EXPECT_EQ(snr(ch, 1.0, 1.0, 0.2), snr(ch, 1.0, 1.0, 1.0));
}

TEST(Channel, Validation) {
  ChannelParams ch;
  EXPECT_NO_THROW(validate_channel(ch));
  ch.noise_power_w = 0.0;
  EXPECT_THROW(validate_channel(ch), InvariantError);
}
