#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "asfv/profile.hpp"
#include "oracles.hpp"

using namespace asfv;

namespace {

CutLayerProfile reference() { return load_profile(std::string(ASFV_SOURCE_DIR) + "/profiles/resnet18.json"); }

}  // namespace

TEST(Profile, MatchesFrozenTable) {
  const auto p = reference();
  ASSERT_EQ(p.cut_layers.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(p.cut_layers[i], static_cast<int>(i));
    EXPECT_EQ(p.fwd_vehicle_flops[i] / 1e9, oracle::kVehicleGflops[i]) << "cut " << i;
    EXPECT_EQ(p.fwd_server_flops[i] / 1e9, oracle::kServerGflops[i]) << "cut " << i;
  }
}

TEST(Profile, CutTwoAndZero) {
  const auto p = reference();
  EXPECT_DOUBLE_EQ(p.fwd_vehicle_flops[p.row(2)], 2.89e9);
  EXPECT_DOUBLE_EQ(p.fwd_server_flops[p.row(2)], 12.00e9);
  EXPECT_EQ(p.fwd_vehicle_flops[p.row(0)], 0.0);
}

TEST(Profile, ConservationWithinRounding) {
  const auto p = reference();
  for (std::size_t i = 0; i < p.cut_layers.size(); ++i) {
    EXPECT_LE(std::abs(p.fwd_vehicle_flops[i] + p.fwd_server_flops[i] - 14.89e9), 0.01e9 * (1 + 1e-9));
  }
}

TEST(Profile, SmashedSizesFromActivationShapes) {
  const auto p = reference();
  // 64x32x32 activations at 32 bits for the first blocks.
  EXPECT_EQ(p.smashed_bits[p.row(2)], 65536.0 * 32.0);
  EXPECT_EQ(p.smashed_bits[p.row(4)], 128.0 * 16 * 16 * 32);
  EXPECT_EQ(p.smashed_bits[p.row(6)], 256.0 * 8 * 8 * 32);
  EXPECT_EQ(p.smashed_bits[p.row(8)], 512.0 * 4 * 4 * 32);
  EXPECT_EQ(p.smashed_bits, p.smashed_grad_bits);
}

TEST(Profile, CyclesStrictlyMonotone) {
  const auto p = reference();
  for (std::size_t i = 1; i < p.cut_layers.size(); ++i) {
    EXPECT_GT(p.vehicle_cycles_per_sample(p.cut_layers[i]), p.vehicle_cycles_per_sample(p.cut_layers[i - 1]));
    EXPECT_LT(p.server_cycles_per_sample(p.cut_layers[i]), p.server_cycles_per_sample(p.cut_layers[i - 1]));
  }
}

TEST(Profile, WorkloadCyclesHandArithmetic) {
  auto p = reference();
  p.flops_per_cycle = 1e9;
  const Cycles c = workload_cycles(p, 2, 100);
  EXPECT_DOUBLE_EQ(c.vehicle, 100 * 3 * 2.89e9 / 1e9);
  EXPECT_EQ(workload_cycles(p, 0, 50).vehicle, 0.0);
  EXPECT_EQ(workload_cycles(p, 9, 50).server, 0.0);
  EXPECT_THROW(workload_cycles(p, 11, 1), DomainError);
  EXPECT_THROW(workload_cycles(p, 2, -1), DomainError);
}

TEST(Profile, PayloadAffineInSamples) {
  const auto p = reference();
  const Payload zero = payload_bits(p, 4, 0);
  EXPECT_EQ(zero.uplink_bits, p.vehicle_model_bits[p.row(4)]);
  EXPECT_EQ(zero.downlink_bits, zero.uplink_bits);
  const Payload one = payload_bits(p, 2, 1);
  EXPECT_EQ(one.uplink_bits - p.vehicle_model_bits[p.row(2)], 65536.0 * 32);
  const Payload a = payload_bits(p, 5, 10), b = payload_bits(p, 5, 20), c = payload_bits(p, 5, 30);
  EXPECT_DOUBLE_EQ(b.uplink_bits - a.uplink_bits, c.uplink_bits - b.uplink_bits);
  EXPECT_EQ(a.uplink_bits, a.downlink_bits);
}

TEST(Profile, RejectsDecreasingVehicleWorkload) {
  auto j = profile_to_json(reference());
  j["fwd_vehicle_flops"][4] = 4.0e9;  // below cut 3
  j["fwd_server_flops"][4] = 10.89e9;
  try {
    profile_from_json(j);
    FAIL() << "expected an invariant error";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("cut layer 4"), std::string::npos);
  }
}

TEST(Profile, RejectsBrokenConservationAndShapes) {
  auto j = profile_to_json(reference());
  j["fwd_server_flops"][3] = 9.0e9;
  EXPECT_THROW(profile_from_json(j), InvariantError);
  j = profile_to_json(reference());
  j["smashed_grad_bits"][2] = 1.0;
  EXPECT_THROW(profile_from_json(j), InvariantError);
  j = profile_to_json(reference());
  j["flops_per_cycle"] = 0.0;
  EXPECT_THROW(profile_from_json(j), InvariantError);
  j = profile_to_json(reference());
  j.erase("cut_layers");
  EXPECT_THROW(profile_from_json(j), ParseError);
}

TEST(Profile, UnreadableFile) {
  EXPECT_THROW(load_profile("/nonexistent/profile.json"), ParseError);
  const auto path = std::filesystem::temp_directory_path() / "asfv_bad_profile.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_profile(path.string()), ParseError);
  std::filesystem::remove(path);
}
