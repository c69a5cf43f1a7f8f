#include <gtest/gtest.h>

#include <cmath>

#include "asfv/cost.hpp"
#include "asfv/optimizer.hpp"

using namespace asfv;

namespace {

CutLayerProfile reference() { return load_profile(std::string(ASFV_SOURCE_DIR) + "/profiles/resnet18.json"); }

ChannelParams channel() {
  ChannelParams ch;
  ch.bandwidth_hz = 10e6;
  ch.noise_power_w = 1e-13;
  ch.pathloss_exp = 3.0;
  ch.ec_gain = 1.0;
  ch.ec_power_w = 10.0;
  return ch;
}

VehicleState vehicle(double d = 200.0, double samples = 640.0) {
  VehicleState v;
  v.link_distance_m = d;
  v.entry_distance_m = 500.0 - d;
  v.speed_mps = 20.0;
  v.cpu_range = {10e9, 20e9};
  v.cpu_hz = 15e9;
  v.power_range = {0.1, 1.0};
  v.tx_power_w = dbm_to_watts(25.0);
  v.gain = 1.0;
  v.dataset_size = samples;
  v.capacitance = 1e-30;
  return v;
}

RoundScenario scenario(std::vector<VehicleState> vs) {
  RoundScenario s;
  s.vehicles = std::move(vs);
  s.profile = reference();
  s.channel = channel();
  s.ec_cpu_hz = 50e9;
  s.energy_budget_j = 19.3;
  s.cut_set = {2, 3, 4, 5, 6, 7, 8};
  for (std::size_t i = 0; i < s.vehicles.size(); ++i) s.vehicles[i].id = static_cast<int>(i);
  return s;
}

void expect_rel(double got, double want, double tol = 1e-12) {
  EXPECT_LE(std::abs(got - want), tol * std::abs(want)) << got << " vs " << want;
}

}  // namespace

// Values from scripts/cost_oracle.py.
TEST(PhaseCosts, FrozenSingleVehicleBreakdown) {
  const auto s = scenario({vehicle()});
  const VehicleAllocation a{4, 0.2, 15e9, dbm_to_watts(25.0)};
  const double rdl = s.downlink_rate();
  expect_rel(rdl, 163412392.82272527);
  const PhaseCosts c = phase_costs(s.vehicles[0], a, s.profile, s.channel, rdl, s.ec_cpu_hz);
  expect_rel(c.uplink_rate, 25774728.18520078);
  expect_rel(c.t_distribute, 0.074406694559515);
  expect_rel(c.t_execute, 16.72);
  expect_rel(c.e_execute, 28.215000000000007);
  expect_rel(c.t_smashed, 26.036691257342635);
  expect_rel(c.e_smashed, 8.233524710779598);
  expect_rel(c.t_server, 20.688);
  expect_rel(c.t_gradient, 4.106718152814868);
  expect_rel(c.t_update, 33.44);
  expect_rel(c.e_update, 56.430000000000014);
  expect_rel(c.t_model_up, 0.47174022215223155);
  expect_rel(c.e_model_up, 0.149177356591487);
  expect_rel(c.phase_delay_sum(), 101.53755632686925);
  expect_rel(c.phase_energy_sum(), 93.02770206737112);
}

TEST(PhaseCosts, AggregateEqualsPhaseSumAtRandomPoints) {
  Rng rng = make_rng(1, "cost-additivity");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto p = reference();
  for (int i = 0; i < 200; ++i) {
    auto v = vehicle(1.0 + 499.0 * u(rng), std::floor(1 + 100 * u(rng)));
    v.gain = 0.1 + 2.0 * u(rng);
    const VehicleAllocation a{p.cut_layers[static_cast<std::size_t>(u(rng) * 10)], 0.01 + 0.99 * u(rng),
                              10e9 + 10e9 * u(rng), 0.1 + 0.9 * u(rng)};
    const auto s = scenario({v});
    const PhaseCosts c = phase_costs(s.vehicles[0], a, s.profile, s.channel, s.downlink_rate(), s.ec_cpu_hz);
    const VehicleCost vc = vehicle_round_cost(c);
    expect_rel(vc.delay_s, c.phase_delay_sum(), 1e-12);
    expect_rel(vc.energy_j, c.phase_energy_sum(), 1e-12);
  }
}

TEST(PhaseCosts, CutZeroHasNoVehicleCompute) {
  const auto s = scenario({vehicle()});
  const PhaseCosts c = phase_costs(s.vehicles[0], {0, 0.5, 15e9, 0.5}, s.profile, s.channel, s.downlink_rate(), 50e9);
  EXPECT_EQ(c.t_execute, 0.0);
  EXPECT_EQ(c.e_execute, 0.0);
  EXPECT_EQ(c.t_update, 0.0);
}

TEST(PhaseCosts, DoublingFrequency) {
  const auto s = scenario({vehicle()});
  const double rdl = s.downlink_rate();
  const auto a = phase_costs(s.vehicles[0], {4, 0.5, 10e9, 0.5}, s.profile, s.channel, rdl, 50e9);
  const auto b = phase_costs(s.vehicles[0], {4, 0.5, 20e9, 0.5}, s.profile, s.channel, rdl, 50e9);
  expect_rel(b.t_execute, a.t_execute / 2);
  expect_rel(b.e_execute, a.e_execute * 4);
}

TEST(PhaseCosts, EmptyDatasetLeavesModelTransfer) {
  const auto s = scenario({vehicle(200.0, 0.0)});
  const double rdl = s.downlink_rate();
  const auto c = phase_costs(s.vehicles[0], {4, 0.5, 15e9, 0.5}, s.profile, s.channel, rdl, 50e9);
  const auto vc = vehicle_round_cost(c);
  expect_rel(vc.delay_s, c.t_distribute + c.t_model_up);
  EXPECT_EQ(c.t_execute + c.t_server + c.t_smashed + c.t_gradient + c.t_update, 0.0);
}

TEST(PhaseCosts, ComputeDominatesWithWholeBandAtLowPower) {
  const auto s = scenario({vehicle(50.0, 64.0)});
  const auto c = phase_costs(s.vehicles[0], {2, 1.0, 20e9, 0.1}, s.profile, s.channel, s.downlink_rate(), 50e9);
  EXPECT_GT(c.compute_energy(), c.comm_energy());
}

TEST(PhaseCosts, UnreachableVehicle) {
  const auto s = scenario({vehicle()});
  EXPECT_THROW(phase_costs(s.vehicles[0], {4, 0.5, 15e9, 0.0}, s.profile, s.channel, s.downlink_rate(), 50e9),
               InfeasibleError);
}

TEST(PhaseCosts, UplinkPayloadDropsAtBlockBoundaries) {
  const auto p = reference();
  for (CutLayer e : {4, 6, 8}) {
    EXPECT_LT(payload_bits(p, e, 640).uplink_bits, payload_bits(p, e - 1, 640).uplink_bits) << e;
  }
}

TEST(RoundTime, SingleVehicleEqualsItsDelay) {
  const auto s = scenario({vehicle()});
  const AllocationDecision a{{4, 1.0, 15e9, 0.5}};
  const auto b = split_round_cost(s, a);
  expect_rel(b.round_time_s, b.vehicles[0].delay_s);
}

TEST(RoundTime, ParallelOnceSerialTwice) {
  const auto s = scenario({vehicle(), vehicle()});
  const AllocationDecision a{{4, 0.5, 15e9, 0.5}, {4, 0.5, 15e9, 0.5}};
  const auto b = split_round_cost(s, a);
  expect_rel(b.round_time_s, b.phases[0].parallel_part() + 2 * b.phases[0].serial_part());
  EXPECT_EQ(b.bottleneck, 0u);
  expect_rel(b.comm_time_s + b.compute_time_s, b.round_time_s, 1e-14);
}

TEST(RoundTime, NonIncreasingInShareAndFrequency) {
  const auto s = scenario({vehicle(100.0), vehicle(300.0), vehicle(450.0)});
  AllocationDecision a{{3, 0.2, 12e9, 0.5}, {5, 0.3, 14e9, 0.5}, {6, 0.3, 16e9, 0.5}};
  const double base = split_round_cost(s, a).round_time_s;
  for (std::size_t i = 0; i < 3; ++i) {
    auto b = a;
    b[i].beta += 0.05;
    EXPECT_LE(split_round_cost(s, b).round_time_s, base);
    b = a;
    b[i].cpu_hz *= 1.1;
    EXPECT_LE(split_round_cost(s, b).round_time_s, base);
  }
}

TEST(Energy, IncreasingInFrequencyAndPower) {
  const auto s = scenario({vehicle()});
  const double rdl = s.downlink_rate();
  double prev = 0.0;
  for (double f : {10e9, 12e9, 15e9, 20e9}) {
    const double e = operating_cost(s, s.vehicles[0], {4, 0.3, f, 0.5}, rdl).energy_j;
    EXPECT_GT(e, prev);
    prev = e;
  }
  prev = 0.0;
  for (double phi : {0.1, 0.2, 0.5, 1.0}) {
    const double e = operating_cost(s, s.vehicles[0], {4, 0.3, 15e9, phi}, rdl).energy_j;
    EXPECT_GT(e, prev);
    prev = e;
  }
}

TEST(Baselines, ClHasNoVehicleCompute) {
  const auto s = scenario({vehicle(100.0, 32), vehicle(300.0, 48)});
  const auto c = cl_cost(s, fixed_allocation(s, 2));
  EXPECT_EQ(c.compute_energy_j, 0.0);
  for (const auto& v : c.vehicles) EXPECT_GT(v.delay_s, 0.0);
}

TEST(Baselines, SflMatchesSplitCostAtSameDecision) {
  const auto s = scenario({vehicle(100.0, 32), vehicle(300.0, 48)});
  const AllocationDecision a{{4, 0.4, 18e9, 0.7}, {4, 0.6, 11e9, 0.3}};
  EXPECT_EQ(sfl_cost(s, a).round_time_s, split_round_cost(s, a).round_time_s);
  EXPECT_EQ(baseline_costs(Scheme::ASFV, s, a).round_time_s, baseline_costs(Scheme::SFL, s, a).round_time_s);
}

TEST(Baselines, SequentialAtLeastParallel) {
  const auto s = scenario({vehicle(100.0, 32), vehicle(300.0, 48), vehicle(420.0, 20)});
  const auto a = fixed_allocation(s, 2);
  EXPECT_GE(sl_cost(s, a).round_time_s, sfl_cost(s, a).round_time_s);
}

TEST(Baselines, OverallIsCommPlusCompute) {
  const auto s = scenario({vehicle(100.0, 32), vehicle(300.0, 48)});
  const auto a = fixed_allocation(s, 2);
  for (Scheme sc : {Scheme::SFL, Scheme::SL, Scheme::FL, Scheme::CL}) {
    const auto c = baseline_costs(sc, s, a);
    EXPECT_DOUBLE_EQ(c.round_time_s, c.comm_time_s + c.compute_time_s) << scheme_name(sc);
  }
}

TEST(Baselines, FlEnergyAboveSplit) {
  const auto s = scenario({vehicle(100.0, 32), vehicle(300.0, 48)});
  const auto a = fixed_allocation(s, 2);
  EXPECT_GT(fl_cost(s, a).total_energy_j(), sfl_cost(s, a).total_energy_j());
}

TEST(Schemes, ParseNames) {
  EXPECT_EQ(parse_scheme("SL_optimal"), Scheme::SL_optimal);
  EXPECT_THROW(parse_scheme("XYZ"), DomainError);
  EXPECT_THROW(split_round_cost(scenario({vehicle()}), {}), DomainError);
}
