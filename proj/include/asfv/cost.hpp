#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asfv/common.hpp"
#include "asfv/mobility.hpp"
#include "asfv/profile.hpp"
#include "asfv/radio.hpp"

namespace asfv {

/// Everything one round's cost and optimisation depend on. `vehicles` is the
/// participating set N_t, in ascending id order.
struct RoundScenario {
  std::vector<VehicleState> vehicles;
  CutLayerProfile profile;
  ChannelParams channel;
  double ec_cpu_hz = 50e9;
  double energy_budget_j = 0.0;
  std::vector<CutLayer> cut_set;  // admissible cuts E

  std::size_t size() const { return vehicles.size(); }

  std::vector<double> link_distances() const {
    std::vector<double> d;
    d.reserve(vehicles.size());
    for (const auto& v : vehicles) d.push_back(v.link_distance_m);
    return d;
  }

  double downlink_rate() const { return asfv::downlink_rate(channel, link_distances()); }
};

/// Per-vehicle decision (epsilon, beta, f, phi).
struct VehicleAllocation {
  CutLayer cut = 0;
  double beta = 0.0;
  double cpu_hz = 0.0;
  double power_w = 0.0;
};

using AllocationDecision = std::vector<VehicleAllocation>;

/// Seven-phase delay/energy accounting for one vehicle, plus the aggregate
/// quantities the round-level formulas are written in.
struct PhaseCosts {
  // Delays (s).
  double t_distribute = 0.0;   // vehicle-side model download
  double t_execute = 0.0;      // vehicle forward
  double t_smashed = 0.0;      // smashed data upload
  double t_server = 0.0;       // EC forward + backward
  double t_gradient = 0.0;     // smashed gradient download
  double t_update = 0.0;       // vehicle backward
  double t_model_up = 0.0;     // vehicle-side model upload
  // Energies (J).
  double e_execute = 0.0;
  double e_smashed = 0.0;
  double e_update = 0.0;
  double e_model_up = 0.0;

  // Inputs to the aggregate formulas.
  double uplink_bits = 0.0;
  double downlink_bits = 0.0;
  double uplink_rate = 0.0;
  double downlink_rate = 0.0;
  double vehicle_cycles = 0.0;
  double server_cycles = 0.0;
  double cpu_hz = 0.0;
  double ec_cpu_hz = 0.0;
  double power_w = 0.0;
  double capacitance = 0.0;

  double phase_delay_sum() const {
    return t_distribute + t_execute + t_smashed + t_server + t_gradient + t_update + t_model_up;
  }
  double phase_energy_sum() const { return e_execute + e_smashed + e_update + e_model_up; }

  // Part of the round that runs concurrently across vehicles.
  double parallel_compute() const { return vehicle_cycles / cpu_hz; }
  double parallel_comm() const { return uplink_bits / uplink_rate; }
  double parallel_part() const { return parallel_compute() + parallel_comm(); }
  // Part the EC serves one vehicle after another.
  double serial_compute() const { return server_cycles / ec_cpu_hz; }
  double serial_comm() const { return downlink_bits / downlink_rate; }
  double serial_part() const { return serial_comm() + serial_compute(); }

  double comm_energy() const { return e_smashed + e_model_up; }
  double compute_energy() const { return e_execute + e_update; }
};

inline PhaseCosts phase_costs(const VehicleState& v, const VehicleAllocation& a, const CutLayerProfile& profile,
                              const ChannelParams& ch, double downlink_rate, double ec_cpu_hz) {
  if (!(a.cpu_hz > 0.0)) throw DomainError("vehicle " + std::to_string(v.id) + ": cpu frequency must be > 0");
  if (!(ec_cpu_hz > 0.0)) throw DomainError("EC cpu frequency must be > 0");
  const double up_rate = uplink_rate(ch, v.gain, a.power_w, v.link_distance_m, a.beta);
  if (!(up_rate > 0.0) || !(downlink_rate > 0.0)) {
    throw InfeasibleError("vehicle " + std::to_string(v.id) + " is unreachable (zero link rate)");
  }
  const std::size_t r = profile.row(a.cut);
  const double samples = v.dataset_size;
  const double kappa = profile.flops_per_cycle;
  const double fwd_v = samples * profile.fwd_vehicle_flops[r] / kappa;
  const double bwd_v = profile.bwd_factor * fwd_v;
  const double f2 = a.cpu_hz * a.cpu_hz;
  const double half_zeta = 0.5 * v.capacitance;

  PhaseCosts c;
  c.t_distribute = profile.vehicle_model_bits[r] / downlink_rate;
  c.t_execute = fwd_v / a.cpu_hz;
  c.e_execute = half_zeta * fwd_v * f2;
  c.t_smashed = samples * profile.smashed_bits[r] / up_rate;
  c.e_smashed = a.power_w * c.t_smashed;
  c.t_server = samples * (1.0 + profile.bwd_factor) * profile.fwd_server_flops[r] / (ec_cpu_hz * kappa);
  c.t_gradient = samples * profile.smashed_grad_bits[r] / downlink_rate;
  c.t_update = bwd_v / a.cpu_hz;
  // |D_n| is included here too so update energy matches the round total.
  c.e_update = half_zeta * bwd_v * f2;
  c.t_model_up = profile.vehicle_model_bits[r] / up_rate;
  c.e_model_up = a.power_w * c.t_model_up;

  const Payload pay = payload_bits(profile, a.cut, samples);
  const Cycles cyc = workload_cycles(profile, a.cut, samples);
  c.uplink_bits = pay.uplink_bits;
  c.downlink_bits = pay.downlink_bits;
  c.uplink_rate = up_rate;
  c.downlink_rate = downlink_rate;
  c.vehicle_cycles = cyc.vehicle;
  c.server_cycles = cyc.server;
  c.cpu_hz = a.cpu_hz;
  c.ec_cpu_hz = ec_cpu_hz;
  c.power_w = a.power_w;
  c.capacitance = v.capacitance;
  return c;
}

struct VehicleCost {
  double delay_s = 0.0;
  double energy_j = 0.0;
};

/// Round delay and energy of one vehicle from the aggregated payload and
/// cycle counts (not from the phase sum).
inline VehicleCost vehicle_round_cost(const PhaseCosts& c) {
  VehicleCost out;
  out.delay_s = c.downlink_bits / c.downlink_rate + c.vehicle_cycles / c.cpu_hz + c.server_cycles / c.ec_cpu_hz +
                c.uplink_bits / c.uplink_rate;
  out.energy_j = 0.5 * c.capacitance * c.vehicle_cycles * c.cpu_hz * c.cpu_hz + c.power_w * (c.uplink_bits / c.uplink_rate);
  return out;
}

struct RoundCostBreakdown {
  std::vector<PhaseCosts> phases;
  std::vector<VehicleCost> vehicles;
  double round_time_s = 0.0;
  std::size_t bottleneck = 0;  // argmax of the parallel part, lowest index on ties
  // Round-time split used for reporting; comm + compute == round time.
  double comm_time_s = 0.0;
  double compute_time_s = 0.0;
  double comm_energy_j = 0.0;
  double compute_energy_j = 0.0;

  double total_energy_j() const { return comm_energy_j + compute_energy_j; }
};

struct RoundTime {
  double total_s = 0.0;
  std::size_t bottleneck = 0;
};

/// Parallel round time: slowest vehicle-side pipeline plus the EC's serial work.
inline RoundTime round_time(std::span<const PhaseCosts> costs) {
  if (costs.empty()) throw DomainError("round time of an empty vehicle set");
  RoundTime rt;
  double worst = -std::numeric_limits<double>::infinity();
  double serial = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double par = costs[i].parallel_part();
    if (par > worst) {
      worst = par;
      rt.bottleneck = i;
    }
    serial += costs[i].serial_part();
  }
  rt.total_s = worst + serial;
  return rt;
}

inline RoundCostBreakdown split_round_cost(const RoundScenario& s, const AllocationDecision& alloc) {
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  RoundCostBreakdown out;
  const double rdl = s.downlink_rate();
  out.phases.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.phases.push_back(phase_costs(s.vehicles[i], alloc[i], s.profile, s.channel, rdl, s.ec_cpu_hz));
    out.vehicles.push_back(vehicle_round_cost(out.phases.back()));
  }
  const RoundTime rt = round_time(out.phases);
  out.round_time_s = rt.total_s;
  out.bottleneck = rt.bottleneck;
  const PhaseCosts& b = out.phases[rt.bottleneck];
  out.comm_time_s = b.parallel_comm();
  out.compute_time_s = b.parallel_compute();
  for (const auto& c : out.phases) {
    out.comm_time_s += c.serial_comm();
    out.compute_time_s += c.serial_compute();
    out.comm_energy_j += c.comm_energy();
    out.compute_energy_j += c.compute_energy();
  }
  return out;
}

// Baselines ------------------------------------------------------------------

enum class Scheme { ASFV, SFL, SL, SL_optimal, FL, CL };

inline std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::ASFV: return "ASFV";
    case Scheme::SFL: return "SFL";
    case Scheme::SL: return "SL";
    case Scheme::SL_optimal: return "SL_optimal";
    case Scheme::FL: return "FL";
    case Scheme::CL: return "CL";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::ASFV, Scheme::SFL, Scheme::SL, Scheme::SL_optimal, Scheme::FL, Scheme::CL}) {
    if (scheme_name(s) == name) return s;
  }
  throw DomainError("unknown scheme '" + std::string(name) + "'");
}

/// Cost of one round under a scheme, split into comm/compute parts.
struct SchemeCost {
  double round_time_s = 0.0;
  double comm_time_s = 0.0;
  double compute_time_s = 0.0;
  double comm_energy_j = 0.0;
  double compute_energy_j = 0.0;
  std::vector<VehicleCost> vehicles;

  double total_energy_j() const { return comm_energy_j + compute_energy_j; }
};

inline SchemeCost to_scheme_cost(const RoundCostBreakdown& b) {
  return {b.round_time_s, b.comm_time_s, b.compute_time_s, b.comm_energy_j, b.compute_energy_j, b.vehicles};
}

/// The operating point baselines run at: equal bandwidth shares and each
/// vehicle's own CPU frequency and transmit power.
inline AllocationDecision fixed_allocation(const RoundScenario& s, CutLayer cut) {
  AllocationDecision a;
  const double beta = 1.0 / static_cast<double>(s.size());
  for (const auto& v : s.vehicles) a.push_back({cut, beta, v.cpu_hz, v.tx_power_w});
  return a;
}

/// Split federated round at a fixed cut for every vehicle.
inline SchemeCost sfl_cost(const RoundScenario& s, const AllocationDecision& alloc) {
  return to_scheme_cost(split_round_cost(s, alloc));
}

/// Sequential split learning: vehicles train one after another, so the round
/// takes the sum of the per-vehicle delays.
inline SchemeCost sl_cost(const RoundScenario& s, const AllocationDecision& alloc) {
  if (s.size() == 0) throw DomainError("SL cost of an empty vehicle set");
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  SchemeCost out;
  const double rdl = s.downlink_rate();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const PhaseCosts c = phase_costs(s.vehicles[i], alloc[i], s.profile, s.channel, rdl, s.ec_cpu_hz);
    const VehicleCost vc = vehicle_round_cost(c);
    out.vehicles.push_back(vc);
    out.comm_time_s += c.parallel_comm() + c.serial_comm();
    out.compute_time_s += c.parallel_compute() + c.serial_compute();
    out.comm_energy_j += c.comm_energy();
    out.compute_energy_j += c.compute_energy();
  }
  out.round_time_s = out.comm_time_s + out.compute_time_s;
  return out;
}

/// Federated learning: full-model local training, broadcast download and
/// OFDMA upload of the full model.
inline SchemeCost fl_cost(const RoundScenario& s, const AllocationDecision& alloc) {
  if (s.size() == 0) throw DomainError("FL cost of an empty vehicle set");
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  SchemeCost out;
  const double rdl = s.downlink_rate();
  const double model_bits = s.profile.full_model_bits;
  const double cycles_per_sample = s.profile.full_cycles_per_sample();
  double worst = -1.0;
  double worst_comm = 0.0, worst_comp = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& v = s.vehicles[i];
    const auto& a = alloc[i];
    const double rate = uplink_rate(s.channel, v.gain, a.power_w, v.link_distance_m, a.beta);
    if (!(rate > 0.0)) throw InfeasibleError("vehicle " + std::to_string(v.id) + " is unreachable (zero link rate)");
    const double cycles = v.dataset_size * cycles_per_sample;
    const double comp = cycles / a.cpu_hz;
    const double comm = model_bits / rate;
    const VehicleCost vc{model_bits / rdl + comp + comm,
                         0.5 * v.capacitance * cycles * a.cpu_hz * a.cpu_hz + a.power_w * comm};
    out.vehicles.push_back(vc);
    out.comm_energy_j += a.power_w * comm;
    out.compute_energy_j += vc.energy_j - a.power_w * comm;
    if (comp + comm > worst) {
      worst = comp + comm;
      worst_comm = comm;
      worst_comp = comp;
    }
  }
  out.comm_time_s = model_bits / rdl + worst_comm;
  out.compute_time_s = worst_comp;
  out.round_time_s = out.comm_time_s + out.compute_time_s;
  return out;
}

/// Centralised learning: raw samples go up over OFDMA, the EC trains the
/// full model on everything. Vehicles spend no compute.
inline SchemeCost cl_cost(const RoundScenario& s, const AllocationDecision& alloc) {
  if (s.size() == 0) throw DomainError("CL cost of an empty vehicle set");
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  SchemeCost out;
  double worst_comm = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& v = s.vehicles[i];
    const auto& a = alloc[i];
    const double rate = uplink_rate(s.channel, v.gain, a.power_w, v.link_distance_m, a.beta);
    if (!(rate > 0.0)) throw InfeasibleError("vehicle " + std::to_string(v.id) + " is unreachable (zero link rate)");
    const double comm = v.dataset_size * s.profile.sample_bits / rate;
    worst_comm = std::max(worst_comm, comm);
    out.vehicles.push_back({comm, a.power_w * comm});
    out.comm_energy_j += a.power_w * comm;
    out.compute_time_s += v.dataset_size * s.profile.full_cycles_per_sample() / s.ec_cpu_hz;
  }
  out.comm_time_s = worst_comm;
  out.round_time_s = out.comm_time_s + out.compute_time_s;
  return out;
}

/// Round cost of a baseline at a given allocation. ASFV and SL_optimal take
/// their allocation from the optimiser; the others use fixed_allocation().
inline SchemeCost baseline_costs(Scheme scheme, const RoundScenario& s, const AllocationDecision& alloc) {
  switch (scheme) {
    case Scheme::ASFV:
    case Scheme::SFL: return sfl_cost(s, alloc);
    case Scheme::SL:
    case Scheme::SL_optimal: return sl_cost(s, alloc);
    case Scheme::FL: return fl_cost(s, alloc);
    case Scheme::CL: return cl_cost(s, alloc);
  }
  throw DomainError("unknown scheme");
}

}  // namespace asfv
