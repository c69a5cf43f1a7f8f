#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "asfv/common.hpp"

namespace asfv {

/// Cut index into the block-split model (row of the workload table).
using CutLayer = int;

/// Cut-layer dependent compute workloads and payload sizes of the split model.
///
/// Row k describes a split after the k-th block: the vehicle runs blocks
/// 1..k, the EC runs the rest. Workloads are forward FLOPs per sample;
/// backward workload is bwd_factor times the forward one.
struct CutLayerProfile {
  std::string name;
  std::vector<CutLayer> cut_layers;
  std::vector<double> fwd_vehicle_flops;
  std::vector<double> fwd_server_flops;
  double bwd_factor = 2.0;
  std::vector<double> smashed_bits;
  std::vector<double> smashed_grad_bits;
  std::vector<double> vehicle_model_bits;
  double flops_per_cycle = 1.0;
  // Used by the CL and FL baselines only.
  double sample_bits = 32.0 * 32.0 * 3.0 * 8.0;
  double full_model_bits = 0.0;

  std::size_t row(CutLayer cut) const {
    auto it = std::find(cut_layers.begin(), cut_layers.end(), cut);
    if (it == cut_layers.end()) {
      throw DomainError("cut layer " + std::to_string(cut) + " is not in the profile");
    }
    return static_cast<std::size_t>(it - cut_layers.begin());
  }

  bool contains(CutLayer cut) const {
    return std::find(cut_layers.begin(), cut_layers.end(), cut) != cut_layers.end();
  }

  /// Whole-model forward FLOPs per sample (conserved across cuts).
  double total_fwd_flops() const { return fwd_vehicle_flops.at(0) + fwd_server_flops.at(0); }

  // CPU cycles per sample, forward + backward.
  double vehicle_cycles_per_sample(CutLayer cut) const {
    return (1.0 + bwd_factor) * fwd_vehicle_flops[row(cut)] / flops_per_cycle;
  }
  double server_cycles_per_sample(CutLayer cut) const {
    return (1.0 + bwd_factor) * fwd_server_flops[row(cut)] / flops_per_cycle;
  }
  double full_cycles_per_sample() const { return (1.0 + bwd_factor) * total_fwd_flops() / flops_per_cycle; }
};

/// Tolerance on the per-row workload sum (workloads are given to 0.01 GFLOPs).
inline constexpr double kConservationToleranceFlops = 0.01e9;

/// Throws InvariantError naming the offending cut layer.
inline void validate_profile(const CutLayerProfile& p) {
  const std::size_t n = p.cut_layers.size();
  if (n == 0) throw InvariantError("profile has no cut layers");
  auto check_size = [&](const std::vector<double>& v, const char* field) {
    if (v.size() != n) {
      throw InvariantError(std::string("profile field '") + field + "' has " + std::to_string(v.size()) +
                           " entries, expected " + std::to_string(n));
    }
  };
  check_size(p.fwd_vehicle_flops, "fwd_vehicle_flops");
  check_size(p.fwd_server_flops, "fwd_server_flops");
  check_size(p.smashed_bits, "smashed_bits");
  check_size(p.smashed_grad_bits, "smashed_grad_bits");
  check_size(p.vehicle_model_bits, "vehicle_model_bits");
  if (!(p.flops_per_cycle > 0.0)) throw InvariantError("flops_per_cycle must be > 0");
  if (!(p.bwd_factor >= 0.0)) throw InvariantError("bwd_factor must be >= 0");
  if (!(p.sample_bits >= 0.0) || !(p.full_model_bits >= 0.0)) {
    throw InvariantError("sample_bits and full_model_bits must be >= 0");
  }

  const double total = p.total_fwd_flops();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string where = "cut layer " + std::to_string(p.cut_layers[i]);
    if (i > 0 && p.cut_layers[i] <= p.cut_layers[i - 1]) {
      throw InvariantError(where + ": cut layers must be strictly increasing");
    }
    for (double v : {p.fwd_vehicle_flops[i], p.fwd_server_flops[i], p.smashed_bits[i], p.smashed_grad_bits[i],
                     p.vehicle_model_bits[i]}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvariantError(where + ": negative or non-finite size");
    }
    if (p.smashed_grad_bits[i] != p.smashed_bits[i]) {
      throw InvariantError(where + ": smashed gradient size differs from activation size");
    }
    if (i > 0) {
      if (p.fwd_vehicle_flops[i] < p.fwd_vehicle_flops[i - 1]) {
        throw InvariantError(where + ": vehicle workload decreases");
      }
      if (p.fwd_server_flops[i] > p.fwd_server_flops[i - 1]) {
        throw InvariantError(where + ": server workload increases");
      }
    }
    const double sum = p.fwd_vehicle_flops[i] + p.fwd_server_flops[i];
    if (std::abs(sum - total) > kConservationToleranceFlops * (1.0 + 1e-9)) {
      throw InvariantError(where + ": vehicle + server workload not conserved");
    }
  }
}

inline CutLayerProfile profile_from_json(const nlohmann::json& j) {
  CutLayerProfile p;
  try {
    p.name = j.value("name", std::string("unnamed"));
    p.cut_layers = j.at("cut_layers").get<std::vector<CutLayer>>();
    p.fwd_vehicle_flops = j.at("fwd_vehicle_flops").get<std::vector<double>>();
    p.fwd_server_flops = j.at("fwd_server_flops").get<std::vector<double>>();
    p.bwd_factor = j.value("bwd_factor", 2.0);
    p.smashed_bits = j.at("smashed_bits").get<std::vector<double>>();
    p.smashed_grad_bits = j.contains("smashed_grad_bits") ? j.at("smashed_grad_bits").get<std::vector<double>>()
                                                          : p.smashed_bits;
    p.vehicle_model_bits = j.at("vehicle_model_bits").get<std::vector<double>>();
    p.flops_per_cycle = j.at("flops_per_cycle").get<double>();
    p.sample_bits = j.value("sample_bits", 32.0 * 32.0 * 3.0 * 8.0);
    p.full_model_bits = j.value("full_model_bits", p.vehicle_model_bits.empty() ? 0.0 : p.vehicle_model_bits.back());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("profile: ") + e.what());
  }
  validate_profile(p);
  return p;
}

inline nlohmann::json profile_to_json(const CutLayerProfile& p) {
  return {{"name", p.name},
          {"cut_layers", p.cut_layers},
          {"fwd_vehicle_flops", p.fwd_vehicle_flops},
          {"fwd_server_flops", p.fwd_server_flops},
          {"bwd_factor", p.bwd_factor},
          {"smashed_bits", p.smashed_bits},
          {"smashed_grad_bits", p.smashed_grad_bits},
          {"vehicle_model_bits", p.vehicle_model_bits},
          {"flops_per_cycle", p.flops_per_cycle},
          {"sample_bits", p.sample_bits},
          {"full_model_bits", p.full_model_bits}};
}

inline CutLayerProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("profile '" + path + "': " + e.what());
  }
  return profile_from_json(j);
}

struct Cycles {
  double vehicle = 0.0;
  double server = 0.0;
};

inline Cycles workload_cycles(const CutLayerProfile& p, CutLayer cut, double samples) {
  if (samples < 0.0) throw DomainError("negative sample count");
  return {samples * p.vehicle_cycles_per_sample(cut), samples * p.server_cycles_per_sample(cut)};
}

struct Payload {
  double uplink_bits = 0.0;    // smashed data + vehicle-side model
  double downlink_bits = 0.0;  // smashed gradient + vehicle-side model
};

inline Payload payload_bits(const CutLayerProfile& p, CutLayer cut, double samples) {
  if (samples < 0.0) throw DomainError("negative sample count");
  const std::size_t r = p.row(cut);
  return {samples * p.smashed_bits[r] + p.vehicle_model_bits[r],
          samples * p.smashed_grad_bits[r] + p.vehicle_model_bits[r]};
}

}  // namespace asfv
