#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "asfv/common.hpp"

namespace asfv {

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  double clamp(double x) const { return std::clamp(x, lo, hi); }
  double mid() const { return 0.5 * (lo + hi); }
};

/// One vehicle inside the EC cell for the current round.
struct VehicleState {
  int id = 0;
  double entry_distance_m = 0.0;  // travelled past the coverage entrance
  double link_distance_m = 1.0;   // to the EC, which sits mid-coverage
  double speed_mps = 1.0;
  double cpu_hz = 0.0;            // the vehicle's own operating point
  Range cpu_range;
  double tx_power_w = 0.0;
  Range power_range;
  double gain = 1.0;
  double dataset_size = 1.0;
  double capacitance = 0.0;       // zeta: energy = (zeta/2) * cycles * f^2
};

struct MobilityConfig {
  double mean_count = 10.0;           // lambda of the Poisson vehicle count
  double coverage_diameter_m = 1000.0;
  double t_max_s = 60.0;
  Range speed_mps{10.0, 30.0};
  Range cpu_hz{10e9, 20e9};
  Range power_w{dbm_to_watts(20.0), dbm_to_watts(30.0)};
  Range dataset_size{16.0, 64.0};     // integer sample counts, inclusive
  double capacitance = 1e-30;
  double mean_gain = 1.0;             // exponential (Rayleigh power) fading mean
};

inline void validate_mobility(const MobilityConfig& m) {
  if (!(m.mean_count > 0.0)) throw InvariantError("mobility: mean vehicle count must be > 0");
  if (!(m.coverage_diameter_m > 0.0)) throw InvariantError("mobility: coverage diameter must be > 0");
  if (!(m.t_max_s > 0.0)) throw InvariantError("mobility: t_max must be > 0");
  auto check = [](const Range& r, const char* what, bool strictly_positive) {
    if (r.lo > r.hi) throw InvariantError(std::string("mobility: ") + what + " range has min > max");
    if (strictly_positive ? !(r.lo > 0.0) : !(r.lo >= 0.0)) {
      throw InvariantError(std::string("mobility: ") + what + " range must be positive");
    }
  };
  check(m.speed_mps, "speed", true);
  check(m.cpu_hz, "cpu frequency", true);
  check(m.power_w, "transmit power", false);
  check(m.dataset_size, "dataset size", true);
  if (!(m.capacitance >= 0.0)) throw InvariantError("mobility: capacitance must be >= 0");
  if (!(m.mean_gain > 0.0)) throw InvariantError("mobility: mean gain must be > 0");
}

/// Draws `count` vehicles. Attributes are drawn in a fixed order per vehicle.
inline std::vector<VehicleState> spawn_vehicles_exact(std::size_t count, const MobilityConfig& m, Rng& rng) {
  validate_mobility(m);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> fading(1.0 / m.mean_gain);
  auto draw = [&](const Range& r) { return r.lo + (r.hi - r.lo) * unit(rng); };

  std::vector<VehicleState> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    VehicleState v;
    v.id = static_cast<int>(i);
    v.entry_distance_m = m.coverage_diameter_m * unit(rng);
    v.link_distance_m = std::abs(v.entry_distance_m - 0.5 * m.coverage_diameter_m);
    v.speed_mps = draw(m.speed_mps);
    v.cpu_range = m.cpu_hz;
    v.cpu_hz = draw(m.cpu_hz);
    v.power_range = m.power_w;
    v.tx_power_w = draw(m.power_w);
    v.gain = fading(rng);
    const auto lo = static_cast<long>(std::ceil(m.dataset_size.lo));
    const auto hi = static_cast<long>(std::floor(m.dataset_size.hi));
    v.dataset_size = static_cast<double>(std::uniform_int_distribution<long>(lo, std::max(lo, hi))(rng));
    v.capacitance = m.capacitance;
    out.push_back(v);
  }
  return out;
}

/// Poisson(lambda) vehicle count, then per-vehicle attributes.
inline std::vector<VehicleState> spawn_vehicles(const MobilityConfig& m, Rng& rng) {
  validate_mobility(m);
  std::poisson_distribution<long> count(m.mean_count);
  return spawn_vehicles_exact(static_cast<std::size_t>(count(rng)), m, rng);
}

/// Time the vehicle remains usable: residual dwell time capped by t_max.
inline double standing_time(const VehicleState& v, double coverage_diameter_m, double t_max_s) {
  if (!(v.speed_mps > 0.0)) throw DomainError("vehicle speed must be positive");
  if (!(t_max_s > 0.0)) throw DomainError("t_max must be positive");
  if (v.entry_distance_m > coverage_diameter_m) throw DomainError("vehicle is outside the coverage area");
  return std::min((coverage_diameter_m - v.entry_distance_m) / v.speed_mps, t_max_s);
}

struct SelectionOutcome {
  std::vector<int> eligible;         // alpha-hat per vehicle, 0 or 1
  std::vector<double> probability;   // p_n
  std::vector<std::size_t> selected; // indices with alpha-hat = 1, ascending
};

/// A vehicle is eligible when its round time fits in its standing time; the
/// selection probability is uniform over eligible vehicles.
inline SelectionOutcome select_vehicles(std::span<const double> round_time_s, std::span<const double> standing_s) {
  if (round_time_s.size() != standing_s.size()) throw DomainError("selection: size mismatch");
  SelectionOutcome s;
  const std::size_t n = round_time_s.size();
  s.eligible.assign(n, 0);
  s.probability.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (round_time_s[i] <= standing_s[i]) {
      s.eligible[i] = 1;
      s.selected.push_back(i);
    }
  }
  if (!s.selected.empty()) {
    const double p = 1.0 / static_cast<double>(s.selected.size());
    for (std::size_t i : s.selected) s.probability[i] = p;
  }
  return s;
}

}  // namespace asfv
