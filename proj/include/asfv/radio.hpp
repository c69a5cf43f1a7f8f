#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "asfv/common.hpp"

namespace asfv {

/// Link budget shared by every vehicle in the EC cell. Linear units (W, Hz).
struct ChannelParams {
  double bandwidth_hz = 1e6;
  double noise_power_w = dbm_to_watts(-100.0);
  double pathloss_exp = 3.0;
  double ec_gain = 1.0;
  double ec_power_w = dbm_to_watts(40.0);
};

inline void validate_channel(const ChannelParams& ch) {
  if (!(ch.bandwidth_hz > 0.0) || !(ch.noise_power_w > 0.0) || !(ch.pathloss_exp > 0.0) || !(ch.ec_gain > 0.0) ||
      !(ch.ec_power_w > 0.0)) {
    throw InvariantError("channel parameters must all be positive");
  }
}

/// Distances below one metre are treated as one metre (no reference-distance
/// guard in the path-loss model otherwise).
inline constexpr double kMinLinkDistance = 1.0;

/// Received SNR h * phi * d^-gamma / sigma^2 with the distance clamp applied.
inline double snr(const ChannelParams& ch, double gain, double power_w, double distance_m) {
  const double d = std::max(distance_m, kMinLinkDistance);
  return gain * power_w * std::pow(d, -ch.pathloss_exp) / ch.noise_power_w;
}

/// Spectral efficiency in nats/s/Hz; capacities use the natural log throughout.
inline double spectral_efficiency(const ChannelParams& ch, double gain, double power_w, double distance_m) {
  return std::log1p(snr(ch, gain, power_w, distance_m));
}

/// Broadcast downlink rate: the worst-placed vehicle sets the common rate.
inline double downlink_rate(const ChannelParams& ch, std::span<const double> distances_m) {
  if (distances_m.empty()) throw DomainError("downlink rate needs at least one vehicle");
  double rate = std::numeric_limits<double>::infinity();
  for (double d : distances_m) {
    if (!(d > 0.0)) throw DomainError("vehicle distance must be positive");
    rate = std::min(rate, ch.bandwidth_hz * spectral_efficiency(ch, ch.ec_gain, ch.ec_power_w, d));
  }
  return rate;
}

/// OFDMA uplink rate of one vehicle holding bandwidth share beta.
inline double uplink_rate(const ChannelParams& ch, double gain, double power_w, double distance_m, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("bandwidth share must lie in (0, 1]");
  if (!(power_w >= 0.0)) throw DomainError("transmit power must be non-negative");
  if (!(distance_m > 0.0)) throw DomainError("vehicle distance must be positive");
  return beta * ch.bandwidth_hz * spectral_efficiency(ch, gain, power_w, distance_m);
}

}  // namespace asfv
