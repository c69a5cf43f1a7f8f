#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace asfv {

// Errors ---------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or config value.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A domain invariant does not hold (bad profile, bad ranges, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the operation's domain (cut index not in E, beta > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// No allocation satisfies the constraints (zero rate, energy budget too low).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Units ----------------------------------------------------------------------

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }

// Seed streams ---------------------------------------------------------------
//
// Every random draw descends from one root seed. A child seed is
// splitmix64(root ^ fnv1a(label) ^ splitmix64(index)), so streams are keyed
// by (module label, round, vehicle) and never depend on evaluation order.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
  return splitmix64(root ^ fnv1a(label) ^ splitmix64(index));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t round,
                                 std::uint64_t vehicle) {
  return derive_seed(derive_seed(root, label, round), "vehicle", vehicle);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t root, std::string_view label, std::uint64_t index = 0) {
  return Rng{derive_seed(root, label, index)};
}

}  // namespace asfv
