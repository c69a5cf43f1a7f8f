#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "asfv/common.hpp"
#include "asfv/cost.hpp"
#include "asfv/mobility.hpp"
#include "asfv/profile.hpp"
#include "asfv/radio.hpp"

namespace asfv {

struct OptimizerOptions {
  // BCD stopping thresholds on the power, frequency and bandwidth vectors.
  // Power and frequency are compared after dividing by their box maxima.
  double tol_power = 1e-6;
  double tol_cpu = 1e-6;
  double tol_beta = 1e-6;
  int max_sweeps = 50;

  double sca_tol = 1e-9;  // W
  int sca_max_iters = 200;

  double kkt_tol = 1e-11;       // relative spread of the active delays
  int kkt_max_iters = 20000;
  double kkt_step_sigma = 2.0;  // exponent of the multiplicative sigma ascent
  int kkt_divergence_window = 50;

  // Relative slack on the energy budget when screening cut layers.
  double energy_slack = 1e-9;

  // After the per-vehicle cut rule, move single cuts while the round time
  // (max parallel + sum serial, shares re-balanced) drops.
  bool round_cut_polish = true;
};

// Per-vehicle quantities --------------------------------------------------------

/// Round-invariant per-vehicle data for one cut choice.
struct CutTerms {
  double vehicle_cycles = 0.0;  // |D_n| c_v(eps)
  double server_cycles = 0.0;   // |D_n| c_r(eps)
  double uplink_bits = 0.0;     // s_a bar
  double downlink_bits = 0.0;   // s_g bar
};

inline CutTerms cut_terms(const RoundScenario& s, const VehicleState& v, CutLayer cut) {
  const Cycles c = workload_cycles(s.profile, cut, v.dataset_size);
  const Payload p = payload_bits(s.profile, cut, v.dataset_size);
  return {c.vehicle, c.server, p.uplink_bits, p.downlink_bits};
}

/// W * ln(1 + h phi d^-gamma / sigma^2): uplink rate per unit bandwidth share.
inline double full_band_rate(const RoundScenario& s, const VehicleState& v, double power_w) {
  return s.channel.bandwidth_hz * spectral_efficiency(s.channel, v.gain, power_w, v.link_distance_m);
}

/// Delay and energy of one vehicle at an arbitrary operating point.
struct OperatingCost {
  double delay_s = 0.0;
  double energy_j = 0.0;
};

inline OperatingCost operating_cost(const RoundScenario& s, const VehicleState& v, const VehicleAllocation& a,
                                    double downlink_rate) {
  const CutTerms ct = cut_terms(s, v, a.cut);
  const double up = a.beta * full_band_rate(s, v, a.power_w);
  const double t_up = up > 0.0 ? ct.uplink_bits / up : std::numeric_limits<double>::infinity();
  OperatingCost c;
  c.delay_s = ct.downlink_bits / downlink_rate + ct.vehicle_cycles / a.cpu_hz + ct.server_cycles / s.ec_cpu_hz + t_up;
  c.energy_j = 0.5 * v.capacitance * ct.vehicle_cycles * a.cpu_hz * a.cpu_hz + a.power_w * t_up;
  return c;
}

/// Shorthand coefficients of the frequency/bandwidth subproblem:
///   delay_n  = A_n / f_n + B_n / beta_n + C
///   energy_n = Dcap_n f_n^2 + F_n / beta_n
struct AuxiliaryTerms {
  std::vector<double> A, B, Dcap, F;
  double C = 0.0;
};

inline AuxiliaryTerms auxiliary_terms(const RoundScenario& s, const AllocationDecision& alloc) {
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  AuxiliaryTerms aux;
  const double rdl = s.downlink_rate();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& v = s.vehicles[i];
    const CutTerms ct = cut_terms(s, v, alloc[i].cut);
    const double rate = full_band_rate(s, v, alloc[i].power_w);
    if (!(rate > 0.0)) throw InfeasibleError("vehicle " + std::to_string(v.id) + " has zero uplink capacity");
    aux.A.push_back(ct.vehicle_cycles);
    aux.B.push_back(ct.uplink_bits / rate);
    aux.Dcap.push_back(0.5 * v.capacitance * ct.vehicle_cycles);
    aux.F.push_back(alloc[i].power_w * aux.B.back());
    aux.C += ct.downlink_bits / rdl + ct.server_cycles / s.ec_cpu_hz;
  }
  return aux;
}

/// Round objective T (parallel max plus serial sum) of a full decision.
inline double objective(const RoundScenario& s, const AllocationDecision& alloc) {
  return split_round_cost(s, alloc).round_time_s;
}

// Subproblem 1: cut layer selection ---------------------------------------------

struct CutSelection {
  std::vector<CutLayer> cuts;
  std::vector<bool> feasible;  // false: no cut meets the energy budget
};

/// Per vehicle, the cut minimising its own round delay among the cuts that
/// meet the energy budget at the given (beta, f, phi). Ties go to the smaller cut.
inline CutSelection select_cut_layers(const RoundScenario& s, const AllocationDecision& alloc,
                                      const OptimizerOptions& opt = {}) {
  if (s.cut_set.empty()) throw DomainError("empty cut layer set");
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  CutSelection out;
  const double rdl = s.downlink_rate();
  const double budget = s.energy_budget_j * (1.0 + opt.energy_slack);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    CutLayer best_cut = s.cut_set.front();
    bool any = false;
    for (CutLayer cut : s.cut_set) {
      VehicleAllocation a = alloc[i];
      a.cut = cut;
      const OperatingCost c = operating_cost(s, s.vehicles[i], a, rdl);
      if (!(c.energy_j <= budget)) continue;
      if (c.delay_s < best) {
        best = c.delay_s;
        best_cut = cut;
        any = true;
      }
    }
    out.cuts.push_back(best_cut);
    out.feasible.push_back(any);
  }
  return out;
}

/// Coordinate descent over single-vehicle cut changes on the round time
/// max_n parallel_n + sum_n serial_n with (f, phi) fixed and the shares
/// re-balanced so every parallel delay meets the max. Moves must stay within the energy budget at
/// the balanced shares. Returns the number of accepted moves.
inline int polish_cuts(const RoundScenario& s, AllocationDecision& alloc, const OptimizerOptions& opt = {}) {
  const std::size_t k = s.size();
  if (k < 2) return 0;
  const double rdl = s.downlink_rate();
  const double budget = s.energy_budget_j * (1.0 + opt.energy_slack);
  struct Terms {
    double a = 0.0, b = 0.0, ser = 0.0;  // compute delay, uplink delay at beta = 1, serial delay
    double e_comp = 0.0, e_tx = 0.0;     // compute energy, uplink energy at beta = 1
  };
  auto terms = [&](std::size_t i, CutLayer cut) {
    const auto& v = s.vehicles[i];
    const CutTerms ct = cut_terms(s, v, cut);
    const double rate = full_band_rate(s, v, alloc[i].power_w);
    Terms t;
    t.a = ct.vehicle_cycles / alloc[i].cpu_hz;
    t.b = rate > 0.0 ? ct.uplink_bits / rate : std::numeric_limits<double>::infinity();
    t.ser = ct.downlink_bits / rdl + ct.server_cycles / s.ec_cpu_hz;
    t.e_comp = 0.5 * v.capacitance * ct.vehicle_cycles * alloc[i].cpu_hz * alloc[i].cpu_hz;
    t.e_tx = alloc[i].power_w * t.b;
    return t;
  };
  // Balanced T bar: sum_n b_n / (T - a_n) = 1. Infinity when the energy budget fails.
  auto round_time = [&](const std::vector<Terms>& t) {
    double lo = 0.0, serial = 0.0;
    for (const auto& x : t) {
      if (!std::isfinite(x.b)) return std::numeric_limits<double>::infinity();
      lo = std::max(lo, x.a);
      serial += x.ser;
    }
    double hi = lo;
    for (const auto& x : t) hi += x.b;  // sum b_n / (hi - a_n) <= 1 here
    for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      double z = 0.0;
      for (const auto& x : t) z += x.b / (mid - x.a);
      (z > 1.0 ? lo : hi) = mid;
    }
    for (const auto& x : t) {
      const double beta = x.b / (hi - x.a);
      if (!(x.e_comp + x.e_tx / beta <= budget)) return std::numeric_limits<double>::infinity();
    }
    return hi + serial;
  };
  std::vector<Terms> cur(k);
  for (std::size_t i = 0; i < k; ++i) cur[i] = terms(i, alloc[i].cut);
  double best = round_time(cur);
  int moves = 0;
  for (std::size_t pass = 0; pass < k * s.cut_set.size(); ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < k; ++i) {
      const Terms keep = cur[i];
      CutLayer best_cut = alloc[i].cut;
      Terms best_terms = keep;
      for (CutLayer cut : s.cut_set) {
        if (cut == alloc[i].cut) continue;
        cur[i] = terms(i, cut);
        const double t = round_time(cur);
        if (t < best * (1.0 - 1e-12)) {
          best = t;
          best_cut = cut;
          best_terms = cur[i];
        }
      }
      cur[i] = best_terms;
      if (best_cut != alloc[i].cut) {
        alloc[i].cut = best_cut;
        moved = true;
        ++moves;
      }
    }
    if (!moved) break;
  }
  return moves;
}

// Subproblem 2: transmit power by successive convex approximation ----------------

/// Energy of one vehicle as a function of its transmit power, with the cut,
/// bandwidth share and CPU frequency held fixed.
struct PowerEnergyModel {
  double compute_energy = 0.0;  // (zeta/2) |D| c_v f^2
  double bits_over_band = 0.0;  // s_a bar / (beta W)
  double snr_per_watt = 0.0;    // h d^-gamma / sigma^2

  double tx_energy(double phi) const {
    const double x = snr_per_watt * phi;
    if (x == 0.0) return bits_over_band / snr_per_watt;  // phi / ln(1 + c phi) -> 1/c
    return bits_over_band * phi / std::log1p(x);
  }
  double energy(double phi) const { return compute_energy + tx_energy(phi); }

  /// d energy / d phi.
  double derivative(double phi) const {
    const double x = snr_per_watt * phi;
    if (x == 0.0) return 0.5 * bits_over_band;
    const double ln = std::log1p(x);
    return bits_over_band / ln - bits_over_band * x / ((1.0 + x) * ln * ln);
  }

  /// First-order expansion of the energy at phi_i, evaluated at phi.
  double linearised(double phi_i, double phi) const { return energy(phi_i) + derivative(phi_i) * (phi - phi_i); }
};

inline PowerEnergyModel power_energy_model(const RoundScenario& s, std::size_t i, const VehicleAllocation& a) {
  const auto& v = s.vehicles[i];
  const CutTerms ct = cut_terms(s, v, a.cut);
  PowerEnergyModel m;
  m.compute_energy = 0.5 * v.capacitance * ct.vehicle_cycles * a.cpu_hz * a.cpu_hz;
  m.bits_over_band = ct.uplink_bits / (a.beta * s.channel.bandwidth_hz);
  m.snr_per_watt = snr(s.channel, v.gain, 1.0, v.link_distance_m);
  return m;
}

struct PowerResult {
  std::vector<double> power_w;
  std::vector<bool> feasible;         // false: even phi_min breaks the budget
  std::vector<int> iterations;
  std::vector<std::vector<double>> iterates;  // phi^0, phi^1, ... per vehicle
  bool converged = true;              // false: some vehicle hit the iteration cap
};

/// Raises each vehicle's power toward the energy budget by repeatedly solving
/// the problem with the energy linearised at the current iterate. Delay falls
/// monotonically in power, so each linearised subproblem is solved by the root
/// of the affine energy model, capped at phi_max.
inline PowerResult optimize_power_sca(const RoundScenario& s, const AllocationDecision& alloc,
                                      const OptimizerOptions& opt = {}) {
  if (alloc.size() != s.size()) throw DomainError("allocation size does not match the vehicle set");
  if (!(opt.sca_tol > 0.0)) throw DomainError("SCA tolerance must be > 0");
  PowerResult out;
  const double budget = s.energy_budget_j;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& v = s.vehicles[i];
    const PowerEnergyModel m = power_energy_model(s, i, alloc[i]);
    const Range box = v.power_range;
    std::vector<double> its;

    if (m.energy(box.lo) > budget) {
      out.power_w.push_back(box.lo);
      out.feasible.push_back(false);
      out.iterations.push_back(0);
      out.iterates.push_back({box.lo});
      continue;
    }
    double phi = box.clamp(alloc[i].power_w);
    if (m.energy(phi) > budget) phi = box.lo;
    its.push_back(phi);
    double best = phi;
    int iter = 0;
    bool done = false;
    while (iter < opt.sca_max_iters) {
      ++iter;
      const double slope = m.derivative(phi);
      double next = box.hi;
      if (slope > 0.0) next = std::min(box.hi, phi + (budget - m.energy(phi)) / slope);
      next = box.clamp(next);
      if (m.energy(next) > budget) {
        // Linearisation was not an over-estimate here; fall back to bisection
        // between the last feasible point and the proposal.
        double lo = phi, hi = next;
        for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++k) {
          const double mid = 0.5 * (lo + hi);
          (m.energy(mid) <= budget ? lo : hi) = mid;
        }
        next = lo;
      }
      its.push_back(next);
      const double step = std::abs(next - phi);
      phi = next;
      if (phi > best) best = phi;
      if (step <= opt.sca_tol) {
        done = true;
        break;
      }
    }
    if (!done) out.converged = false;
    out.power_w.push_back(best);
    out.feasible.push_back(true);
    out.iterations.push_back(iter);
    out.iterates.push_back(std::move(its));
  }
  return out;
}

// Subproblem 3: CPU frequency and bandwidth by the Lagrangian method -------------

struct MultiplierState {
  std::vector<double> sigma;  // delay coupling, on the simplex
  std::vector<double> mu;     // energy
  double tau = 0.0;           // bandwidth simplex
  double step_sigma = 2.0;
  int iteration = 0;
};

/// sigma_n = 1/K.
inline MultiplierState initial_multipliers(std::size_t k, double step_sigma = 2.0) {
  MultiplierState m;
  m.sigma.assign(k, 1.0 / static_cast<double>(k));
  m.mu.assign(k, 0.0);
  m.step_sigma = step_sigma;
  return m;
}

struct KktResult {
  std::vector<double> cpu_hz;
  std::vector<double> beta;
  double objective = 0.0;  // T bar
  MultiplierState multipliers;
  std::vector<double> trace;  // T bar per accepted iteration
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  std::vector<bool> beta_floor;  // share held at its energy-feasibility minimum
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<double> trace) : Error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

namespace detail {

struct KktProblem {
  const AuxiliaryTerms* aux = nullptr;
  std::vector<Range> cpu;
  double budget = 0.0;
  std::vector<double> beta_min;

  std::size_t size() const { return cpu.size(); }

  // Largest energy-feasible frequency at bandwidth share beta, within the box.
  double best_cpu(std::size_t n, double beta) const {
    const auto& a = *aux;
    if (a.Dcap[n] <= 0.0) return cpu[n].hi;
    const double room = budget - a.F[n] / beta;
    if (room <= 0.0) return cpu[n].lo;
    return std::clamp(std::sqrt(room / a.Dcap[n]), cpu[n].lo, cpu[n].hi);
  }

  double parallel_delay(std::size_t n, double f, double beta) const {
    const auto& a = *aux;
    return a.A[n] / f + a.B[n] / beta;
  }

  // Normalised shares sqrt(w_n) with floors beta_min_n (water-filling on the floors).
  std::vector<double> shares(const std::vector<double>& weight, std::vector<bool>& floored) const {
    const std::size_t k = size();
    std::vector<double> beta(k, 0.0);
    floored.assign(k, false);
    for (int pass = 0; pass <= static_cast<int>(k); ++pass) {
      double reserved = 0.0, mass = 0.0;
      for (std::size_t n = 0; n < k; ++n) {
        if (floored[n]) reserved += beta_min[n];
        else mass += std::sqrt(weight[n]);
      }
      const double free = 1.0 - reserved;
      bool changed = false;
      for (std::size_t n = 0; n < k; ++n) {
        if (floored[n]) {
          beta[n] = beta_min[n];
          continue;
        }
        beta[n] = mass > 0.0 ? free * std::sqrt(weight[n]) / mass : free / static_cast<double>(k);
        if (beta[n] < beta_min[n]) {
          floored[n] = true;
          changed = true;
        }
      }
      if (!changed) break;
    }
    return beta;
  }
};

}  // namespace detail

/// Frequency and bandwidth allocation for fixed cuts and powers.
///
/// Each iteration: multiplicative ascent on sigma along the delay slack,
/// mu_n = sigma_n A_n / (2 Dcap_n f_n^3) for vehicles whose frequency is held
/// by the energy budget (0 otherwise), beta from the closed-form share
/// sqrt(sigma_n B_n + mu_n F_n) / sum_m sqrt(sigma_m B_m + mu_m F_m), then f at
/// the largest energy-feasible value in the box. The sigma step halves
/// whenever T bar would increase.
inline KktResult allocate_resources_kkt(const RoundScenario& s, const AllocationDecision& alloc,
                                        std::optional<MultiplierState> init = std::nullopt,
                                        const OptimizerOptions& opt = {}) {
  const std::size_t k = s.size();
  if (k == 0) throw DomainError("resource allocation of an empty vehicle set");
  const AuxiliaryTerms aux = auxiliary_terms(s, alloc);

  detail::KktProblem prob;
  prob.aux = &aux;
  prob.budget = s.energy_budget_j;
  double floor_sum = 0.0;
  for (std::size_t n = 0; n < k; ++n) {
    const Range box = s.vehicles[n].cpu_range;
    prob.cpu.push_back(box);
    const double room = prob.budget - aux.Dcap[n] * box.lo * box.lo;
    if (!(room > 0.0)) {
      throw InfeasibleError("vehicle " + std::to_string(s.vehicles[n].id) +
                            ": compute energy at f_min exceeds the energy budget");
    }
    prob.beta_min.push_back(aux.F[n] / room);
    floor_sum += prob.beta_min.back();
  }
  if (floor_sum > 1.0) throw InfeasibleError("energy budget needs more than the whole bandwidth");

  MultiplierState ms = init.value_or(initial_multipliers(k, opt.kkt_step_sigma));
  if (ms.sigma.size() != k) throw DomainError("multiplier state size does not match the vehicle set");
  for (double& x : ms.sigma) {
    if (!(x > 0.0)) throw DomainError("initial multipliers must be positive");
  }
  {
    const double z = std::accumulate(ms.sigma.begin(), ms.sigma.end(), 0.0);
    for (double& x : ms.sigma) x /= z;
  }
  ms.mu.assign(k, 0.0);

  // mu, beta and f depend on each other; iterate to a consistent triple so
  // the map from sigma is continuous and the step control works.
  auto solve_for = [&](const std::vector<double>& sigma, std::vector<double>& bb, std::vector<double>& ff,
                       std::vector<double>& mm, std::vector<bool>& fl) {
    for (int inner = 0; inner < 100; ++inner) {
      mm.assign(k, 0.0);
      std::vector<double> weight(k);
      for (std::size_t n = 0; n < k; ++n) {
        const double fn = inner == 0 ? prob.best_cpu(n, bb[n]) : ff[n];
        const bool capped = aux.Dcap[n] > 0.0 && fn < prob.cpu[n].hi;
        if (capped) mm[n] = sigma[n] * aux.A[n] / (2.0 * aux.Dcap[n] * fn * fn * fn);
        weight[n] = sigma[n] * aux.B[n] + mm[n] * aux.F[n];
      }
      const std::vector<double> next = prob.shares(weight, fl);
      double moved = 0.0;
      for (std::size_t n = 0; n < k; ++n) {
        moved = std::max(moved, std::abs(next[n] - bb[n]));
        // damped: the cap feedback can overshoot
        bb[n] = inner == 0 ? next[n] : 0.5 * (bb[n] + next[n]);
        ff[n] = prob.best_cpu(n, bb[n]);
      }
      if (moved <= 1e-15) break;
    }
    // renormalise after damping, respecting floors
    std::vector<double> weight(k);
    for (std::size_t n = 0; n < k; ++n) weight[n] = sigma[n] * aux.B[n] + mm[n] * aux.F[n];
    bb = prob.shares(weight, fl);
    for (std::size_t n = 0; n < k; ++n) ff[n] = prob.best_cpu(n, bb[n]);
  };

  // Starting point: the image of the initial multipliers, from equal shares.
  std::vector<bool> floored;
  std::vector<double> beta = prob.shares(std::vector<double>(k, 1.0), floored);
  std::vector<double> f(k);
  for (std::size_t n = 0; n < k; ++n) f[n] = prob.best_cpu(n, beta[n]);
  solve_for(ms.sigma, beta, f, ms.mu, floored);

  auto delays = [&](const std::vector<double>& ff, const std::vector<double>& bb) {
    std::vector<double> u(k);
    for (std::size_t n = 0; n < k; ++n) u[n] = prob.parallel_delay(n, ff[n], bb[n]);
    return u;
  };
  auto max_of = [](const std::vector<double>& u) { return *std::max_element(u.begin(), u.end()); };

  std::vector<double> u = delays(f, beta);
  double tbar = max_of(u);

  KktResult res;
  res.trace.push_back(tbar + aux.C);
  double step = ms.step_sigma;
  int rising = 0;
  const double min_step = 1e-12;

  for (int it = 0; it < opt.kkt_max_iters; ++it) {
    // Convergence: every vehicle not held at its share floor sits on the max.
    double spread = 0.0;
    for (std::size_t n = 0; n < k; ++n) {
      if (!floored[n]) spread = std::max(spread, (tbar - u[n]) / tbar);
    }
    if (spread <= opt.kkt_tol) {
      res.converged = true;
      break;
    }

    std::vector<double> sigma_try, beta_try, f_try, mu_try, u_try;
    std::vector<bool> floored_try;
    double tbar_try = 0.0;
    bool accepted = false;
    while (!accepted) {
      sigma_try = ms.sigma;
      double z = 0.0;
      for (std::size_t n = 0; n < k; ++n) {
        sigma_try[n] *= std::pow(u[n] / tbar, step);
        z += sigma_try[n];
      }
      for (double& x : sigma_try) x /= z;

      f_try = f;
      beta_try = beta;
      solve_for(sigma_try, beta_try, f_try, mu_try, floored_try);
      u_try = delays(f_try, beta_try);
      tbar_try = max_of(u_try);
      if (tbar_try <= tbar || step <= min_step) {
        accepted = true;
      } else {
        step *= 0.5;
      }
    }

    rising = tbar_try > tbar ? rising + 1 : 0;
    if (rising >= opt.kkt_divergence_window) {
      throw DivergenceError("resource allocation diverged", res.trace);
    }
    const bool stalled = step <= min_step && tbar_try >= tbar;
    ms.sigma = sigma_try;
    ms.mu = mu_try;
    beta = beta_try;
    f = f_try;
    floored = floored_try;
    u = u_try;
    tbar = tbar_try;
    res.trace.push_back(tbar + aux.C);
    res.iterations = it + 1;
    // Let the step recover after a halving.
    step = std::min(ms.step_sigma, step * 1.5);
    if (stalled) break;
  }

  // tau from the bandwidth stationarity of any vehicle above its floor.
  ms.tau = 0.0;
  for (std::size_t n = 0; n < k; ++n) {
    if (!floored[n]) {
      ms.tau = (ms.sigma[n] * aux.B[n] + ms.mu[n] * aux.F[n]) / (beta[n] * beta[n]);
      break;
    }
  }
  ms.iteration += res.iterations;

  // KKT residual: stationarity in beta, f and T bar plus complementary slackness.
  double r2 = 0.0;
  {
    double sigma_sum = 0.0;
    for (std::size_t n = 0; n < k; ++n) {
      sigma_sum += ms.sigma[n];
      if (!floored[n] && ms.tau > 0.0) {
        const double g = (ms.tau - (ms.sigma[n] * aux.B[n] + ms.mu[n] * aux.F[n]) / (beta[n] * beta[n])) / ms.tau;
        r2 += g * g;
      }
      const bool interior = f[n] > prob.cpu[n].lo && f[n] < prob.cpu[n].hi;
      if (interior && ms.mu[n] > 0.0) {
        const double pull = aux.A[n] * ms.sigma[n] / (f[n] * f[n]);
        const double g = (2.0 * ms.mu[n] * aux.Dcap[n] * f[n] - pull) / pull;
        r2 += g * g;
      }
      const double slack_delay = ms.sigma[n] * (u[n] - tbar) / tbar;
      r2 += slack_delay * slack_delay;
      const double e = aux.Dcap[n] * f[n] * f[n] + aux.F[n] / beta[n];
      const double slack_energy = ms.mu[n] * (e - prob.budget) / prob.budget;
      r2 += slack_energy * slack_energy;
    }
    r2 += (1.0 - sigma_sum) * (1.0 - sigma_sum);
    const double bsum = std::accumulate(beta.begin(), beta.end(), 0.0);
    r2 += (1.0 - bsum) * (1.0 - bsum);
  }

  res.cpu_hz = f;
  res.beta = beta;
  res.objective = tbar + aux.C;
  res.multipliers = ms;
  res.kkt_residual = std::sqrt(r2);
  res.beta_floor = floored;
  return res;
}

// Vehicle screening with the nominal allocation --------------------------------

/// Nominal operating point used before optimisation: equal shares, f_max,
/// phi_max, and the energy-feasible cut with the smallest delay.
struct NominalPlan {
  std::vector<double> round_time_s;  // +inf when no cut meets the budget
  std::vector<CutLayer> cut;
  std::vector<bool> energy_feasible;
};

inline NominalPlan nominal_plan(const RoundScenario& candidates, const OptimizerOptions& opt = {}) {
  NominalPlan plan;
  if (candidates.size() == 0) return plan;
  const double beta = 1.0 / static_cast<double>(candidates.size());
  AllocationDecision alloc;
  for (const auto& v : candidates.vehicles) alloc.push_back({candidates.cut_set.front(), beta, v.cpu_range.hi, v.power_range.hi});
  const CutSelection cs = select_cut_layers(candidates, alloc, opt);
  const double rdl = candidates.downlink_rate();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    plan.cut.push_back(cs.cuts[i]);
    plan.energy_feasible.push_back(cs.feasible[i]);
    if (!cs.feasible[i]) {
      plan.round_time_s.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    VehicleAllocation a = alloc[i];
    a.cut = cs.cuts[i];
    plan.round_time_s.push_back(operating_cost(candidates, candidates.vehicles[i], a, rdl).delay_s);
  }
  return plan;
}

struct Participants {
  SelectionOutcome selection;
  RoundScenario scenario;  // restricted to N_t
  NominalPlan nominal;
};

/// Standing-time screen over the candidate set.
inline Participants select_participants(const RoundScenario& candidates, double coverage_diameter_m, double t_max_s,
                                        const OptimizerOptions& opt = {}) {
  Participants p;
  p.nominal = nominal_plan(candidates, opt);
  std::vector<double> standing;
  for (const auto& v : candidates.vehicles) standing.push_back(standing_time(v, coverage_diameter_m, t_max_s));
  p.selection = select_vehicles(p.nominal.round_time_s, standing);
  p.scenario = candidates;
  p.scenario.vehicles.clear();
  for (std::size_t i : p.selection.selected) p.scenario.vehicles.push_back(candidates.vehicles[i]);
  return p;
}

// Joint block coordinate descent -----------------------------------------------

struct OptimizerReport {
  AllocationDecision decision;
  std::vector<int> vehicle_ids;         // participants the decision refers to
  std::vector<int> dropped_ids;         // no energy-feasible cut
  std::vector<double> objective_trace;  // T after each sweep
  std::vector<int> sca_iterations;      // max over vehicles, per sweep
  std::vector<int> kkt_iterations;      // per sweep
  int sweeps = 0;
  bool converged = false;
  bool sca_converged = true;
  bool kkt_converged = true;
  bool reverted_last_sweep = false;     // last sweep raised T and was undone
  double kkt_residual = 0.0;
  bool feasible = true;                 // decision satisfies every constraint
};

/// Checks shares, cut set, CPU/power boxes and the energy budget. Energy gets a relative slack.
inline bool satisfies_constraints(const RoundScenario& s, const AllocationDecision& alloc, double energy_slack = 1e-9) {
  if (alloc.size() != s.size()) return false;
  double bsum = 0.0;
  const double rdl = s.downlink_rate();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& v = s.vehicles[i];
    const auto& a = alloc[i];
    if (!(a.beta > 0.0 && a.beta <= 1.0)) return false;
    if (std::find(s.cut_set.begin(), s.cut_set.end(), a.cut) == s.cut_set.end()) return false;
    if (!v.cpu_range.contains(a.cpu_hz) || !v.power_range.contains(a.power_w)) return false;
    if (operating_cost(s, v, a, rdl).energy_j > s.energy_budget_j * (1.0 + energy_slack)) return false;
    bsum += a.beta;
  }
  return bsum <= 1.0 + 1e-12;
}

namespace detail {

inline double scaled_change(const AllocationDecision& a, const AllocationDecision& b, double VehicleAllocation::*field,
                            const std::vector<double>& scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i].*field - b[i].*field) / scale[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Starting point for BCD: the nominal plan, falling back to the
/// lowest-energy operating point for vehicles the nominal point overloads.
inline AllocationDecision initial_allocation(const RoundScenario& s, const OptimizerOptions& opt = {}) {
  AllocationDecision alloc;
  const double beta = 1.0 / static_cast<double>(s.size());
  for (const auto& v : s.vehicles) alloc.push_back({s.cut_set.front(), beta, v.cpu_range.hi, v.power_range.hi});
  const CutSelection hi = select_cut_layers(s, alloc, opt);
  AllocationDecision low = alloc;
  for (std::size_t i = 0; i < s.size(); ++i) {
    low[i].cpu_hz = s.vehicles[i].cpu_range.lo;
    low[i].power_w = s.vehicles[i].power_range.lo;
  }
  const CutSelection lo = select_cut_layers(s, low, opt);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (hi.feasible[i]) {
      alloc[i].cut = hi.cuts[i];
    } else {
      alloc[i] = low[i];
      alloc[i].cut = lo.cuts[i];
    }
  }
  return alloc;
}

/// Alternates cut selection, SCA power assignment and frequency/bandwidth
/// allocation until the decision stops moving. A sweep that would raise the
/// round time is undone and ends the descent.
inline OptimizerReport joint_bcd(RoundScenario s, const OptimizerOptions& opt = {},
                                 std::optional<AllocationDecision> start = std::nullopt) {
  if (s.size() == 0) throw InfeasibleError("no eligible vehicles");
  if (s.cut_set.empty()) throw DomainError("empty cut layer set");
  OptimizerReport rep;
  AllocationDecision alloc = start ? *start : initial_allocation(s, opt);
  if (alloc.size() != s.size()) throw DomainError("initial allocation size does not match the vehicle set");

  double prev_t = std::numeric_limits<double>::infinity();
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    const AllocationDecision prev = alloc;

    CutSelection cs = select_cut_layers(s, alloc, opt);
    {
      RoundScenario kept = s;
      kept.vehicles.clear();
      AllocationDecision kept_alloc;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (cs.feasible[i]) {
          kept.vehicles.push_back(s.vehicles[i]);
          kept_alloc.push_back(alloc[i]);
          kept_alloc.back().cut = cs.cuts[i];
        } else {
          rep.dropped_ids.push_back(s.vehicles[i].id);
        }
      }
      if (kept.size() == 0) throw InfeasibleError("energy budget rules out every cut layer for every vehicle");
      if (kept.size() != s.size()) {
        // The participant set changed: restart the descent on the reduced set.
        s = std::move(kept);
        alloc = std::move(kept_alloc);
        prev_t = std::numeric_limits<double>::infinity();
        rep.objective_trace.clear();
        rep.sca_iterations.clear();
        rep.kkt_iterations.clear();
      } else {
        alloc = std::move(kept_alloc);
      }
    }
    if (opt.round_cut_polish) polish_cuts(s, alloc, opt);
    const AllocationDecision before = sweep == 1 ? alloc : prev;

    const PowerResult pr = optimize_power_sca(s, alloc, opt);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!pr.feasible[i]) throw InfeasibleError("vehicle " + std::to_string(s.vehicles[i].id) + ": no feasible power");
      alloc[i].power_w = pr.power_w[i];
    }
    rep.sca_converged = rep.sca_converged && pr.converged;
    rep.sca_iterations.push_back(*std::max_element(pr.iterations.begin(), pr.iterations.end()));

    const KktResult kr = allocate_resources_kkt(s, alloc, std::nullopt, opt);
    for (std::size_t i = 0; i < s.size(); ++i) {
      alloc[i].cpu_hz = kr.cpu_hz[i];
      alloc[i].beta = kr.beta[i];
    }
    rep.kkt_converged = rep.kkt_converged && kr.converged;
    rep.kkt_iterations.push_back(kr.iterations);
    rep.kkt_residual = kr.kkt_residual;

    const double t = objective(s, alloc);
    rep.sweeps = sweep;
    if (t > prev_t) {
      alloc = prev;
      rep.reverted_last_sweep = true;
      rep.converged = true;
      break;
    }
    rep.objective_trace.push_back(t);
    prev_t = t;

    std::vector<double> pscale, fscale, ones(s.size(), 1.0);
    for (const auto& v : s.vehicles) {
      pscale.push_back(v.power_range.hi > 0.0 ? v.power_range.hi : 1.0);
      fscale.push_back(v.cpu_range.hi);
    }
    const bool same_cuts = std::equal(alloc.begin(), alloc.end(), before.begin(),
                                      [](const auto& a, const auto& b) { return a.cut == b.cut; });
    if (same_cuts &&
        detail::scaled_change(alloc, before, &VehicleAllocation::power_w, pscale) < opt.tol_power &&
        detail::scaled_change(alloc, before, &VehicleAllocation::cpu_hz, fscale) < opt.tol_cpu &&
        detail::scaled_change(alloc, before, &VehicleAllocation::beta, ones) < opt.tol_beta) {
      rep.converged = true;
      break;
    }
  }

  rep.decision = alloc;
  for (const auto& v : s.vehicles) rep.vehicle_ids.push_back(v.id);
  rep.feasible = satisfies_constraints(s, alloc, 1e-9);
  return rep;
}

/// Optimised sequential split learning: each vehicle owns the whole band
/// during its turn and runs at its best energy-feasible (f, phi) for `cut`.
inline AllocationDecision sl_optimal_allocation(const RoundScenario& s, CutLayer cut, const OptimizerOptions& opt = {}) {
  AllocationDecision out;
  for (const auto& v : s.vehicles) {
    RoundScenario one = s;
    one.vehicles = {v};
    one.cut_set = {cut};
    const OptimizerReport r = joint_bcd(one, opt);
    VehicleAllocation a = r.decision.at(0);
    a.beta = 1.0;
    out.push_back(a);
  }
  return out;
}

// Brute-force oracle -----------------------------------------------------------

struct OracleGrid {
  int beta_points = 40;   // per-vehicle share grid on (0, 1]
  int cpu_points = 25;
  int power_points = 25;
};

struct OracleResult {
  AllocationDecision decision;
  double objective = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

namespace detail {

inline std::vector<double> grid(const Range& r, int points) {
  if (points <= 1 || r.hi == r.lo) return {r.hi};
  std::vector<double> g;
  for (int i = 0; i < points; ++i) g.push_back(r.lo + (r.hi - r.lo) * i / (points - 1));
  return g;
}

}  // namespace detail

/// Exhaustive search over cut tuples and a (beta, f, phi) grid, minimising the
/// round time under all constraints. Limited to three vehicles.
inline OracleResult brute_force_oracle(const RoundScenario& s, const OracleGrid& g = {}) {
  const std::size_t k = s.size();
  if (k == 0) throw DomainError("oracle needs at least one vehicle");
  if (k > 3) throw DomainError("oracle is limited to three vehicles");
  const double rdl = s.downlink_rate();
  const std::vector<double> betas = detail::grid({1.0 / g.beta_points, 1.0}, g.beta_points);
  const std::size_t ncut = s.cut_set.size(), nb = betas.size();

  // best[n][c][b]: smallest parallel delay of vehicle n at cut c, share b.
  struct Cell {
    double par = std::numeric_limits<double>::infinity();
    double cpu = 0.0, power = 0.0;
  };
  std::vector<std::vector<std::vector<Cell>>> best(k, std::vector<std::vector<Cell>>(ncut, std::vector<Cell>(nb)));
  std::vector<std::vector<double>> serial(k, std::vector<double>(ncut));
  for (std::size_t n = 0; n < k; ++n) {
    const auto& v = s.vehicles[n];
    const auto fs = detail::grid(v.cpu_range, g.cpu_points);
    const auto ps = detail::grid(v.power_range, g.power_points);
    for (std::size_t c = 0; c < ncut; ++c) {
      const CutTerms ct = cut_terms(s, v, s.cut_set[c]);
      serial[n][c] = ct.downlink_bits / rdl + ct.server_cycles / s.ec_cpu_hz;
      for (std::size_t b = 0; b < nb; ++b) {
        for (double f : fs) {
          for (double p : ps) {
            const double rate = betas[b] * full_band_rate(s, v, p);
            if (!(rate > 0.0)) continue;
            const double tx = ct.uplink_bits / rate;
            const double e = 0.5 * v.capacitance * ct.vehicle_cycles * f * f + p * tx;
            if (e > s.energy_budget_j) continue;
            const double par = ct.vehicle_cycles / f + tx;
            if (par < best[n][c][b].par) best[n][c][b] = {par, f, p};
          }
        }
      }
    }
  }

  OracleResult res;
  std::vector<std::size_t> ci(k, 0), bi(k, 0);
  // Enumerate cut tuples and share tuples with sum(beta) <= 1.
  const auto total_cuts = static_cast<std::size_t>(std::pow(static_cast<double>(ncut), static_cast<double>(k)));
  const auto total_betas = static_cast<std::size_t>(std::pow(static_cast<double>(nb), static_cast<double>(k)));
  for (std::size_t cc = 0; cc < total_cuts; ++cc) {
    std::size_t x = cc;
    double ser = 0.0;
    for (std::size_t n = 0; n < k; ++n) {
      ci[n] = x % ncut;
      x /= ncut;
      ser += serial[n][ci[n]];
    }
    for (std::size_t bb = 0; bb < total_betas; ++bb) {
      std::size_t y = bb;
      double bsum = 0.0, worst = 0.0;
      bool ok = true;
      for (std::size_t n = 0; n < k && ok; ++n) {
        bi[n] = y % nb;
        y /= nb;
        bsum += betas[bi[n]];
        const double par = best[n][ci[n]][bi[n]].par;
        if (!std::isfinite(par) || bsum > 1.0 + 1e-12) ok = false;
        worst = std::max(worst, par);
      }
      if (!ok) continue;
      const double t = worst + ser;
      if (t < res.objective) {
        res.objective = t;
        res.feasible = true;
        res.decision.clear();
        for (std::size_t n = 0; n < k; ++n) {
          const Cell& cell = best[n][ci[n]][bi[n]];
          res.decision.push_back({s.cut_set[ci[n]], betas[bi[n]], cell.cpu, cell.power});
        }
      }
    }
  }
  return res;
}

}  // namespace asfv
