#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "asfv/common.hpp"
#include "asfv/mobility.hpp"

namespace asfv {

struct ConvergenceParams {
  double ell = 1.0;               // smoothness
  double mu = 1.0;                // strong convexity
  double G2 = 0.0;                // bound on E||g||^2
  std::vector<double> delta2;     // per-vehicle gradient variance
  double gamma_v = 0.0;           // L* - sum p_n L_n*
  std::size_t N = 1;
  std::size_t K = 1;
  std::vector<double> p;
  double init_dist2 = 0.0;        // E||w_1 - w*||^2

  double nu() const { return ell / mu; }
  double iota() const { return 4.0 * ell / mu; }
  double rho() const { return 2.0 / mu; }
};

inline void validate_convergence(const ConvergenceParams& cp) {
  if (!(cp.mu > 0.0) || !(cp.ell >= cp.mu)) throw InvariantError("convergence: need ell >= mu > 0");
  if (!(cp.gamma_v >= 0.0)) throw InvariantError("convergence: gamma_v must be >= 0");
  if (!(cp.G2 >= 0.0) || !(cp.init_dist2 >= 0.0)) throw InvariantError("convergence: G^2 and initial distance >= 0");
  if (cp.K < 1 || cp.K > cp.N) throw DomainError("convergence: need 1 <= K <= N");
  if (cp.p.size() != cp.N || cp.delta2.size() != cp.N) throw InvariantError("convergence: p and delta^2 need N entries");
  const double s = std::accumulate(cp.p.begin(), cp.p.end(), 0.0);
  if (std::abs(s - 1.0) > 1e-9) throw InvariantError("convergence: p must sum to 1");
  for (double d : cp.delta2) {
    if (!(d >= 0.0)) throw InvariantError("convergence: delta^2 must be >= 0");
  }
}

/// Sampling-variance factor (N/K - 1) N/(N-1); zero under full participation.
inline double sampling_factor(std::size_t N, std::size_t K) {
  if (K < 1 || K > N) throw DomainError("sampling factor: need 1 <= K <= N");
  if (K == N) return 0.0;
  if (N < 2) throw DomainError("sampling factor undefined for N < 2");
  const double n = static_cast<double>(N), k = static_cast<double>(K);
  return (n / k - 1.0) * n / (n - 1.0);
}

inline double gamma_term(const ConvergenceParams& cp) {
  validate_convergence(cp);
  double g = 0.0;
  for (std::size_t n = 0; n < cp.N; ++n) g += cp.p[n] * cp.p[n] * cp.delta2[n];
  return g + 6.0 * cp.ell * cp.gamma_v + 8.0 * cp.G2 + sampling_factor(cp.N, cp.K) * cp.G2;
}

inline double convergence_bound(const ConvergenceParams& cp, double T) {
  if (!(T >= 1.0)) throw DomainError("bound needs T >= 1");
  const double G = gamma_term(cp);
  return cp.nu() / (cp.iota() + T - 1.0) * (2.0 * G / cp.mu + cp.mu * cp.iota() / 2.0 * cp.init_dist2);
}

/// eta_t = rho / (t + iota)
inline double step_size(const ConvergenceParams& cp, double t) { return cp.rho() / (t + cp.iota()); }

// Running mean / standard error with compensated sums --------------------------

class MeanEstimator {
 public:
  void add(double x) {
    kahan(sum_, c_, x);
    kahan(sq_, cq_, x * x);
    ++n_;
  }
  std::size_t count() const { return n_; }
  double mean() const { return n_ ? sum_ / static_cast<double>(n_) : 0.0; }
  double std_error() const {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double var = std::max(0.0, (sq_ - sum_ * sum_ / n) / (n - 1.0));
    return std::sqrt(var / n);
  }

 private:
  static void kahan(double& s, double& c, double x) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  double sum_ = 0.0, c_ = 0.0, sq_ = 0.0, cq_ = 0.0;
  std::size_t n_ = 0;
};

// Quadratic toy problem ----------------------------------------------------------

/// L_n(w) = 1/2 sum_j h_nj (w_j - c_nj)^2, stochastic gradients carry
/// independent N(0, s_n^2) noise per coordinate.
struct QuadraticToy {
  std::size_t dim = 1;
  std::vector<std::vector<double>> hess;    // diagonal Hessian per vehicle
  std::vector<std::vector<double>> centre;  // per-vehicle minimiser
  std::vector<double> noise_sd;
  std::vector<double> p;

  std::size_t vehicles() const { return hess.size(); }

  void check() const {
    const std::size_t N = hess.size();
    if (N == 0 || centre.size() != N || noise_sd.size() != N || p.size() != N) {
      throw DomainError("toy problem: inconsistent vehicle count");
    }
    for (std::size_t n = 0; n < N; ++n) {
      if (hess[n].size() != dim || centre[n].size() != dim) throw DomainError("toy problem: dimension mismatch");
      for (double h : hess[n]) {
        if (!(h > 0.0)) throw DomainError("toy problem is not strongly convex");
      }
      if (!(noise_sd[n] >= 0.0)) throw DomainError("toy problem: noise must be >= 0");
    }
  }

  double local_loss(std::size_t n, const std::vector<double>& w) const {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += 0.5 * hess[n][j] * (w[j] - centre[n][j]) * (w[j] - centre[n][j]);
    return s;
  }

  double loss(const std::vector<double>& w) const {
    double s = 0.0;
    for (std::size_t n = 0; n < vehicles(); ++n) s += p[n] * local_loss(n, w);
    return s;
  }

  void gradient(std::size_t n, const std::vector<double>& w, std::vector<double>& g) const {
    g.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) g[j] = hess[n][j] * (w[j] - centre[n][j]);
  }

  void stochastic_gradient(std::size_t n, const std::vector<double>& w, Rng& rng, std::vector<double>& g) const {
    gradient(n, w, g);
    if (noise_sd[n] == 0.0) return;
    std::normal_distribution<double> z(0.0, noise_sd[n]);
    for (double& x : g) x += z(rng);
  }

  std::vector<double> minimiser() const {
    std::vector<double> w(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      double a = 0.0, b = 0.0;
      for (std::size_t n = 0; n < vehicles(); ++n) {
        a += p[n] * hess[n][j];
        b += p[n] * hess[n][j] * centre[n][j];
      }
      w[j] = b / a;
    }
    return w;
  }

  double loss_star() const { return loss(minimiser()); }
};

struct ToyShape {
  std::size_t vehicles = 10;
  std::size_t dim = 4;
  Range curvature{1.0, 2.0};
  double centre_sd = 1.0;
  Range noise_sd{0.2, 0.6};
};

inline QuadraticToy make_quadratic_toy(const ToyShape& shape, Rng& rng) {
  QuadraticToy t;
  t.dim = shape.dim;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, shape.centre_sd);
  for (std::size_t n = 0; n < shape.vehicles; ++n) {
    std::vector<double> h(shape.dim), c(shape.dim);
    for (auto& x : h) x = shape.curvature.lo + (shape.curvature.hi - shape.curvature.lo) * u(rng);
    for (auto& x : c) x = z(rng);
    t.hess.push_back(h);
    t.centre.push_back(c);
    t.noise_sd.push_back(shape.noise_sd.lo + (shape.noise_sd.hi - shape.noise_sd.lo) * u(rng));
  }
  t.p.assign(shape.vehicles, 1.0 / static_cast<double>(shape.vehicles));
  t.check();
  return t;
}

namespace detail {

inline double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

inline double norm2(const std::vector<double>& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}

/// Mean of the listed local models, summed in index order.
inline std::vector<double> mean_of(const std::vector<std::vector<double>>& w, const std::vector<std::size_t>& idx) {
  std::vector<double> m(w.front().size(), 0.0);
  for (std::size_t i : idx) {
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += w[i][j];
  }
  for (double& x : m) x /= static_cast<double>(idx.size());
  return m;
}

/// Uniform K-subset without replacement, ascending.
inline std::vector<std::size_t> sample_subset(std::size_t N, std::size_t K, Rng& rng) {
  std::vector<std::size_t> all(N);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> out;
  std::sample(all.begin(), all.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(K), rng);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Local SGD with `period` steps between aggregations over K uniformly
/// sampled vehicles (p = 1/N, so the aggregate is the mean of the sample).
struct FlToyOptions {
  std::size_t K = 10;
  std::size_t period = 2;
  std::size_t T = 500;
  double ell = 1.0, mu = 1.0;  // learning-rate schedule eta_t = 2/(mu (t + 4 ell/mu))
};

struct FlTrajectory {
  std::vector<double> gap;      // L(w_t) - L*, t = 1..T
  std::vector<double> dist2;    // ||w_t - w*||^2
  std::vector<double> grad2;    // max_n ||g_n||^2 seen at step t (last entry 0)
};

inline FlTrajectory run_fl_toy(const QuadraticToy& toy, const FlToyOptions& o, Rng& rng) {
  toy.check();
  const std::size_t N = toy.vehicles();
  if (o.K < 1 || o.K > N) throw DomainError("K must lie in [1, N]");
  if (o.period < 1 || o.T < 1) throw DomainError("period and T must be >= 1");
  const std::vector<double> wstar = toy.minimiser();
  const double lstar = toy.loss(wstar);
  std::vector<std::vector<double>> local(N, std::vector<double>(toy.dim, 0.0));
  std::vector<double> w(toy.dim, 0.0), g;
  std::vector<std::size_t> everyone(N);
  std::iota(everyone.begin(), everyone.end(), 0);
  FlTrajectory tr;
  const double iota = 4.0 * o.ell / o.mu;
  for (std::size_t t = 1;; ++t) {
    tr.gap.push_back(toy.loss(w) - lstar);
    tr.dist2.push_back(detail::dist2(w, wstar));
    if (t == o.T) {
      tr.grad2.push_back(0.0);
      break;
    }
    const double eta = 2.0 / (o.mu * (static_cast<double>(t) + iota));
    double gmax = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      toy.stochastic_gradient(n, local[n], rng, g);
      gmax = std::max(gmax, detail::norm2(g));
      for (std::size_t j = 0; j < toy.dim; ++j) local[n][j] -= eta * g[j];
    }
    tr.grad2.push_back(gmax);
    if (t % o.period == 0) {
      w = detail::mean_of(local, detail::sample_subset(N, o.K, rng));
      for (auto& l : local) l = w;
    } else {
      w = detail::mean_of(local, everyone);
    }
  }
  return tr;
}

/// Constants of a toy problem. G^2 is the largest per-step mean of ||g_n||^2
/// over pilot trajectories; G^2 and delta^2 carry a 1.1 safety factor.
inline ConvergenceParams estimate_constants(const QuadraticToy& toy, const FlToyOptions& run, std::uint64_t seed,
                                            std::size_t pilot_runs = 20, std::size_t noise_samples = 2000) {
  toy.check();
  ConvergenceParams cp;
  cp.N = toy.vehicles();
  cp.K = run.K;
  cp.p = toy.p;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& h : toy.hess) {
    for (double x : h) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  cp.mu = lo;
  cp.ell = hi;
  cp.gamma_v = std::max(0.0, toy.loss_star());  // every L_n* is 0
  cp.init_dist2 = detail::norm2(toy.minimiser());  // w_1 = 0

  // delta_n^2: sample variance of the stochastic gradient at w = 0.
  std::vector<double> zero(toy.dim, 0.0), g, exact;
  for (std::size_t n = 0; n < cp.N; ++n) {
    Rng rng = make_rng(seed, "noise-variance", n);
    toy.gradient(n, zero, exact);
    MeanEstimator m;
    for (std::size_t s = 0; s < noise_samples; ++s) {
      toy.stochastic_gradient(n, zero, rng, g);
      m.add(detail::dist2(g, exact));
    }
    cp.delta2.push_back(1.1 * m.mean());
  }

  FlToyOptions o = run;
  o.ell = cp.ell;
  o.mu = cp.mu;
  std::vector<double> acc(o.T, 0.0);
  for (std::size_t r = 0; r < pilot_runs; ++r) {
    Rng rng = make_rng(seed, "pilot", r);
    const auto tr = run_fl_toy(toy, o, rng);
    for (std::size_t t = 0; t < o.T; ++t) acc[t] += tr.grad2[t] / static_cast<double>(pilot_runs);
  }
  cp.G2 = 1.1 * *std::max_element(acc.begin(), acc.end());
  validate_convergence(cp);
  return cp;
}

// Reports ---------------------------------------------------------------------------

struct LemmaReport {
  std::string quantity;
  double empirical = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
  double slack = 0.0;  // 3 standard errors
  bool pass = false;
};

inline LemmaReport one_sided(std::string quantity, const MeanEstimator& m, double bound) {
  LemmaReport r;
  r.quantity = std::move(quantity);
  r.empirical = m.mean();
  r.std_error = m.std_error();
  r.bound = bound;
  r.slack = 3.0 * r.std_error;
  r.pass = r.empirical - r.slack <= bound;
  return r;
}

struct BoundCheck {
  std::vector<double> mean_gap, gap_se, bound;
  std::vector<double> mean_dist2, dist2_se;
  ConvergenceParams params;
  std::size_t violations = 0;              // T with mean - 3 se > bound
  std::size_t contraction_violations = 0;  // one-step recursion failures
};

/// Runs `seeds` trajectories and compares the mean gap with the bound at
/// every T, plus the per-step recursion
///   E||w_{t+1}-w*||^2 <= (1 - mu eta_t) E||w_t-w*||^2 + eta_t^2 Gamma.
inline BoundCheck check_bound(const QuadraticToy& toy, const ConvergenceParams& cp, FlToyOptions o,
                              std::uint64_t seed, std::size_t seeds = 100) {
  o.ell = cp.ell;
  o.mu = cp.mu;
  o.K = cp.K;
  std::vector<MeanEstimator> gap(o.T), d2(o.T);
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng = make_rng(seed, "fl-toy", s);
    const auto tr = run_fl_toy(toy, o, rng);
    for (std::size_t t = 0; t < o.T; ++t) {
      gap[t].add(tr.gap[t]);
      d2[t].add(tr.dist2[t]);
    }
  }
  BoundCheck bc;
  bc.params = cp;
  const double G = gamma_term(cp);
  for (std::size_t t = 0; t < o.T; ++t) {
    bc.mean_gap.push_back(gap[t].mean());
    bc.gap_se.push_back(gap[t].std_error());
    bc.bound.push_back(convergence_bound(cp, static_cast<double>(t + 1)));
    bc.mean_dist2.push_back(d2[t].mean());
    bc.dist2_se.push_back(d2[t].std_error());
    if (bc.mean_gap[t] - 3.0 * bc.gap_se[t] > bc.bound[t]) ++bc.violations;
  }
  for (std::size_t t = 0; t + 1 < o.T; ++t) {
    const double eta = step_size(cp, static_cast<double>(t + 1));
    const double rhs = (1.0 - cp.mu * eta) * bc.mean_dist2[t] + eta * eta * G;
    const double slack = 3.0 * (bc.dist2_se[t + 1] + bc.dist2_se[t]);
    if (bc.mean_dist2[t + 1] - slack > rhs) ++bc.contraction_violations;
  }
  return bc;
}

// Sampling, drift and variance checks -------------------------------------------------------

/// Local models after one SGD step of size eta from a common w0.
inline std::vector<std::vector<double>> one_step_state(const QuadraticToy& toy, const std::vector<double>& w0,
                                                       double eta, Rng& rng) {
  std::vector<std::vector<double>> local(toy.vehicles(), w0);
  std::vector<double> g;
  for (std::size_t n = 0; n < toy.vehicles(); ++n) {
    toy.stochastic_gradient(n, w0, rng, g);
    for (std::size_t j = 0; j < w0.size(); ++j) local[n][j] -= eta * g[j];
  }
  return local;
}

struct SamplingReport {
  LemmaReport variance;
  bool unbiased = false;       // every coordinate of E[w_{t+1}] - v within 3 se of 0
  double max_bias_sigma = 0.0;  // largest |bias| / se over coordinates (0 when se = 0 and bias = 0)
};

/// E||w_{t+1} - v_{t+1}||^2 over uniform K-subsets against
/// (N/K - 1) N/(N-1) eta^2 G^2, and E[w_{t+1}] = v_{t+1}.
inline SamplingReport validate_lemma_sampling(const std::vector<std::vector<double>>& local, std::size_t K,
                                              double eta, double G2, std::size_t trials, std::uint64_t seed) {
  const std::size_t N = local.size();
  if (N == 0 || K < 1 || K > N) throw DomainError("sampling lemma: need 1 <= K <= N");
  if (trials < 1000) throw DomainError("sampling lemma: need >= 1000 trials");
  std::vector<std::size_t> everyone(N);
  std::iota(everyone.begin(), everyone.end(), 0);
  const std::vector<double> v = detail::mean_of(local, everyone);
  const std::size_t d = v.size();
  MeanEstimator var;
  std::vector<MeanEstimator> bias(d);
  Rng rng = make_rng(seed, "sampling-lemma");
  for (std::size_t k = 0; k < trials; ++k) {
    const auto w = detail::mean_of(local, detail::sample_subset(N, K, rng));
    var.add(detail::dist2(w, v));
    for (std::size_t j = 0; j < d; ++j) bias[j].add(w[j] - v[j]);
  }
  SamplingReport r;
  r.variance = one_sided("sampling variance", var, sampling_factor(N, K) * eta * eta * G2);
  r.unbiased = true;
  for (std::size_t j = 0; j < d; ++j) {
    const double b = std::abs(bias[j].mean()), se = bias[j].std_error();
    if (b > 3.0 * se) r.unbiased = false;
    if (se > 0.0) r.max_bias_sigma = std::max(r.max_bias_sigma, b / se);
  }
  return r;
}

/// E||g_t - gbar_t||^2 at fixed local models against sum p_n^2 delta_n^2.
inline LemmaReport validate_gradient_variance(const QuadraticToy& toy, const std::vector<std::vector<double>>& local,
                                              const std::vector<double>& delta2, std::size_t trials,
                                              std::uint64_t seed) {
  toy.check();
  const std::size_t N = toy.vehicles();
  if (local.size() != N || delta2.size() != N) throw DomainError("gradient variance: one state per vehicle");
  double bound = 0.0;
  for (std::size_t n = 0; n < N; ++n) bound += toy.p[n] * toy.p[n] * delta2[n];
  Rng rng = make_rng(seed, "gradient-variance");
  std::vector<double> g, gb, sg(toy.dim), sgb(toy.dim);
  MeanEstimator m;
  for (std::size_t k = 0; k < trials; ++k) {
    std::fill(sg.begin(), sg.end(), 0.0);
    std::fill(sgb.begin(), sgb.end(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      toy.stochastic_gradient(n, local[n], rng, g);
      toy.gradient(n, local[n], gb);
      for (std::size_t j = 0; j < toy.dim; ++j) {
        sg[j] += toy.p[n] * g[j];
        sgb[j] += toy.p[n] * gb[j];
      }
    }
    m.add(detail::dist2(sg, sgb));
  }
  return one_sided("gradient variance", m, bound);
}

/// E sum p_n ||w_t - w_t^n||^2 after `steps` local steps from a common w0,
/// against 4 eta^2 G^2.
inline LemmaReport validate_local_drift(const QuadraticToy& toy, const std::vector<double>& w0, std::size_t steps,
                                        double eta, double G2, std::size_t trials, std::uint64_t seed) {
  toy.check();
  const std::size_t N = toy.vehicles();
  Rng rng = make_rng(seed, "local-drift", steps);
  std::vector<double> g;
  MeanEstimator m;
  for (std::size_t k = 0; k < trials; ++k) {
    std::vector<std::vector<double>> local(N, w0);
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t n = 0; n < N; ++n) {
        toy.stochastic_gradient(n, local[n], rng, g);
        for (std::size_t j = 0; j < toy.dim; ++j) local[n][j] -= eta * g[j];
      }
    }
    std::vector<double> avg = w0;  // w0 + sum p (w^n - w0), exact at zero steps
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t j = 0; j < toy.dim; ++j) avg[j] += toy.p[n] * (local[n][j] - w0[j]);
    }
    double drift = 0.0;
    for (std::size_t n = 0; n < N; ++n) drift += toy.p[n] * detail::dist2(avg, local[n]);
    m.add(drift);
  }
  return one_sided("local drift (" + std::to_string(steps) + " steps)", m, 4.0 * eta * eta * G2);
}

}  // namespace asfv
