#include <gtest/gtest.h>

#include <cmath>

#include "asfv/convergence.hpp"

using namespace asfv;

namespace {

ConvergenceParams example() {
  ConvergenceParams cp;
  cp.N = 10;
  cp.K = 5;
  cp.G2 = 1.0;
  cp.delta2.assign(10, 0.1);
  cp.p.assign(10, 0.1);
  cp.gamma_v = 0.2;
  cp.ell = 2.0;
  cp.mu = 1.0;
  cp.init_dist2 = 1.0;
  return cp;
}

QuadraticToy toy(std::uint64_t seed = 1, ToyShape shape = {}) {
  Rng rng = make_rng(seed, "toy-test");
  return make_quadratic_toy(shape, rng);
}

}  // namespace

TEST(Bound, GammaHandExample) {
  // 0.01 + 2.4 + 8 + 10/9
  EXPECT_NEAR(gamma_term(example()), 0.01 + 2.4 + 8.0 + 10.0 / 9.0, 1e-12);
  EXPECT_NEAR(gamma_term(example()), 11.5211, 1e-4);
}

TEST(Bound, FullParticipationDropsSamplingTerm) {
  EXPECT_EQ(sampling_factor(10, 10), 0.0);
  EXPECT_EQ(sampling_factor(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(sampling_factor(4, 1), 4.0);
  EXPECT_THROW(sampling_factor(3, 4), DomainError);
  EXPECT_THROW(sampling_factor(3, 0), DomainError);
}

TEST(Bound, DecreasingInRoundsAndParticipants) {
  auto cp = example();
  double prev = 1e300;
  for (double T : {1.0, 2.0, 10.0, 100.0, 1e4}) {
    const double b = convergence_bound(cp, T);
    EXPECT_LT(b, prev);
    prev = b;
  }
  prev = 1e300;
  for (std::size_t K = 1; K <= 10; ++K) {
    cp.K = K;
    const double b = convergence_bound(cp, 50.0);
    EXPECT_LT(b, prev);
    prev = b;
  }
  EXPECT_THROW(convergence_bound(cp, 0.5), DomainError);
}

TEST(Bound, Validation) {
  auto cp = example();
  cp.mu = 3.0;  // ell < mu
  EXPECT_THROW(gamma_term(cp), InvariantError);
  cp = example();
  cp.p[0] = 0.5;
  EXPECT_THROW(gamma_term(cp), InvariantError);
  cp = example();
  cp.gamma_v = -1.0;
  EXPECT_THROW(gamma_term(cp), InvariantError);
}

TEST(Constants, IdentityHessianAndIdenticalData) {
  QuadraticToy t;
  t.dim = 2;
  t.hess.assign(3, {1.0, 1.0});
  t.centre.assign(3, {0.5, -0.5});
  t.noise_sd.assign(3, 0.3);
  t.p.assign(3, 1.0 / 3);
  FlToyOptions o;
  o.K = 2;
  o.T = 50;
  const auto cp = estimate_constants(t, o, 1, 5, 500);
  EXPECT_EQ(cp.ell, 1.0);
  EXPECT_EQ(cp.mu, 1.0);
  EXPECT_NEAR(cp.gamma_v, 0.0, 1e-15);
  // E||noise||^2 = dim s^2 = 0.18, times 1.1, with sampling error
  for (double d : cp.delta2) EXPECT_NEAR(d, 1.1 * 0.18, 0.03);
}

TEST(Constants, HeterogeneityMatchesClosedForm) {
  const auto t = toy(2);
  FlToyOptions o;
  o.T = 100;
  const auto cp = estimate_constants(t, o, 3, 5, 500);
  const auto w = t.minimiser();
  double closed = t.loss(w);  // every local optimum is zero
  EXPECT_NEAR(cp.gamma_v, closed, 1e-12);
  EXPECT_GT(cp.gamma_v, 0.0);
}

TEST(Lemmas, SamplingVarianceTwoVehicles) {
  // K = 1 of two locals at +-1: the sample is always 1 away from the mean.
  const std::vector<std::vector<double>> local{{1.0}, {-1.0}};
  // factor (2 - 1) * 2 = 2, so eta^2 G^2 = 0.5 makes the bound exactly 1
  const auto r = validate_lemma_sampling(local, 1, 1.0, 0.5, 2000, 4);
  EXPECT_DOUBLE_EQ(r.variance.empirical, 1.0);
  EXPECT_DOUBLE_EQ(r.variance.bound, 1.0);
  EXPECT_TRUE(r.variance.pass);
  EXPECT_TRUE(r.unbiased);
  EXPECT_THROW(validate_lemma_sampling(local, 1, 1.0, 0.5, 10, 4), DomainError);
}

TEST(Lemmas, RiggedGradientBoundFails) {
  const auto t = toy(5);
  FlToyOptions o;
  o.K = 1;
  auto cp = estimate_constants(t, o, 6, 5, 500);
  Rng rng = make_rng(7, "state");
  const std::vector<double> w0(t.dim, 0.0);
  const double eta = step_size(cp, 1.0);
  const auto local = one_step_state(t, w0, eta, rng);
  EXPECT_TRUE(validate_lemma_sampling(local, 1, eta, cp.G2, 5000, 8).variance.pass);
  EXPECT_FALSE(validate_lemma_sampling(local, 1, eta, cp.G2 * 1e-3, 5000, 8).variance.pass);
}

TEST(Lemmas, FullParticipationAndZeroDrift) {
  const auto t = toy(9);
  Rng rng = make_rng(1, "state");
  const std::vector<double> w0(t.dim, 0.3);
  const auto local = one_step_state(t, w0, 0.1, rng);
  const auto r = validate_lemma_sampling(local, t.vehicles(), 0.1, 1.0, 1000, 2);
  EXPECT_EQ(r.variance.empirical, 0.0);
  EXPECT_TRUE(r.unbiased);
  const auto d = validate_local_drift(t, w0, 0, 0.1, 1.0, 1000, 3);
  EXPECT_EQ(d.empirical, 0.0);
  EXPECT_TRUE(d.pass);
}

TEST(Lemmas, NoiseFreeGradientVarianceIsZero) {
  ToyShape shape;
  shape.noise_sd = {0.0, 0.0};
  const auto t = toy(10, shape);
  std::vector<std::vector<double>> local(t.vehicles(), std::vector<double>(t.dim, 0.2));
  const auto r = validate_gradient_variance(t, local, std::vector<double>(t.vehicles(), 0.0), 1000, 1);
  EXPECT_EQ(r.empirical, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(Lemmas, GradientVarianceMatchesWeightedNoise) {
  const auto t = toy(11);
  std::vector<double> exact;
  for (double s : t.noise_sd) exact.push_back(static_cast<double>(t.dim) * s * s);
  double want = 0.0;
  for (std::size_t n = 0; n < t.vehicles(); ++n) want += t.p[n] * t.p[n] * exact[n];
  std::vector<std::vector<double>> local(t.vehicles(), std::vector<double>(t.dim, 0.0));
  const auto r = validate_gradient_variance(t, local, exact, 20000, 5);
  EXPECT_NEAR(r.empirical, want, 0.05 * want);
}

TEST(Toy, BoundHoldsAndTightensWithK) {
  const auto t = toy(12);
  double prev = 1e300;
  for (std::size_t K : {1, 5, 10}) {
    FlToyOptions o;
    o.K = K;
    o.T = 200;
    const auto cp = estimate_constants(t, o, 13, 10, 1000);
    const auto bc = check_bound(t, cp, o, 14, 30);
    EXPECT_EQ(bc.violations, 0u) << "K=" << K;
    EXPECT_EQ(bc.contraction_violations, 0u) << "K=" << K;
    EXPECT_LT(bc.bound.back(), prev);
    prev = bc.bound.back();
  }
}

TEST(Toy, Errors) {
  auto t = toy(1);
  Rng rng = make_rng(1, "x");
  FlToyOptions o;
  o.K = 11;
  EXPECT_THROW(run_fl_toy(t, o, rng), DomainError);
  t.hess[0][0] = 0.0;
  EXPECT_THROW(t.check(), DomainError);
}

TEST(Estimator, MeanAndStdError) {
  MeanEstimator m;
  for (double x : {1.0, 2.0, 3.0, 4.0}) m.add(x);
  EXPECT_DOUBLE_EQ(m.mean(), 2.5);
  EXPECT_NEAR(m.std_error(), std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  MeanEstimator one;
  one.add(7.0);
  EXPECT_EQ(one.std_error(), 0.0);
}
