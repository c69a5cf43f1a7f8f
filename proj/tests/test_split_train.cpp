#include <gtest/gtest.h>

#include <cmath>

#include "asfv/harness.hpp"
#include "oracles.hpp"

using namespace asfv;

namespace {

Dataset small_data(std::uint64_t seed = 1) {
  Rng rng = make_rng(seed, "train-test");
  return make_gaussian_blobs(20, 6, 4, 2.0, rng);
}

SplitModel small_model(std::uint64_t seed = 1) {
  Rng rng = make_rng(seed, "train-model");
  return make_model({6, 10, 8, 4}, rng);
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.learning_rate = 0.05;
  c.batch_size = 16;
  c.local_epochs = 2;
  return c;
}

}  // namespace

TEST(Training, OneVehicleSchemesCoincide) {
  const auto d = small_data();
  const auto m = small_model();
  const auto cfg = small_config();
  const std::vector<const Dataset*> one{&d};
  const auto sfl = train_split_parallel(m, one, {2}, {1.0}, cfg).parameters();
  const auto sl = train_split_sequential(m, one, 2, cfg).parameters();
  const auto cl = train_central(m, one, cfg).parameters();
  const auto fl = train_federated(m, one, {1.0}, cfg).parameters();
  EXPECT_EQ(sfl, sl);
  EXPECT_EQ(sl, cl);
  EXPECT_EQ(cl, fl);
}

TEST(Training, CentralEqualsMonolithicSgd) {
  const auto d = small_data();
  const auto m = small_model();
  const auto cfg = small_config();
  const auto got = train_central(m, {&d}, cfg).parameters();
  std::vector<double> w = m.parameters();
  const oracle::Mono mono{{6, 10, 8, 4}};
  for (int e = 0; e < cfg.local_epochs; ++e) {
    for (std::size_t b0 = 0; b0 < d.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(d.size(), b0 + cfg.batch_size);
      const std::vector<double> x(d.x.v.begin() + static_cast<long>(b0 * 6), d.x.v.begin() + static_cast<long>(b1 * 6));
      const std::vector<int> y(d.y.begin() + static_cast<long>(b0), d.y.begin() + static_cast<long>(b1));
      w = mono.sgd_step(w, x, y, b1 - b0, cfg.learning_rate);
    }
  }
  ASSERT_EQ(got.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(got[i], w[i], 1e-12);
}

TEST(Training, ParallelRoundUpdatesBothSides) {
  const auto a = small_data(2), b = small_data(3);
  const auto m = small_model();
  const auto out = train_split_parallel(m, {&a, &b}, {1, 1}, {0.5, 0.5}, small_config());
  EXPECT_NE(out.vehicle_parameters(1), m.vehicle_parameters(1));
  EXPECT_NE(out.server_parameters(1), m.server_parameters(1));
  // zero weights keep the previous global model
  const auto kept = train_split_parallel(m, {&a, &b}, {1, 1}, {0.0, 0.0}, small_config());
  EXPECT_EQ(kept.parameters(), m.parameters());
}

TEST(Training, Deterministic) {
  const auto d = small_data(), e = small_data(9);
  const auto m = small_model();
  const auto cfg = small_config();
  EXPECT_EQ(train_split_parallel(m, {&d, &e}, {1, 2}, {0.5, 0.5}, cfg).parameters(),
            train_split_parallel(m, {&d, &e}, {1, 2}, {0.5, 0.5}, cfg).parameters());
}

TEST(Training, ToyCutMapping) {
  const auto p = load_profile(std::string(ASFV_SOURCE_DIR) + "/profiles/resnet18.json");
  EXPECT_EQ(toy_cut(2, p, 4), 1u);
  EXPECT_EQ(toy_cut(4, p, 4), 2u);
  EXPECT_EQ(toy_cut(6, p, 4), 3u);
  EXPECT_EQ(toy_cut(0, p, 4), 0u);
  EXPECT_EQ(toy_cut(9, p, 4), 3u);  // one layer always stays on the EC
}

TEST(Training, LossIsSampleWeighted) {
  const auto a = small_data(4), b = small_data(5);
  const auto m = small_model();
  Dataset both = a;
  both.x.v.insert(both.x.v.end(), b.x.v.begin(), b.x.v.end());
  both.x.rows += b.size();
  both.y.insert(both.y.end(), b.y.begin(), b.y.end());
  const double want = (mean_loss(m, a) * a.size() + mean_loss(m, b) * b.size()) / both.size();
  EXPECT_NEAR(mean_loss(m, both), want, 1e-12);
}

TEST(Training, AccuracyAtBudget) {
  std::vector<RoundRecord> rec(4);
  for (int t = 0; t < 4; ++t) {
    rec[t].round = t;
    rec[t].elapsed_s = 10.0 * t;
    rec[t].test_acc = 0.1 * (t + 1);
  }
  EXPECT_DOUBLE_EQ(accuracy_at_budget(rec, 25.0), 0.3);
  EXPECT_DOUBLE_EQ(accuracy_at_budget(rec, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(accuracy_at_budget(rec, 1e9), 0.4);
  EXPECT_EQ(accuracy_at_budget({}, 5.0), 0.0);
}

TEST(Training, RejectsBadConfig) {
  TrainingConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(validate_training(c), InvariantError);
  const auto m = small_model();
  const auto d = small_data();
  EXPECT_THROW(train_split_parallel(m, {&d}, {1, 2}, {1.0}, small_config()), DomainError);
}

TEST(Training, SchemeRunsAreSeeded) {
  auto c = load_config("", {"training.rounds=2", "training.vehicles=5"});
  const auto [tr, te] = load_training_data(c);
  const auto env = make_training_environment(tr, te, c.training);
  const auto sim = simulation_setup(c);
  const auto a = run_scheme({Scheme::SFL, 4}, env, sim, c.training);
  const auto b = run_scheme({Scheme::SFL, 4}, env, sim, c.training);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].test_acc, b[i].test_acc);
    EXPECT_EQ(a[i].elapsed_s, b[i].elapsed_s);
  }
  EXPECT_EQ(a[0].elapsed_s, 0.0);
  EXPECT_GT(a[2].elapsed_s, a[1].elapsed_s);
}

// Accuracy reached within the time ASFV needs for all its rounds, mean over seeds.
TEST(TrainingSlow, AdaptiveCutsAtLeastMatchFixedCutsAtBudget) {
  auto c = load_config("", {});
  const auto sim = simulation_setup(c);
  const std::vector<SchemeSpec> specs{{Scheme::ASFV, 2}, {Scheme::SFL, 2}, {Scheme::SFL, 4}, {Scheme::SFL, 6}};
  const int seeds = 5;
  std::map<std::string, double> mean;
  for (int s = 1; s <= seeds; ++s) {
    c.seed = static_cast<std::uint64_t>(s);
    c.training.seed = c.seed;
    const auto [tr, te] = load_training_data(c);
    const auto env = make_training_environment(tr, te, c.training);
    std::map<std::string, std::vector<RoundRecord>> runs;
    for (const auto& sp : specs) runs[sp.label()] = run_scheme(sp, env, sim, c.training);
    const double budget = runs["ASFV"].back().elapsed_s;
    for (const auto& [label, r] : runs) mean[label] += accuracy_at_budget(r, budget) / seeds;
  }
  for (const auto& [label, acc] : mean) std::printf("  %s mean accuracy at budget: %.4f\n", label.c_str(), acc);
  for (const char* l : {"SFL2", "SFL4", "SFL6"}) EXPECT_GE(mean["ASFV"], mean[l]) << l;
}
