#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "asfv/common.hpp"
#include "asfv/cost.hpp"
#include "asfv/data.hpp"
#include "asfv/mobility.hpp"
#include "asfv/nn.hpp"
#include "asfv/optimizer.hpp"
#include "asfv/schemes.hpp"

namespace asfv {

struct TrainingConfig {
  double learning_rate = 1e-2;
  std::size_t batch_size = 64;
  int local_epochs = 5;
  int rounds = 30;
  std::vector<std::size_t> hidden = {128, 64, 32};
  PartitionConfig partition;
  std::size_t vehicles = 10;
  std::uint64_t seed = 1;
};

inline void validate_training(const TrainingConfig& c) {
  if (!(c.learning_rate > 0.0)) throw InvariantError("training: learning rate must be > 0");
  if (c.batch_size < 1) throw InvariantError("training: batch size must be >= 1");
  if (c.local_epochs < 1 || c.rounds < 0) throw InvariantError("training: epochs >= 1 and rounds >= 0 required");
  if (c.vehicles < 1) throw InvariantError("training: need at least one vehicle");
}

// Evaluation -------------------------------------------------------------------

inline double mean_loss(const SplitModel& m, const Dataset& d) {
  if (d.size() == 0) throw DomainError("loss of an empty dataset");
  return softmax_cross_entropy(predict_logits(m, d.x), d.y, nullptr);
}

inline double accuracy(const SplitModel& m, const Dataset& d) {
  if (d.size() == 0) return 0.0;
  const Matrix z = predict_logits(m, d.x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < z.rows; ++i) {
    const double* row = &z.v[i * z.cols];
    const auto arg = static_cast<int>(std::max_element(row, row + z.cols) - row);
    hit += arg == d.y[i];
  }
  return static_cast<double>(hit) / static_cast<double>(d.size());
}

// Local training primitives ------------------------------------------------------

/// Mini-batches in stored order, `epochs` passes.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_plan(std::size_t rows, std::size_t batch, int epochs) {
  std::vector<std::pair<std::size_t, std::size_t>> plan;
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t b = 0; b < rows; b += batch) plan.emplace_back(b, std::min(rows, b + batch));
  }
  return plan;
}

namespace detail {

struct Batch {
  Matrix x;
  std::vector<int> y;
};

inline Batch make_batch(const Dataset& d, std::size_t begin, std::size_t end) {
  Batch b;
  b.x = Matrix(end - begin, d.dim());
  std::copy(d.x.v.begin() + static_cast<std::ptrdiff_t>(begin * d.dim()),
            d.x.v.begin() + static_cast<std::ptrdiff_t>(end * d.dim()), b.x.v.begin());
  b.y.assign(d.y.begin() + static_cast<std::ptrdiff_t>(begin), d.y.begin() + static_cast<std::ptrdiff_t>(end));
  return b;
}

// Full model of a vehicle after a parallel round: its own layers below the
// cut, the shared EC copy above.
inline std::vector<double> stitched(const SplitModel& vehicle, const SplitModel& server, std::size_t cut) {
  std::vector<double> p = vehicle.vehicle_parameters(cut);
  const std::vector<double> s = server.server_parameters(cut);
  p.insert(p.end(), s.begin(), s.end());
  return p;
}

}  // namespace detail

/// Parallel split round: each vehicle trains its copy of the layers below its
/// cut; the EC keeps one server-side model and serves batches round-robin in
/// vehicle order. Vehicle-side layers are then averaged with weights p.
inline SplitModel train_split_parallel(const SplitModel& global, const std::vector<const Dataset*>& data,
                                       const std::vector<std::size_t>& cuts, const std::vector<double>& p,
                                       const TrainingConfig& cfg) {
  const std::size_t k = data.size();
  if (cuts.size() != k || p.size() != k) throw DomainError("one cut and one weight per vehicle required");
  std::vector<SplitModel> local(k, global);
  SplitModel server = global;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> plans(k);
  std::size_t steps = 0;
  for (std::size_t n = 0; n < k; ++n) {
    check_cut(global, cuts[n]);
    plans[n] = batch_plan(data[n]->size(), cfg.batch_size, cfg.local_epochs);
    steps = std::max(steps, plans[n].size());
  }
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t n = 0; n < k; ++n) {
      if (s >= plans[n].size()) continue;
      const auto b = detail::make_batch(*data[n], plans[n][s].first, plans[n][s].second);
      split_sgd_step(local[n], server, cuts[n], b.x, b.y, cfg.learning_rate);
    }
  }
  std::vector<std::vector<double>> models;
  for (std::size_t n = 0; n < k; ++n) models.push_back(detail::stitched(local[n], server, cuts[n]));
  SplitModel out = global;
  out.set_parameters(aggregate(models, p, global.parameters()));
  return out;
}

/// Sequential split learning: the vehicle-side model is relayed from one
/// vehicle to the next; one shared EC-side model.
inline SplitModel train_split_sequential(const SplitModel& global, const std::vector<const Dataset*>& data,
                                         std::size_t cut, const TrainingConfig& cfg) {
  SplitModel m = global;
  check_cut(m, cut);
  for (const Dataset* d : data) {
    for (const auto& [b0, b1] : batch_plan(d->size(), cfg.batch_size, cfg.local_epochs)) {
      const auto b = detail::make_batch(*d, b0, b1);
      split_sgd_step(m, m, cut, b.x, b.y, cfg.learning_rate);
    }
  }
  return m;
}

/// Federated averaging of full local models.
inline SplitModel train_federated(const SplitModel& global, const std::vector<const Dataset*>& data,
                                  const std::vector<double>& p, const TrainingConfig& cfg) {
  if (p.size() != data.size()) throw DomainError("one weight per vehicle required");
  std::vector<std::vector<double>> models;
  for (const Dataset* d : data) {
    SplitModel m = global;
    for (const auto& [b0, b1] : batch_plan(d->size(), cfg.batch_size, cfg.local_epochs)) {
      const auto b = detail::make_batch(*d, b0, b1);
      split_sgd_step(m, m, 0, b.x, b.y, cfg.learning_rate);
    }
    models.push_back(m.parameters());
  }
  SplitModel out = global;
  out.set_parameters(aggregate(models, p, global.parameters()));
  return out;
}

/// Centralised mini-batch SGD on the pooled data (vehicle order, stored order).
inline SplitModel train_central(const SplitModel& global, const std::vector<const Dataset*>& data,
                                const TrainingConfig& cfg) {
  Dataset pooled;
  pooled.classes = data.empty() ? 0 : data.front()->classes;
  std::size_t rows = 0, dim = global.input_dim();
  for (const Dataset* d : data) rows += d->size();
  pooled.x = Matrix(rows, dim);
  std::size_t r = 0;
  for (const Dataset* d : data) {
    std::copy(d->x.v.begin(), d->x.v.end(), pooled.x.v.begin() + static_cast<std::ptrdiff_t>(r * dim));
    pooled.y.insert(pooled.y.end(), d->y.begin(), d->y.end());
    r += d->size();
  }
  SplitModel m = global;
  for (const auto& [b0, b1] : batch_plan(pooled.size(), cfg.batch_size, cfg.local_epochs)) {
    const auto b = detail::make_batch(pooled, b0, b1);
    split_sgd_step(m, m, 0, b.x, b.y, cfg.learning_rate);
  }
  return m;
}

// Scheme runs ----------------------------------------------------------------------

/// Maps a profile cut onto the toy network: same relative depth, at least one
/// layer left on the EC.
inline std::size_t toy_cut(CutLayer cut, const CutLayerProfile& profile, std::size_t depth) {
  const double last = static_cast<double>(profile.cut_layers.back());
  const double rel = last > 0.0 ? static_cast<double>(cut) / last : 0.0;
  const auto c = static_cast<std::size_t>(std::llround(rel * static_cast<double>(depth)));
  return std::min<std::size_t>(c, depth - 1);
}

/// The cost side of a training run: round scenario template plus mobility.
struct SimulationSetup {
  RoundScenario base;  // vehicles ignored; channel, profile, f_r, E-hat, E
  MobilityConfig mobility;
  OptimizerOptions optimizer;
};

/// Candidates of round t: vehicle ids 0..N-1 map onto the data partitions.
inline RoundScenario round_candidates(const SimulationSetup& sim, std::size_t vehicles, std::uint64_t seed, int round) {
  RoundScenario s = sim.base;
  Rng rng = make_rng(seed, "mobility", static_cast<std::uint64_t>(round));
  s.vehicles = spawn_vehicles_exact(vehicles, sim.mobility, rng);
  return s;
}

struct TrainingEnvironment {
  Dataset train;   // union of the vehicle partitions
  Dataset test;
  std::vector<Dataset> vehicle_data;
  SplitModel initial;
};

inline TrainingEnvironment make_training_environment(Dataset train, Dataset test, const TrainingConfig& cfg) {
  validate_training(cfg);
  TrainingEnvironment env;
  Rng prng = make_rng(cfg.seed, "partition");
  const auto parts = partition_noniid(train, cfg.vehicles, cfg.partition, prng);
  std::vector<std::size_t> used;
  for (const auto& idx : parts) {
    env.vehicle_data.push_back(train.subset(idx));
    used.insert(used.end(), idx.begin(), idx.end());
  }
  std::sort(used.begin(), used.end());
  std::vector<std::size_t> dims{train.dim()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<std::size_t>(train.classes));
  Rng mrng = make_rng(cfg.seed, "model");
  env.initial = make_model(dims, mrng);
  env.train = train.subset(used);
  env.test = std::move(test);
  return env;
}

struct RoundRecord {
  int round = 0;
  std::string scheme;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double loss = 0.0;
  double round_time_s = 0.0;
  double energy_j = 0.0;
  double elapsed_s = 0.0;  // cumulative simulated time
  std::size_t participants = 0;
};

/// Trains `rounds` rounds of one scheme. Round 0 is the untrained model.
inline std::vector<RoundRecord> run_scheme(const SchemeSpec& spec, const TrainingEnvironment& env,
                                           const SimulationSetup& sim, const TrainingConfig& cfg) {
  validate_training(cfg);
  std::vector<RoundRecord> out;
  SplitModel global = env.initial;
  auto record = [&](int t, double time, double energy, std::size_t k) {
    RoundRecord r;
    r.round = t;
    r.scheme = spec.label();
    r.train_acc = accuracy(global, env.train);
    r.test_acc = accuracy(global, env.test);
    r.loss = mean_loss(global, env.train);
    r.round_time_s = time;
    r.energy_j = energy;
    r.elapsed_s = (out.empty() ? 0.0 : out.back().elapsed_s) + time;
    r.participants = k;
    out.push_back(r);
  };
  record(0, 0.0, 0.0, 0);

  for (int t = 1; t <= cfg.rounds; ++t) {
    const RoundScenario cand = round_candidates(sim, cfg.vehicles, cfg.seed, t);
    const Participants part =
        select_participants(cand, sim.mobility.coverage_diameter_m, sim.mobility.t_max_s, sim.optimizer);
    const SchemeRound sr = run_scheme_round(spec, part.scenario, sim.optimizer);
    if (sr.skipped || sr.vehicle_ids.empty()) {
      record(t, 0.0, 0.0, 0);
      continue;
    }
    std::vector<const Dataset*> data;
    for (int id : sr.vehicle_ids) data.push_back(&env.vehicle_data.at(static_cast<std::size_t>(id)));
    const std::vector<double> p(data.size(), 1.0 / static_cast<double>(data.size()));
    const std::size_t depth = global.depth();
    switch (spec.scheme) {
      case Scheme::ASFV:
      case Scheme::SFL: {
        std::vector<std::size_t> cuts;
        for (const auto& a : sr.decision) cuts.push_back(toy_cut(a.cut, sim.base.profile, depth));
        global = train_split_parallel(global, data, cuts, p, cfg);
        break;
      }
      case Scheme::SL:
      case Scheme::SL_optimal:
        global = train_split_sequential(global, data, toy_cut(kSequentialCut, sim.base.profile, depth), cfg);
        break;
      case Scheme::FL: global = train_federated(global, data, p, cfg); break;
      case Scheme::CL: global = train_central(global, data, cfg); break;
    }
    record(t, sr.cost.round_time_s, sr.cost.total_energy_j(), data.size());
  }
  return out;
}

/// Test accuracy of the last round finished within `budget_s` simulated seconds.
inline double accuracy_at_budget(const std::vector<RoundRecord>& rec, double budget_s) {
  double acc = rec.empty() ? 0.0 : rec.front().test_acc;
  for (const auto& r : rec) {
    if (r.elapsed_s <= budget_s) acc = r.test_acc;
  }
  return acc;
}

}  // namespace asfv
