// Re-derives the calibrated defaults in configs/default.json.
//
//   asfv_calibrate energy  percentile of nominal cut-2 energy per vehicle
//   asfv_calibrate lr      learning-rate scan on the synthetic set

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asfv/harness.hpp"

using namespace asfv;

namespace {

int energy(const ExperimentConfig& c, std::size_t N, std::size_t draws, double q) {
  std::vector<double> e;
  for (std::size_t k = 0; k < draws; ++k) {
    RoundScenario s = scenario_template(c);
    Rng rng = make_rng(k, "mobility");
    s.vehicles = spawn_vehicles_exact(N, c.mobility, rng);
    const double rdl = s.downlink_rate();
    for (const auto& v : s.vehicles) {
      const VehicleAllocation a{2, 1.0 / static_cast<double>(N), v.cpu_range.hi, v.power_range.hi};
      e.push_back(operating_cost(s, v, a, rdl).energy_j);
    }
  }
  std::sort(e.begin(), e.end());
  std::printf("quantile,energy_j\n");
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.8, 0.9}) {
    std::printf("%.2f,%s\n", p, fmt(e[static_cast<std::size_t>(p * static_cast<double>(e.size()))]).c_str());
  }
  const double pick = e[static_cast<std::size_t>(q * static_cast<double>(e.size()))];
  std::printf("# energy budget for %.0f%% feasible at cut 2: %s J\n", 100.0 * q, fmt(pick).c_str());
  return 0;
}

int learning_rate(const ExperimentConfig& base, const std::vector<double>& rates) {
  std::printf("learning_rate,scheme,final_test_acc,final_loss\n");
  for (double lr : rates) {
    ExperimentConfig c = base;
    c.training.learning_rate = lr;
    auto [train, test] = load_training_data(c);
    const TrainingEnvironment env = make_training_environment(std::move(train), std::move(test), c.training);
    const SimulationSetup sim = simulation_setup(c);
    for (const char* name : {"CL", "SFL4"}) {
      const auto rec = run_scheme(parse_scheme_spec(name), env, sim, c.training);
      std::printf("%s,%s,%s,%s\n", fmt(lr).c_str(), name, fmt(rec.back().test_acc).c_str(),
                  fmt(rec.back().loss).c_str());
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibration scans for the default configuration"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config, "JSON config file");
  app.add_option("-s,--set", overrides, "override a config field");
  std::size_t N = 15, draws = 200;
  double q = 0.8;
  auto* en = app.add_subcommand("energy", "energy-budget percentile");
  en->add_option("-n,--vehicles", N);
  en->add_option("--draws", draws);
  en->add_option("--quantile", q);
  std::vector<double> rates{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  auto* lr = app.add_subcommand("lr", "learning-rate scan");
  lr->add_option("--rates", rates);
  CLI11_PARSE(app, argc, argv);
  try {
    const ExperimentConfig c = load_config(config, overrides);
    if (en->parsed()) return energy(c, N, draws, q);
    if (lr->parsed()) return learning_rate(c, rates);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
