#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "asfv/harness.hpp"

using namespace asfv;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("asfv_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny() {
  return load_config("", {"experiment.n_values=[6]", "experiment.scenarios=2",
                          "experiment.schemes=[\"ASFV\",\"SFL4\",\"SL\",\"FL\",\"CL\"]"});
}

}  // namespace

TEST(Config, DefaultsLoad) {
  const auto c = load_config("", {});
  EXPECT_EQ(c.channel.bandwidth_hz, 10e6);
  EXPECT_EQ(c.energy_budget_j, 19.3);
  EXPECT_EQ(c.cut_set, (std::vector<CutLayer>{2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(c.profile.cut_layers.size(), 10u);
}

TEST(Config, OverridesApply) {
  const auto c = load_config("", {"scenario.energy_budget_j=5", "experiment.seed=9", "scenario.cut_set=[3,4]"});
  EXPECT_EQ(c.energy_budget_j, 5.0);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.cut_set, (std::vector<CutLayer>{3, 4}));
  EXPECT_NE(config_hash(c), config_hash(load_config("", {})));
}

TEST(Config, UnknownKeysAndBadSyntax) {
  EXPECT_THROW(load_config("", {"scenario.nonsense=1"}), ParseError);
  EXPECT_THROW(load_config("", {"nonsense=1"}), ParseError);
  EXPECT_THROW(load_config("", {"=1"}), ParseError);
  EXPECT_THROW(load_config("", {"experiment.seed"}), ParseError);
  EXPECT_THROW(load_config("/nonexistent/config.json", {}), Error);
}

TEST(Config, FileRoundTrip) {
  const fs::path dir = scratch("roundtrip");
  const auto c = load_config("", {"experiment.seed=4"});
  {
    std::ofstream out(dir / "c.json");
    out << config_to_json(c).dump(2);
  }
  EXPECT_EQ(config_hash(load_config((dir / "c.json").string(), {})), config_hash(c));
}

TEST(Sweep, SingleNPoint) {
  const auto r = run_sweep(tiny());
  EXPECT_TRUE(r.ok);
  ASSERT_EQ(r.rows.size(), 5u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.N, 6u);
    EXPECT_DOUBLE_EQ(row.round_time_s, row.comm_time_s + row.compute_time_s) << row.scheme;
    EXPECT_GT(row.samples, 0u);
  }
  EXPECT_EQ(r.cuts.size(), 10u);
  EXPECT_FALSE(r.traces.empty());
}

TEST(Sweep, WritesCsvAndPlotData) {
  const auto r = run_sweep(tiny());
  const fs::path dir = scratch("plots");
  const auto csv = write_sweep_csv(r, dir);
  const auto dat = emit_plot_data(r, dir);
  EXPECT_EQ(csv.size(), 4u);
  EXPECT_EQ(dat.size(), 8u);
  for (const auto& p : dat) {
    ASSERT_TRUE(fs::exists(p)) << p;
    EXPECT_GT(fs::file_size(p), 0u);
  }
  const std::string head = slurp(dir / "delay_overall.dat");
  EXPECT_EQ(head.rfind("# N ASFV SFL4 SL FL CL\n6 ", 0), 0u) << head;
}

TEST(Sweep, EmptyResultsCannotBePlotted) {
  EXPECT_THROW(emit_plot_data(SweepResults{}, scratch("empty")), DomainError);
}

TEST(Sweep, SchemesShareTheParticipants) {
  const auto c = tiny();
  std::vector<SchemeSpec> specs;
  for (const auto& s : c.schemes) specs.push_back(parse_scheme_spec(s));
  const auto part = select_participants(sweep_candidates(c, 6, 0), c.mobility.coverage_diameter_m, c.mobility.t_max_s,
                                        c.optimizer);
  const auto rounds = compare_schemes(specs, part, c.optimizer);
  ASSERT_EQ(rounds.size(), specs.size());
  for (const auto& r : rounds) {
    EXPECT_EQ(r.vehicle_ids, rounds.front().vehicle_ids) << r.spec.label();
    EXPECT_DOUBLE_EQ(r.cost.round_time_s, r.cost.comm_time_s + r.cost.compute_time_s);
  }
}

TEST(Sweep, CandidatesAreSeeded) {
  const auto c = tiny();
  const auto a = sweep_candidates(c, 6, 1), b = sweep_candidates(c, 6, 1), d = sweep_candidates(c, 6, 2);
  EXPECT_EQ(a.vehicles[3].entry_distance_m, b.vehicles[3].entry_distance_m);
  EXPECT_NE(a.vehicles[3].entry_distance_m, d.vehicles[3].entry_distance_m);
}

TEST(Output, ManifestListsFiles) {
  const fs::path dir = scratch("manifest");
  const auto c = tiny();
  { std::ofstream(dir / "x.csv") << "a\n"; }
  write_manifest(dir, c, {dir / "x.csv"}, "test");
  const std::string m = slurp(dir / "manifest.csv");
  EXPECT_NE(m.find("x.csv,test,"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_EQ(fmt(0.1), "0.1");
  EXPECT_EQ(fmt(1.0 / 3.0), "0.3333333333");
}

TEST(Cli, RepeatRunsAreByteIdentical) {
  const std::string cli = ASFV_CLI_PATH;
  std::vector<std::string> outs;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = scratch("cli" + std::to_string(i));
    const std::string cmd = "ASFV_OUT_DIR='" + dir.string() + "' '" + cli + "' optimize -n 8 > /dev/null";
    ASSERT_EQ(std::system(cmd.c_str()), 0) << cmd;
    outs.push_back(slurp(dir / "decision.csv") + slurp(dir / "trace.csv") + slurp(dir / "manifest.csv"));
  }
  EXPECT_FALSE(outs[0].empty());
  EXPECT_EQ(outs[0], outs[1]);
}

TEST(Cli, BadArgumentsExitNonZero) {
  const std::string cli = ASFV_CLI_PATH;
  const fs::path dir = scratch("clibad");
  const std::string cmd = "ASFV_OUT_DIR='" + dir.string() + "' '" + cli + "' optimize -s nonsense=1 2> /dev/null";
  EXPECT_NE(std::system(cmd.c_str()), 0);
}
