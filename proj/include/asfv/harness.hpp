#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "asfv/common.hpp"
#include "asfv/convergence.hpp"
#include "asfv/cost.hpp"
#include "asfv/data.hpp"
#include "asfv/mobility.hpp"
#include "asfv/optimizer.hpp"
#include "asfv/profile.hpp"
#include "asfv/radio.hpp"
#include "asfv/schemes.hpp"
#include "asfv/split_train.hpp"

namespace asfv {

namespace fs = std::filesystem;
using nlohmann::json;

// Configuration ------------------------------------------------------------------

struct DataConfig {
  std::string source = "blobs";  // blobs | idx | csv
  std::size_t per_class = 300;
  std::size_t dim = 20;
  double separation = 1.0;
  std::size_t test_every = 5;
  std::string images_path, labels_path, csv_path;
};

struct ExperimentConfig {
  ChannelParams channel;
  MobilityConfig mobility;
  std::string profile_path = "profiles/resnet18.json";
  CutLayerProfile profile;  // loaded from profile_path
  double ec_cpu_hz = 50e9;
  double energy_budget_j = 19.3;
  std::vector<CutLayer> cut_set{2, 3, 4, 5, 6, 7, 8};
  OptimizerOptions optimizer;
  TrainingConfig training;
  DataConfig data;
  std::vector<std::string> schemes{"ASFV", "SFL2", "SFL4", "SFL6", "SL", "SL_optimal", "FL", "CL"};
  std::vector<std::size_t> n_values{5, 10, 15, 20, 25};
  std::size_t scenarios = 20;  // seeded draws per N
  std::uint64_t seed = 1;
  // bounds subcommand
  std::size_t bound_rounds = 500;
  std::size_t bound_seeds = 100;
  std::size_t lemma_trials = 5000;

  ExperimentConfig() {
    channel.bandwidth_hz = 10e6;
  }
};

inline json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

inline Range range_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("range must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["channel"] = {{"bandwidth_hz", c.channel.bandwidth_hz},
                  {"noise_power_w", c.channel.noise_power_w},
                  {"pathloss_exp", c.channel.pathloss_exp},
                  {"ec_gain", c.channel.ec_gain},
                  {"ec_power_w", c.channel.ec_power_w}};
  const auto& m = c.mobility;
  j["mobility"] = {{"mean_count", m.mean_count},
                   {"coverage_diameter_m", m.coverage_diameter_m},
                   {"t_max_s", m.t_max_s},
                   {"speed_mps", range_json(m.speed_mps)},
                   {"cpu_hz", range_json(m.cpu_hz)},
                   {"power_w", range_json(m.power_w)},
                   {"dataset_size", range_json(m.dataset_size)},
                   {"capacitance", m.capacitance},
                   {"mean_gain", m.mean_gain}};
  j["profile"] = {{"path", c.profile_path}};
  j["scenario"] = {{"ec_cpu_hz", c.ec_cpu_hz}, {"energy_budget_j", c.energy_budget_j}, {"cut_set", c.cut_set}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"tol_power", o.tol_power},
                    {"tol_cpu", o.tol_cpu},
                    {"tol_beta", o.tol_beta},
                    {"max_sweeps", o.max_sweeps},
                    {"sca_tol", o.sca_tol},
                    {"sca_max_iters", o.sca_max_iters},
                    {"kkt_tol", o.kkt_tol},
                    {"kkt_max_iters", o.kkt_max_iters},
                    {"kkt_step_sigma", o.kkt_step_sigma},
                    {"kkt_divergence_window", o.kkt_divergence_window},
                    {"energy_slack", o.energy_slack},
                    {"round_cut_polish", o.round_cut_polish}};
  const auto& t = c.training;
  j["training"] = {{"learning_rate", t.learning_rate},
                   {"batch_size", t.batch_size},
                   {"local_epochs", t.local_epochs},
                   {"rounds", t.rounds},
                   {"hidden", t.hidden},
                   {"vehicles", t.vehicles},
                   {"labels_per_vehicle", t.partition.labels_per_vehicle},
                   {"power_law_shape", t.partition.power_law_shape},
                   {"mean_samples", t.partition.mean_samples},
                   {"data",
                    {{"source", c.data.source},
                     {"per_class", c.data.per_class},
                     {"dim", c.data.dim},
                     {"separation", c.data.separation},
                     {"test_every", c.data.test_every},
                     {"images_path", c.data.images_path},
                     {"labels_path", c.data.labels_path},
                     {"csv_path", c.data.csv_path}}}};
  j["experiment"] = {{"schemes", c.schemes},
                     {"n_values", c.n_values},
                     {"scenarios", c.scenarios},
                     {"seed", c.seed},
                     {"bound_rounds", c.bound_rounds},
                     {"bound_seeds", c.bound_seeds},
                     {"lemma_trials", c.lemma_trials}};
  return j;
}

namespace detail {

// Every key of `patch` must already exist in `base`; objects merge, other
// values replace.
inline void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) {
    base = patch;
    return;
  }
  if (!base.is_object()) throw ParseError("config: '" + path + "' is not a section");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ParseError("config: unknown key '" + p + "'");
    merge_strict(base[it.key()], it.value(), p);
  }
}

inline fs::path resolve_path(const std::string& p) {
  fs::path path(p);
  if (path.empty() || path.is_absolute() || fs::exists(path)) return path;
#ifdef ASFV_SOURCE_DIR
  const fs::path alt = fs::path(ASFV_SOURCE_DIR) / path;
  if (fs::exists(alt)) return alt;
#endif
  return path;
}

}  // namespace detail

/// "a.b.c=value": value is parsed as JSON, falling back to a plain string.
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ParseError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  detail::merge_strict(j, patch, "");
}

inline ExperimentConfig config_from_json(const json& user) {
  ExperimentConfig c;
  json j = config_to_json(c);
  detail::merge_strict(j, user, "");
  try {
    const auto& ch = j["channel"];
    c.channel.bandwidth_hz = ch["bandwidth_hz"].get<double>();
    c.channel.noise_power_w = ch["noise_power_w"].get<double>();
    c.channel.pathloss_exp = ch["pathloss_exp"].get<double>();
    c.channel.ec_gain = ch["ec_gain"].get<double>();
    c.channel.ec_power_w = ch["ec_power_w"].get<double>();
    const auto& m = j["mobility"];
    c.mobility.mean_count = m["mean_count"].get<double>();
    c.mobility.coverage_diameter_m = m["coverage_diameter_m"].get<double>();
    c.mobility.t_max_s = m["t_max_s"].get<double>();
    c.mobility.speed_mps = range_from(m["speed_mps"]);
    c.mobility.cpu_hz = range_from(m["cpu_hz"]);
    c.mobility.power_w = range_from(m["power_w"]);
    c.mobility.dataset_size = range_from(m["dataset_size"]);
    c.mobility.capacitance = m["capacitance"].get<double>();
    c.mobility.mean_gain = m["mean_gain"].get<double>();
    c.profile_path = j["profile"]["path"].get<std::string>();
    const auto& s = j["scenario"];
    c.ec_cpu_hz = s["ec_cpu_hz"].get<double>();
    c.energy_budget_j = s["energy_budget_j"].get<double>();
    c.cut_set = s["cut_set"].get<std::vector<CutLayer>>();
    const auto& o = j["optimizer"];
    c.optimizer.tol_power = o["tol_power"].get<double>();
    c.optimizer.tol_cpu = o["tol_cpu"].get<double>();
    c.optimizer.tol_beta = o["tol_beta"].get<double>();
    c.optimizer.max_sweeps = o["max_sweeps"].get<int>();
    c.optimizer.sca_tol = o["sca_tol"].get<double>();
    c.optimizer.sca_max_iters = o["sca_max_iters"].get<int>();
    c.optimizer.kkt_tol = o["kkt_tol"].get<double>();
    c.optimizer.kkt_max_iters = o["kkt_max_iters"].get<int>();
    c.optimizer.kkt_step_sigma = o["kkt_step_sigma"].get<double>();
    c.optimizer.kkt_divergence_window = o["kkt_divergence_window"].get<int>();
    c.optimizer.energy_slack = o["energy_slack"].get<double>();
    c.optimizer.round_cut_polish = o["round_cut_polish"].get<bool>();
    const auto& t = j["training"];
    c.training.learning_rate = t["learning_rate"].get<double>();
    c.training.batch_size = t["batch_size"].get<std::size_t>();
    c.training.local_epochs = t["local_epochs"].get<int>();
    c.training.rounds = t["rounds"].get<int>();
    c.training.hidden = t["hidden"].get<std::vector<std::size_t>>();
    c.training.vehicles = t["vehicles"].get<std::size_t>();
    c.training.partition.labels_per_vehicle = t["labels_per_vehicle"].get<int>();
    c.training.partition.power_law_shape = t["power_law_shape"].get<double>();
    c.training.partition.mean_samples = t["mean_samples"].get<std::size_t>();
    const auto& d = t["data"];
    c.data.source = d["source"].get<std::string>();
    c.data.per_class = d["per_class"].get<std::size_t>();
    c.data.dim = d["dim"].get<std::size_t>();
    c.data.separation = d["separation"].get<double>();
    c.data.test_every = d["test_every"].get<std::size_t>();
    c.data.images_path = d["images_path"].get<std::string>();
    c.data.labels_path = d["labels_path"].get<std::string>();
    c.data.csv_path = d["csv_path"].get<std::string>();
    const auto& e = j["experiment"];
    c.schemes = e["schemes"].get<std::vector<std::string>>();
    c.n_values = e["n_values"].get<std::vector<std::size_t>>();
    c.scenarios = e["scenarios"].get<std::size_t>();
    c.seed = e["seed"].get<std::uint64_t>();
    c.bound_rounds = e["bound_rounds"].get<std::size_t>();
    c.bound_seeds = e["bound_seeds"].get<std::size_t>();
    c.lemma_trials = e["lemma_trials"].get<std::size_t>();
  } catch (const json::exception& ex) {
    throw ParseError(std::string("config: ") + ex.what());
  }
  c.training.seed = c.seed;
  return c;
}

/// Loads the profile and checks the cross-module invariants.
inline void finalise_config(ExperimentConfig& c) {
  validate_channel(c.channel);
  validate_mobility(c.mobility);
  validate_training(c.training);
  const fs::path pp = detail::resolve_path(c.profile_path);
  if (!fs::exists(pp)) throw InvariantError("config: profile '" + c.profile_path + "' does not exist");
  c.profile = load_profile(pp.string());
  if (!(c.ec_cpu_hz > c.mobility.cpu_hz.hi)) throw InvariantError("config: EC must be faster than every vehicle");
  if (!(c.energy_budget_j > 0.0)) throw InvariantError("config: energy budget must be > 0");
  const auto& o = c.optimizer;
  if (!(o.tol_power > 0 && o.tol_cpu > 0 && o.tol_beta > 0 && o.sca_tol > 0 && o.kkt_tol > 0)) {
    throw InvariantError("config: tolerances must be > 0");
  }
  if (c.cut_set.empty()) throw InvariantError("config: empty cut set");
  for (CutLayer e : c.cut_set) (void)c.profile.row(e);
  for (const auto& s : c.schemes) (void)parse_scheme_spec(s);
  if (c.data.source == "idx" && !(fs::exists(c.data.images_path) && fs::exists(c.data.labels_path))) {
    throw InvariantError("config: IDX dataset files not found");
  }
  if (c.data.source == "csv" && !fs::exists(c.data.csv_path)) throw InvariantError("config: CSV dataset not found");
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json user = json::object();
  if (!path.empty()) {
    std::ifstream in(detail::resolve_path(path));
    if (!in) throw ParseError("cannot open config '" + path + "'");
    try {
      in >> user;
    } catch (const json::exception& e) {
      throw ParseError("config '" + path + "': " + e.what());
    }
  }
  json full = config_to_json(ExperimentConfig{});
  detail::merge_strict(full, user, "");
  for (const auto& o : overrides) apply_override(full, o);
  ExperimentConfig c = config_from_json(full);
  finalise_config(c);
  return c;
}

/// FNV-1a of the canonical JSON dump.
inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a(config_to_json(c).dump()); }

inline RoundScenario scenario_template(const ExperimentConfig& c) {
  RoundScenario s;
  s.profile = c.profile;
  s.channel = c.channel;
  s.ec_cpu_hz = c.ec_cpu_hz;
  s.energy_budget_j = c.energy_budget_j;
  s.cut_set = c.cut_set;
  return s;
}

inline SimulationSetup simulation_setup(const ExperimentConfig& c) {
  return {scenario_template(c), c.mobility, c.optimizer};
}

/// Candidate set of one sweep point: exactly N vehicles.
inline RoundScenario sweep_candidates(const ExperimentConfig& c, std::size_t N, std::size_t scenario) {
  RoundScenario s = scenario_template(c);
  Rng rng = make_rng(derive_seed(c.seed, "sweep", N), "mobility", scenario);
  s.vehicles = spawn_vehicles_exact(N, c.mobility, rng);
  return s;
}

inline std::pair<Dataset, Dataset> load_training_data(const ExperimentConfig& c) {
  Dataset all;
  if (c.data.source == "blobs") {
    Rng rng = make_rng(c.seed, "blobs");
    all = make_gaussian_blobs(c.data.per_class, c.data.dim, 10, c.data.separation, rng);
  } else if (c.data.source == "idx") {
    all = load_idx(c.data.images_path, c.data.labels_path);
  } else if (c.data.source == "csv") {
    all = load_csv_dataset(c.data.csv_path);
  } else {
    throw ParseError("unknown data source '" + c.data.source + "'");
  }
  Rng srng = make_rng(c.seed, "split");
  return split_train_test(all, c.data.test_every, srng);
}

// CSV output ------------------------------------------------------------------------

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : path_(path), out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
  }
  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }
  const fs::path& path() const { return path_; }

 private:
  static std::string cell(double x) { return fmt(x); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class T>
  static std::string cell(const T& x) requires std::is_integral_v<T> { return std::to_string(x); }
  fs::path path_;
  std::ofstream out_;
};

inline fs::path output_dir(const std::string& fallback = "out") {
  const char* env = std::getenv("ASFV_OUT_DIR");
  fs::path p = env && *env ? fs::path(env) : fs::path(fallback);
  fs::create_directories(p);
  return p;
}

/// Manifest lines: output file, config hash, seed.
inline void write_manifest(const fs::path& dir, const ExperimentConfig& c, const std::vector<fs::path>& files,
                           const std::string& command) {
  std::ofstream m(dir / "manifest.csv");
  if (!m) throw Error("cannot write manifest in '" + dir.string() + "'");
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  m << "file,command,config_hash,seed\n";
  for (const auto& f : files) m << f.filename().string() << ',' << command << ',' << hash << ',' << c.seed << '\n';
  std::ofstream cfg(dir / "config.json");
  cfg << config_to_json(c).dump(2) << '\n';
}

// Sweep ---------------------------------------------------------------------------

/// Every scheme on the same vehicle set: the participants ASFV keeps.
inline std::vector<SchemeRound> compare_schemes(const std::vector<SchemeSpec>& specs, const Participants& part,
                                                const OptimizerOptions& opt) {
  std::vector<SchemeRound> out;
  if (part.scenario.size() == 0) return out;
  const SchemeRound asfv = run_scheme_round({Scheme::ASFV, 2}, part.scenario, opt);
  if (asfv.skipped) return out;
  const RoundScenario common = restrict_to(part.scenario, asfv.vehicle_ids);
  for (const auto& spec : specs) out.push_back(spec.scheme == Scheme::ASFV ? asfv : run_scheme_round(spec, common, opt));
  return out;
}

struct SweepRow {
  std::size_t N = 0;
  std::string scheme;
  double comm_time_s = 0.0, compute_time_s = 0.0, round_time_s = 0.0;
  double comm_energy_j = 0.0, compute_energy_j = 0.0;
  std::size_t samples = 0;  // scenarios that produced a round
};

struct CutRow {
  std::size_t N = 0;
  CutLayer cut = 0;
  double comm_s = 0.0, comp_s = 0.0;  // mean per-vehicle delay at the fixed allocation
};

struct TraceRow {
  std::size_t N = 0, scenario = 0;
  int sweep = 0;
  double objective = 0.0;
};

struct SweepResults {
  std::vector<SweepRow> rows;  // means over scenarios
  std::vector<CutRow> cuts;
  std::vector<TraceRow> traces;
  std::vector<std::string> schemes;
  bool ok = true;  // every invariant check passed
  std::vector<std::string> problems;
};

inline SweepResults run_sweep(const ExperimentConfig& c) {
  SweepResults res;
  std::vector<SchemeSpec> specs;
  for (const auto& s : c.schemes) {
    specs.push_back(parse_scheme_spec(s));
    res.schemes.push_back(specs.back().label());
  }
  for (std::size_t N : c.n_values) {
    std::map<std::string, SweepRow> acc;
    std::map<CutLayer, CutRow> cut_acc;
    std::size_t cut_samples = 0;
    for (std::size_t k = 0; k < c.scenarios; ++k) {
      const RoundScenario cand = sweep_candidates(c, N, k);
      std::vector<double> d_cut;
      for (CutLayer e : c.profile.cut_layers) {
        const auto alloc = fixed_allocation(cand, e);
        const auto b = split_round_cost(cand, alloc);
        CutRow& r = cut_acc[e];
        r.N = N;
        r.cut = e;
        for (const auto& ph : b.phases) {
          r.comm_s += (ph.parallel_comm() + ph.serial_comm()) / static_cast<double>(N);
          r.comp_s += (ph.parallel_compute() + ph.serial_compute()) / static_cast<double>(N);
        }
      }
      ++cut_samples;

      const Participants part = select_participants(cand, c.mobility.coverage_diameter_m, c.mobility.t_max_s, c.optimizer);
      std::vector<SchemeRound> rounds;
      try {
        rounds = compare_schemes(specs, part, c.optimizer);
      } catch (const Error& e) {
        throw Error("sweep N=" + std::to_string(N) + " scenario " + std::to_string(k) + ": " + e.what());
      }
      for (const auto& r : rounds) {
        if (r.report) {
          const auto& tr = r.report->objective_trace;
          for (std::size_t i = 0; i < tr.size(); ++i) res.traces.push_back({N, k, static_cast<int>(i + 1), tr[i]});
          if (!r.report->feasible) {
            res.ok = false;
            res.problems.push_back("N=" + std::to_string(N) + " scenario " + std::to_string(k) + ": infeasible decision");
          }
          for (std::size_t i = 1; i < tr.size(); ++i) {
            if (tr[i] > tr[i - 1] * (1.0 + 1e-9)) {
              res.ok = false;
              res.problems.push_back("N=" + std::to_string(N) + " scenario " + std::to_string(k) + ": objective rose");
            }
          }
        }
        SweepRow& row = acc[r.spec.label()];
        row.N = N;
        row.scheme = r.spec.label();
        row.comm_time_s += r.cost.comm_time_s;
        row.compute_time_s += r.cost.compute_time_s;
        row.comm_energy_j += r.cost.comm_energy_j;
        row.compute_energy_j += r.cost.compute_energy_j;
        ++row.samples;
      }
    }
    for (const auto& label : res.schemes) {
      auto it = acc.find(label);
      if (it == acc.end()) continue;
      SweepRow r = it->second;
      const double n = static_cast<double>(r.samples);
      r.comm_time_s /= n;
      r.compute_time_s /= n;
      r.round_time_s = r.comm_time_s + r.compute_time_s;
      r.comm_energy_j /= n;
      r.compute_energy_j /= n;
      res.rows.push_back(r);
    }
    for (auto& [cut, r] : cut_acc) {
      r.comm_s /= static_cast<double>(cut_samples);
      r.comp_s /= static_cast<double>(cut_samples);
      res.cuts.push_back(r);
    }
  }
  return res;
}

inline std::vector<fs::path> write_sweep_csv(const SweepResults& r, const fs::path& dir) {
  std::vector<fs::path> files;
  {
    CsvWriter w(dir / "delay.csv");
    w.row("N", "scheme", "comm_s", "comp_s", "overall_s", "scenarios");
    for (const auto& x : r.rows) w.row(x.N, x.scheme, x.comm_time_s, x.compute_time_s, x.round_time_s, x.samples);
    files.push_back(w.path());
  }
  {
    CsvWriter w(dir / "energy.csv");
    w.row("N", "scheme", "comm_j", "comp_j", "overall_j", "scenarios");
    for (const auto& x : r.rows) {
      w.row(x.N, x.scheme, x.comm_energy_j, x.compute_energy_j, x.comm_energy_j + x.compute_energy_j, x.samples);
    }
    files.push_back(w.path());
  }
  {
    CsvWriter w(dir / "objective_trace.csv");
    w.row("N", "scenario", "sweep", "objective_s");
    for (const auto& x : r.traces) w.row(x.N, x.scenario, x.sweep, x.objective);
    files.push_back(w.path());
  }
  {
    CsvWriter w(dir / "cut_delay.csv");
    w.row("N", "cut", "comm_s", "comp_s", "overall_s");
    for (const auto& x : r.cuts) w.row(x.N, x.cut, x.comm_s, x.comp_s, x.comm_s + x.comp_s);
    files.push_back(w.path());
  }
  return files;
}

/// Gnuplot-style columnar files.
inline std::vector<fs::path> emit_plot_data(const SweepResults& r, const fs::path& dir) {
  if (r.rows.empty() || r.cuts.empty()) throw DomainError("no sweep results to plot");
  std::vector<fs::path> files;
  auto table = [&](const std::string& name, auto value) {
    const fs::path p = dir / name;
    std::ofstream out(p);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << "# N";
    for (const auto& s : r.schemes) out << ' ' << s;
    out << '\n';
    std::map<std::size_t, std::map<std::string, double>> grid;
    for (const auto& x : r.rows) grid[x.N][x.scheme] = value(x);
    for (const auto& [N, row] : grid) {
      out << N;
      for (const auto& s : r.schemes) {
        auto it = row.find(s);
        out << ' ' << (it == row.end() ? std::string("nan") : fmt(it->second));
      }
      out << '\n';
    }
    files.push_back(p);
  };
  table("delay_comm.dat", [](const SweepRow& x) { return x.comm_time_s; });
  table("delay_comp.dat", [](const SweepRow& x) { return x.compute_time_s; });
  table("delay_overall.dat", [](const SweepRow& x) { return x.comm_time_s + x.compute_time_s; });
  table("energy_comm.dat", [](const SweepRow& x) { return x.comm_energy_j; });
  table("energy_comp.dat", [](const SweepRow& x) { return x.compute_energy_j; });
  table("energy_overall.dat", [](const SweepRow& x) { return x.comm_energy_j + x.compute_energy_j; });
  {
    const fs::path p = dir / "cut_delay.dat";
    std::ofstream out(p);
    out << "# N cut comm_s comp_s overall_s\n";
    for (const auto& x : r.cuts) {
      out << x.N << ' ' << x.cut << ' ' << fmt(x.comm_s) << ' ' << fmt(x.comp_s) << ' ' << fmt(x.comm_s + x.comp_s)
          << '\n';
    }
    files.push_back(p);
  }
  {
    const fs::path p = dir / "objective_trace.dat";
    std::ofstream out(p);
    out << "# N scenario sweep objective_s\n";
    for (const auto& x : r.traces) out << x.N << ' ' << x.scenario << ' ' << x.sweep << ' ' << fmt(x.objective) << '\n';
    files.push_back(p);
  }
  return files;
}

// Convergence report ----------------------------------------------------------------

struct BoundsReport {
  std::vector<LemmaReport> lemmas;
  std::vector<std::pair<std::size_t, BoundCheck>> by_k;
  bool ok = true;
};

inline BoundsReport run_bounds(const ExperimentConfig& c, const ToyShape& shape = {}) {
  BoundsReport rep;
  Rng trng = make_rng(c.seed, "toy-problem");
  const QuadraticToy toy = make_quadratic_toy(shape, trng);
  const std::size_t N = toy.vehicles();
  for (std::size_t K : {std::size_t{1}, N / 2, N}) {
    FlToyOptions o;
    o.K = K;
    o.T = c.bound_rounds;
    const ConvergenceParams cp = estimate_constants(toy, o, derive_seed(c.seed, "constants", K));
    BoundCheck bc = check_bound(toy, cp, o, derive_seed(c.seed, "bound", K), c.bound_seeds);
    rep.ok = rep.ok && bc.violations == 0 && bc.contraction_violations == 0;
    rep.by_k.emplace_back(K, std::move(bc));
  }
  const ConvergenceParams& cp = rep.by_k.front().second.params;
  const std::vector<double> w0(toy.dim, 0.0);
  const double eta = step_size(cp, 1.0);
  for (std::size_t K : {std::size_t{1}, N / 2, N}) {
    Rng r = make_rng(c.seed, "lemma-state", K);
    const auto local = one_step_state(toy, w0, eta, r);
    const auto s = validate_lemma_sampling(local, K, eta, cp.G2, c.lemma_trials, derive_seed(c.seed, "sampling", K));
    LemmaReport v = s.variance;
    v.quantity += " K=" + std::to_string(K);
    rep.lemmas.push_back(v);
    LemmaReport u;
    u.quantity = "selection unbiased K=" + std::to_string(K);
    u.empirical = s.max_bias_sigma;
    u.bound = 3.0;
    u.pass = s.unbiased;
    rep.lemmas.push_back(u);
    if (K == 1) {
      rep.lemmas.push_back(
          validate_gradient_variance(toy, local, cp.delta2, c.lemma_trials, derive_seed(c.seed, "variance", K)));
    }
  }
  for (std::size_t steps = 0; steps <= 1; ++steps) {
    rep.lemmas.push_back(validate_local_drift(toy, w0, steps, eta, cp.G2, c.lemma_trials, c.seed));
  }
  for (const auto& l : rep.lemmas) rep.ok = rep.ok && l.pass;
  return rep;
}

}  // namespace asfv
