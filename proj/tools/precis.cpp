// SPDX-License-Identifier: Apache-2.0
//
// precis: baseline measurement, two-phase precision search, reports and
// single-config evaluation for the planar motion pipeline.
#include <tbb/global_control.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "precis/evaluator.hpp"
#include "precis/io.hpp"
#include "precis/report.hpp"
#include "precis/search.hpp"

namespace fs = std::filesystem;
using namespace precis;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string mock_thresholds;
  std::string minima;
  std::optional<int> budget;
  std::optional<int> population;
  std::string precision;
  std::string trials;
  std::string baseline;
};

struct Session {
  ExperimentConfig config;
  fs::path out;
};

Session open_session(const Options& o, bool config_required) {
  Session s;
  if (!o.config.empty()) {
    s.config = load_experiment(o.config);
  } else if (config_required) {
    throw ConfigError("--config is required for this command");
  }
  if (o.seed) s.config.seed = *o.seed;
  if (o.budget) s.config.search.nsga2.budget = *o.budget;
  if (o.population) s.config.search.nsga2.population = *o.population;
  s.out = o.out.empty() ? s.config.output_dir : fs::path(o.out);
  return s;
}

// Problem sets follow the master seed unless the config pins a generator seed.
std::unique_ptr<PipelineEvaluator> make_evaluator(const Session& s) {
  ExperimentConfig c = s.config;
  if (c.problem_files.empty() && !c.problem_seed) c.problem_seed = derive_seed(c.seed, {1});
  const ArmModel model = arm_model_from_json(read_json_file(c.model_file));
  return std::make_unique<PipelineEvaluator>(model, build_problem_sets(c, model), c.pipeline,
                                             c.search.evaluation);
}

BaselineTargets load_targets(const Session& s, const Options& o) {
  const fs::path path = o.baseline.empty() ? s.out / "baseline.json" : fs::path(o.baseline);
  if (!fs::exists(path)) {
    throw ConfigError("file not found: " + path.string() + " (run `precis baseline` first)");
  }
  return targets_from(baseline_from_json(read_json_file(path)).environments);
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Appends each trial to a JSONL file as it is produced; timestamps go to a
// separate metadata file so the log itself replays byte-for-byte.
class TrialWriter {
 public:
  TrialWriter(fs::path log, std::vector<std::string> environments)
      : path_(std::move(log)), environments_(std::move(environments)), out_(path_) {
    if (!out_) throw ConfigError("cannot write " + path_.string());
    started_ = now_iso();
  }

  void operator()(const Trial& t) {
    out_ << trial_line(t, environments_) << '\n';
    out_.flush();
    timestamps_.push_back(t.timestamp);
  }

  void finish() {
    Json meta = {{"log", path_.filename().string()},
                 {"started", started_},
                 {"finished", now_iso()},
                 {"trial_timestamps", timestamps_}};
    fs::path meta_path = path_;
    meta_path.replace_extension(".meta.json");
    write_json_file(meta_path, meta);
  }

 private:
  fs::path path_;
  std::vector<std::string> environments_;
  std::ofstream out_;
  std::string started_;
  std::vector<double> timestamps_;
};

std::string reduction_line(const SearchSpace& space) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "reduced space: %llu configurations (%.2f× reduction from %llu)",
                static_cast<unsigned long long>(space.size()), space.reduction_factor(),
                static_cast<unsigned long long>(full_space().size()));
  return buf;
}

int cmd_baseline(const Options& o) {
  const Session s = open_session(o, true);
  const auto evaluator = make_evaluator(s);
  fs::create_directories(s.out / "problems");
  for (const ProblemSet& set : evaluator->problem_sets()) {
    write_json_file(s.out / "problems" / (set.environment.name + ".json"), to_json(set));
  }
  BaselineFile file;
  file.seed = s.config.seed;
  file.environments = measure_baseline(*evaluator);
  file.ik_seeds = evaluator->settings().ik_seeds;
  file.to_seeds = evaluator->settings().to_seeds;
  file.horizon = evaluator->settings().horizon;
  file.to_substeps = evaluator->settings().to_substeps;
  file.sphere_count = evaluator->model().sphere_count();
  file.self_pairs = static_cast<int>(self_collision_pairs(evaluator->model()).size());
  write_json_file(s.out / "baseline.json", to_json(file));
  for (const EnvironmentBaseline& e : file.environments) {
    std::printf("%-16s success %d/%d (%.3f) attempts %s\n", e.environment.c_str(), e.successes,
                e.problems, e.rate, format_attempts(e.attempts).c_str());
  }
  return kExitOk;
}

struct SearchSetup {
  std::unique_ptr<Evaluator> evaluator;
  BaselineTargets targets;
};

SearchSetup search_setup(const Session& s, const Options& o) {
  SearchSetup setup;
  if (!o.mock_thresholds.empty()) {
    setup.evaluator = std::make_unique<ThresholdEvaluator>(parse_minima(o.mock_thresholds));
    setup.targets = ThresholdEvaluator::targets();
  } else {
    if (o.config.empty()) throw ConfigError("--config is required without --mock-thresholds");
    setup.targets = load_targets(s, o);
    setup.evaluator = make_evaluator(s);
  }
  return setup;
}

int cmd_search_per_tensor(const Options& o) {
  const Session s = open_session(o, false);
  SearchSetup setup = search_setup(s, o);
  fs::create_directories(s.out);
  TrialWriter writer(s.out / "per_tensor_trials.jsonl", setup.targets.environments);
  SearchContext context(*setup.evaluator, setup.targets, s.config.seed, std::ref(writer));
  MinimaFile minima;
  minima.seed = s.config.seed;
  int status = kExitOk;
  for (Slot slot : kAllSlots) {
    try {
      const BinarySearchResult r = per_tensor_binary_search(slot, context);
      minima.slots.push_back(r);
      std::printf("%-18s min_bits %2d witness %-6s probes %zu%s\n", std::string(slot_name(slot)).c_str(),
                  r.min_bits, r.witness.name().c_str(), r.probes.size(),
                  r.monotone_verified ? "" : "  (monotonicity check failed)");
    } catch (const InfeasibleSlot& e) {
      std::fprintf(stderr, "infeasible: %s\n", e.what());
      status = kExitInfeasible;
    }
  }
  writer.finish();
  write_json_file(s.out / "per_tensor.json", to_json(minima));
  if (status == kExitOk) std::printf("%s\n", reduction_line(reduce_space(slot_minima(minima))).c_str());
  std::printf("evaluations: %d\n", context.evaluations());
  return status;
}

int cmd_search_combinatorial(const Options& o) {
  const Session s = open_session(o, false);
  s.config.search.nsga2.validate();
  SlotMinima minima;
  if (!o.minima.empty()) {
    minima = parse_minima(o.minima);
  } else {
    minima = slot_minima(minima_from_json(read_json_file(s.out / "per_tensor.json")));
  }
  const SearchSpace space = reduce_space(minima);
  std::printf("%s\n", reduction_line(space).c_str());

  SearchSetup setup = search_setup(s, o);
  fs::create_directories(s.out);
  TrialWriter writer(s.out / "trials.jsonl", setup.targets.environments);
  SearchContext context(*setup.evaluator, setup.targets, s.config.seed, std::ref(writer));
  const Nsga2Result result =
      nsga2_search(space, context, s.config.search.nsga2, derive_seed(s.config.seed, {3}));
  writer.finish();

  Json best = {{"feasible", result.feasible},
               {"evaluations", result.evaluations},
               {"generations", result.generations},
               {"space_size", space.size()},
               {"reduction_factor", space.reduction_factor()},
               {"search", to_json(s.config.search)}};
  if (result.best) {
    const Compression c = compression_ratios(result.best->config);
    best["trial"] = Json::parse(trial_line(*result.best, setup.targets.environments));
    Json packing = Json::object();
    for (Slot slot : kAllSlots) {
      packing[std::string(slot_name(slot))] = result.best->config[slot].packing_factor();
    }
    best["packing_factor"] = packing;
    best["compression_aggregate"] = c.aggregate;
    best["compression_mean_per_slot"] = c.mean_per_slot;
    std::printf("%s: %s total_bits %d (%.2fx aggregate, %.2fx mean per slot)\n",
                result.feasible ? "best" : "no feasible config; least violating",
                to_string(result.best->config).c_str(), result.best->total_bits, c.aggregate,
                c.mean_per_slot);
    for (std::size_t e = 0; e < setup.targets.environments.size(); ++e) {
      std::printf("  %-16s rate %.3f target %.3f\n", setup.targets.environments[e].c_str(),
                  result.best->rates[e], setup.targets.rates[e]);
    }
  }
  write_json_file(s.out / "best.json", best);
  std::printf("evaluations: %d generations: %d\n", result.evaluations, result.generations);
  return result.feasible ? kExitOk : kExitInfeasible;
}

int cmd_report(const Options& o) {
  const Session s = open_session(o, false);
  const fs::path trials = o.trials.empty() ? s.out / "trials.jsonl" : fs::path(o.trials);
  const fs::path baseline = o.baseline.empty() ? s.out / "baseline.json" : fs::path(o.baseline);
  const TrialLog log = read_trial_log(trials);
  const BaselineFile base = baseline_from_json(read_json_file(baseline));
  std::vector<Trial> per_tensor;
  if (fs::exists(s.out / "per_tensor_trials.jsonl")) {
    per_tensor = read_trial_log(s.out / "per_tensor_trials.jsonl").trials;
  }
  std::optional<MinimaFile> minima;
  if (fs::exists(s.out / "per_tensor.json")) {
    minima = minima_from_json(read_json_file(s.out / "per_tensor.json"));
  }
  const ReportFiles files = build_report(log, per_tensor, base, minima);
  fs::create_directories(s.out);
  std::ofstream(s.out / "report.md") << files.markdown;
  std::ofstream(s.out / "table2.csv") << files.grid_csv;
  std::ofstream(s.out / "sizes.csv") << files.size_csv;
  std::cout << files.markdown;
  return kExitOk;
}

int cmd_eval_config(const Options& o) {
  const Session s = open_session(o, true);
  PrecisionConfig config;
  try {
    config = o.precision.empty() ? PrecisionConfig{} : parse_config(o.precision);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad --precision: ") + e.what());
  }
  const auto evaluator = make_evaluator(s);
  fs::create_directories(s.out);
  std::string tag = to_string(config);
  std::replace(tag.begin(), tag.end(), ',', '_');
  std::ofstream reports(s.out / ("reports_" + tag + ".jsonl"));
  std::printf("config %s (total_bits %d)\n", to_string(config).c_str(), total_bits(config));
  for (std::size_t e = 0; e < evaluator->problem_sets().size(); ++e) {
    SparsityCounter sparsity;
    const std::vector<SuccessReport> runs = evaluator->run_environment(config, e, &sparsity);
    const std::string& name = evaluator->problem_sets()[e].environment.name;
    for (std::size_t i = 0; i < runs.size(); ++i) reports << report_line(i, name, runs[i]) << '\n';
    const SuccessSummary summary = summarize(runs);
    std::printf("%-16s success %d/%zu (%.3f) attempts %s sparsity", name.c_str(), summary.successes,
                runs.size(), summary.rate, format_attempts(summary.stats).c_str());
    for (Slot slot : kAllSlots) std::printf(" %.3f", sparsity.fraction(slot));
    std::printf("\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-precision search for a planar motion-generation pipeline"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* cmd, bool search) {
    cmd->add_option("--config", o.config, "experiment config JSON");
    cmd->add_option("--out", o.out, "output directory (overrides the config)");
    cmd->add_option("--seed", seed, "master seed (overrides the config)");
    cmd->add_option("--jobs", o.jobs, "maximum worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--baseline", o.baseline, "baseline targets file");
    if (search) {
      cmd->add_option("--mock-thresholds", o.mock_thresholds,
                      "replace the pipeline with a hidden-threshold evaluator (testing)");
    }
  };
  CLI::App* baseline = app.add_subcommand("baseline", "measure the all-E8M23 success rates");
  common(baseline, false);
  CLI::App* per_tensor = app.add_subcommand("search-per-tensor", "phase 1: per-slot binary search");
  common(per_tensor, true);
  CLI::App* comb = app.add_subcommand("search-combinatorial", "phase 2: NSGA-II over the reduced space");
  common(comb, true);
  comb->add_option("--minima", o.minima, "phase-1 minima, e.g. 13,4,5,4,4");
  comb->add_option("--budget", o.budget, "evaluation budget");
  comb->add_option("--population", o.population, "population size");
  CLI::App* report = app.add_subcommand("report", "markdown and CSV tables from logged artifacts");
  common(report, false);
  report->add_option("--trials", o.trials, "combinatorial trial log");
  CLI::App* eval = app.add_subcommand("eval-config", "evaluate one precision config");
  common(eval, false);
  eval->add_option("--precision", o.precision, "five formats, e.g. E5M10,E2M1,E2M1,E2M1,E2M1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (CLI::App* cmd : {baseline, per_tensor, comb, report, eval}) {
    if (cmd->parsed() && cmd->count("--seed") > 0) o.seed = seed;
  }

  std::unique_ptr<tbb::global_control> limit;
  if (o.jobs > 0) {
    limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                  static_cast<std::size_t>(o.jobs));
  }

  try {
    if (baseline->parsed()) return cmd_baseline(o);
    if (per_tensor->parsed()) return cmd_search_per_tensor(o);
    if (comb->parsed()) return cmd_search_combinatorial(o);
    if (report->parsed()) return cmd_report(o);
    if (eval->parsed()) return cmd_eval_config(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
