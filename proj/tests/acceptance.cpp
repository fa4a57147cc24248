// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion ...]   (no arguments runs all eight)
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "precis/evaluator.hpp"
#include "precis/io.hpp"
#include "precis/report.hpp"
#include "precis/search.hpp"

using namespace precis;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "NOT ") + what;
  }
};

std::string str(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome format_arithmetic() {
  Outcome o;
  o.require(enumerate_formats().size() == 21, "21 formats");
  o.require(formats_at_or_above(enumerate_formats(), 13).size() == 3, "3 formats with >= 13 bits");
  const auto r1 = reduce_space({13, 4, 5, 4, 4});
  o.require(r1.size() == 555660, "(13,4,5,4,4) -> " + std::to_string(r1.size()));
  o.require(std::round(r1.reduction_factor() * 100) / 100 == 7.35, "7.35x (" + str(r1.reduction_factor()) + ")");
  const auto r2 = reduce_space({15, 4, 4, 4, 4});
  o.require(r2.size() == 583443, "(15,4,4,4,4) -> " + std::to_string(r2.size()));
  o.require(full_space().size() % r2.size() == 0 && full_space().size() / r2.size() == 7, "7x");
  o.require(full_space().size() == 4084101, "21^5 = " + std::to_string(full_space().size()));
  return o;
}

Outcome table_arithmetic() {
  Outcome o;
  std::vector<int> totals;
  for (const auto& [name, text] : oracle::published_rows()) totals.push_back(total_bits(parse_config(text)));
  const auto [lo, hi] = std::minmax_element(totals.begin(), totals.end());
  o.require(*lo >= 34 && *hi <= 43, "totals in [34, 43] (" + std::to_string(*lo) + ".." + std::to_string(*hi) + ")");
  o.require(*hi == 43, "maximum 43");
  o.require(total_bits(PrecisionConfig{}) == 160, "all-E8M23 = 160");
  return o;
}

Outcome codec_suite() {
  Outcome o;
  const long mismatches = oracle::codec_mismatches(10, 100000, 31);
  o.require(mismatches == 0, "nearest-value oracle, " + std::to_string(mismatches) + " mismatches");
  const auto props = oracle::codec_property_violations(1000000, 32);
  o.require(props.idempotence == 0, "idempotence");
  o.require(props.monotonicity == 0, "monotonicity");
  o.require(props.symmetry == 0, "symmetry");
  const long half = oracle::binary16_mismatches(100000, 33);
  o.require(half == 0, "binary16 round trip, " + std::to_string(half) + " mismatches");
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  for (const auto& r : oracle::gradient_suite(100, 2024)) {
    o.require(r.points == 100 && r.worst < 1e-4, std::string(r.name) + " worst " + str(r.worst));
  }
  return o;
}

Outcome optimizer_suite() {
  Outcome o;
  bool quad = true;
  bool mono = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = oracle::quadratic_run(seed);
    quad = quad && r.grad_norm < 1e-6 && r.iterations <= 50;
    mono = mono && oracle::non_increasing(r.cost_history);
  }
  o.require(quad, "quadratic grad < 1e-6 within 50 iterations (5 seeds)");
  bool rosen = true;
  for (const Eigen::Vector2d& x0 : {Eigen::Vector2d(-1.2, 1.0), Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(2.0, -1.0)}) {
    const auto r = oracle::rosenbrock_run(x0);
    rosen = rosen && (r.x - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-3 && r.iterations <= 500;
    mono = mono && oracle::non_increasing(r.cost_history);
  }
  o.require(rosen, "Rosenbrock within 1e-3 in 500 iterations (3 starts)");
  o.require(mono, "cost non-increasing on every run");
  return o;
}

Outcome nsga2_suite() {
  Outcome o;
  const long bad = oracle::sort_mismatches(200, 77);
  o.require(bad == 0, "sort oracle on 200 populations, " + std::to_string(bad) + " mismatches");
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ThresholdEvaluator mock({16, 5, 4, 5, 6});
    SearchContext ctx(mock, ThresholdEvaluator::targets(), seed);
    const auto r = nsga2_search(full_space(), ctx, Nsga2Params{}, seed);
    hits += r.feasible && r.best && r.best->total_bits == 36 && r.evaluations <= 500;
  }
  o.require(hits >= 9, std::to_string(hits) + "/10 runs reach 36 bits");
  return o;
}

ExperimentConfig bundled_experiment() {
  ExperimentConfig c = load_experiment(std::string(PRECIS_DATA_DIR) + "/experiment.json");
  // Same derivation as the command-line tool.
  if (c.problem_files.empty() && !c.problem_seed) c.problem_seed = derive_seed(c.seed, {1});
  return c;
}

PipelineEvaluator bundled_evaluator(const ExperimentConfig& c) {
  const ArmModel model = arm_model_from_json(read_json_file(c.model_file));
  return PipelineEvaluator(model, build_problem_sets(c, model), c.pipeline, c.search.evaluation);
}

struct DeskRun {
  std::vector<EnvironmentBaseline> baseline;
  SlotMinima minima{};
  std::vector<std::string> per_tensor_log;
  std::vector<std::string> combinatorial_log;
  Nsga2Result result;
  bool phase1_complete = true;
};

DeskRun desk_run(const ExperimentConfig& c) {
  DeskRun run;
  PipelineEvaluator evaluator = bundled_evaluator(c);
  run.baseline = measure_baseline(evaluator);
  const BaselineTargets targets = targets_from(run.baseline);
  {
    SearchContext ctx(evaluator, targets, c.seed,
                      [&](const Trial& t) { run.per_tensor_log.push_back(trial_line(t, targets.environments)); });
    for (Slot s : kAllSlots) {
      try {
        run.minima[static_cast<int>(s)] = per_tensor_binary_search(s, ctx).min_bits;
      } catch (const InfeasibleSlot&) {
        run.minima[static_cast<int>(s)] = 32;
        run.phase1_complete = false;
      }
    }
  }
  SearchContext ctx(evaluator, targets, c.seed,
                    [&](const Trial& t) { run.combinatorial_log.push_back(trial_line(t, targets.environments)); });
  run.result = nsga2_search(reduce_space(run.minima), ctx, c.search.nsga2, derive_seed(c.seed, {3}));
  return run;
}

Outcome desk_reproduction() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = bundled_experiment();
  const DeskRun first = desk_run(c);

  bool rates = first.baseline.size() == 3;
  std::string rate_text;
  for (const auto& e : first.baseline) {
    rates = rates && e.problems == 50 && e.rate >= 0.9;
    rate_text += " " + e.environment + "=" + str(e.rate);
  }
  o.require(rates, "(a) baseline >= 0.9 on 3x50 problems:" + rate_text);

  const int spheres = first.minima[static_cast<int>(Slot::kOutSpheres)];
  const int grads = first.minima[static_cast<int>(Slot::kGradOutSpheres)];
  o.require(first.phase1_complete && spheres > grads,
            "(b) out_spheres " + std::to_string(spheres) + " > grad_out_spheres " + std::to_string(grads));

  const bool found = first.result.feasible && first.result.best && first.result.best->total_bits <= 100;
  o.require(found, "(c) feasible config with <= 100 bits" +
                       (first.result.best ? " (" + to_string(first.result.best->config) + ", " +
                                                std::to_string(first.result.best->total_bits) + " bits, " +
                                                std::to_string(first.result.evaluations) + " evaluations)"
                                          : std::string()));
  const double single = seconds_since(t0);

  const DeskRun replay = desk_run(c);
  o.require(replay.per_tensor_log == first.per_tensor_log && replay.combinatorial_log == first.combinatorial_log,
            "(d) replay reproduces " + std::to_string(first.per_tensor_log.size() + first.combinatorial_log.size()) +
                " trial lines byte-for-byte");

  // The time budget is stated for eight workers; it cannot be judged on a smaller machine.
  const unsigned workers = std::thread::hardware_concurrency();
  if (workers >= 8) {
    o.require(single < 1800.0, "(e) one run in " + str(single) + " s < 1800 s");
  } else {
    o.detail += "; (e) time budget not judged: " + std::to_string(workers) + " worker(s), one run took " +
                str(single) + " s";
  }
  return o;
}

Outcome pipeline_invariants() {
  Outcome o;
  ExperimentConfig c = bundled_experiment();
  c.pipeline.max_attempts = 1;
  const PipelineEvaluator evaluator = bundled_evaluator(c);
  const PrecisionConfig wide;
  const PrecisionConfig narrow = PrecisionConfig::uniform(make_format(2, 1));
  int wide_ok = 0;
  int narrow_ok = 0;
  for (std::size_t e = 0; e < evaluator.problem_sets().size(); ++e) {
    wide_ok += summarize(evaluator.run_environment(wide, e)).successes;
    narrow_ok += summarize(evaluator.run_environment(narrow, e)).successes;
  }
  o.require(wide_ok >= narrow_ok,
            "E8M23 successes " + std::to_string(wide_ok) + " >= E2M1 successes " + std::to_string(narrow_ok));

  // Validate fixed trajectories before and after running narrow configs.
  int checked = 0;
  bool same = true;
  const TensorHooks narrow_hooks{&narrow};
  for (const ProblemSet& set : evaluator.problem_sets()) {
    for (std::size_t i = 0; i < set.problems.size() && i < 5; ++i) {
      const ProblemInstance& p = set.problems[i];
      const auto r = generate_motion(p, set.environment, evaluator.model(), evaluator.settings(), {});
      if (!r.trajectory) continue;
      const auto before = validate_trajectory(*r.trajectory, p.goal, set.environment, evaluator.model(),
                                              evaluator.settings());
      generate_motion(p, set.environment, evaluator.model(), evaluator.settings(), narrow_hooks);
      const auto after = validate_trajectory(*r.trajectory, p.goal, set.environment, evaluator.model(),
                                             evaluator.settings());
      same = same && before.valid == after.valid && before.reasons == after.reasons;
      ++checked;
    }
  }
  o.require(same && checked > 0, "validation independent of precision (" + std::to_string(checked) + " trajectories)");

  const std::string label = format_attempts(attempt_statistics({1, 1, 2, 4}));
  o.require(label == "(1, 2, 2.0)", "attempts [1,1,2,4] -> " + label);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
  double limit_seconds;  // 0 means no runtime bound
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "format-space arithmetic", format_arithmetic, 1.0},
      {2, "published combinatorial rows", table_arithmetic, 1.0},
      {3, "codec oracle suite", codec_suite, 60.0},
      {4, "gradient suite", gradient_suite, 60.0},
      {5, "optimizer suite", optimizer_suite, 0.0},
      {6, "NSGA-II suite", nsga2_suite, 120.0},
      {7, "end-to-end desk reproduction", desk_reproduction, 0.0},
      {8, "pipeline invariants", pipeline_invariants, 0.0},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed = seconds_since(t0);
    if (c.limit_seconds > 0.0) o.require(elapsed < c.limit_seconds, "runtime < " + str(c.limit_seconds) + " s");
    std::printf("%s %d %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, elapsed, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
