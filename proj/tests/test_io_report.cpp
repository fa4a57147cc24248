#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "precis/io.hpp"
#include "precis/report.hpp"

using namespace precis;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "precis_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

Trial make_trial(int id, const PrecisionConfig& c, std::vector<double> rates, const BaselineTargets& targets,
                 bool complete = true) {
  Trial t;
  t.id = id;
  t.phase = "nsga2";
  t.generation = id / 4;
  t.config = c;
  t.rates = std::move(rates);
  t.complete = complete;
  t.total_bits = total_bits(c);
  t.violation = constraint_violation(t.rates, targets);
  t.feasible = t.violation == 0.0 && complete;
  t.seed = 1000 + id;
  return t;
}

BaselineFile sample_baseline(const std::vector<std::string>& envs) {
  BaselineFile b;
  b.seed = 1;
  for (const auto& e : envs) {
    EnvironmentBaseline eb;
    eb.environment = e;
    eb.problems = 10;
    eb.successes = 10;
    eb.rate = 1.0;
    eb.attempts = attempt_statistics({1, 1, 2, 4});
    eb.sparsity = {0.0, 0.5, 0.9, 0.8, 0.95};
    b.environments.push_back(eb);
  }
  b.ik_seeds = 64;
  b.to_seeds = 4;
  b.horizon = 32;
  b.to_substeps = 2;
  b.sphere_count = 21;
  b.self_pairs = 135;
  return b;
}

}  // namespace

TEST_CASE("model and environment round trip") {
  const ArmModel m = ArmModel::planar_default();
  const ArmModel back = arm_model_from_json(to_json(m));
  CHECK(back.link_lengths == m.link_lengths);
  CHECK(back.joint_limits.size() == m.joint_limits.size());
  CHECK(back.joint_limits[3].hi == m.joint_limits[3].hi);
  CHECK(back.retract_config == m.retract_config);
  CHECK(back.sphere_radius == m.sphere_radius);

  Environment env;
  env.name = "posts";
  env.obstacles = {{1.0, 2.0, 0.3}, {-0.5, 0.25, 0.1}};
  env.activation_margin = 0.04;
  const Environment e2 = environment_from_json(to_json(env));
  CHECK(e2.name == "posts");
  CHECK(e2.obstacles.size() == 2);
  CHECK(e2.obstacles[1].y == 0.25);
  CHECK(e2.activation_margin == 0.04);

  Json bad = to_json(m);
  bad["link_lengths"] = Json::array({0.3, 0.3});
  CHECK_THROWS_AS(arm_model_from_json(bad), ConfigError);
  CHECK_THROWS_AS(environment_from_json(Json::parse(R"({"name": "x"})")), ConfigError);
}

TEST_CASE("problem sets round trip exactly") {
  ProblemSet set;
  set.environment.name = "e";
  set.generator_seed = 99;
  set.problems.push_back({{0.1, -0.2, 0.3, 0.1234567890123, 0, 0, 0}, {1.0, 0.5, -2.0}, 18446744073709551557ull});
  const ProblemSet back = problem_set_from_json(Json::parse(to_json(set).dump()));
  REQUIRE(back.problems.size() == 1);
  CHECK(back.problems[0].start == set.problems[0].start);
  CHECK(back.problems[0].goal.angle == -2.0);
  CHECK(back.problems[0].rng_seed == 18446744073709551557ull);
  CHECK(back.generator_seed == 99);
}

TEST_CASE("precision configs in both spellings") {
  const PrecisionConfig c = parse_config("E5M10,E4M3,E2M1,E2M2,E4M3");
  const Json j = to_json(c);
  CHECK(j.begin().key() == "out_spheres");
  CHECK(j["closest_pt_swept"] == "E4M3");
  CHECK(precision_config_from_json(j) == c);
  CHECK(precision_config_from_json(Json("E5M10,E4M3,E2M1,E2M2,E4M3")) == c);
  CHECK_THROWS_AS(precision_config_from_json(Json("E5M10")), ConfigError);
  Json missing = j;
  missing.erase("out_vec");
  CHECK_THROWS_AS(precision_config_from_json(missing), ConfigError);
}

TEST_CASE("settings override only the given keys") {
  const PipelineSettings s = pipeline_settings_from_json(Json::parse(R"({"ik_seeds": 8, "to_weights": {"collision": 7.0}})"));
  CHECK(s.ik_seeds == 8);
  CHECK(s.to_seeds == PipelineSettings{}.to_seeds);
  CHECK(s.to_weights.collision == 7.0);
  CHECK(s.to_weights.bound == PipelineSettings{}.to_weights.bound);
  const PipelineSettings round = pipeline_settings_from_json(to_json(s));
  CHECK(round.ik_seeds == 8);
  CHECK(round.to_solver.scales == s.to_solver.scales);
  CHECK_THROWS_AS(pipeline_settings_from_json(Json::parse(R"({"ik_seeds": "many"})")), ConfigError);

  const SearchSettings ss = search_settings_from_json(Json::parse(R"({"budget": 40, "population": 10, "early_exit": false})"));
  CHECK(ss.nsga2.budget == 40);
  CHECK(ss.nsga2.population == 10);
  CHECK_FALSE(ss.evaluation.early_exit);
  CHECK(search_settings_from_json(to_json(ss)).nsga2.budget == 40);
}

TEST_CASE("bundled experiment loads") {
  const ExperimentConfig x = load_experiment(fs::path(PRECIS_DATA_DIR) / "experiment.json");
  CHECK(x.environment_files.size() == 3);
  for (const auto& p : x.environment_files) CHECK(fs::exists(p));
  CHECK(fs::exists(x.model_file));
  CHECK(x.problem_count == 50);
  CHECK(x.search.nsga2.budget == 500);
  CHECK(x.search.nsga2.population == 20);
  CHECK(x.seed == 1);
  const ArmModel m = arm_model_from_json(read_json_file(x.model_file));
  CHECK(m.dof() == 7);
}

TEST_CASE("missing and malformed files") {
  CHECK_THROWS_WITH_AS(read_json_file(scratch("nope.json")), doctest::Contains("file not found"), ConfigError);
  write_text(scratch("broken.json"), "{\"a\": ");
  CHECK_THROWS_AS(read_json_file(scratch("broken.json")), ConfigError);

  Json x = read_json_file(fs::path(PRECIS_DATA_DIR) / "experiment.json");
  x["model"] = (fs::path(PRECIS_DATA_DIR) / "model.json").string();
  x["environments"] = Json::array({(fs::path(PRECIS_DATA_DIR) / "environments" / "missing.json").string()});
  write_json_file(scratch("bad_experiment.json"), x);
  ExperimentConfig bad = load_experiment(scratch("bad_experiment.json"));
  bad.problem_seed = 1;
  CHECK_THROWS_WITH_AS(build_problem_sets(bad, ArmModel::planar_default()), doctest::Contains("file not found"),
                       ConfigError);
  bad.environment_files = {fs::path(PRECIS_DATA_DIR) / "environments" / "shelf.json"};
  bad.problem_seed.reset();
  CHECK_THROWS_AS(build_problem_sets(bad, ArmModel::planar_default()), ConfigError);
}

TEST_CASE("trial lines are stable and round trip") {
  const BaselineTargets targets{{"a", "b"}, {1.0, 0.9}, {10, 10}};
  Trial t = make_trial(3, parse_config("E5M10,E2M1,E2M1,E2M1,E3M2"), {1.0, 0.8}, targets);
  t.timestamp = 1234.5;
  const std::string line = trial_line(t, targets.environments);
  CHECK(line.find("timestamp") == std::string::npos);
  CHECK(line.rfind(R"({"id":3,"phase":"nsga2","generation":0,"config":{"out_spheres":"E5M10")", 0) == 0);
  Trial other = t;
  other.timestamp = 99.0;
  CHECK(trial_line(other, targets.environments) == line);

  const Trial back = trial_from_json(Json::parse(line), targets.environments);
  CHECK(back.config == t.config);
  CHECK(back.rates == t.rates);
  CHECK(back.violation == t.violation);
  CHECK(back.seed == t.seed);
  CHECK(back.feasible == t.feasible);

  Json tampered = Json::parse(line);
  tampered["total_bits"] = 12;
  CHECK_THROWS_AS(trial_from_json(tampered, targets.environments), ConfigError);

  write_text(scratch("log.jsonl"), line + "\n" + trial_line(make_trial(4, PrecisionConfig{}, {1.0, 1.0}, targets),
                                                              targets.environments) + "\n");
  const TrialLog log = read_trial_log(scratch("log.jsonl"));
  CHECK(log.environments == targets.environments);
  CHECK(log.trials.size() == 2);
  CHECK(log.trials[1].feasible);
}

TEST_CASE("empty or malformed logs are errors") {
  write_text(scratch("empty.jsonl"), "");
  CHECK_THROWS_AS(read_trial_log(scratch("empty.jsonl")), ConfigError);
  write_text(scratch("junk.jsonl"), "{\"id\": 1}\n");
  CHECK_THROWS_AS(read_trial_log(scratch("junk.jsonl")), ConfigError);
}

TEST_CASE("minima lists and files") {
  CHECK(parse_minima("13,4,5,4,4") == SlotMinima{13, 4, 5, 4, 4});
  CHECK_THROWS_AS(parse_minima("13,4,5,4"), ConfigError);
  CHECK_THROWS_AS(parse_minima("13,4,5,4,3"), ConfigError);
  CHECK_THROWS_AS(parse_minima("13,4,5,4,33"), ConfigError);
  CHECK_THROWS_AS(parse_minima("13,4,x,4,4"), ConfigError);

  MinimaFile f;
  f.seed = 4;
  for (Slot s : kAllSlots) {
    BinarySearchResult r;
    r.slot = s;
    r.min_bits = s == Slot::kOutSpheres ? 16 : 5;
    r.witness = splits_at(r.min_bits).front();
    r.probes = {18, 11, 7, 5, 4};
    r.monotone_verified = true;
    f.slots.push_back(r);
  }
  const MinimaFile back = minima_from_json(to_json(f));
  CHECK(slot_minima(back) == SlotMinima{16, 5, 5, 5, 5});
  CHECK(back.slots[0].witness == make_format(2, 13));
  CHECK(back.slots[2].probes == f.slots[2].probes);
}

TEST_CASE("baseline file round trip") {
  const BaselineFile b = sample_baseline({"a", "b"});
  const BaselineFile back = baseline_from_json(Json::parse(to_json(b).dump()));
  CHECK(back.environments.size() == 2);
  CHECK(back.environments[1].attempts.p75 == 2.0);
  CHECK(back.environments[0].sparsity[4] == 0.95);
  CHECK(back.self_pairs == 135);
  CHECK(back.to_substeps == 2);
}

TEST_CASE("labels and attempt triples") {
  CHECK(format_label(make_format(5, 10)) == "FP16 (E5M10)");
  CHECK(format_label(make_format(2, 1)) == "FP4 (E2M1)");
  CHECK(format_attempts(attempt_statistics({1, 1, 2, 4})) == "(1, 2, 2.0)");
  CHECK(format_attempts({1.0, 1.0, 1.06}) == "(1, 1, 1.06)");
  CHECK(format_attempts({2.0, 3.0, 2.5}) == "(2, 3, 2.5)");
}

TEST_CASE("compression under both definitions") {
  const auto c = compression_ratios(parse_config("E5M10,E2M1,E2M1,E2M1,E2M1"));
  CHECK(c.aggregate == doctest::Approx(160.0 / 32.0));
  CHECK(c.mean_per_slot == doctest::Approx((2.0 + 4 * 8.0) / 5.0));
  CHECK(compression_ratios(PrecisionConfig{}).aggregate == 1.0);
}

TEST_CASE("early-stopped trials only count measured environments") {
  const BaselineTargets targets{{"a", "b", "c"}, {1.0, 1.0, 1.0}, {10, 10, 10}};
  const Trial t = make_trial(0, PrecisionConfig{}, {1.0, 0.7, 1.0}, targets, false);
  CHECK(measured_environments(t, targets) == std::vector<bool>{true, false, false});
  const Trial full = make_trial(1, PrecisionConfig{}, {1.0, 0.7, 1.0}, targets, true);
  CHECK(measured_environments(full, targets) == std::vector<bool>{true, true, true});

  // The bound for "c" must not make the trial look good there.
  const auto rows = combinatorial_grid({t}, targets);
  CHECK(rows[0].config.has_value());
  CHECK_FALSE(rows[2].config.has_value());
}

TEST_CASE("grid built from the published rows tops out at 43 bits") {
  const auto& published = oracle::published_rows();
  BaselineTargets targets;
  for (const auto& [name, text] : published) {
    targets.environments.push_back(name);
    targets.rates.push_back(1.0);
    targets.problem_counts.push_back(10);
  }
  std::vector<Trial> trials;
  for (std::size_t i = 0; i < published.size(); ++i) {
    std::vector<double> rates(published.size(), 0.9);
    rates[i] = 1.0;
    trials.push_back(make_trial(static_cast<int>(i), parse_config(published[i].second), rates, targets));
  }
  const auto rows = combinatorial_grid(trials, targets);
  REQUIRE(rows.size() == published.size() + 1);
  int top = 0;
  for (std::size_t i = 0; i < published.size(); ++i) {
    REQUIRE(rows[i].config.has_value());
    CHECK(to_string(*rows[i].config) == published[i].second);
    top = std::max(top, total_bits(*rows[i].config));
  }
  CHECK(top == 43);
  CHECK_FALSE(rows.back().config.has_value());

  const std::string md = grid_markdown("Combinatorial search", rows);
  CHECK(md.find("| table_under_pick | FP16 (E5M10) | FP6 (E3M2) | FP5 (E2M2) | FP8 (E4M3) | FP8 (E4M3) | 43 |") !=
        std::string::npos);
  CHECK(md.find("| all environments | n/a |") != std::string::npos);
  const std::string csv = grid_csv(rows);
  CHECK(csv.find("bookshelf_small,E5M10,E4M3,E2M1,E2M2,E4M3,41,3.9,") != std::string::npos);
}

TEST_CASE("per-tensor grid keeps single-slot configs only") {
  const BaselineTargets targets{{"a"}, {1.0}, {10}};
  std::vector<Trial> trials = {
      make_trial(0, PrecisionConfig::single(Slot::kOutSpheres, make_format(5, 10)), {1.0}, targets),
      make_trial(1, PrecisionConfig::single(Slot::kOutSpheres, make_format(3, 4)), {0.9}, targets),
      make_trial(2, PrecisionConfig::single(Slot::kOutVec, make_format(2, 1)), {1.0}, targets),
      make_trial(3, parse_config("E2M1,E2M1,E2M1,E2M1,E2M1"), {1.0}, targets),
  };
  const auto rows = per_tensor_grid(trials, targets);
  REQUIRE(rows.size() == 1);
  CHECK((*rows[0].config)[Slot::kOutSpheres] == make_format(5, 10));
  CHECK((*rows[0].config)[Slot::kOutVec] == make_format(2, 1));
  CHECK(rows[0].slot_known[0]);
  CHECK_FALSE(rows[0].slot_known[1]);
}

TEST_CASE("tensor size table scales with seeds") {
  const BaselineFile b = sample_baseline({"a"});
  const TensorElements el = tensor_elements(b);
  CHECK(el.per_ik_seed[0] == 63);
  CHECK(el.per_ik_seed[2] == 135);
  CHECK(el.per_ik_seed[4] == 0);
  CHECK(el.per_to_seed[0] == 63 * 63);
  CHECK(el.per_to_seed[3] == 0);

  const auto rows = size_table(b, parse_config("E5M10,E2M1,E2M1,E2M1,E2M1"));
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].stage == "IKO");
  CHECK(rows[0].seeds == 64);
  CHECK(rows[4].stage == "TO");
  CHECK(rows[4].seeds == 4);
  for (int i = 0; i < kSlotCount; ++i) {
    for (int k = 1; k < 4; ++k) {
      CHECK(rows[k].fp32_bytes[i] == 2 * rows[k - 1].fp32_bytes[i]);
      CHECK(rows[4 + k].fp32_bytes[i] == 2 * rows[4 + k - 1].fp32_bytes[i]);
    }
  }
  CHECK(rows[0].fp32_bytes[0] == 64 * 63 * 4);
  CHECK(rows[0].reduced_bytes[0] == 64 * 63 * 2);
  CHECK(rows[0].reduced_bytes[1] == 64 * 42 / 2);
  CHECK(size_csv(rows).rfind("stage,seeds,slot,fp32_bytes,reduced_bytes\nIKO,64,out_spheres,16128,8064\n", 0) == 0);
}

TEST_CASE("full report") {
  const BaselineFile b = sample_baseline({"a", "b"});
  const BaselineTargets targets = targets_from(b.environments);
  TrialLog log;
  log.environments = {"a", "b"};
  log.trials = {make_trial(0, PrecisionConfig{}, {1.0, 1.0}, targets),
                make_trial(1, parse_config("E5M10,E2M1,E2M1,E2M2,E3M2"), {1.0, 1.0}, targets),
                make_trial(2, parse_config("E5M10,E2M1,E2M1,E2M1,E2M1"), {1.0, 0.9}, targets)};
  const ReportFiles files = build_report(log, {}, b, std::nullopt);
  CHECK(files.markdown.find("(1, 2, 2.0)") != std::string::npos);
  CHECK(files.markdown.find("| all environments | FP16 (E5M10) | FP4 (E2M1) | FP4 (E2M1) | FP5 (E2M2) | FP6 (E3M2) | 35 |") !=
        std::string::npos);
  CHECK(files.grid_csv.find("combinatorial:b,E5M10,E2M1,E2M1,E2M2,E3M2,35,") != std::string::npos);
  CHECK(files.grid_csv.find("combinatorial:a,E5M10,E2M1,E2M1,E2M1,E2M1,32,") != std::string::npos);

  MinimaFile minima;
  for (Slot s : kAllSlots) minima.slots.push_back({s, s == Slot::kOutSpheres ? 13 : 4, make_format(2, 1), {}, true});
  minima.slots[2].min_bits = 5;
  const ReportFiles with = build_report(log, {}, b, minima);
  CHECK(with.markdown.find("555660 configurations, 7.35x") != std::string::npos);

  TrialLog wrong = log;
  wrong.environments = {"a", "c"};
  CHECK_THROWS_AS(build_report(wrong, {}, b, std::nullopt), ConfigError);
  TrialLog empty;
  empty.environments = {"a", "b"};
  CHECK_THROWS_AS(build_report(empty, {}, b, std::nullopt), ConfigError);
}
