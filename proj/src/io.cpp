// SPDX-License-Identifier: Apache-2.0
#include "precis/io.hpp"

#include <fstream>
#include <sstream>

namespace precis {

namespace fs = std::filesystem;

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file not found: " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const Json& value) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << value.dump(2) << '\n';
}

namespace {

// Field access that turns nlohmann errors into ConfigError with the key name.
template <class T>
T field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string("missing field \"") + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad value for \"") + key + "\": " + e.what());
  }
}

template <class T>
void maybe(const Json& j, const char* key, T& target) {
  if (j.is_object() && j.contains(key)) target = field<T>(j, key);
}

template <class Fn>
auto checked(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

Json to_json(const ArmModel& model) {
  Json limits = Json::array();
  for (const JointLimit& l : model.joint_limits) limits.push_back({l.lo, l.hi});
  return {{"link_lengths", model.link_lengths},
          {"joint_limits", limits},
          {"spheres_per_link", model.spheres_per_link},
          {"sphere_radius", model.sphere_radius},
          {"retract_config", model.retract_config}};
}

ArmModel arm_model_from_json(const Json& j) {
  ArmModel m;
  m.link_lengths = field<std::vector<double>>(j, "link_lengths");
  for (const auto& pair : field<std::vector<std::vector<double>>>(j, "joint_limits")) {
    if (pair.size() != 2) throw ConfigError("joint limit must be a [lo, hi] pair");
    m.joint_limits.push_back({pair[0], pair[1]});
  }
  maybe(j, "spheres_per_link", m.spheres_per_link);
  maybe(j, "sphere_radius", m.sphere_radius);
  m.retract_config = field<std::vector<double>>(j, "retract_config");
  checked("arm model", [&] {
    m.validate();
    return 0;
  });
  return m;
}

Json to_json(const Environment& env) {
  Json obstacles = Json::array();
  for (const Circle& c : env.obstacles) {
    obstacles.push_back({{"x", c.x}, {"y", c.y}, {"radius", c.radius}});
  }
  return {{"name", env.name}, {"activation_margin", env.activation_margin}, {"obstacles", obstacles}};
}

Environment environment_from_json(const Json& j) {
  Environment env;
  env.name = field<std::string>(j, "name");
  maybe(j, "activation_margin", env.activation_margin);
  for (const Json& o : field<Json>(j, "obstacles")) {
    env.obstacles.push_back(
        {field<double>(o, "x"), field<double>(o, "y"), field<double>(o, "radius")});
  }
  checked("environment " + env.name, [&] {
    env.validate();
    return 0;
  });
  return env;
}

Json to_json(const ProblemSet& set) {
  Json problems = Json::array();
  for (const ProblemInstance& p : set.problems) {
    problems.push_back({{"start", p.start},
                        {"goal", {{"x", p.goal.x}, {"y", p.goal.y}, {"angle", p.goal.angle}}},
                        {"rng_seed", p.rng_seed}});
  }
  return {{"environment", set.environment.name},
          {"generator_seed", set.generator_seed},
          {"problems", problems}};
}

ProblemSet problem_set_from_json(const Json& j) {
  ProblemSet set;
  set.environment.name = field<std::string>(j, "environment");
  maybe(j, "generator_seed", set.generator_seed);
  for (const Json& p : field<Json>(j, "problems")) {
    ProblemInstance inst;
    inst.start = field<std::vector<double>>(p, "start");
    const Json goal = field<Json>(p, "goal");
    inst.goal = {field<double>(goal, "x"), field<double>(goal, "y"), field<double>(goal, "angle")};
    inst.rng_seed = field<std::uint64_t>(p, "rng_seed");
    set.problems.push_back(std::move(inst));
  }
  return set;
}

Json to_json(const PrecisionConfig& config) {
  Json j = Json::object();
  for (Slot s : kAllSlots) j[std::string(slot_name(s))] = config[s].name();
  return j;
}

PrecisionConfig precision_config_from_json(const Json& j) {
  PrecisionConfig c;
  try {
    if (j.is_string()) return parse_config(j.get<std::string>());
    for (Slot s : kAllSlots) c[s] = parse_format(field<std::string>(j, slot_name(s).data()));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bad precision config: ") + e.what());
  }
  return c;
}

namespace {

LbfgsParams solver_from_json(const Json& j, LbfgsParams p) {
  maybe(j, "history", p.history);
  maybe(j, "scales", p.scales);
  maybe(j, "curvature_eps", p.curvature_eps);
  maybe(j, "max_iterations", p.max_iterations);
  maybe(j, "grad_tolerance", p.grad_tolerance);
  maybe(j, "cost_tolerance", p.cost_tolerance);
  maybe(j, "normalize_first_step", p.normalize_first_step);
  maybe(j, "require_improvement", p.require_improvement);
  return p;
}

Json to_json(const LbfgsParams& p) {
  return {{"history", p.history},
          {"scales", p.scales},
          {"curvature_eps", p.curvature_eps},
          {"max_iterations", p.max_iterations},
          {"grad_tolerance", p.grad_tolerance},
          {"cost_tolerance", p.cost_tolerance},
          {"normalize_first_step", p.normalize_first_step},
          {"require_improvement", p.require_improvement}};
}

CostWeights weights_from_json(const Json& j, CostWeights w) {
  maybe(j, "pose_position", w.pose.position);
  maybe(j, "pose_orientation", w.pose.orientation);
  maybe(j, "collision", w.collision);
  maybe(j, "self_collision", w.self_collision);
  maybe(j, "bound", w.bound);
  maybe(j, "velocity", w.velocity);
  maybe(j, "acceleration", w.acceleration);
  return w;
}

Json to_json(const CostWeights& w) {
  return {{"pose_position", w.pose.position},
          {"pose_orientation", w.pose.orientation},
          {"collision", w.collision},
          {"self_collision", w.self_collision},
          {"bound", w.bound},
          {"velocity", w.velocity},
          {"acceleration", w.acceleration}};
}

}  // namespace

PipelineSettings pipeline_settings_from_json(const Json& j, PipelineSettings s) {
  maybe(j, "ik_seeds", s.ik_seeds);
  maybe(j, "to_seeds", s.to_seeds);
  maybe(j, "max_attempts", s.max_attempts);
  maybe(j, "horizon", s.horizon);
  maybe(j, "position_tolerance", s.position_tolerance);
  maybe(j, "angle_tolerance", s.angle_tolerance);
  maybe(j, "to_substeps", s.to_substeps);
  maybe(j, "validation_substeps", s.validation_substeps);
  maybe(j, "contact_tolerance", s.contact_tolerance);
  maybe(j, "problem_range", s.problem_range);
  if (j.contains("ik_solver")) s.ik_solver = solver_from_json(j["ik_solver"], s.ik_solver);
  if (j.contains("to_solver")) s.to_solver = solver_from_json(j["to_solver"], s.to_solver);
  if (j.contains("ik_weights")) s.ik_weights = weights_from_json(j["ik_weights"], s.ik_weights);
  if (j.contains("to_weights")) s.to_weights = weights_from_json(j["to_weights"], s.to_weights);
  checked("pipeline settings", [&] {
    s.validate();
    return 0;
  });
  return s;
}

Json to_json(const PipelineSettings& s) {
  return {{"ik_seeds", s.ik_seeds},
          {"to_seeds", s.to_seeds},
          {"max_attempts", s.max_attempts},
          {"horizon", s.horizon},
          {"position_tolerance", s.position_tolerance},
          {"angle_tolerance", s.angle_tolerance},
          {"to_substeps", s.to_substeps},
          {"validation_substeps", s.validation_substeps},
          {"contact_tolerance", s.contact_tolerance},
          {"problem_range", s.problem_range},
          {"ik_solver", to_json(s.ik_solver)},
          {"to_solver", to_json(s.to_solver)},
          {"ik_weights", to_json(s.ik_weights)},
          {"to_weights", to_json(s.to_weights)}};
}

SearchSettings search_settings_from_json(const Json& j, SearchSettings s) {
  maybe(j, "population", s.nsga2.population);
  maybe(j, "budget", s.nsga2.budget);
  maybe(j, "crossover_prob", s.nsga2.crossover_prob);
  maybe(j, "mutation_prob", s.nsga2.mutation_prob);
  maybe(j, "stall_generations", s.nsga2.stall_generations);
  maybe(j, "block_size", s.evaluation.block_size);
  maybe(j, "early_exit", s.evaluation.early_exit);
  return s;
}

Json to_json(const SearchSettings& s) {
  return {{"population", s.nsga2.population},
          {"budget", s.nsga2.budget},
          {"crossover_prob", s.nsga2.crossover_prob},
          {"mutation_prob", s.nsga2.mutation_prob},
          {"stall_generations", s.nsga2.stall_generations},
          {"block_size", s.evaluation.block_size},
          {"early_exit", s.evaluation.early_exit}};
}

ExperimentConfig load_experiment(const fs::path& path) {
  const Json j = read_json_file(path);
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) {
    const fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };
  ExperimentConfig c;
  c.model_file = resolve(field<std::string>(j, "model"));
  for (const auto& e : field<std::vector<std::string>>(j, "environments")) {
    c.environment_files.push_back(resolve(e));
  }
  if (c.environment_files.empty()) throw ConfigError("at least one environment is required");
  const Json problems = field<Json>(j, "problems");
  if (problems.contains("files")) {
    for (const auto& f : field<std::vector<std::string>>(problems, "files")) {
      c.problem_files.push_back(resolve(f));
    }
    if (c.problem_files.size() != c.environment_files.size()) {
      throw ConfigError("need exactly one problem file per environment");
    }
  } else {
    c.problem_count = field<int>(problems, "count");
    if (problems.contains("seed")) c.problem_seed = field<std::uint64_t>(problems, "seed");
    if (c.problem_count < 1) throw ConfigError("problem count must be >= 1");
  }
  if (j.contains("pipeline")) c.pipeline = pipeline_settings_from_json(j["pipeline"]);
  if (j.contains("search")) c.search = search_settings_from_json(j["search"]);
  maybe(j, "seed", c.seed);
  if (j.contains("output_dir")) c.output_dir = resolve(field<std::string>(j, "output_dir"));
  return c;
}

std::vector<ProblemSet> build_problem_sets(const ExperimentConfig& config, const ArmModel& model) {
  std::vector<ProblemSet> sets;
  for (std::size_t i = 0; i < config.environment_files.size(); ++i) {
    ProblemSet set;
    set.environment = environment_from_json(read_json_file(config.environment_files[i]));
    if (!config.problem_files.empty()) {
      ProblemSet loaded = problem_set_from_json(read_json_file(config.problem_files[i]));
      set.problems = std::move(loaded.problems);
      set.generator_seed = loaded.generator_seed;
      for (const ProblemInstance& p : set.problems) {
        if (static_cast<int>(p.start.size()) != model.dof()) {
          throw ConfigError("problem start does not match the arm's joint count");
        }
      }
    } else {
      if (!config.problem_seed) throw ConfigError("problem generation needs a seed");
      // Each environment gets its own generator stream.
      set.generator_seed = derive_seed(*config.problem_seed, {i});
      set.problems = generate_problems(set.environment, model, config.pipeline,
                                       config.problem_count, set.generator_seed);
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

// --- artifacts ----------------------------------------------------------------------

Json to_json(const BaselineFile& b) {
  Json envs = Json::array();
  for (const EnvironmentBaseline& e : b.environments) {
    Json sparsity = Json::object();
    for (Slot s : kAllSlots) sparsity[std::string(slot_name(s))] = e.sparsity[static_cast<int>(s)];
    envs.push_back({{"name", e.environment},
                    {"problems", e.problems},
                    {"successes", e.successes},
                    {"rate", e.rate},
                    {"attempts", {{"median", e.attempts.median},
                                  {"p75", e.attempts.p75},
                                  {"mean", e.attempts.mean}}},
                    {"sparsity", sparsity}});
  }
  return {{"seed", b.seed},
          {"environments", envs},
          {"tensor_geometry", {{"ik_seeds", b.ik_seeds},
                               {"to_seeds", b.to_seeds},
                               {"horizon", b.horizon},
                               {"to_substeps", b.to_substeps},
                               {"sphere_count", b.sphere_count},
                               {"self_pairs", b.self_pairs}}}};
}

BaselineFile baseline_from_json(const Json& j) {
  BaselineFile b;
  maybe(j, "seed", b.seed);
  for (const Json& e : field<Json>(j, "environments")) {
    EnvironmentBaseline eb;
    eb.environment = field<std::string>(e, "name");
    eb.problems = field<int>(e, "problems");
    eb.successes = field<int>(e, "successes");
    eb.rate = field<double>(e, "rate");
    if (e.contains("attempts")) {
      const Json a = e["attempts"];
      eb.attempts = {field<double>(a, "median"), field<double>(a, "p75"), field<double>(a, "mean")};
    }
    if (e.contains("sparsity")) {
      for (Slot s : kAllSlots) {
        eb.sparsity[static_cast<int>(s)] = field<double>(e["sparsity"], slot_name(s).data());
      }
    }
    b.environments.push_back(eb);
  }
  if (j.contains("tensor_geometry")) {
    const Json g = j["tensor_geometry"];
    maybe(g, "ik_seeds", b.ik_seeds);
    maybe(g, "to_seeds", b.to_seeds);
    maybe(g, "horizon", b.horizon);
    maybe(g, "to_substeps", b.to_substeps);
    maybe(g, "sphere_count", b.sphere_count);
    maybe(g, "self_pairs", b.self_pairs);
  }
  return b;
}

std::string trial_line(const Trial& t, const std::vector<std::string>& environments) {
  Json rates = Json::object();
  for (std::size_t e = 0; e < t.rates.size(); ++e) {
    rates[e < environments.size() ? environments[e] : "env" + std::to_string(e)] = t.rates[e];
  }
  const Json j = {{"id", t.id},
                  {"phase", t.phase},
                  {"generation", t.generation},
                  {"config", to_json(t.config)},
                  {"rates", rates},
                  {"complete", t.complete},
                  {"total_bits", t.total_bits},
                  {"feasible", t.feasible},
                  {"violation", t.violation},
                  {"seed", t.seed}};
  return j.dump();
}

Trial trial_from_json(const Json& j, const std::vector<std::string>& environments) {
  Trial t;
  t.id = field<int>(j, "id");
  maybe(j, "phase", t.phase);
  maybe(j, "generation", t.generation);
  t.config = precision_config_from_json(field<Json>(j, "config"));
  const Json rates = field<Json>(j, "rates");
  for (const std::string& e : environments) t.rates.push_back(field<double>(rates, e.c_str()));
  maybe(j, "complete", t.complete);
  t.total_bits = field<int>(j, "total_bits");
  t.feasible = field<bool>(j, "feasible");
  maybe(j, "violation", t.violation);
  maybe(j, "seed", t.seed);
  if (t.total_bits != total_bits(t.config)) {
    throw ConfigError("trial " + std::to_string(t.id) + ": total_bits does not match its config");
  }
  return t;
}

TrialLog read_trial_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file not found: " + path.string());
  TrialLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      if (log.environments.empty()) {
        const Json rates = field<Json>(j, "rates");
        for (const auto& [key, value] : rates.items()) log.environments.push_back(key);
      }
      log.trials.push_back(trial_from_json(j, log.environments));
    } catch (const Json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (log.trials.empty()) throw ConfigError("trial log is empty: " + path.string());
  return log;
}

std::string report_line(std::size_t problem, const std::string& environment,
                        const SuccessReport& r) {
  Json j = {{"environment", environment},
            {"problem", problem},
            {"success", r.success},
            {"attempts_used", r.attempts_used},
            {"final_cost", {{"total", r.final_cost.total},
                            {"collision", r.final_cost.collision},
                            {"self_collision", r.final_cost.self_collision},
                            {"smoothness", r.final_cost.smoothness},
                            {"bound", r.final_cost.bound},
                            {"pose", r.final_cost.pose}}}};
  if (r.trajectory) {
    j["trajectory"] = {{"horizon", r.trajectory->horizon},
                       {"dof", r.trajectory->dof},
                       {"values", r.trajectory->values}};
  } else {
    j["trajectory"] = nullptr;
  }
  return j.dump();
}

Json to_json(const MinimaFile& m) {
  Json slots = Json::array();
  for (const BinarySearchResult& r : m.slots) {
    slots.push_back({{"slot", slot_name(r.slot)},
                     {"min_bits", r.min_bits},
                     {"witness", r.witness.name()},
                     {"probes", r.probes},
                     {"monotone_verified", r.monotone_verified}});
  }
  return {{"seed", m.seed}, {"slots", slots}};
}

MinimaFile minima_from_json(const Json& j) {
  MinimaFile m;
  maybe(j, "seed", m.seed);
  for (const Json& s : field<Json>(j, "slots")) {
    BinarySearchResult r;
    const auto slot = parse_slot(field<std::string>(s, "slot"));
    if (!slot) throw ConfigError("unknown slot " + field<std::string>(s, "slot"));
    r.slot = *slot;
    r.min_bits = field<int>(s, "min_bits");
    try {
      r.witness = parse_format(field<std::string>(s, "witness"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    maybe(s, "probes", r.probes);
    maybe(s, "monotone_verified", r.monotone_verified);
    m.slots.push_back(r);
  }
  return m;
}

SlotMinima slot_minima(const MinimaFile& m) {
  SlotMinima out;
  out.fill(4);
  for (const BinarySearchResult& r : m.slots) out[static_cast<int>(r.slot)] = r.min_bits;
  return out;
}

SlotMinima parse_minima(const std::string& text) {
  SlotMinima out{};
  std::stringstream ss(text);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i == kSlotCount) throw ConfigError("expected 5 comma-separated bitwidths: " + text);
    try {
      std::size_t used = 0;
      out[i] = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad bitwidth \"" + item + "\" in " + text);
    }
    if (out[i] < 4 || out[i] > 32) throw ConfigError("bitwidths must lie in [4, 32]: " + text);
    ++i;
  }
  if (i != kSlotCount) throw ConfigError("expected 5 comma-separated bitwidths: " + text);
  return out;
}

}  // namespace precis
