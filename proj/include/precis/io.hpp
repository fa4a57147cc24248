// SPDX-License-Identifier: Apache-2.0
//
// JSON artifacts: model, environments, problem sets, experiment configs,
// baselines, Phase-1 minima and JSON-lines trial / report logs.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "precis/evaluator.hpp"
#include "precis/search.hpp"

namespace precis {

using Json = nlohmann::ordered_json;

/// Missing files, malformed JSON or invalid field values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& value);

Json to_json(const ArmModel& model);
ArmModel arm_model_from_json(const Json& j);
Json to_json(const Environment& env);
Environment environment_from_json(const Json& j);

Json to_json(const ProblemSet& set);
ProblemSet problem_set_from_json(const Json& j);

Json to_json(const PrecisionConfig& config);
PrecisionConfig precision_config_from_json(const Json& j);

/// Only the keys present in `j` override `base`.
PipelineSettings pipeline_settings_from_json(const Json& j, PipelineSettings base = {});
Json to_json(const PipelineSettings& settings);

struct SearchSettings {
  Nsga2Params nsga2;
  EvalOptions evaluation;
};

SearchSettings search_settings_from_json(const Json& j, SearchSettings base = {});
Json to_json(const SearchSettings& settings);

struct ExperimentConfig {
  std::filesystem::path model_file;
  std::vector<std::filesystem::path> environment_files;
  int problem_count = 50;
  // Generator seed; when absent the CLI derives one from the master seed.
  std::optional<std::uint64_t> problem_seed;
  std::vector<std::filesystem::path> problem_files;  // or load one set per environment
  PipelineSettings pipeline;
  SearchSettings search;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
};

/// Relative paths are resolved against the config file's directory. Throws ConfigError.
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Loads the model and environments and generates or loads the problem sets.
std::vector<ProblemSet> build_problem_sets(const ExperimentConfig& config, const ArmModel& model);

// --- artifacts ------------------------------------------------------------------

struct BaselineFile {
  std::uint64_t seed = 0;
  std::vector<EnvironmentBaseline> environments;
  // Geometry needed to size the hooked tensors in reports.
  int ik_seeds = 0;
  int to_seeds = 0;
  int horizon = 0;
  int to_substeps = 0;
  int sphere_count = 0;
  int self_pairs = 0;
};

Json to_json(const BaselineFile& baseline);
BaselineFile baseline_from_json(const Json& j);

/// One log line; key order is fixed and there is no timestamp, so identical
/// searches produce identical bytes.
std::string trial_line(const Trial& trial, const std::vector<std::string>& environments);
Trial trial_from_json(const Json& j, const std::vector<std::string>& environments);

struct TrialLog {
  std::vector<std::string> environments;
  std::vector<Trial> trials;
};

/// Throws ConfigError on malformed lines or an empty log.
TrialLog read_trial_log(const std::filesystem::path& path);

std::string report_line(std::size_t problem, const std::string& environment,
                        const SuccessReport& report);

struct MinimaFile {
  std::uint64_t seed = 0;
  std::vector<BinarySearchResult> slots;
};

Json to_json(const MinimaFile& minima);
MinimaFile minima_from_json(const Json& j);
SlotMinima slot_minima(const MinimaFile& minima);

/// "13,4,5,4,4" style lists.
SlotMinima parse_minima(const std::string& text);

}  // namespace precis
