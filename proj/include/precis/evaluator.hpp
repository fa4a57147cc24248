// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "precis/pipeline.hpp"
#include "precis/search.hpp"

namespace precis {

/// A frozen problem set for one environment.
struct ProblemSet {
  Environment environment;
  std::vector<ProblemInstance> problems;
  std::uint64_t generator_seed = 0;
};

struct EvalOptions {
  // Problems are run in blocks of this size; the early-exit test only happens
  // at block boundaries so the outcome does not depend on scheduling.
  int block_size = 10;
  // Stop a config once some environment can no longer reach its target.
  bool early_exit = true;
};

/// Evaluates precision configs by running the motion pipeline on every
/// problem of every environment.
class PipelineEvaluator : public Evaluator {
 public:
  PipelineEvaluator(ArmModel model, std::vector<ProblemSet> sets, PipelineSettings settings,
                    EvalOptions options = {});

  std::vector<EvalResult> evaluate(std::span<const PrecisionConfig> configs,
                                   const BaselineTargets& targets) override;

  /// All problems of one environment, no early exit.
  std::vector<SuccessReport> run_environment(const PrecisionConfig& config, std::size_t env,
                                             SparsityCounter* sparsity = nullptr) const;

  const std::vector<ProblemSet>& problem_sets() const { return sets_; }
  const ArmModel& model() const { return model_; }
  const PipelineSettings& settings() const { return settings_; }

 private:
  EvalResult evaluate_one(const PrecisionConfig& config, const BaselineTargets& targets) const;

  ArmModel model_;
  std::vector<ProblemSet> sets_;
  PipelineSettings settings_;
  EvalOptions options_;
};

struct EnvironmentBaseline {
  std::string environment;
  int problems = 0;
  int successes = 0;
  double rate = 0.0;
  AttemptStats attempts;
  std::array<double, kSlotCount> sparsity{};
};

SuccessSummary summarize(const std::vector<SuccessReport>& reports);

/// Runs the all-E8M23 config on every environment.
std::vector<EnvironmentBaseline> measure_baseline(const PipelineEvaluator& evaluator);

BaselineTargets targets_from(const std::vector<EnvironmentBaseline>& baseline);

/// Smallest success count k with k / n >= rate.
int required_successes(double rate, int n);

}  // namespace precis
