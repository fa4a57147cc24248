// SPDX-License-Identifier: Apache-2.0
#include "precis/evaluator.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <stdexcept>

namespace precis {

PipelineEvaluator::PipelineEvaluator(ArmModel model, std::vector<ProblemSet> sets,
                                     PipelineSettings settings, EvalOptions options)
    : model_(std::move(model)),
      sets_(std::move(sets)),
      settings_(std::move(settings)),
      options_(options) {
  model_.validate();
  settings_.validate();
  if (options_.block_size < 1) throw std::invalid_argument("block_size must be >= 1");
  if (sets_.empty()) throw std::invalid_argument("at least one environment is required");
  for (const ProblemSet& s : sets_) {
    s.environment.validate();
    if (s.problems.empty()) {
      throw std::invalid_argument("environment " + s.environment.name + " has no problems");
    }
  }
}

int required_successes(double rate, int n) {
  for (int k = 0; k <= n; ++k) {
    if (static_cast<double>(k) / static_cast<double>(n) >= rate) return k;
  }
  return n + 1;
}

std::vector<SuccessReport> PipelineEvaluator::run_environment(const PrecisionConfig& config,
                                                              std::size_t env,
                                                              SparsityCounter* sparsity) const {
  const ProblemSet& set = sets_.at(env);
  const TensorHooks hooks{&config, sparsity};
  std::vector<SuccessReport> reports(set.problems.size());
  tbb::parallel_for(std::size_t{0}, set.problems.size(), [&](std::size_t i) {
    reports[i] = generate_motion(set.problems[i], set.environment, model_, settings_, hooks);
  });
  return reports;
}

EvalResult PipelineEvaluator::evaluate_one(const PrecisionConfig& config,
                                           const BaselineTargets& targets) const {
  const TensorHooks hooks{&config, nullptr};
  EvalResult out;
  out.rates.assign(sets_.size(), 1.0);
  for (std::size_t e = 0; e < sets_.size(); ++e) {
    const ProblemSet& set = sets_[e];
    const int n = static_cast<int>(set.problems.size());
    const int needed = e < targets.rates.size() ? required_successes(targets.rates[e], n) : 0;
    int successes = 0;
    int done = 0;
    while (done < n) {
      const int end = std::min(n, done + options_.block_size);
      std::vector<char> solved(end - done, 0);
      tbb::parallel_for(done, end, [&](int i) {
        solved[i - done] =
            generate_motion(set.problems[i], set.environment, model_, settings_, hooks).success;
      });
      for (char s : solved) successes += s;
      done = end;
      if (options_.early_exit && successes + (n - done) < needed) break;
    }
    if (done < n) {
      // Upper bound on the rate; later environments stay at their 1.0 bound.
      out.rates[e] = static_cast<double>(successes + (n - done)) / n;
      out.complete = false;
      return out;
    }
    out.rates[e] = static_cast<double>(successes) / n;
  }
  return out;
}

std::vector<EvalResult> PipelineEvaluator::evaluate(std::span<const PrecisionConfig> configs,
                                                    const BaselineTargets& targets) {
  if (!targets.rates.empty() && targets.rates.size() != sets_.size()) {
    throw std::invalid_argument("baseline targets do not match the environment list");
  }
  std::vector<EvalResult> results(configs.size());
  tbb::parallel_for(std::size_t{0}, configs.size(),
                    [&](std::size_t i) { results[i] = evaluate_one(configs[i], targets); });
  return results;
}

SuccessSummary summarize(const std::vector<SuccessReport>& reports) {
  SuccessSummary out;
  for (const SuccessReport& r : reports) {
    out.successes += r.success ? 1 : 0;
    out.attempts.push_back(r.attempts_used);
  }
  out.rate = reports.empty() ? 0.0 : static_cast<double>(out.successes) / reports.size();
  out.stats = attempt_statistics(out.attempts);
  return out;
}

std::vector<EnvironmentBaseline> measure_baseline(const PipelineEvaluator& evaluator) {
  std::vector<EnvironmentBaseline> out;
  const PrecisionConfig fp32_config;
  for (std::size_t e = 0; e < evaluator.problem_sets().size(); ++e) {
    SparsityCounter sparsity;
    const SuccessSummary summary =
        summarize(evaluator.run_environment(fp32_config, e, &sparsity));
    EnvironmentBaseline b;
    b.environment = evaluator.problem_sets()[e].environment.name;
    b.problems = static_cast<int>(summary.attempts.size());
    b.successes = summary.successes;
    b.rate = summary.rate;
    b.attempts = summary.stats;
    for (Slot s : kAllSlots) b.sparsity[static_cast<int>(s)] = sparsity.fraction(s);
    out.push_back(b);
  }
  return out;
}

BaselineTargets targets_from(const std::vector<EnvironmentBaseline>& baseline) {
  BaselineTargets t;
  for (const EnvironmentBaseline& b : baseline) {
    t.environments.push_back(b.environment);
    t.rates.push_back(b.rate);
    t.problem_counts.push_back(b.problems);
  }
  return t;
}

}  // namespace precis
