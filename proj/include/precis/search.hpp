// SPDX-License-Identifier: Apache-2.0
//
// Two-phase precision search. Phase 1 binary-searches the smallest bitwidth
// each slot tolerates on its own (the other slots stay at E8M23) and prunes
// narrower formats. Phase 2 runs a constraint-dominated NSGA-II over the
// pruned per-slot candidate lists, minimizing total bits subject to matching
// the 32-bit success rate in every environment.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "precis/fpcodec.hpp"
#include "precis/slots.hpp"

namespace precis {

class InfeasibleSlot : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Required success rate per environment (the 32-bit rate on the same problems).
struct BaselineTargets {
  std::vector<std::string> environments;
  std::vector<double> rates;
  std::vector<int> problem_counts;
};

struct EvalResult {
  std::vector<double> rates;
  // False when evaluation stopped early because the targets became
  // unreachable; the recorded rates are then upper bounds.
  bool complete = true;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  /// Success rate of every config, in input order. `targets` may be used to
  /// stop evaluating a config once it cannot be feasible.
  virtual std::vector<EvalResult> evaluate(std::span<const PrecisionConfig> configs,
                                           const BaselineTargets& targets) = 0;
};

/// sum over environments of max(0, target - rate).
double constraint_violation(std::span<const double> rates, const BaselineTargets& targets);

struct Trial {
  int id = 0;
  std::string phase;
  int generation = 0;
  PrecisionConfig config;
  std::vector<double> rates;
  bool complete = true;
  int total_bits = 0;
  bool feasible = false;
  double violation = 0.0;
  std::uint64_t seed = 0;
  double timestamp = 0.0;  // seconds since epoch; not part of the log line
};

/// Memoized evaluation front end shared by both phases. Each distinct config
/// is evaluated once; new evaluations get consecutive ids in request order.
class SearchContext {
 public:
  using Sink = std::function<void(const Trial&)>;

  SearchContext(Evaluator& evaluator, BaselineTargets targets, std::uint64_t seed, Sink sink = {});

  /// Returns one trial per config (cached or fresh), in input order.
  std::vector<Trial> evaluate(std::span<const PrecisionConfig> configs, const std::string& phase,
                              int generation = 0);

  int evaluations() const { return static_cast<int>(log_.size()); }
  const std::vector<Trial>& log() const { return log_; }
  const BaselineTargets& targets() const { return targets_; }
  bool contains(const PrecisionConfig& c) const { return index_.count(c) != 0; }

 private:
  Evaluator& evaluator_;
  BaselineTargets targets_;
  std::uint64_t seed_;
  Sink sink_;
  std::vector<Trial> log_;
  std::map<PrecisionConfig, int> index_;
};

// --- phase 1 ----------------------------------------------------------------------

struct BinarySearchResult {
  Slot slot = Slot::kOutSpheres;
  int min_bits = 32;
  FpFormat witness;
  std::vector<int> probes;  // bitwidths in probe order
  // min_bits passes and min_bits - 1 (when >= 4) fails.
  bool monotone_verified = false;
};

/// Smallest bitwidth b in [4, 32] for which some (E, M) split at b keeps every
/// environment at its target with only `slot` quantized. Throws InfeasibleSlot
/// when even 32 bits fail.
BinarySearchResult per_tensor_binary_search(Slot slot, SearchContext& context);

using SlotMinima = std::array<int, kSlotCount>;

struct SearchSpace {
  std::array<FormatSpace, kSlotCount> candidates;

  std::uint64_t size() const;
  /// Size of the unpruned 21^5 space divided by size().
  double reduction_factor() const;
  bool contains(const PrecisionConfig& c) const;
};

SearchSpace full_space();
SearchSpace reduce_space(const SlotMinima& minima);

// --- phase 2 ----------------------------------------------------------------------

struct Fitness {
  std::vector<double> objectives;  // minimized
  double violation = 0.0;          // 0 means feasible
};

/// Feasible beats infeasible; infeasible compare by violation; feasible by
/// Pareto dominance on the objectives.
bool constraint_dominates(const Fitness& a, const Fitness& b);

/// Fast non-dominated sort: fronts of member indices, best front first.
std::vector<std::vector<int>> nondominated_sort(std::span<const Fitness> population);

/// Crowding distance of each member of `front` (same order); boundary members get +inf.
std::vector<double> crowding_distance(std::span<const Fitness> population,
                                      std::span<const int> front);

using Genome = std::array<int, kSlotCount>;

PrecisionConfig decode(const Genome& genome, const SearchSpace& space);

/// Binary tournament under the crowded comparison (lower rank, then larger
/// crowding distance). Returns the winning index.
int tournament_select(std::span<const int> rank, std::span<const double> crowding,
                      std::mt19937_64& rng);

/// With probability p_c, swaps each slot independently with probability 0.5;
/// otherwise returns a copy of `a`.
Genome uniform_crossover(const Genome& a, const Genome& b, double p_c, std::mt19937_64& rng);

/// Redraws each slot uniformly from its candidate list with probability p_m.
void random_reset_mutation(Genome& genome, const SearchSpace& space, double p_m,
                           std::mt19937_64& rng);

struct Nsga2Params {
  int population = 20;
  int budget = 500;
  double crossover_prob = 0.9;
  double mutation_prob = 0.2;
  // Stop after this many consecutive generations without a new evaluation.
  int stall_generations = 50;

  void validate() const;
};

struct Nsga2Result {
  std::optional<Trial> best;
  bool feasible = false;  // false: `best` is the least-violating trial
  int evaluations = 0;
  int generations = 0;
};

/// Lower total bits, then lexicographically smaller per-slot bits, then lower id.
bool better_feasible(const Trial& a, const Trial& b);

Nsga2Result nsga2_search(const SearchSpace& space, SearchContext& context,
                         const Nsga2Params& params, std::uint64_t seed);

/// Feasible iff every slot has at least its hidden threshold bits. Reports a
/// single environment whose rate drops by 0.1 per violated slot.
class ThresholdEvaluator : public Evaluator {
 public:
  explicit ThresholdEvaluator(SlotMinima thresholds) : thresholds_(thresholds) {}

  std::vector<EvalResult> evaluate(std::span<const PrecisionConfig> configs,
                                   const BaselineTargets& targets) override;

  static BaselineTargets targets();
  int calls() const { return calls_; }

 private:
  SlotMinima thresholds_;
  int calls_ = 0;
};

}  // namespace precis
