// SPDX-License-Identifier: Apache-2.0
#include "precis/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace precis {

double constraint_violation(std::span<const double> rates, const BaselineTargets& targets) {
  double v = 0.0;
  for (std::size_t e = 0; e < targets.rates.size(); ++e) {
    v += std::max(0.0, targets.rates[e] - rates[e]);
  }
  return v;
}

SearchContext::SearchContext(Evaluator& evaluator, BaselineTargets targets, std::uint64_t seed,
                             Sink sink)
    : evaluator_(evaluator), targets_(std::move(targets)), seed_(seed), sink_(std::move(sink)) {}

std::vector<Trial> SearchContext::evaluate(std::span<const PrecisionConfig> configs,
                                           const std::string& phase, int generation) {
  std::vector<PrecisionConfig> fresh;
  for (const PrecisionConfig& c : configs) {
    if (index_.count(c) == 0 && std::find(fresh.begin(), fresh.end(), c) == fresh.end()) {
      fresh.push_back(c);
    }
  }
  if (!fresh.empty()) {
    const std::vector<EvalResult> results = evaluator_.evaluate(fresh, targets_);
    const double now = std::chrono::duration<double>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      Trial t;
      t.id = static_cast<int>(log_.size());
      t.phase = phase;
      t.generation = generation;
      t.config = fresh[i];
      t.rates = results[i].rates;
      t.complete = results[i].complete;
      t.total_bits = total_bits(fresh[i]);
      t.violation = constraint_violation(t.rates, targets_);
      t.feasible = t.violation == 0.0 && t.complete;
      t.seed = seed_;
      t.timestamp = now;
      index_.emplace(t.config, t.id);
      log_.push_back(t);
      if (sink_) sink_(log_.back());
    }
  }
  std::vector<Trial> out;
  out.reserve(configs.size());
  for (const PrecisionConfig& c : configs) out.push_back(log_[index_.at(c)]);
  return out;
}

// --- phase 1 ----------------------------------------------------------------------

BinarySearchResult per_tensor_binary_search(Slot slot, SearchContext& context) {
  constexpr int kLowest = 4;
  constexpr int kHighest = 32;
  BinarySearchResult out;
  out.slot = slot;

  std::map<int, std::optional<FpFormat>> outcome;
  auto pass = [&](int bits) -> std::optional<FpFormat> {
    if (auto it = outcome.find(bits); it != outcome.end()) return it->second;
    out.probes.push_back(bits);
    // Splits are tried in catalogue order and the first feasible one is the
    // witness, so a passing width rarely needs all of its splits evaluated.
    std::optional<FpFormat> witness;
    for (const FpFormat& f : splits_at(bits)) {
      const PrecisionConfig config = PrecisionConfig::single(slot, f);
      const Trial t =
          context.evaluate(std::span(&config, 1), "per_tensor:" + std::string(slot_name(slot)))[0];
      if (t.feasible) {
        witness = f;
        break;
      }
    }
    outcome[bits] = witness;
    return witness;
  };

  // Invariant: every width below lo fails; hi passes unless it is the untested top.
  int lo = kLowest;
  int hi = kHighest;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (pass(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  const std::optional<FpFormat> witness = pass(lo);
  if (!witness) {
    throw InfeasibleSlot("slot " + std::string(slot_name(slot)) +
                         " fails even at 32 bits; the baseline is not reproducible");
  }
  out.min_bits = lo;
  out.witness = *witness;
  out.monotone_verified = lo == kLowest || !pass(lo - 1).has_value();
  return out;
}

std::uint64_t SearchSpace::size() const {
  std::uint64_t n = 1;
  for (const FormatSpace& c : candidates) n *= c.size();
  return n;
}

double SearchSpace::reduction_factor() const {
  return static_cast<double>(full_space().size()) / static_cast<double>(size());
}

bool SearchSpace::contains(const PrecisionConfig& c) const {
  for (Slot s : kAllSlots) {
    const FormatSpace& list = candidates[static_cast<int>(s)];
    if (std::find(list.begin(), list.end(), c[s]) == list.end()) return false;
  }
  return true;
}

SearchSpace full_space() {
  SearchSpace s;
  s.candidates.fill(enumerate_formats());
  return s;
}

SearchSpace reduce_space(const SlotMinima& minima) {
  const FormatSpace all = enumerate_formats();
  SearchSpace s;
  for (int i = 0; i < kSlotCount; ++i) {
    s.candidates[i] = formats_at_or_above(all, minima[i]);
    // Phase-1 minima can fall between the catalogue widths (e.g. 13 bits);
    // E8M23 always survives.
    if (s.candidates[i].empty()) s.candidates[i].push_back(fp32());
  }
  return s;
}

// --- phase 2 ----------------------------------------------------------------------

bool constraint_dominates(const Fitness& a, const Fitness& b) {
  const bool fa = a.violation <= 0.0;
  const bool fb = b.violation <= 0.0;
  if (fa != fb) return fa;
  if (!fa) return a.violation < b.violation;
  bool strictly_better = false;
  for (std::size_t k = 0; k < a.objectives.size(); ++k) {
    if (a.objectives[k] > b.objectives[k]) return false;
    if (a.objectives[k] < b.objectives[k]) strictly_better = true;
  }
  return strictly_better;
}

std::vector<std::vector<int>> nondominated_sort(std::span<const Fitness> population) {
  const int n = static_cast<int>(population.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> domination_count(n, 0);
  std::vector<std::vector<int>> fronts(1);
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (constraint_dominates(population[p], population[q])) {
        dominated[p].push_back(q);
      } else if (constraint_dominates(population[q], population[p])) {
        ++domination_count[p];
      }
    }
    if (domination_count[p] == 0) fronts[0].push_back(p);
  }
  if (fronts[0].empty()) return {};
  for (std::size_t i = 0; !fronts[i].empty(); ++i) {
    std::vector<int> next;
    for (int p : fronts[i]) {
      for (int q : dominated[p]) {
        if (--domination_count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(next));
  }
  fronts.pop_back();
  return fronts;
}

std::vector<double> crowding_distance(std::span<const Fitness> population,
                                      std::span<const int> front) {
  const std::size_t m = front.size();
  std::vector<double> distance(m, 0.0);
  if (m <= 2) {
    std::fill(distance.begin(), distance.end(), std::numeric_limits<double>::infinity());
    return distance;
  }
  const std::size_t n_obj = population[front[0]].objectives.size();
  std::vector<std::size_t> order(m);
  for (std::size_t k = 0; k < n_obj; ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return population[front[a]].objectives[k] < population[front[b]].objectives[k];
    });
    const double lo = population[front[order.front()]].objectives[k];
    const double hi = population[front[order.back()]].objectives[k];
    distance[order.front()] = std::numeric_limits<double>::infinity();
    distance[order.back()] = std::numeric_limits<double>::infinity();
    if (hi == lo) continue;
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double next = population[front[order[i + 1]]].objectives[k];
      const double prev = population[front[order[i - 1]]].objectives[k];
      distance[order[i]] += (next - prev) / (hi - lo);
    }
  }
  return distance;
}

PrecisionConfig decode(const Genome& genome, const SearchSpace& space) {
  PrecisionConfig c;
  for (int i = 0; i < kSlotCount; ++i) c.formats[i] = space.candidates[i][genome[i]];
  return c;
}

namespace {

int uniform_index(std::mt19937_64& rng, int n) {
  // Lemire-free modulo is fine here; n is tiny relative to 2^64.
  return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

int tournament_select(std::span<const int> rank, std::span<const double> crowding,
                      std::mt19937_64& rng) {
  const int n = static_cast<int>(rank.size());
  const int a = uniform_index(rng, n);
  const int b = uniform_index(rng, n);
  if (rank[a] != rank[b]) return rank[a] < rank[b] ? a : b;
  if (crowding[a] != crowding[b]) return crowding[a] > crowding[b] ? a : b;
  return std::min(a, b);
}

Genome uniform_crossover(const Genome& a, const Genome& b, double p_c, std::mt19937_64& rng) {
  Genome child = a;
  if (uniform01(rng) >= p_c) return child;
  for (int i = 0; i < kSlotCount; ++i) {
    if (uniform01(rng) < 0.5) child[i] = b[i];
  }
  return child;
}

void random_reset_mutation(Genome& genome, const SearchSpace& space, double p_m,
                           std::mt19937_64& rng) {
  for (int i = 0; i < kSlotCount; ++i) {
    if (uniform01(rng) < p_m) {
      genome[i] = uniform_index(rng, static_cast<int>(space.candidates[i].size()));
    }
  }
}

void Nsga2Params::validate() const {
  if (population < 2) throw std::invalid_argument("population must be >= 2");
  if (budget < population) throw std::invalid_argument("budget must cover one population");
  if (crossover_prob < 0.0 || crossover_prob > 1.0 || mutation_prob < 0.0 || mutation_prob > 1.0) {
    throw std::invalid_argument("probabilities must lie in [0, 1]");
  }
  if (stall_generations < 1) throw std::invalid_argument("stall_generations must be >= 1");
}

bool better_feasible(const Trial& a, const Trial& b) {
  if (a.total_bits != b.total_bits) return a.total_bits < b.total_bits;
  for (int i = 0; i < kSlotCount; ++i) {
    const int ba = a.config.formats[i].total_bits();
    const int bb = b.config.formats[i].total_bits();
    if (ba != bb) return ba < bb;
  }
  return a.id < b.id;
}

namespace {

Fitness fitness_of(const Trial& t) {
  return {{static_cast<double>(t.total_bits)}, t.feasible ? 0.0 : std::max(t.violation, 1e-12)};
}

struct Member {
  Genome genome;
  Trial trial;
};

// Ranks and crowding for a population, indexed like `members`.
void rank_population(const std::vector<Member>& members, std::vector<int>& rank,
                     std::vector<double>& crowding, std::vector<std::vector<int>>& fronts) {
  std::vector<Fitness> fit;
  fit.reserve(members.size());
  for (const Member& m : members) fit.push_back(fitness_of(m.trial));
  fronts = nondominated_sort(fit);
  rank.assign(members.size(), 0);
  crowding.assign(members.size(), 0.0);
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    const std::vector<double> d = crowding_distance(fit, fronts[f]);
    for (std::size_t i = 0; i < fronts[f].size(); ++i) {
      rank[fronts[f][i]] = static_cast<int>(f);
      crowding[fronts[f][i]] = d[i];
    }
  }
}

}  // namespace

Nsga2Result nsga2_search(const SearchSpace& space, SearchContext& context,
                         const Nsga2Params& params, std::uint64_t seed) {
  params.validate();
  for (const FormatSpace& c : space.candidates) {
    if (c.empty()) throw std::invalid_argument("every slot needs at least one candidate format");
  }
  std::mt19937_64 rng(seed);
  const int start_evaluations = context.evaluations();
  const auto space_size = space.size();
  int used = 0;
  auto budget_left = [&] { return params.budget - used; };

  // Evaluates genomes, admitting fresh configs only while budget remains.
  // Genomes whose config would exceed the budget are dropped.
  auto evaluate = [&](std::vector<Genome> genomes, int generation) {
    std::vector<Genome> kept;
    std::vector<PrecisionConfig> configs;
    std::vector<PrecisionConfig> fresh;
    for (const Genome& g : genomes) {
      const PrecisionConfig c = decode(g, space);
      const bool known = context.contains(c) ||
                         std::find(fresh.begin(), fresh.end(), c) != fresh.end();
      if (!known) {
        if (static_cast<int>(fresh.size()) >= budget_left()) continue;
        fresh.push_back(c);
      }
      kept.push_back(g);
      configs.push_back(c);
    }
    const int before = context.evaluations();
    const std::vector<Trial> trials = context.evaluate(configs, "combinatorial", generation);
    used += context.evaluations() - before;
    std::vector<Member> out;
    for (std::size_t i = 0; i < kept.size(); ++i) out.push_back({kept[i], trials[i]});
    return out;
  };

  std::vector<Genome> initial(params.population);
  for (Genome& g : initial) {
    for (int i = 0; i < kSlotCount; ++i) {
      g[i] = uniform_index(rng, static_cast<int>(space.candidates[i].size()));
    }
  }
  std::vector<Member> population = evaluate(initial, 0);

  int generation = 0;
  int stalled = 0;
  std::vector<int> rank;
  std::vector<double> crowding;
  std::vector<std::vector<int>> fronts;
  while (budget_left() > 0 && stalled < params.stall_generations &&
         static_cast<std::uint64_t>(context.evaluations() - start_evaluations) < space_size) {
    ++generation;
    rank_population(population, rank, crowding, fronts);
    std::vector<Genome> offspring;
    offspring.reserve(params.population);
    for (int i = 0; i < params.population; ++i) {
      const Genome& a = population[tournament_select(rank, crowding, rng)].genome;
      const Genome& b = population[tournament_select(rank, crowding, rng)].genome;
      Genome child = uniform_crossover(a, b, params.crossover_prob, rng);
      random_reset_mutation(child, space, params.mutation_prob, rng);
      offspring.push_back(child);
    }
    const int before = used;
    std::vector<Member> children = evaluate(std::move(offspring), generation);
    stalled = used == before ? stalled + 1 : 0;

    // Environmental selection over parents + offspring.
    std::vector<Member> combined = population;
    combined.insert(combined.end(), children.begin(), children.end());
    rank_population(combined, rank, crowding, fronts);
    std::vector<Member> next;
    for (const std::vector<int>& front : fronts) {
      if (next.size() + front.size() <= static_cast<std::size_t>(params.population)) {
        for (int i : front) next.push_back(combined[i]);
        continue;
      }
      std::vector<int> order(front.begin(), front.end());
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return crowding[a] > crowding[b]; });
      for (int i : order) {
        if (next.size() == static_cast<std::size_t>(params.population)) break;
        next.push_back(combined[i]);
      }
      break;
    }
    population = std::move(next);
  }

  Nsga2Result out;
  out.generations = generation;
  out.evaluations = context.evaluations() - start_evaluations;
  const auto& log = context.log();
  for (auto it = log.begin() + start_evaluations; it != log.end(); ++it) {
    if (!it->feasible) continue;
    if (!out.best || better_feasible(*it, *out.best)) out.best = *it;
  }
  out.feasible = out.best.has_value();
  if (!out.feasible) {
    for (auto it = log.begin() + start_evaluations; it != log.end(); ++it) {
      if (!out.best || it->violation < out.best->violation) out.best = *it;
    }
  }
  return out;
}

std::vector<EvalResult> ThresholdEvaluator::evaluate(std::span<const PrecisionConfig> configs,
                                                     const BaselineTargets&) {
  std::vector<EvalResult> out;
  for (const PrecisionConfig& c : configs) {
    ++calls_;
    int below = 0;
    for (int i = 0; i < kSlotCount; ++i) below += c.formats[i].total_bits() < thresholds_[i];
    out.push_back({{1.0 - 0.1 * below}, true});
  }
  return out;
}

BaselineTargets ThresholdEvaluator::targets() { return {{"mock"}, {1.0}, {10}}; }

}  // namespace precis
