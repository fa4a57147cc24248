// SPDX-License-Identifier: Apache-2.0
//
// Batched motion generation on the planar testbed: IK optimization from many
// random seeds, interpolation seeding (direct or through the retract posture),
// trajectory optimization, and an attempt loop that retries with fresh seeds.
// Every cost evaluation runs in 32-bit floats with the tensor hooks applied.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "precis/arm.hpp"
#include "precis/lbfgs.hpp"
#include "precis/slots.hpp"

namespace precis {

class NoIkSolution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostWeights {
  PoseWeights pose;
  double collision = 1.0;
  double self_collision = 1.0;
  double bound = 1.0;
  double velocity = 0.0;
  double acceleration = 0.0;
};

struct PipelineSettings {
  int ik_seeds = 64;
  int to_seeds = 4;
  int max_attempts = 5;
  int horizon = 32;
  double position_tolerance = 0.005;
  double angle_tolerance = 0.05;
  int to_substeps = 2;
  int validation_substeps = 8;
  // Penetration depth (meters) below which validation still counts as contact-free.
  double contact_tolerance = 0.002;
  // Random start/goal configurations are drawn from this fraction of each joint range.
  double problem_range = 0.5;

  LbfgsParams ik_solver = default_ik_solver();
  LbfgsParams to_solver = default_to_solver();
  CostWeights ik_weights = default_ik_weights();
  CostWeights to_weights = default_to_weights();

  void validate() const;

  static LbfgsParams default_ik_solver();
  static LbfgsParams default_to_solver();
  static CostWeights default_ik_weights();
  static CostWeights default_to_weights();
};

struct ProblemInstance {
  std::vector<double> start;
  Pose2<double> goal;
  std::uint64_t rng_seed = 0;
};

// --- seeding / randomness ------------------------------------------------------

/// Counter-based substream derivation: the same (base, path) always maps to the
/// same 64-bit seed, and distinct paths give unrelated seeds.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

// --- checks -------------------------------------------------------------------

struct ContactCheck {
  bool obstacle = false;
  bool self = false;
};

/// Zero-margin contact test of one configuration at full 32-bit precision.
ContactCheck check_contacts(std::span<const double> theta, const Environment& env,
                            const ArmModel& model, std::span<const SpherePair> pairs,
                            double tolerance);

struct ValidationResult {
  bool valid = false;
  std::vector<std::string> reasons;  // "collision", "self_collision", "joint_limits", "goal_pose"
};

ValidationResult validate_trajectory(const Trajectory& traj, const Pose2<double>& goal,
                                     const Environment& env, const ArmModel& model,
                                     const PipelineSettings& settings);

/// Dense collision/self-collision check of a joint path (no pose check).
bool path_is_free(const Trajectory& traj, const Environment& env, const ArmModel& model,
                  int substeps, double tolerance);

Pose2<double> end_effector_pose(const ArmModel& model, std::span<const double> theta);

// --- stages -------------------------------------------------------------------

struct IkSolution {
  std::vector<double> config;
  double cost = 0.0;
  double position_error = 0.0;
  double angle_error = 0.0;
};

/// Optimizes `settings.ik_seeds` random seeds toward `goal`; returns the seeds
/// within pose tolerance, cheapest first. Throws NoIkSolution when none are.
std::vector<IkSolution> solve_ik(const Pose2<double>& goal, const Environment& env,
                                 const ArmModel& model, const PipelineSettings& settings,
                                 const TensorHooks& hooks, std::uint64_t stream_seed);

enum class SeedKind { kDirect, kRetract, kBlocked };

struct SeedTrajectory {
  Trajectory trajectory;
  SeedKind kind = SeedKind::kDirect;
};

std::vector<SeedTrajectory> seed_trajectories(std::span<const double> start,
                                              const std::vector<IkSolution>& ik_solutions,
                                              const Environment& env, const ArmModel& model,
                                              const PipelineSettings& settings);

struct CostBreakdown {
  double total = 0.0;
  double collision = 0.0;
  double self_collision = 0.0;
  double smoothness = 0.0;
  double bound = 0.0;
  double pose = 0.0;
};

struct OptimizedTrajectory {
  Trajectory trajectory;
  CostBreakdown cost;
  int iterations = 0;
};

/// Trajectory optimization with waypoint 0 held at the start configuration.
/// Throws NumericalFailure.
OptimizedTrajectory optimize_trajectory(const Trajectory& seed, const Pose2<double>& goal,
                                        const Environment& env, const ArmModel& model,
                                        const PipelineSettings& settings, const TensorHooks& hooks);

/// Evaluates the trajectory optimization objective once (no hooks).
CostBreakdown trajectory_cost(const Trajectory& traj, const Pose2<double>& goal,
                              const Environment& env, const ArmModel& model,
                              const PipelineSettings& settings);

struct SuccessReport {
  bool success = false;
  int attempts_used = 0;
  std::optional<Trajectory> trajectory;
  CostBreakdown final_cost;
  double wall_time = 0.0;  // seconds; excluded from equality

  friend bool operator==(const SuccessReport& a, const SuccessReport& b) {
    return a.success == b.success && a.attempts_used == b.attempts_used &&
           a.trajectory == b.trajectory && a.final_cost.total == b.final_cost.total;
  }
};

SuccessReport generate_motion(const ProblemInstance& problem, const Environment& env,
                              const ArmModel& model, const PipelineSettings& settings,
                              const TensorHooks& hooks);

struct AttemptStats {
  double median = 0.0;
  double p75 = 0.0;
  double mean = 0.0;
};

/// Nearest-rank median and 75th percentile, arithmetic mean.
AttemptStats attempt_statistics(std::vector<int> attempts);

struct SuccessSummary {
  double rate = 0.0;
  int successes = 0;
  std::vector<int> attempts;
  AttemptStats stats;
};

/// Runs every problem (in parallel when `parallel`) and aggregates.
SuccessSummary evaluate_success_rate(const std::vector<ProblemInstance>& problems,
                                     const Environment& env, const ArmModel& model,
                                     const PipelineSettings& settings, const TensorHooks& hooks,
                                     bool parallel = true);

/// Random start configurations and reachable goals, both collision-free.
std::vector<ProblemInstance> generate_problems(const Environment& env, const ArmModel& model,
                                               const PipelineSettings& settings, int count,
                                               std::uint64_t seed);

}  // namespace precis
