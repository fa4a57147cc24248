// SPDX-License-Identifier: Apache-2.0
#include "precis/pipeline.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace precis {

LbfgsParams PipelineSettings::default_ik_solver() {
  LbfgsParams p;
  p.max_iterations = 100;
  return p;
}

LbfgsParams PipelineSettings::default_to_solver() {
  LbfgsParams p;
  p.max_iterations = 150;
  return p;
}

CostWeights PipelineSettings::default_ik_weights() {
  CostWeights w;
  w.pose = {10.0, 1.0};
  w.collision = 100.0;
  w.self_collision = 100.0;
  w.bound = 10.0;
  return w;
}

CostWeights PipelineSettings::default_to_weights() {
  CostWeights w;
  w.pose = {1000.0, 100.0};
  w.collision = 100.0;
  w.self_collision = 100.0;
  w.bound = 10.0;
  w.velocity = 0.1;
  w.acceleration = 0.01;
  return w;
}

void PipelineSettings::validate() const {
  if (to_seeds < 1 || ik_seeds < to_seeds) {
    throw std::invalid_argument("require ik_seeds >= to_seeds >= 1");
  }
  if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  if (horizon < 3) throw std::invalid_argument("horizon must be >= 3");
  if (to_substeps < 1 || validation_substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (!(position_tolerance > 0.0) || !(angle_tolerance > 0.0)) {
    throw std::invalid_argument("goal tolerances must be positive");
  }
  if (!(problem_range > 0.0) || problem_range > 1.0) {
    throw std::invalid_argument("problem_range must be in (0, 1]");
  }
  ik_solver.validate();
  to_solver.validate();
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  // splitmix64 finalizer applied along the path.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t p : path) h = mix(h ^ mix(p + 0x632be59bd9b4e019ULL));
  return h;
}

namespace {

constexpr std::uint64_t kStreamIk = 1;
constexpr std::uint64_t kStreamProblem = 2;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  // Fixed mapping from 53 random bits; independent of the standard library's
  // distribution implementation.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::vector<float> to_float(std::span<const double> v) { return {v.begin(), v.end()}; }

// Scratch buffers reused across cost evaluations of one optimization.
struct Workspace {
  std::vector<float> q, spheres, field, out_vec, sphere_grad, qgrad;
  std::vector<float> traj;           // horizon x dof
  std::vector<float> samples;        // n_samples x dof
  std::vector<float> sample_spheres; // n_samples x n_spheres x 3
  std::vector<float> sample_field;
  std::vector<float> sample_grad;
  std::vector<float> waypoint_vec;   // horizon x n_pairs
  std::vector<float> joint_grad;
};

}  // namespace

Pose2<double> end_effector_pose(const ArmModel& model, std::span<const double> theta) {
  std::vector<double> spheres(3 * model.sphere_count());
  return forward_kinematics<double>(model, theta, spheres);
}

ContactCheck check_contacts(std::span<const double> theta, const Environment& env,
                            const ArmModel& model, std::span<const SpherePair> pairs,
                            double tolerance) {
  const std::vector<float> q = to_float(theta);
  std::vector<float> spheres(3 * model.sphere_count());
  forward_kinematics<float>(model, q, spheres);
  ContactCheck out;
  const float tol = static_cast<float>(tolerance);
  for (int s = 0; s < model.sphere_count() && !out.obstacle; ++s) {
    for (const Circle& o : env.obstacles) {
      const float dx = spheres[3 * s] - static_cast<float>(o.x);
      const float dy = spheres[3 * s + 1] - static_cast<float>(o.y);
      const float penetration =
          static_cast<float>(o.radius) + spheres[3 * s + 2] - std::sqrt(dx * dx + dy * dy);
      if (penetration > tol) {
        out.obstacle = true;
        break;
      }
    }
  }
  std::vector<float> out_vec(pairs.size());
  self_collision_vector<float>(spheres, pairs, out_vec);
  out.self = std::any_of(out_vec.begin(), out_vec.end(), [&](float p) { return p > tol; });
  return out;
}

namespace {

// Visits every dense-interpolation configuration of `traj`; stops early when
// `visit` returns false.
template <class Visit>
void for_each_dense_config(const Trajectory& traj, int substeps, Visit&& visit) {
  std::vector<double> q(traj.dof);
  const int samples = swept_sample_count(traj.horizon, substeps);
  for (int s = 0; s < samples; ++s) {
    swept_sample<double>(traj.values, traj.horizon, traj.dof, substeps, s, q);
    if (!visit(std::span<const double>(q))) return;
  }
}

}  // namespace

bool path_is_free(const Trajectory& traj, const Environment& env, const ArmModel& model,
                  int substeps, double tolerance) {
  const std::vector<SpherePair> pairs = self_collision_pairs(model);
  bool free = true;
  for_each_dense_config(traj, substeps, [&](std::span<const double> q) {
    const ContactCheck c = check_contacts(q, env, model, pairs, tolerance);
    free = !c.obstacle && !c.self;
    return free;
  });
  return free;
}

ValidationResult validate_trajectory(const Trajectory& traj, const Pose2<double>& goal,
                                     const Environment& env, const ArmModel& model,
                                     const PipelineSettings& settings) {
  ValidationResult out;
  const std::vector<SpherePair> pairs = self_collision_pairs(model);
  bool obstacle = false;
  bool self = false;
  for_each_dense_config(traj, settings.validation_substeps, [&](std::span<const double> q) {
    const ContactCheck c = check_contacts(q, env, model, pairs, settings.contact_tolerance);
    obstacle = obstacle || c.obstacle;
    self = self || c.self;
    return !(obstacle && self);
  });
  if (obstacle) out.reasons.emplace_back("collision");
  if (self) out.reasons.emplace_back("self_collision");

  for (int t = 0; t < traj.horizon; ++t) {
    if (!model.within_limits(traj.waypoint(t))) {
      out.reasons.emplace_back("joint_limits");
      break;
    }
  }

  const std::vector<float> tip = to_float(traj.waypoint(traj.horizon - 1));
  std::vector<float> spheres(3 * model.sphere_count());
  const Pose2<float> ee = forward_kinematics<float>(model, tip, spheres);
  const double position_error = std::hypot(ee.x - goal.x, ee.y - goal.y);
  const double angle_error = std::fabs(wrap_angle(ee.angle - goal.angle));
  if (!(position_error <= settings.position_tolerance) || !(angle_error <= settings.angle_tolerance)) {
    out.reasons.emplace_back("goal_pose");
  }
  out.valid = out.reasons.empty();
  return out;
}

// --- IK -------------------------------------------------------------------------

namespace {

struct IkObjective {
  const ArmModel& model;
  const Environment& env;
  const std::vector<SpherePair>& pairs;
  const CostWeights& weights;
  const Pose2<double>& goal;
  const TensorHooks& hooks;
  Workspace& ws;

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const int n = model.dof();
    const int n_spheres = model.sphere_count();
    ws.q.assign(x.data(), x.data() + n);
    ws.spheres.resize(3 * n_spheres);
    ws.field.resize(3 * n_spheres);
    ws.out_vec.resize(pairs.size());
    ws.sphere_grad.assign(2 * n_spheres, 0.0f);
    ws.qgrad.assign(n, 0.0f);

    const Pose2<float> ee = forward_kinematics<float>(model, ws.q, ws.spheres);
    hooks.apply(Slot::kOutSpheres, ws.spheres);

    const float collision = collision_query<float>(ws.spheres, env, ws.field);
    hooks.apply(Slot::kClosestPt, ws.field);
    collision_gradient<float>(ws.field, static_cast<float>(weights.collision), ws.sphere_grad);

    self_collision_vector<float>(ws.spheres, pairs, ws.out_vec);
    hooks.apply(Slot::kOutVec, ws.out_vec);
    float self = 0.0f;
    for (float p : ws.out_vec) self += p * p;
    self_collision_gradient<float>(ws.spheres, pairs, ws.out_vec,
                                   static_cast<float>(weights.self_collision), ws.sphere_grad);

    hooks.apply(Slot::kGradOutSpheres, ws.sphere_grad);
    backward_kinematics<float>(model, ws.q, ws.sphere_grad, ws.qgrad);

    Pose2<float> pose_grad;
    const float pose = pose_cost<float>(ee, goal, weights.pose, &pose_grad);
    pose_backward<float>(model, ws.q, pose_grad, ws.qgrad);

    std::vector<float> bound_grad(n, 0.0f);
    const float bound = bound_cost<float>(model, ws.q, bound_grad);
    for (int j = 0; j < n; ++j) {
      grad[j] = static_cast<double>(ws.qgrad[j]) + weights.bound * bound_grad[j];
    }
    return weights.collision * collision + weights.self_collision * self + pose +
           weights.bound * bound;
  }
};

}  // namespace

std::vector<IkSolution> solve_ik(const Pose2<double>& goal, const Environment& env,
                                 const ArmModel& model, const PipelineSettings& settings,
                                 const TensorHooks& hooks, std::uint64_t stream_seed) {
  const int n = model.dof();
  const std::vector<SpherePair> pairs = self_collision_pairs(model);
  Workspace ws;
  std::vector<IkSolution> solutions;
  for (int i = 0; i < settings.ik_seeds; ++i) {
    std::mt19937_64 rng(derive_seed(stream_seed, {kStreamIk, static_cast<std::uint64_t>(i)}));
    Eigen::VectorXd x0(n);
    for (int j = 0; j < n; ++j) {
      x0[j] = uniform(rng, model.joint_limits[j].lo, model.joint_limits[j].hi);
    }
    const IkObjective objective{model, env, pairs, settings.ik_weights, goal, hooks, ws};
    MinimizeResult result;
    try {
      result = minimize(x0, objective, settings.ik_solver);
    } catch (const NumericalFailure&) {
      continue;
    }
    IkSolution sol;
    sol.config.assign(result.x.data(), result.x.data() + n);
    const std::vector<float> q = to_float(sol.config);
    std::vector<float> spheres(3 * model.sphere_count());
    const Pose2<float> ee = forward_kinematics<float>(model, q, spheres);
    sol.position_error = std::hypot(ee.x - goal.x, ee.y - goal.y);
    sol.angle_error = std::fabs(wrap_angle(ee.angle - goal.angle));
    sol.cost = result.cost;
    if (sol.position_error <= settings.position_tolerance &&
        sol.angle_error <= settings.angle_tolerance && model.within_limits(sol.config)) {
      solutions.push_back(std::move(sol));
    }
  }
  if (solutions.empty()) throw NoIkSolution("no IK seed reached the goal tolerance");
  std::stable_sort(solutions.begin(), solutions.end(),
                   [](const IkSolution& a, const IkSolution& b) { return a.cost < b.cost; });
  return solutions;
}

// --- seeding ----------------------------------------------------------------------

namespace {

void interpolate(Trajectory& traj, int from, int to, std::span<const double> a,
                 std::span<const double> b) {
  for (int t = from; t <= to; ++t) {
    const double alpha = to == from ? 1.0 : static_cast<double>(t - from) / (to - from);
    auto w = traj.waypoint(t);
    for (int j = 0; j < traj.dof; ++j) w[j] = (1.0 - alpha) * a[j] + alpha * b[j];
  }
}

}  // namespace

std::vector<SeedTrajectory> seed_trajectories(std::span<const double> start,
                                              const std::vector<IkSolution>& ik_solutions,
                                              const Environment& env, const ArmModel& model,
                                              const PipelineSettings& settings) {
  if (ik_solutions.empty()) throw std::invalid_argument("seed_trajectories needs an IK solution");
  const int count = std::min<int>(settings.to_seeds, static_cast<int>(ik_solutions.size()));
  const int horizon = settings.horizon;
  std::vector<SeedTrajectory> seeds;
  for (int i = 0; i < count; ++i) {
    const std::vector<double>& goal = ik_solutions[i].config;
    SeedTrajectory seed{Trajectory(horizon, model.dof()), SeedKind::kDirect};
    interpolate(seed.trajectory, 0, horizon - 1, start, goal);
    if (!path_is_free(seed.trajectory, env, model, settings.validation_substeps,
                      settings.contact_tolerance)) {
      const int mid = (horizon - 1) / 2;
      interpolate(seed.trajectory, 0, mid, start, model.retract_config);
      interpolate(seed.trajectory, mid, horizon - 1, model.retract_config, goal);
      seed.kind = path_is_free(seed.trajectory, env, model, settings.validation_substeps,
                               settings.contact_tolerance)
                      ? SeedKind::kRetract
                      : SeedKind::kBlocked;
    }
    seeds.push_back(std::move(seed));
  }
  return seeds;
}

// --- trajectory optimization --------------------------------------------------------

namespace {

struct TrajectoryObjective {
  const ArmModel& model;
  const Environment& env;
  const std::vector<SpherePair>& pairs;
  const PipelineSettings& settings;
  const Pose2<double>& goal;
  const TensorHooks& hooks;
  std::span<const double> start;
  Workspace& ws;
  CostBreakdown* breakdown = nullptr;

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    const int n = model.dof();
    const int horizon = settings.horizon;
    const int substeps = settings.to_substeps;
    const int n_spheres = model.sphere_count();
    const int n_pairs = static_cast<int>(pairs.size());
    const int samples = swept_sample_count(horizon, substeps);
    const CostWeights& w = settings.to_weights;

    // Waypoint 0 is the fixed start; x holds waypoints 1..horizon-1.
    ws.traj.resize(static_cast<std::size_t>(horizon) * n);
    std::copy(start.begin(), start.end(), ws.traj.begin());
    for (int i = 0; i < (horizon - 1) * n; ++i) ws.traj[n + i] = static_cast<float>(x[i]);

    ws.samples.resize(static_cast<std::size_t>(samples) * n);
    ws.sample_spheres.resize(static_cast<std::size_t>(samples) * n_spheres * 3);
    ws.sample_field.resize(static_cast<std::size_t>(samples) * n_spheres * 3);
    ws.sample_grad.assign(static_cast<std::size_t>(samples) * n_spheres * 2, 0.0f);
    ws.waypoint_vec.resize(static_cast<std::size_t>(horizon) * n_pairs);
    ws.joint_grad.assign(static_cast<std::size_t>(horizon) * n, 0.0f);
    ws.qgrad.resize(n);

    // Forward kinematics at every swept sample.
    Pose2<float> terminal{};
    for (int s = 0; s < samples; ++s) {
      auto q = std::span<float>(ws.samples).subspan(s * n, n);
      swept_sample<float>(ws.traj, horizon, n, substeps, s, q);
      const Pose2<float> ee = forward_kinematics<float>(
          model, q, std::span<float>(ws.sample_spheres).subspan(3 * s * n_spheres, 3 * n_spheres));
      if (s == samples - 1) terminal = ee;
    }
    hooks.apply(Slot::kOutSpheres, ws.sample_spheres);

    // Swept collision.
    float collision = 0.0f;
    for (int s = 0; s < samples; ++s) {
      collision += collision_query<float>(
          std::span<const float>(ws.sample_spheres).subspan(3 * s * n_spheres, 3 * n_spheres), env,
          std::span<float>(ws.sample_field).subspan(3 * s * n_spheres, 3 * n_spheres));
    }
    hooks.apply(Slot::kClosestPtSwept, ws.sample_field);
    for (int s = 0; s < samples; ++s) {
      collision_gradient<float>(
          std::span<const float>(ws.sample_field).subspan(3 * s * n_spheres, 3 * n_spheres),
          static_cast<float>(w.collision),
          std::span<float>(ws.sample_grad).subspan(2 * s * n_spheres, 2 * n_spheres));
    }

    // Self collision at waypoints (samples t * substeps).
    for (int t = 0; t < horizon; ++t) {
      const int s = t * substeps;
      self_collision_vector<float>(
          std::span<const float>(ws.sample_spheres).subspan(3 * s * n_spheres, 3 * n_spheres),
          pairs, std::span<float>(ws.waypoint_vec).subspan(t * n_pairs, n_pairs));
    }
    hooks.apply(Slot::kOutVec, ws.waypoint_vec);
    float self = 0.0f;
    for (float p : ws.waypoint_vec) self += p * p;
    for (int t = 0; t < horizon; ++t) {
      const int s = t * substeps;
      self_collision_gradient<float>(
          std::span<const float>(ws.sample_spheres).subspan(3 * s * n_spheres, 3 * n_spheres),
          pairs, std::span<const float>(ws.waypoint_vec).subspan(t * n_pairs, n_pairs),
          static_cast<float>(w.self_collision),
          std::span<float>(ws.sample_grad).subspan(2 * s * n_spheres, 2 * n_spheres));
    }

    hooks.apply(Slot::kGradOutSpheres, ws.sample_grad);
    for (int s = 0; s < samples; ++s) {
      auto g = std::span<const float>(ws.sample_grad).subspan(2 * s * n_spheres, 2 * n_spheres);
      if (std::all_of(g.begin(), g.end(), [](float v) { return v == 0.0f; })) continue;
      std::fill(ws.qgrad.begin(), ws.qgrad.end(), 0.0f);
      backward_kinematics<float>(model, std::span<const float>(ws.samples).subspan(s * n, n), g,
                                 ws.qgrad);
      const int t = std::min(s / substeps, horizon - 1);
      const int k = s - t * substeps;
      const float alpha = static_cast<float>(k) / static_cast<float>(substeps);
      for (int j = 0; j < n; ++j) {
        ws.joint_grad[t * n + j] += (1.0f - alpha) * ws.qgrad[j];
        if (k > 0) ws.joint_grad[(t + 1) * n + j] += alpha * ws.qgrad[j];
      }
    }

    // Terminal pose.
    Pose2<float> pose_grad;
    const auto tip = std::span<const float>(ws.traj).subspan((horizon - 1) * n, n);
    const float pose = pose_cost<float>(terminal, goal, w.pose, &pose_grad);
    pose_backward<float>(model, tip, pose_grad,
                         std::span<float>(ws.joint_grad).subspan((horizon - 1) * n, n));

    // Bounds and smoothness are not hooked tensors; keep them in double.
    Eigen::VectorXd full_grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(horizon) * n);
    for (int i = 0; i < horizon * n; ++i) full_grad[i] = ws.joint_grad[i];

    double bound = 0.0;
    std::vector<double> wp(n);
    std::vector<double> bgrad(n);
    for (int t = 1; t < horizon; ++t) {
      for (int j = 0; j < n; ++j) wp[j] = x[(t - 1) * n + j];
      std::fill(bgrad.begin(), bgrad.end(), 0.0);
      bound += bound_cost<double>(model, wp, bgrad);
      for (int j = 0; j < n; ++j) full_grad[t * n + j] += w.bound * bgrad[j];
    }

    auto at = [&](int t, int j) { return t == 0 ? start[j] : x[(t - 1) * n + j]; };
    const double segments = horizon - 1;
    const double vel_scale = w.velocity * segments;
    const double acc_scale = w.acceleration * segments * segments * segments;
    double smooth = 0.0;
    for (int t = 0; t + 1 < horizon; ++t) {
      for (int j = 0; j < n; ++j) {
        const double d = at(t + 1, j) - at(t, j);
        smooth += vel_scale * d * d;
        full_grad[(t + 1) * n + j] += 2.0 * vel_scale * d;
        full_grad[t * n + j] -= 2.0 * vel_scale * d;
      }
    }
    for (int t = 1; t + 1 < horizon; ++t) {
      for (int j = 0; j < n; ++j) {
        const double a = at(t + 1, j) - 2.0 * at(t, j) + at(t - 1, j);
        smooth += acc_scale * a * a;
        full_grad[(t + 1) * n + j] += 2.0 * acc_scale * a;
        full_grad[t * n + j] -= 4.0 * acc_scale * a;
        full_grad[(t - 1) * n + j] += 2.0 * acc_scale * a;
      }
    }

    grad = full_grad.tail(static_cast<Eigen::Index>(horizon - 1) * n);
    const double total = w.collision * collision + w.self_collision * self + pose +
                         w.bound * bound + smooth;
    if (breakdown != nullptr) {
      *breakdown = {total, w.collision * collision, w.self_collision * self, smooth,
                    w.bound * bound, pose};
    }
    return total;
  }
};

}  // namespace

OptimizedTrajectory optimize_trajectory(const Trajectory& seed, const Pose2<double>& goal,
                                        const Environment& env, const ArmModel& model,
                                        const PipelineSettings& settings, const TensorHooks& hooks) {
  const int n = model.dof();
  const int horizon = settings.horizon;
  if (seed.horizon != horizon || seed.dof != n) {
    throw std::invalid_argument("seed trajectory shape does not match settings");
  }
  const std::vector<SpherePair> pairs = self_collision_pairs(model);
  Workspace ws;
  const std::vector<double> start(seed.waypoint(0).begin(), seed.waypoint(0).end());
  TrajectoryObjective objective{model, env, pairs, settings, goal, hooks, start, ws};

  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(seed.values.data() + n,
                                                         static_cast<Eigen::Index>(horizon - 1) * n);
  const MinimizeResult result = minimize(x0, objective, settings.to_solver);

  OptimizedTrajectory out;
  out.trajectory = seed;
  std::copy(result.x.data(), result.x.data() + result.x.size(), out.trajectory.values.begin() + n);
  out.iterations = result.iterations;
  CostBreakdown breakdown;
  objective.breakdown = &breakdown;
  Eigen::VectorXd g(result.x.size());
  objective(result.x, g);
  out.cost = breakdown;
  return out;
}

CostBreakdown trajectory_cost(const Trajectory& traj, const Pose2<double>& goal,
                              const Environment& env, const ArmModel& model,
                              const PipelineSettings& settings) {
  const int n = model.dof();
  const std::vector<SpherePair> pairs = self_collision_pairs(model);
  Workspace ws;
  const std::vector<double> start(traj.waypoint(0).begin(), traj.waypoint(0).end());
  PipelineSettings s = settings;
  s.horizon = traj.horizon;
  CostBreakdown breakdown;
  const TensorHooks no_hooks;
  TrajectoryObjective objective{model, env, pairs, s, goal, no_hooks, start, ws, &breakdown};
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(traj.values.data() + n,
                                                        static_cast<Eigen::Index>(traj.horizon - 1) * n);
  Eigen::VectorXd g(x.size());
  objective(x, g);
  return breakdown;
}

// --- attempt loop --------------------------------------------------------------------

SuccessReport generate_motion(const ProblemInstance& problem, const Environment& env,
                              const ArmModel& model, const PipelineSettings& settings,
                              const TensorHooks& hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  SuccessReport report;
  for (int attempt = 0; attempt < settings.max_attempts && !report.success; ++attempt) {
    report.attempts_used = attempt + 1;
    const std::uint64_t attempt_seed =
        derive_seed(problem.rng_seed, {static_cast<std::uint64_t>(attempt)});
    std::vector<IkSolution> ik;
    try {
      ik = solve_ik(problem.goal, env, model, settings, hooks, attempt_seed);
    } catch (const NoIkSolution&) {
      continue;
    }
    const std::vector<SeedTrajectory> seeds =
        seed_trajectories(problem.start, ik, env, model, settings);
    // Seeds are tried best-first; the first validated trajectory ends the attempt.
    for (const SeedTrajectory& seed : seeds) {
      OptimizedTrajectory opt;
      try {
        opt = optimize_trajectory(seed.trajectory, problem.goal, env, model, settings, hooks);
      } catch (const NumericalFailure&) {
        continue;
      }
      if (validate_trajectory(opt.trajectory, problem.goal, env, model, settings).valid) {
        report.success = true;
        report.trajectory = std::move(opt.trajectory);
        report.final_cost = opt.cost;
        break;
      }
    }
  }
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

AttemptStats attempt_statistics(std::vector<int> attempts) {
  AttemptStats out;
  if (attempts.empty()) return out;
  std::sort(attempts.begin(), attempts.end());
  const auto n = attempts.size();
  auto nearest_rank = [&](double p) {
    const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    return static_cast<double>(attempts[std::clamp<std::size_t>(rank, 1, n) - 1]);
  };
  out.median = nearest_rank(0.5);
  out.p75 = nearest_rank(0.75);
  out.mean = std::accumulate(attempts.begin(), attempts.end(), 0.0) / static_cast<double>(n);
  return out;
}

SuccessSummary evaluate_success_rate(const std::vector<ProblemInstance>& problems,
                                     const Environment& env, const ArmModel& model,
                                     const PipelineSettings& settings, const TensorHooks& hooks,
                                     bool parallel) {
  if (problems.empty()) throw std::invalid_argument("problem set is empty");
  std::vector<SuccessReport> reports(problems.size());
  auto run = [&](std::size_t i) {
    reports[i] = generate_motion(problems[i], env, model, settings, hooks);
  };
  if (parallel) {
    tbb::parallel_for(std::size_t{0}, problems.size(), run);
  } else {
    for (std::size_t i = 0; i < problems.size(); ++i) run(i);
  }
  SuccessSummary out;
  for (const SuccessReport& r : reports) {
    out.successes += r.success ? 1 : 0;
    out.attempts.push_back(r.attempts_used);
  }
  out.rate = static_cast<double>(out.successes) / static_cast<double>(problems.size());
  out.stats = attempt_statistics(out.attempts);
  return out;
}

namespace {

// Collision-free with room to spare: at least `clearance` from every obstacle
// and no self-contact closer than `self_slack`.
bool comfortably_free(std::span<const double> theta, const Environment& env, const ArmModel& model,
                      std::span<const SpherePair> pairs, double clearance, double self_slack) {
  std::vector<double> spheres(3 * model.sphere_count());
  forward_kinematics<double>(model, theta, spheres);
  for (int s = 0; s < model.sphere_count(); ++s) {
    for (const Circle& o : env.obstacles) {
      const double d = std::hypot(spheres[3 * s] - o.x, spheres[3 * s + 1] - o.y) - o.radius -
                       spheres[3 * s + 2];
      if (d < clearance) return false;
    }
  }
  for (const SpherePair& p : pairs) {
    const double d = std::hypot(spheres[3 * p.a] - spheres[3 * p.b],
                                spheres[3 * p.a + 1] - spheres[3 * p.b + 1]);
    if (d < spheres[3 * p.a + 2] + spheres[3 * p.b + 2] + self_slack) return false;
  }
  return true;
}

}  // namespace

std::vector<ProblemInstance> generate_problems(const Environment& env, const ArmModel& model,
                                               const PipelineSettings& settings, int count,
                                               std::uint64_t seed) {
  const std::vector<SpherePair> pairs = self_collision_pairs(model);
  const int n = model.dof();
  constexpr int kMaxTries = 100000;
  constexpr double kSelfSlack = 0.05;
  constexpr double kWitnessClearance = 0.02;
  std::vector<ProblemInstance> out;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(seed, {kStreamProblem, static_cast<std::uint64_t>(i)}));
    auto sample = [&] {
      std::vector<double> q(n);
      for (int tries = 0; tries < kMaxTries; ++tries) {
        for (int j = 0; j < n; ++j) {
          const JointLimit& lim = model.joint_limits[j];
          const double mid = 0.5 * (lim.lo + lim.hi);
          const double half = 0.5 * (lim.hi - lim.lo) * settings.problem_range;
          q[j] = uniform(rng, mid - half, mid + half);
        }
        if (comfortably_free(q, env, model, pairs, env.activation_margin, kSelfSlack)) return q;
      }
      throw std::runtime_error("could not sample a collision-free configuration in " + env.name);
    };
    ProblemInstance p;
    p.start = sample();
    // Keep only problems with a known solution: the joint-space line from the
    // start to the sampled goal configuration must clear every obstacle.
    std::vector<double> goal_config;
    Trajectory witness(settings.horizon, n);
    for (int tries = 0;; ++tries) {
      if (tries == kMaxTries) {
        throw std::runtime_error("could not sample a solvable problem in " + env.name);
      }
      goal_config = sample();
      interpolate(witness, 0, settings.horizon - 1, p.start, goal_config);
      bool free = true;
      for_each_dense_config(witness, settings.validation_substeps, [&](std::span<const double> q) {
        free = comfortably_free(q, env, model, pairs, kWitnessClearance, 0.0);
        return free;
      });
      if (free) break;
    }
    p.goal = end_effector_pose(model, goal_config);
    p.rng_seed = derive_seed(seed, {kStreamProblem, static_cast<std::uint64_t>(i), 1});
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace precis
