// SPDX-License-Identifier: Apache-2.0
//
// Planar serial arm approximated by spheres (circles), with the cost terms a
// gradient-based motion generator needs: obstacle collision, self-collision,
// end-effector pose and joint bounds. Every function is instantiated for
// float (the production path, where quantization hooks apply) and double
// (used by derivative checks).
//
// Per-item tensor layouts:
//   spheres      n_spheres x 3   (x, y, radius)
//   sphere grad  n_spheres x 2   (d cost / d x, d cost / d y)
//   out_vec      n_pairs         (self-collision penetration)
//   field        n_spheres x 3   (penetration, direction x, direction y)
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "precis/slots.hpp"

namespace precis {

struct JointLimit {
  double lo = 0.0;
  double hi = 0.0;
};

struct ArmModel {
  std::vector<double> link_lengths;
  std::vector<JointLimit> joint_limits;
  int spheres_per_link = 3;
  double sphere_radius = 0.05;
  std::vector<double> retract_config;

  int dof() const { return static_cast<int>(link_lengths.size()); }
  int sphere_count() const { return dof() * spheres_per_link; }
  double reach() const;

  /// Throws std::invalid_argument on inconsistent fields.
  void validate() const;

  bool within_limits(std::span<const double> theta) const;

  /// Seven 0.3 m links, three 0.05 m spheres per link, limits of +-2.9 rad.
  static ArmModel planar_default();
};

struct Circle {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
};

struct Environment {
  std::string name;
  std::vector<Circle> obstacles;
  double activation_margin = 0.05;

  void validate() const;
};

template <class T>
struct Pose2 {
  T x{};
  T y{};
  T angle{};
};

/// Sphere index pair on links at least two apart.
struct SpherePair {
  int a = 0;
  int b = 0;
};

std::vector<SpherePair> self_collision_pairs(const ArmModel& model);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

// --- kinematics -------------------------------------------------------------

/// Writes sphere centers and radii to `spheres` and returns the tip pose.
template <class T>
Pose2<T> forward_kinematics(const ArmModel& model, std::span<const T> theta, std::span<T> spheres);

/// theta_grad += J^T sphere_grad (sphere positions only).
template <class T>
void backward_kinematics(const ArmModel& model, std::span<const T> theta,
                         std::span<const T> sphere_grad, std::span<T> theta_grad);

/// theta_grad += J_ee^T pose_grad.
template <class T>
void pose_backward(const ArmModel& model, std::span<const T> theta, const Pose2<T>& pose_grad,
                   std::span<T> theta_grad);

// --- collision with the environment ------------------------------------------

/// Fills the closest-point field against the nearest obstacle of every sphere
/// and returns sum(p^2). `field` must hold n_spheres x 3 values.
template <class T>
T collision_query(std::span<const T> spheres, const Environment& env, std::span<T> field);

/// sphere_grad += weight * 2 p * direction, read from a (possibly quantized) field.
template <class T>
void collision_gradient(std::span<const T> field, T weight, std::span<T> sphere_grad);

template <class T>
struct CollisionResult {
  T cost{};
  std::vector<T> field;
  std::vector<T> sphere_grad;
};

/// Query + gradient assembly; `hooks` act on the field between the two.
template <class T>
CollisionResult<T> collision_cost(std::span<const T> spheres, const Environment& env,
                                  const TensorHooks& hooks = {}, Slot field_slot = Slot::kClosestPt);

// --- self collision ----------------------------------------------------------

/// out_vec[i] = max(0, r_a + r_b - |c_a - c_b|) for every pair.
template <class T>
void self_collision_vector(std::span<const T> spheres, std::span<const SpherePair> pairs,
                           std::span<T> out_vec);

/// sphere_grad += weight * d(sum out_vec^2)/d centers, using `out_vec` as the
/// penetration magnitudes and the sphere center line as the direction.
template <class T>
void self_collision_gradient(std::span<const T> spheres, std::span<const SpherePair> pairs,
                             std::span<const T> out_vec, T weight, std::span<T> sphere_grad);

template <class T>
struct SelfCollisionResult {
  T cost{};
  std::vector<T> out_vec;
  std::vector<T> sphere_grad;
};

template <class T>
SelfCollisionResult<T> self_collision_cost(std::span<const T> spheres,
                                           std::span<const SpherePair> pairs,
                                           const TensorHooks& hooks = {});

// --- pose and bounds ----------------------------------------------------------

struct PoseWeights {
  double position = 1.0;
  double orientation = 1.0;
};

/// w_p |p - p_goal|^2 + w_o wrap(angle - angle_goal)^2; gradient w.r.t. the pose.
template <class T>
T pose_cost(const Pose2<T>& ee, const Pose2<double>& goal, const PoseWeights& weights,
            Pose2<T>* grad);

/// Squared hinge outside [lo, hi] per joint; theta_grad += gradient.
template <class T>
T bound_cost(const ArmModel& model, std::span<const T> theta, std::span<T> theta_grad);

// --- swept collision over a trajectory ------------------------------------------

/// Row-major horizon x dof joint trajectory.
struct Trajectory {
  int horizon = 0;
  int dof = 0;
  std::vector<double> values;

  Trajectory() = default;
  Trajectory(int horizon_, int dof_) : horizon(horizon_), dof(dof_), values(horizon_ * dof_) {}

  std::span<double> waypoint(int t) { return {values.data() + t * dof, static_cast<std::size_t>(dof)}; }
  std::span<const double> waypoint(int t) const {
    return {values.data() + t * dof, static_cast<std::size_t>(dof)};
  }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Number of configurations checked along a trajectory: every waypoint plus
/// substeps - 1 interpolated points per segment.
int swept_sample_count(int horizon, int substeps);

/// Joint configuration of swept sample `s` written to `out`.
template <class T>
void swept_sample(std::span<const T> trajectory, int horizon, int dof, int substeps, int s,
                  std::span<T> out);

template <class T>
struct SweptResult {
  T cost{};
  std::vector<T> field;         // samples x n_spheres x 3
  std::vector<T> sphere_grad;   // samples x n_spheres x 2
  std::vector<T> joint_grad;    // horizon x dof
};

/// Collision cost summed over waypoints and linear interpolations between
/// them. Sample gradients are pulled back through the kinematics and split
/// between the two bracketing waypoints by interpolation weight.
template <class T>
SweptResult<T> swept_collision_cost(std::span<const T> trajectory, int horizon,
                                    const Environment& env, const ArmModel& model, int substeps,
                                    const TensorHooks& hooks = {});

// --- batch wrappers -------------------------------------------------------------

/// Dense batch x stride array.
template <class T>
struct BatchTensor {
  int batch = 0;
  int stride = 0;
  std::vector<T> values;

  BatchTensor() = default;
  BatchTensor(int batch_, int stride_) : batch(batch_), stride(stride_), values(batch_ * stride_) {}

  std::span<T> item(int b) { return {values.data() + b * stride, static_cast<std::size_t>(stride)}; }
  std::span<const T> item(int b) const {
    return {values.data() + b * stride, static_cast<std::size_t>(stride)};
  }
};

template <class T>
using SphereSet = BatchTensor<T>;
template <class T>
using SphereGrad = BatchTensor<T>;
template <class T>
using SelfCollisionVec = BatchTensor<T>;
template <class T>
using ClosestPointField = BatchTensor<T>;

template <class T>
struct BatchKinematics {
  SphereSet<T> spheres;
  std::vector<Pose2<T>> ee;
};

template <class T>
BatchKinematics<T> forward_kinematics_batch(const ArmModel& model, const BatchTensor<T>& theta);

template <class T>
BatchTensor<T> backward_kinematics_batch(const ArmModel& model, const BatchTensor<T>& theta,
                                         const SphereGrad<T>& grad);

}  // namespace precis
