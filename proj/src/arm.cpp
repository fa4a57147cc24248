// SPDX-License-Identifier: Apache-2.0
#include "precis/arm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace precis {

double ArmModel::reach() const {
  double r = 0.0;
  for (double l : link_lengths) r += l;
  return r;
}

void ArmModel::validate() const {
  if (link_lengths.empty()) throw std::invalid_argument("arm model has no links");
  for (double l : link_lengths) {
    if (!(l > 0.0)) throw std::invalid_argument("link lengths must be positive");
  }
  if (joint_limits.size() != link_lengths.size()) {
    throw std::invalid_argument("joint_limits must have one entry per link");
  }
  for (const JointLimit& lim : joint_limits) {
    if (!(lim.lo < lim.hi)) throw std::invalid_argument("joint limit lo must be below hi");
  }
  if (spheres_per_link < 1) throw std::invalid_argument("spheres_per_link must be >= 1");
  if (!(sphere_radius > 0.0)) throw std::invalid_argument("sphere_radius must be positive");
  if (retract_config.size() != link_lengths.size()) {
    throw std::invalid_argument("retract_config must have one entry per joint");
  }
  if (!within_limits(retract_config)) {
    throw std::invalid_argument("retract_config violates joint limits");
  }
}

bool ArmModel::within_limits(std::span<const double> theta) const {
  for (std::size_t j = 0; j < theta.size(); ++j) {
    if (theta[j] < joint_limits[j].lo || theta[j] > joint_limits[j].hi) return false;
  }
  return true;
}

ArmModel ArmModel::planar_default() {
  ArmModel m;
  m.link_lengths.assign(7, 0.3);
  m.joint_limits.assign(7, JointLimit{-2.9, 2.9});
  m.spheres_per_link = 3;
  m.sphere_radius = 0.05;
  m.retract_config = {1.5707963267948966, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  return m;
}

void Environment::validate() const {
  for (const Circle& c : obstacles) {
    if (!(c.radius > 0.0)) throw std::invalid_argument("obstacle radius must be positive");
  }
  if (!(activation_margin >= 0.0)) throw std::invalid_argument("activation_margin must be >= 0");
}

std::vector<SpherePair> self_collision_pairs(const ArmModel& model) {
  std::vector<SpherePair> pairs;
  const int k = model.spheres_per_link;
  for (int la = 0; la < model.dof(); ++la) {
    for (int lb = la + 2; lb < model.dof(); ++lb) {
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) pairs.push_back({la * k + i, lb * k + j});
      }
    }
  }
  return pairs;
}

double wrap_angle(double angle) {
  double r = std::remainder(angle, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

namespace {

// Joint origins J_0..J_n (J_0 at the base, J_n at the tip) and cumulative
// link angles.
template <class T>
struct Chain {
  std::vector<T> jx, jy, cos_phi, sin_phi;
};

template <class T>
void build_chain(const ArmModel& model, std::span<const T> theta, Chain<T>& chain) {
  const int n = model.dof();
  chain.jx.resize(n + 1);
  chain.jy.resize(n + 1);
  chain.cos_phi.resize(n);
  chain.sin_phi.resize(n);
  T phi = 0;
  chain.jx[0] = 0;
  chain.jy[0] = 0;
  for (int i = 0; i < n; ++i) {
    phi += theta[i];
    chain.cos_phi[i] = std::cos(phi);
    chain.sin_phi[i] = std::sin(phi);
    const T len = static_cast<T>(model.link_lengths[i]);
    chain.jx[i + 1] = chain.jx[i] + len * chain.cos_phi[i];
    chain.jy[i + 1] = chain.jy[i] + len * chain.sin_phi[i];
  }
}

template <class T>
thread_local Chain<T> tl_chain;

}  // namespace

template <class T>
Pose2<T> forward_kinematics(const ArmModel& model, std::span<const T> theta, std::span<T> spheres) {
  Chain<T>& chain = tl_chain<T>;
  build_chain(model, theta, chain);
  const int n = model.dof();
  const int k = model.spheres_per_link;
  const T radius = static_cast<T>(model.sphere_radius);
  for (int i = 0; i < n; ++i) {
    const T len = static_cast<T>(model.link_lengths[i]);
    for (int s = 0; s < k; ++s) {
      const T frac = (static_cast<T>(s) + T(0.5)) / static_cast<T>(k);
      T* out = spheres.data() + 3 * (i * k + s);
      out[0] = chain.jx[i] + frac * len * chain.cos_phi[i];
      out[1] = chain.jy[i] + frac * len * chain.sin_phi[i];
      out[2] = radius;
    }
  }
  T angle = 0;
  for (int i = 0; i < n; ++i) angle += theta[i];
  return {chain.jx[n], chain.jy[n], angle};
}

template <class T>
void backward_kinematics(const ArmModel& model, std::span<const T> theta,
                         std::span<const T> sphere_grad, std::span<T> theta_grad) {
  Chain<T>& chain = tl_chain<T>;
  build_chain(model, theta, chain);
  const int n = model.dof();
  const int k = model.spheres_per_link;
  // Rotating joint j moves every downstream point p by perp(p - J_j), so
  // dC/dtheta_j = sum_s g_s . perp(p_s) - G . perp(J_j) with G = sum_s g_s.
  T gx_sum = 0;
  T gy_sum = 0;
  T moment = 0;
  for (int i = n - 1; i >= 0; --i) {
    const T len = static_cast<T>(model.link_lengths[i]);
    for (int s = k - 1; s >= 0; --s) {
      const int idx = i * k + s;
      const T gx = sphere_grad[2 * idx];
      const T gy = sphere_grad[2 * idx + 1];
      if (gx == 0 && gy == 0) continue;
      const T frac = (static_cast<T>(s) + T(0.5)) / static_cast<T>(k);
      const T px = chain.jx[i] + frac * len * chain.cos_phi[i];
      const T py = chain.jy[i] + frac * len * chain.sin_phi[i];
      gx_sum += gx;
      gy_sum += gy;
      moment += gy * px - gx * py;
    }
    theta_grad[i] += moment - (gy_sum * chain.jx[i] - gx_sum * chain.jy[i]);
  }
}

template <class T>
void pose_backward(const ArmModel& model, std::span<const T> theta, const Pose2<T>& pose_grad,
                   std::span<T> theta_grad) {
  Chain<T>& chain = tl_chain<T>;
  build_chain(model, theta, chain);
  const int n = model.dof();
  for (int j = 0; j < n; ++j) {
    const T dx = chain.jx[n] - chain.jx[j];
    const T dy = chain.jy[n] - chain.jy[j];
    theta_grad[j] += -pose_grad.x * dy + pose_grad.y * dx + pose_grad.angle;
  }
}

template <class T>
T collision_query(std::span<const T> spheres, const Environment& env, std::span<T> field) {
  const std::size_t count = spheres.size() / 3;
  const T margin = static_cast<T>(env.activation_margin);
  T cost = 0;
  for (std::size_t s = 0; s < count; ++s) {
    const T cx = spheres[3 * s];
    const T cy = spheres[3 * s + 1];
    const T r = spheres[3 * s + 2];
    T* f = field.data() + 3 * s;
    f[0] = f[1] = f[2] = 0;

    // Nearest obstacle surface; strict comparison keeps the lowest index on ties.
    T best_d = std::numeric_limits<T>::infinity();
    T best_dx = 0, best_dy = 0, best_dist = 0;
    for (const Circle& o : env.obstacles) {
      const T dx = cx - static_cast<T>(o.x);
      const T dy = cy - static_cast<T>(o.y);
      // Obstacles beyond the activation band cannot produce a nonzero entry;
      // the slack keeps the reject conservative under rounding.
      const T reach = static_cast<T>(o.radius) + r + margin + static_cast<T>(1e-4);
      if (std::fabs(dx) > reach || std::fabs(dy) > reach) continue;
      const T dist = std::sqrt(dx * dx + dy * dy);
      const T d = dist - static_cast<T>(o.radius) - r;
      if (d < best_d) {
        best_d = d;
        best_dx = dx;
        best_dy = dy;
        best_dist = dist;
      }
    }
    const T p = margin - best_d;
    if (!(p > 0)) continue;
    f[0] = p;
    if (best_dist > 0) {
      // Cost grows toward the obstacle center.
      f[1] = -best_dx / best_dist;
      f[2] = -best_dy / best_dist;
    } else {
      f[1] = 1;
      f[2] = 0;
    }
    cost += p * p;
  }
  return cost;
}

template <class T>
void collision_gradient(std::span<const T> field, T weight, std::span<T> sphere_grad) {
  const std::size_t count = field.size() / 3;
  for (std::size_t s = 0; s < count; ++s) {
    const T p = field[3 * s];
    if (p == 0) continue;
    const T scale = weight * 2 * p;
    sphere_grad[2 * s] += scale * field[3 * s + 1];
    sphere_grad[2 * s + 1] += scale * field[3 * s + 2];
  }
}

template <class T>
CollisionResult<T> collision_cost(std::span<const T> spheres, const Environment& env,
                                  const TensorHooks& hooks, Slot field_slot) {
  const std::size_t count = spheres.size() / 3;
  CollisionResult<T> out;
  out.field.assign(3 * count, T(0));
  out.sphere_grad.assign(2 * count, T(0));
  out.cost = collision_query<T>(spheres, env, out.field);
  hooks.apply(field_slot, std::span<T>(out.field));
  collision_gradient<T>(out.field, T(1), out.sphere_grad);
  return out;
}

template <class T>
void self_collision_vector(std::span<const T> spheres, std::span<const SpherePair> pairs,
                           std::span<T> out_vec) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const T* a = spheres.data() + 3 * pairs[i].a;
    const T* b = spheres.data() + 3 * pairs[i].b;
    const T reach = a[2] + b[2];
    const T dx = a[0] - b[0];
    const T dy = a[1] - b[1];
    // Cheap reject before the square root; most pairs are far apart.
    if (std::fabs(dx) >= reach || std::fabs(dy) >= reach) {
      out_vec[i] = 0;
      continue;
    }
    out_vec[i] = std::max(T(0), reach - std::sqrt(dx * dx + dy * dy));
  }
}

template <class T>
void self_collision_gradient(std::span<const T> spheres, std::span<const SpherePair> pairs,
                             std::span<const T> out_vec, T weight, std::span<T> sphere_grad) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const T p = out_vec[i];
    if (p == 0) continue;
    const T* a = spheres.data() + 3 * pairs[i].a;
    const T* b = spheres.data() + 3 * pairs[i].b;
    T dx = a[0] - b[0];
    T dy = a[1] - b[1];
    const T dist = std::sqrt(dx * dx + dy * dy);
    if (dist > 0) {
      dx /= dist;
      dy /= dist;
    } else {
      dx = 1;
      dy = 0;
    }
    // d(p^2)/dc_a = -2 p n, d(p^2)/dc_b = +2 p n with n pointing from b to a.
    const T scale = weight * 2 * p;
    sphere_grad[2 * pairs[i].a] -= scale * dx;
    sphere_grad[2 * pairs[i].a + 1] -= scale * dy;
    sphere_grad[2 * pairs[i].b] += scale * dx;
    sphere_grad[2 * pairs[i].b + 1] += scale * dy;
  }
}

template <class T>
SelfCollisionResult<T> self_collision_cost(std::span<const T> spheres,
                                           std::span<const SpherePair> pairs,
                                           const TensorHooks& hooks) {
  SelfCollisionResult<T> out;
  out.out_vec.assign(pairs.size(), T(0));
  out.sphere_grad.assign(2 * (spheres.size() / 3), T(0));
  self_collision_vector<T>(spheres, pairs, out.out_vec);
  hooks.apply(Slot::kOutVec, std::span<T>(out.out_vec));
  for (T p : out.out_vec) out.cost += p * p;
  self_collision_gradient<T>(spheres, pairs, out.out_vec, T(1), out.sphere_grad);
  return out;
}

template <class T>
T pose_cost(const Pose2<T>& ee, const Pose2<double>& goal, const PoseWeights& weights,
            Pose2<T>* grad) {
  const T ex = ee.x - static_cast<T>(goal.x);
  const T ey = ee.y - static_cast<T>(goal.y);
  const T ea = static_cast<T>(wrap_angle(static_cast<double>(ee.angle) - goal.angle));
  const T wp = static_cast<T>(weights.position);
  const T wo = static_cast<T>(weights.orientation);
  if (grad != nullptr) {
    grad->x = 2 * wp * ex;
    grad->y = 2 * wp * ey;
    grad->angle = 2 * wo * ea;
  }
  return wp * (ex * ex + ey * ey) + wo * ea * ea;
}

template <class T>
T bound_cost(const ArmModel& model, std::span<const T> theta, std::span<T> theta_grad) {
  T cost = 0;
  for (int j = 0; j < model.dof(); ++j) {
    const T lo = static_cast<T>(model.joint_limits[j].lo);
    const T hi = static_cast<T>(model.joint_limits[j].hi);
    if (theta[j] > hi) {
      const T e = theta[j] - hi;
      cost += e * e;
      theta_grad[j] += 2 * e;
    } else if (theta[j] < lo) {
      const T e = theta[j] - lo;
      cost += e * e;
      theta_grad[j] += 2 * e;
    }
  }
  return cost;
}

int swept_sample_count(int horizon, int substeps) { return (horizon - 1) * substeps + 1; }

template <class T>
void swept_sample(std::span<const T> trajectory, int horizon, int dof, int substeps, int s,
                  std::span<T> out) {
  const int t = std::min(s / substeps, horizon - 1);
  const int k = s - t * substeps;
  const T* a = trajectory.data() + t * dof;
  if (k == 0) {
    std::copy(a, a + dof, out.begin());
    return;
  }
  const T* b = a + dof;
  const T alpha = static_cast<T>(k) / static_cast<T>(substeps);
  for (int j = 0; j < dof; ++j) out[j] = (1 - alpha) * a[j] + alpha * b[j];
}

template <class T>
SweptResult<T> swept_collision_cost(std::span<const T> trajectory, int horizon,
                                    const Environment& env, const ArmModel& model, int substeps,
                                    const TensorHooks& hooks) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  const int dof = model.dof();
  const int n_spheres = model.sphere_count();
  const int samples = swept_sample_count(horizon, substeps);
  SweptResult<T> out;
  out.field.assign(static_cast<std::size_t>(samples) * n_spheres * 3, T(0));
  out.sphere_grad.assign(static_cast<std::size_t>(samples) * n_spheres * 2, T(0));
  out.joint_grad.assign(static_cast<std::size_t>(horizon) * dof, T(0));

  std::vector<T> q(dof);
  std::vector<T> spheres(3 * n_spheres);
  std::vector<T> qgrad(dof);
  for (int s = 0; s < samples; ++s) {
    swept_sample<T>(trajectory, horizon, dof, substeps, s, q);
    forward_kinematics<T>(model, q, spheres);
    hooks.apply(Slot::kOutSpheres, std::span<T>(spheres));
    out.cost += collision_query<T>(spheres, env,
                                   std::span<T>(out.field).subspan(3 * s * n_spheres, 3 * n_spheres));
  }
  hooks.apply(Slot::kClosestPtSwept, std::span<T>(out.field));
  for (int s = 0; s < samples; ++s) {
    collision_gradient<T>(std::span<const T>(out.field).subspan(3 * s * n_spheres, 3 * n_spheres),
                          T(1), std::span<T>(out.sphere_grad).subspan(2 * s * n_spheres, 2 * n_spheres));
  }
  hooks.apply(Slot::kGradOutSpheres, std::span<T>(out.sphere_grad));
  for (int s = 0; s < samples; ++s) {
    auto g = std::span<const T>(out.sphere_grad).subspan(2 * s * n_spheres, 2 * n_spheres);
    if (std::all_of(g.begin(), g.end(), [](T v) { return v == 0; })) continue;
    swept_sample<T>(trajectory, horizon, dof, substeps, s, q);
    std::fill(qgrad.begin(), qgrad.end(), T(0));
    backward_kinematics<T>(model, q, g, qgrad);
    const int t = std::min(s / substeps, horizon - 1);
    const int k = s - t * substeps;
    const T alpha = static_cast<T>(k) / static_cast<T>(substeps);
    for (int j = 0; j < dof; ++j) {
      out.joint_grad[t * dof + j] += (1 - alpha) * qgrad[j];
      if (k > 0) out.joint_grad[(t + 1) * dof + j] += alpha * qgrad[j];
    }
  }
  return out;
}

template <class T>
BatchKinematics<T> forward_kinematics_batch(const ArmModel& model, const BatchTensor<T>& theta) {
  BatchKinematics<T> out;
  out.spheres = SphereSet<T>(theta.batch, 3 * model.sphere_count());
  out.ee.resize(theta.batch);
  for (int b = 0; b < theta.batch; ++b) {
    out.ee[b] = forward_kinematics<T>(model, theta.item(b), out.spheres.item(b));
  }
  return out;
}

template <class T>
BatchTensor<T> backward_kinematics_batch(const ArmModel& model, const BatchTensor<T>& theta,
                                         const SphereGrad<T>& grad) {
  BatchTensor<T> out(theta.batch, model.dof());
  for (int b = 0; b < theta.batch; ++b) {
    backward_kinematics<T>(model, theta.item(b), grad.item(b), out.item(b));
  }
  return out;
}

#define PRECIS_INSTANTIATE_ARM(T)                                                                  \
  template Pose2<T> forward_kinematics<T>(const ArmModel&, std::span<const T>, std::span<T>);     \
  template void backward_kinematics<T>(const ArmModel&, std::span<const T>, std::span<const T>,   \
                                       std::span<T>);                                              \
  template void pose_backward<T>(const ArmModel&, std::span<const T>, const Pose2<T>&,            \
                                 std::span<T>);                                                    \
  template T collision_query<T>(std::span<const T>, const Environment&, std::span<T>);            \
  template void collision_gradient<T>(std::span<const T>, T, std::span<T>);                       \
  template CollisionResult<T> collision_cost<T>(std::span<const T>, const Environment&,           \
                                                const TensorHooks&, Slot);                         \
  template void self_collision_vector<T>(std::span<const T>, std::span<const SpherePair>,         \
                                         std::span<T>);                                            \
  template void self_collision_gradient<T>(std::span<const T>, std::span<const SpherePair>,       \
                                           std::span<const T>, T, std::span<T>);                   \
  template SelfCollisionResult<T> self_collision_cost<T>(                                          \
      std::span<const T>, std::span<const SpherePair>, const TensorHooks&);                        \
  template T pose_cost<T>(const Pose2<T>&, const Pose2<double>&, const PoseWeights&, Pose2<T>*);  \
  template T bound_cost<T>(const ArmModel&, std::span<const T>, std::span<T>);                    \
  template void swept_sample<T>(std::span<const T>, int, int, int, int, std::span<T>);            \
  template SweptResult<T> swept_collision_cost<T>(std::span<const T>, int, const Environment&,    \
                                                  const ArmModel&, int, const TensorHooks&);       \
  template BatchKinematics<T> forward_kinematics_batch<T>(const ArmModel&, const BatchTensor<T>&); \
  template BatchTensor<T> backward_kinematics_batch<T>(const ArmModel&, const BatchTensor<T>&,    \
                                                       const SphereGrad<T>&);

PRECIS_INSTANTIATE_ARM(float)
PRECIS_INSTANTIATE_ARM(double)

#undef PRECIS_INSTANTIATE_ARM

}  // namespace precis
