#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "oracles.hpp"
#include "precis/arm.hpp"

using namespace precis;

TEST_CASE("default model") {
  const ArmModel m = ArmModel::planar_default();
  CHECK(m.dof() == 7);
  CHECK(m.sphere_count() == 21);
  CHECK(m.reach() == doctest::Approx(2.1));
  CHECK_NOTHROW(m.validate());
  CHECK(self_collision_pairs(m).size() == 15 * 9);

  ArmModel bad = m;
  bad.joint_limits.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = m;
  bad.link_lengths[2] = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("wrap_angle stays in (-pi, pi]") {
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi / 2) == doctest::Approx(-std::numbers::pi / 2));
  CHECK(wrap_angle(0.25) == 0.25);
}

TEST_CASE("straight arm kinematics") {
  const ArmModel m = ArmModel::planar_default();
  std::vector<double> theta(7, 0.0);
  std::vector<double> spheres(3 * 21);
  const auto tip = forward_kinematics<double>(m, theta, spheres);
  CHECK(tip.x == doctest::Approx(2.1));
  CHECK(tip.y == doctest::Approx(0.0));
  CHECK(tip.angle == 0.0);
  for (int s = 0; s < 21; ++s) {
    CHECK(spheres[3 * s + 1] == doctest::Approx(0.0));
    CHECK(spheres[3 * s + 2] == 0.05);
  }

  theta[0] = std::numbers::pi / 2;
  const auto up = forward_kinematics<double>(m, theta, spheres);
  CHECK(up.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(up.y == doctest::Approx(2.1));
}

TEST_CASE("one sphere against one obstacle") {
  Environment env;
  env.obstacles = {{1.0, 0.0, 0.2}};
  env.activation_margin = 0.05;
  // Gap of 0.55 is outside the band.
  std::vector<double> far = {0.2, 0.0, 0.05};
  CHECK(collision_cost<double>(far, env).cost == 0.0);
  // Gap of 0.03 leaves 0.02 of the band.
  std::vector<double> near = {0.72, 0.0, 0.05};
  const auto r = collision_cost<double>(near, env);
  CHECK(r.field[0] == doctest::Approx(0.02));
  CHECK(r.field[1] == doctest::Approx(1.0));
  CHECK(r.cost == doctest::Approx(0.0004));
  CHECK(r.sphere_grad[0] == doctest::Approx(0.04));
  CHECK(r.sphere_grad[1] == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  for (const auto& r : oracle::gradient_suite(100, 2024)) {
    INFO(std::string(r.name));
    CHECK(r.points == 100);
    CHECK(r.active > 20);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("swept sampling") {
  CHECK(swept_sample_count(32, 2) == 63);
  CHECK(swept_sample_count(5, 1) == 5);
  const std::vector<double> traj = {0.0, 1.0, 2.0, 3.0};  // horizon 2, dof 2
  std::vector<double> q(2);
  swept_sample<double>(traj, 2, 2, 4, 1, q);
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[1] == doctest::Approx(1.5));
  swept_sample<double>(traj, 2, 2, 4, 4, q);
  CHECK(q == std::vector<double>{2.0, 3.0});
  CHECK_THROWS_AS(swept_collision_cost<double>(traj, 2, Environment{}, ArmModel::planar_default(), 0),
                  std::invalid_argument);
}

TEST_CASE("E8M23 hooks are bit-identical to no hooks") {
  std::mt19937_64 rng(17);
  const ArmModel m = ArmModel::planar_default();
  const auto pairs = self_collision_pairs(m);
  PrecisionConfig full;
  SparsityCounter counter;
  TensorHooks hooks{&full, &counter};
  for (int i = 0; i < 20; ++i) {
    const Environment env = oracle::clutter(rng);
    std::vector<float> traj;
    for (int t = 0; t < 6; ++t) {
      for (double v : oracle::random_theta(m, rng)) traj.push_back(static_cast<float>(v));
    }
    const auto a = swept_collision_cost<float>(traj, 6, env, m, 2);
    const auto b = swept_collision_cost<float>(traj, 6, env, m, 2, hooks);
    CHECK(a.cost == b.cost);
    CHECK(a.joint_grad == b.joint_grad);
    CHECK(a.field == b.field);

    std::vector<float> spheres(3 * m.sphere_count());
    forward_kinematics<float>(m, std::span<const float>(traj).first(7), spheres);
    const auto sa = self_collision_cost<float>(spheres, pairs);
    const auto sb = self_collision_cost<float>(spheres, pairs, hooks);
    CHECK(sa.out_vec == sb.out_vec);
    CHECK(sa.sphere_grad == sb.sphere_grad);
  }
  CHECK(counter.elements(Slot::kClosestPtSwept) == 20 * 11 * 21 * 3);
}

TEST_CASE("narrow hooks change the swept field") {
  std::mt19937_64 rng(5);
  const ArmModel m = ArmModel::planar_default();
  PrecisionConfig narrow = PrecisionConfig::single(Slot::kClosestPtSwept, make_format(2, 1));
  TensorHooks hooks{&narrow};
  int differing = 0;
  for (int i = 0; i < 20; ++i) {
    const Environment env = oracle::clutter(rng);
    std::vector<float> traj;
    for (int t = 0; t < 4; ++t) {
      for (double v : oracle::random_theta(m, rng)) traj.push_back(static_cast<float>(v));
    }
    const auto b = swept_collision_cost<float>(traj, 4, env, m, 2, hooks);
    for (float v : b.field) CHECK(quantize(v, make_format(2, 1)) == v);
    differing += swept_collision_cost<float>(traj, 4, env, m, 2).field != b.field;
  }
  CHECK(differing > 0);
}

TEST_CASE("batch wrappers agree with per-item calls") {
  std::mt19937_64 rng(8);
  const ArmModel m = ArmModel::planar_default();
  BatchTensor<double> theta(4, 7);
  for (int b = 0; b < 4; ++b) {
    const auto t = oracle::random_theta(m, rng);
    std::copy(t.begin(), t.end(), theta.item(b).begin());
  }
  const auto fk = forward_kinematics_batch(m, theta);
  SphereGrad<double> g(4, 2 * 21);
  for (double& v : g.values) v = 0.3;
  const auto bk = backward_kinematics_batch(m, theta, g);
  for (int b = 0; b < 4; ++b) {
    std::vector<double> spheres(63);
    const auto tip = forward_kinematics<double>(m, theta.item(b), spheres);
    CHECK(tip.x == fk.ee[b].x);
    CHECK(std::equal(spheres.begin(), spheres.end(), fk.spheres.item(b).begin()));
    std::vector<double> tg(7, 0.0);
    backward_kinematics<double>(m, theta.item(b), g.item(b), tg);
    CHECK(std::equal(tg.begin(), tg.end(), bk.item(b).begin()));
  }
}
